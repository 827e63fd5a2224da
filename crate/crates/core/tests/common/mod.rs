// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{Duration, NaiveDate};
use epiwatch_core::store::{FramePoint, StreamFrame};
use epiwatch_core::{GeoHierarchy, GeoTier, StreamKey};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_hierarchy() -> GeoHierarchy {
    GeoHierarchy::from_path(fixture_path("geo_hierarchy.csv")).expect("fixture hierarchy loads")
}

/// Raw `(geo_type, geo_value, parent_type, parent_value)` rows of the fixture,
/// read without the hierarchy code.
pub fn fixture_rows() -> Vec<(String, String, String, String)> {
    std::fs::read_to_string(fixture_path("geo_hierarchy.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[1].into(), f[2].into(), f[3].into())
        })
        .collect()
}

pub fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

pub fn key(s: &str) -> StreamKey {
    s.parse().unwrap()
}

/// A daily frame starting 2024-01-01 with `as_of` on the last value.
pub fn daily_frame(values: &[f64]) -> StreamFrame {
    let start = d("2024-01-01");
    StreamFrame {
        key: StreamKey::new("p", "cases", GeoTier::State, "PA").unwrap(),
        as_of: start + Duration::days(values.len() as i64 - 1),
        window_days: values.len().max(1) as u32,
        points: values
            .iter()
            .enumerate()
            .map(|(i, &value)| {
                let t = start + Duration::days(i as i64);
                FramePoint {
                    time_value: t,
                    value,
                    issue: t,
                }
            })
            .collect(),
    }
}

// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use epiwatch_core::pipeline::ScoringConfig;
use epiwatch_service::Workspace;

pub const GEOS: [(&str, &str); 8] = [
    ("nation", "us"),
    ("state", "PA"),
    ("state", "OH"),
    ("county", "42003"),
    ("county", "42007"),
    ("county", "42101"),
    ("county", "39035"),
    ("county", "39049"),
];

pub fn geo_fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/geo.csv")
}

pub fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

pub const START: &str = "2024-01-01";
pub const DAYS: i64 = 60;

pub fn last_day() -> NaiveDate {
    d(START) + Duration::days(DAYS - 1)
}

/// Wire rows for two sources on every region: a deterministic wobble with a
/// per-stream level, and a spike in `jhu:cases:county:42003` on the last day.
pub fn observations_csv() -> String {
    let mut text = String::from("source,signal,geo_type,geo_value,time_value,issue,value\n");
    for (s, source) in ["fb", "jhu"].iter().enumerate() {
        for (g, (tier, code)) in GEOS.iter().enumerate() {
            let level = 100.0 + 10.0 * g as f64 + 3.0 * s as f64;
            for day in 0..DAYS {
                let t = d(START) + Duration::days(day);
                let wobble = ((day * (g as i64 + 3) + s as i64 * 7) % 11) as f64 - 5.0;
                let mut value = level + wobble;
                if *source == "jhu" && *code == "42003" && day == DAYS - 1 {
                    value += 400.0;
                }
                text.push_str(&format!("{source},cases,{tier},{code},{t},{t},{value}\n"));
            }
        }
    }
    text
}

/// A store under `root` with the fixture hierarchy and observations.
pub fn seeded(root: &Path) -> Workspace {
    Workspace::install_geo(root, geo_fixture()).unwrap();
    let ws = Workspace::open(root, ScoringConfig::default()).unwrap();
    let report = ws.ingest(observations_csv().as_bytes()).unwrap();
    assert_eq!(report.rejected_count(), 0);
    ws
}

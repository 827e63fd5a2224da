// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic streams: random walks with weekly seasonality, on a
//! synthetic county/state/nation hierarchy. Used for load tests and
//! property checks.

use std::f64::consts::TAU;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geo::{GeoHierarchy, GeoId, GeoTier};
use crate::key::StreamKey;
use crate::scoring::MIN_HISTORY;
use crate::store::Observation;

#[derive(Debug, Clone)]
pub struct WalkParams {
    pub level: f64,
    pub step_sd: f64,
    pub season_amplitude: f64,
    pub noise_sd: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            level: 500.0,
            step_sd: 10.0,
            season_amplitude: 25.0,
            noise_sd: 5.0,
        }
    }
}

/// `days` values of a random walk plus a weekly cycle and white noise.
pub fn seasonal_walk<R: Rng>(rng: &mut R, days: usize, params: &WalkParams) -> Vec<f64> {
    let step = Normal::new(0.0, params.step_sd).expect("valid sd");
    let noise = Normal::new(0.0, params.noise_sd).expect("valid sd");
    let phase = rng.random::<f64>() * TAU;
    let mut walk = 0.0;
    (0..days)
        .map(|t| {
            walk += step.sample(rng);
            let season = params.season_amplitude * (TAU * t as f64 / 7.0 + phase).sin();
            params.level + walk + season + noise.sample(rng)
        })
        .collect()
}

/// Nation `us`, `states` states `S00..`, each with `counties_per_state`
/// counties coded `S00C000..`.
pub fn synthetic_hierarchy(states: usize, counties_per_state: usize) -> GeoHierarchy {
    let us = GeoId::new(GeoTier::Nation, "us");
    let mut entries = vec![(us.clone(), None, "Synthetic Nation".to_string())];
    for s in 0..states {
        let state = GeoId::new(GeoTier::State, format!("S{s:02}"));
        entries.push((state.clone(), Some(us.clone()), format!("State {s}")));
        for c in 0..counties_per_state {
            entries.push((
                GeoId::new(GeoTier::County, format!("S{s:02}C{c:03}")),
                Some(state.clone()),
                format!("County {s}-{c}"),
            ));
        }
    }
    GeoHierarchy::from_entries(entries).expect("synthetic hierarchy is well formed")
}

/// Daily observations for `key`, each reported on its own reference date.
pub fn daily_observations(key: &StreamKey, start: NaiveDate, values: &[f64]) -> Vec<Observation> {
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let t = start + Duration::days(i as i64);
            Observation {
                key: key.clone(),
                time_value: t,
                issue: t,
                value,
            }
        })
        .collect()
}

/// A store load whose daily run scores at least `target_points` points.
#[derive(Debug)]
pub struct VolumeFixture {
    pub observations: Vec<Observation>,
    pub as_of: NaiveDate,
    pub streams: usize,
    pub expected_points: usize,
}

/// Shape of a volume load: `streams` streams of daily values ending on
/// `as_of`, scoring `expected_points` points in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VolumeShape {
    pub as_of: NaiveDate,
    pub streams: usize,
    pub expected_points: usize,
}

/// Builds `ceil(target_points / (days - 7))` streams of `days` daily values
/// ending on `as_of`; every point after the first seven gets scored.
pub fn volume_fixture(target_points: usize, days: usize, seed: u64) -> VolumeFixture {
    let mut observations = Vec::new();
    let shape = volume_batches(target_points, days, seed, usize::MAX, |batch| {
        observations.extend(batch)
    });
    VolumeFixture {
        observations,
        as_of: shape.as_of,
        streams: shape.streams,
        expected_points: shape.expected_points,
    }
}

/// The same load as [`volume_fixture`], handed to `sink` at most
/// `streams_per_batch` streams at a time so large loads need not sit in
/// memory twice.
pub fn volume_batches(
    target_points: usize,
    days: usize,
    seed: u64,
    streams_per_batch: usize,
    mut sink: impl FnMut(Vec<Observation>),
) -> VolumeShape {
    assert!(days > MIN_HISTORY, "need more than {MIN_HISTORY} days");
    assert!(streams_per_batch > 0);
    let per_stream = days - MIN_HISTORY;
    let streams = target_points.div_ceil(per_stream);
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date");
    let as_of = start + Duration::days(days as i64 - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = WalkParams::default();
    let signals = ["cases", "deaths", "hosp", "tests", "visits"];
    let mut batch = Vec::new();
    for i in 0..streams {
        let key = StreamKey {
            source: "synth".into(),
            signal: signals[i % signals.len()].into(),
            geo_type: GeoTier::County,
            geo_value: format!("R{:07}", i / signals.len()),
        };
        let values = seasonal_walk(&mut rng, days, &params);
        batch.extend(daily_observations(&key, start, &values));
        if (i + 1) % streams_per_batch == 0 {
            sink(std::mem::take(&mut batch));
        }
    }
    if !batch.is_empty() {
        sink(batch);
    }
    VolumeShape {
        as_of,
        streams,
        expected_points: streams * per_stream,
    }
}

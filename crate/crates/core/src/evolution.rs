// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! How a data point's event score moves as its stream is revised.
//!
//! Every daily run rescores the recent past against the data available on
//! that day, so one reference date accumulates one score per run. Those
//! scores are folded with Welford's online update into a running mean and a
//! population variance.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::key::StreamKey;
use crate::results::StoredRun;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrack {
    pub key: StreamKey,
    pub time_value: NaiveDate,
    pub n: u64,
    pub mean: f64,
    /// Population variance `m2 / n`.
    pub variance: f64,
    /// Sum of squared deviations from the running mean.
    pub m2: f64,
}

impl EvolutionTrack {
    pub fn empty(key: StreamKey, time_value: NaiveDate) -> Self {
        EvolutionTrack {
            key,
            time_value,
            n: 0,
            mean: 0.0,
            variance: 0.0,
            m2: 0.0,
        }
    }
}

/// Folds one more score into `track`.
pub fn update_evolution(track: &EvolutionTrack, new_score: f64) -> Result<EvolutionTrack> {
    if !new_score.is_finite() {
        return Err(Error::NonFinite(new_score));
    }
    let n = track.n + 1;
    let t = n as f64;
    let mean = (track.mean * (t - 1.0) + new_score) / t;
    let m2 = track.m2 + (new_score - track.mean) * (new_score - mean);
    // Rounding can leave a hair below zero on constant input.
    let m2 = m2.max(0.0);
    Ok(EvolutionTrack {
        key: track.key.clone(),
        time_value: track.time_value,
        n,
        mean,
        variance: m2 / t,
        m2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionHeatmap {
    pub key: StreamKey,
    pub as_of: NaiveDate,
    pub dates: Vec<NaiveDate>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub counts: Vec<u64>,
    pub avg_variance: f64,
}

/// Per-date evolution tracks for `key` built from every run up to `as_of`,
/// folded in run order.
pub fn evolution_tracks<'a, I>(key: &StreamKey, runs: I) -> BTreeMap<NaiveDate, EvolutionTrack>
where
    I: IntoIterator<Item = &'a StoredRun>,
{
    let mut tracks: BTreeMap<NaiveDate, EvolutionTrack> = BTreeMap::new();
    for run in runs {
        let Some(stream) = run.results.stream(key) else {
            continue;
        };
        for p in &stream.points {
            let track = tracks
                .entry(p.time_value)
                .or_insert_with(|| EvolutionTrack::empty(key.clone(), p.time_value));
            // Stored scores are finite by construction.
            *track = update_evolution(track, p.score).expect("finite stored score");
        }
    }
    tracks
}

/// The heat-map strip for `key`: one Welford mean per date scored in the
/// latest run at or before `as_of`, and the average of the per-date
/// variances.
pub fn evolution_heatmap(
    runs: &BTreeMap<NaiveDate, StoredRun>,
    key: &StreamKey,
    as_of: NaiveDate,
) -> Result<EvolutionHeatmap> {
    let (_, latest) = runs.range(..=as_of).next_back().ok_or(Error::EmptyRun(as_of))?;
    let frame_dates: Vec<NaiveDate> = latest
        .results
        .stream(key)
        .ok_or_else(|| Error::UnknownStream(key.clone()))?
        .points
        .iter()
        .map(|p| p.time_value)
        .collect();
    let tracks = evolution_tracks(key, runs.range(..=as_of).map(|(_, r)| r));

    let mut heatmap = EvolutionHeatmap {
        key: key.clone(),
        as_of,
        dates: Vec::with_capacity(frame_dates.len()),
        means: Vec::with_capacity(frame_dates.len()),
        variances: Vec::with_capacity(frame_dates.len()),
        counts: Vec::with_capacity(frame_dates.len()),
        avg_variance: 0.0,
    };
    for date in frame_dates {
        let track = &tracks[&date];
        heatmap.dates.push(date);
        heatmap.means.push(track.mean);
        heatmap.variances.push(track.variance);
        heatmap.counts.push(track.n);
    }
    if !heatmap.variances.is_empty() {
        heatmap.avg_variance =
            heatmap.variances.iter().sum::<f64>() / heatmap.variances.len() as f64;
    }
    Ok(heatmap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fold(scores: &[f64]) -> EvolutionTrack {
        let key: StreamKey = "p:s:state:PA".parse().unwrap();
        let mut t = EvolutionTrack::empty(key, NaiveDate::from_ymd_opt(2024, 1, 1).unwrap());
        for &s in scores {
            t = update_evolution(&t, s).unwrap();
        }
        t
    }

    fn two_pass(scores: &[f64]) -> (f64, f64) {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn one_to_four() {
        let t = fold(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((t.n, t.mean, t.variance), (4, 2.5, 1.25));
    }

    #[test]
    fn single_and_constant() {
        let t = fold(&[7.0]);
        assert_eq!((t.mean, t.variance), (7.0, 0.0));
        let c = fold(&[5.0, 5.0, 5.0]);
        assert_eq!((c.mean, c.variance), (5.0, 0.0));
    }

    #[test]
    fn rejects_non_finite() {
        let t = fold(&[1.0]);
        assert!(matches!(update_evolution(&t, f64::NAN), Err(Error::NonFinite(_))));
        assert!(update_evolution(&t, f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn matches_two_pass(scores in prop::collection::vec(0.0f64..100.0, 1..50)) {
            let t = fold(&scores);
            let (m, v) = two_pass(&scores);
            prop_assert!((t.mean - m).abs() <= 1e-9 * m.abs().max(1.0));
            prop_assert!((t.variance - v).abs() <= 1e-9 * v.abs().max(1.0));
            prop_assert!(t.variance >= 0.0);
        }
    }
}

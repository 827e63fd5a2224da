// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! The daily scoring run.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::key::StreamKey;
use crate::rank::StreamScores;
use crate::results::{PutOutcome, ResultsStore, RunResults};
use crate::scoring::{score_stream, scorable_horizon, ExpectationConfig};
use crate::store::{StoreSnapshot, StreamStore, DEFAULT_WINDOW_DAYS};

/// Expectation settings per signal family.
///
/// A family is a signal-name prefix; the longest matching prefix wins and
/// unmatched signals use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub window_days: u32,
    pub default: ExpectationConfig,
    pub families: BTreeMap<String, ExpectationConfig>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            window_days: DEFAULT_WINDOW_DAYS,
            default: ExpectationConfig::default(),
            families: BTreeMap::new(),
        }
    }
}

impl ScoringConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScoringConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_days < 1 {
            return Err(Error::InvalidConfig("window_days must be >= 1".into()));
        }
        self.default.validate()?;
        for (family, cfg) in &self.families {
            cfg.validate()
                .map_err(|e| Error::InvalidConfig(format!("family {family:?}: {e}")))?;
        }
        Ok(())
    }

    pub fn for_signal(&self, signal: &str) -> &ExpectationConfig {
        self.families
            .iter()
            .filter(|(prefix, _)| signal.starts_with(prefix.as_str()))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, cfg)| cfg)
            .unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedStream {
    pub key: StreamKey,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Serial,
    Parallel,
}

enum StreamOutcome {
    Scored(StreamScores),
    Skipped(SkippedStream),
}

fn score_one(snapshot: &StoreSnapshot, key: &StreamKey, as_of: NaiveDate, cfg: &ScoringConfig) -> StreamOutcome {
    let skipped = |reason: String| {
        StreamOutcome::Skipped(SkippedStream {
            key: key.clone(),
            reason,
        })
    };
    let frame = match snapshot.latest_frame(key, as_of, cfg.window_days) {
        Ok(f) => f,
        Err(e) => return skipped(e.to_string()),
    };
    let exp = cfg.for_signal(&key.signal);
    let Some(horizon) = scorable_horizon(&frame, exp) else {
        return skipped(format!(
            "insufficient-data: {} points in window",
            frame.points.len()
        ));
    };
    match score_stream(&frame, exp, horizon) {
        Ok(points) => StreamOutcome::Scored(StreamScores {
            key: key.clone(),
            points,
        }),
        Err(e) => skipped(e.to_string()),
    }
}

/// Scores every stream of `snapshot` as of `as_of`. Output order is the key
/// order whatever the parallelism.
pub fn score_all(
    snapshot: &StoreSnapshot,
    as_of: NaiveDate,
    cfg: &ScoringConfig,
    parallelism: Parallelism,
) -> Result<(Vec<StreamScores>, Vec<SkippedStream>)> {
    cfg.validate()?;
    let keys: Vec<&StreamKey> = snapshot.keys().collect();
    let outcomes: Vec<StreamOutcome> = match parallelism {
        Parallelism::Serial => keys.iter().map(|k| score_one(snapshot, k, as_of, cfg)).collect(),
        Parallelism::Parallel => keys
            .par_iter()
            .map(|k| score_one(snapshot, k, as_of, cfg))
            .collect(),
    };
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            StreamOutcome::Scored(s) => scored.push(s),
            StreamOutcome::Skipped(s) => skipped.push(s),
        }
    }
    Ok((scored, skipped))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub as_of: NaiveDate,
    pub run_id: String,
    pub streams_scored: usize,
    pub points_scored: usize,
    pub skipped: Vec<SkippedStream>,
    #[serde(serialize_with = "ser_secs")]
    pub wall_time: Duration,
    pub outcome: PutOutcome,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

/// Scores the store as of `as_of` and replaces that day's run in `results`.
pub fn run_daily(
    store: &StreamStore,
    results: &ResultsStore,
    as_of: NaiveDate,
    cfg: &ScoringConfig,
) -> Result<RunReport> {
    run_daily_with(store, results, as_of, cfg, Parallelism::Parallel)
}

pub fn run_daily_with(
    store: &StreamStore,
    results: &ResultsStore,
    as_of: NaiveDate,
    cfg: &ScoringConfig,
    parallelism: Parallelism,
) -> Result<RunReport> {
    let started = Instant::now();
    let snapshot = store.snapshot();
    let (scored, skipped) = score_all(&snapshot, as_of, cfg, parallelism)?;
    let run = RunResults::new(as_of, scored);
    let streams_scored = run.streams.len();
    let points_scored = run.point_count();
    let (outcome, run_id) = results.put(run)?;
    Ok(RunReport {
        as_of,
        run_id,
        streams_scored,
        points_scored,
        skipped,
        wall_time: started.elapsed(),
        outcome,
    })
}

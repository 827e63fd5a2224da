// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Top-k review queue.
//!
//! Streams are ordered by their peak score. Ties go to the more recent peak,
//! then to the lexicographically smaller stream key, which makes the order
//! total and independent of input order.

use std::cmp::Ordering;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::filter::FilterSpec;
use crate::geo::GeoHierarchy;
use crate::key::StreamKey;
use crate::scoring::ScoredPoint;

/// Scores of one stream over the horizon, date-ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScores {
    pub key: StreamKey,
    pub points: Vec<ScoredPoint>,
}

impl StreamScores {
    /// Highest-scoring point; the later one wins a tie.
    pub fn peak(&self) -> Option<&ScoredPoint> {
        self.points.iter().reduce(|best, p| {
            match p.score.total_cmp(&best.score) {
                Ordering::Greater => p,
                Ordering::Equal if p.time_value > best.time_value => p,
                _ => best,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub key: StreamKey,
    pub peak: ScoredPoint,
    pub rank: usize,
    pub window_scores: Vec<(NaiveDate, f64)>,
}

/// The queue order: `Less` means `a` ranks ahead of `b`.
pub fn queue_order(a: (&StreamKey, &ScoredPoint), b: (&StreamKey, &ScoredPoint)) -> Ordering {
    b.1.score
        .total_cmp(&a.1.score)
        .then_with(|| b.1.time_value.cmp(&a.1.time_value))
        .then_with(|| a.0.cmp(b.0))
}

/// Ranks the streams passing `filter` and returns the first `k` rows.
/// Streams without scored points have no peak and are not ranked.
pub fn rank_streams(
    scored: &[StreamScores],
    k: usize,
    filter: Option<&FilterSpec>,
    geo: &GeoHierarchy,
) -> Vec<RankedRow> {
    if k == 0 {
        return Vec::new();
    }
    let mut candidates: Vec<(&StreamScores, &ScoredPoint)> = scored
        .iter()
        .filter(|s| filter.is_none_or(|f| f.matches(&s.key, geo)))
        .filter_map(|s| s.peak().map(|p| (s, p)))
        .collect();
    let cmp = |a: &(&StreamScores, &ScoredPoint), b: &(&StreamScores, &ScoredPoint)| {
        queue_order((&a.0.key, a.1), (&b.0.key, b.1))
    };
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    candidates
        .into_iter()
        .enumerate()
        .map(|(i, (s, peak))| RankedRow {
            key: s.key.clone(),
            peak: peak.clone(),
            rank: i + 1,
            window_scores: s.points.iter().map(|p| (p.time_value, p.score)).collect(),
        })
        .collect()
}

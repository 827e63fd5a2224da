// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Expectation-based event scoring.
//!
//! Each data point is compared with an expectation built only from the
//! points before it. The event score is the absolute deviation from the
//! expected value divided by a floored dispersion, so scores are comparable
//! across streams with very different magnitudes.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::key::StreamKey;
use crate::stats::{self, MAD_TO_SD};
use crate::store::StreamFrame;

/// Minimum number of trailing points an expectation needs.
pub const MIN_HISTORY: usize = 7;

/// Longest run of missing days that linear interpolation will fill.
pub const MAX_INTERPOLATED_GAP: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationModel {
    /// Median and scaled MAD of the trailing window.
    #[default]
    RollingRobust,
    /// Mean and sample standard deviation of the trailing window.
    RollingGaussian,
    /// Previous value; dispersion comes from the floors alone.
    LastValue,
}

impl ExpectationModel {
    /// Center and raw spread of `trailing` (oldest first, non-empty).
    fn center_spread(self, trailing: &[f64], scratch: &mut Vec<f64>) -> (f64, f64) {
        match self {
            ExpectationModel::RollingRobust => {
                let (median, mad) = stats::median_mad(trailing, scratch).expect("non-empty window");
                (median, MAD_TO_SD * mad)
            }
            ExpectationModel::RollingGaussian => {
                let mean = stats::mean(trailing).expect("non-empty window");
                (mean, stats::sample_sd(trailing))
            }
            ExpectationModel::LastValue => (*trailing.last().expect("non-empty window"), 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    None,
    LinearMaxGap3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpectationConfig {
    pub model: ExpectationModel,
    pub train_window: usize,
    pub dispersion_floor_abs: f64,
    pub dispersion_floor_rel: f64,
    pub interpolation: Interpolation,
    pub bounds: Option<Bounds>,
    /// Largest plausible relative change from the previous value.
    pub max_day_change: Option<f64>,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        ExpectationConfig {
            model: ExpectationModel::RollingRobust,
            train_window: 28,
            dispersion_floor_abs: 1.0,
            dispersion_floor_rel: 0.01,
            interpolation: Interpolation::None,
            bounds: None,
            max_day_change: None,
        }
    }
}

impl ExpectationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_window < MIN_HISTORY {
            return Err(Error::InvalidConfig(format!(
                "train_window must be at least {MIN_HISTORY}, got {}",
                self.train_window
            )));
        }
        for (name, floor) in [
            ("dispersion_floor_abs", self.dispersion_floor_abs),
            ("dispersion_floor_rel", self.dispersion_floor_rel),
        ] {
            if !(floor.is_finite() && floor >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be a finite value >= 0")));
            }
        }
        if let Some(b) = self.bounds {
            if b.min.is_nan() || b.max.is_nan() || b.min > b.max {
                return Err(Error::InvalidConfig(format!(
                    "bounds min {} must not exceed max {}",
                    b.min, b.max
                )));
            }
        }
        if let Some(c) = self.max_day_change {
            if c.is_nan() || c < 0.0 {
                return Err(Error::InvalidConfig("max_day_change must be >= 0".into()));
            }
        }
        Ok(())
    }

    fn floored(&self, expected: f64, spread: f64) -> f64 {
        let d = spread
            .max(self.dispersion_floor_abs)
            .max(self.dispersion_floor_rel * expected.abs());
        if d > 0.0 {
            d
        } else {
            // Both floors off and a flat window: keep the dispersion positive.
            f64::EPSILON * expected.abs().max(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub expected: f64,
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub key: StreamKey,
    pub time_value: NaiveDate,
    pub value: f64,
    pub expected: f64,
    pub dispersion: f64,
    pub score: f64,
    pub violated_bound: bool,
}

/// Inclusive range of reference dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Number of calendar days covered.
    pub fn days(&self) -> i64 {
        if self.is_empty() {
            0
        } else {
            (self.end - self.start).num_days() + 1
        }
    }
}

struct Effective {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    /// Index into `dates`/`values` of every observed (non-interpolated) point.
    observed: Vec<usize>,
}

/// Observed points plus, when enabled, linear fills for short gaps. Fills
/// sit between two observed points and so never extend past the later one.
fn effective_series(frame: &StreamFrame, interpolation: Interpolation) -> Effective {
    let n = frame.points.len();
    let mut eff = Effective {
        dates: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        observed: Vec::with_capacity(n),
    };
    for (i, p) in frame.points.iter().enumerate() {
        if interpolation == Interpolation::LinearMaxGap3 && i > 0 {
            let prev = frame.points[i - 1];
            let span = (p.time_value - prev.time_value).num_days();
            let missing = span - 1;
            if (1..=MAX_INTERPOLATED_GAP).contains(&missing) {
                for step in 1..span {
                    let frac = step as f64 / span as f64;
                    eff.dates.push(prev.time_value + Duration::days(step));
                    eff.values.push(prev.value + (p.value - prev.value) * frac);
                }
            }
        }
        eff.observed.push(eff.dates.len());
        eff.dates.push(p.time_value);
        eff.values.push(p.value);
    }
    eff
}

fn check_in_frame(frame: &StreamFrame, date: NaiveDate) -> Result<()> {
    if date < frame.window_start() || date > frame.as_of {
        Err(Error::OutsideFrame(date))
    } else {
        Ok(())
    }
}

/// Expected value and dispersion at `at`, using only data strictly before it.
pub fn expect(frame: &StreamFrame, cfg: &ExpectationConfig, at: NaiveDate) -> Result<Expectation> {
    cfg.validate()?;
    check_in_frame(frame, at)?;
    let eff = effective_series(frame, cfg.interpolation);
    // History ends at the last observed point before `at`; fills after it
    // would be anchored on data at or after `at`.
    let last_obs = eff.observed.iter().rev().find(|&&i| eff.dates[i] < at);
    let history_len = last_obs.map_or(0, |&i| i + 1);
    expectation_from(&eff.values[..history_len], cfg, &mut Vec::new())
}

fn expectation_from(history: &[f64], cfg: &ExpectationConfig, scratch: &mut Vec<f64>) -> Result<Expectation> {
    if history.len() < MIN_HISTORY {
        return Err(Error::InsufficientData {
            needed: MIN_HISTORY,
            found: history.len(),
        });
    }
    let trailing = &history[history.len().saturating_sub(cfg.train_window)..];
    let (expected, spread) = cfg.model.center_spread(trailing, scratch);
    Ok(Expectation {
        expected,
        dispersion: cfg.floored(expected, spread),
    })
}

fn plausible(cfg: &ExpectationConfig, value: f64, previous: Option<f64>) -> bool {
    if let Some(bounds) = cfg.bounds {
        if !bounds.contains(value) {
            return false;
        }
    }
    if let (Some(limit), Some(prev)) = (cfg.max_day_change, previous) {
        let change = if prev == 0.0 {
            if value == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ((value - prev) / prev).abs()
        };
        if change > limit {
            return false;
        }
    }
    true
}

/// Scores every observed point of `frame` whose reference date falls in
/// `horizon`. Each point gets its own trailing expectation.
///
/// Points failing the bounds or day-over-day check are promoted above every
/// plausible point of the stream in the horizon.
pub fn score_stream(
    frame: &StreamFrame,
    cfg: &ExpectationConfig,
    horizon: DateRange,
) -> Result<Vec<ScoredPoint>> {
    cfg.validate()?;
    if horizon.is_empty() {
        return Ok(Vec::new());
    }
    check_in_frame(frame, horizon.start)?;
    check_in_frame(frame, horizon.end)?;

    let eff = effective_series(frame, cfg.interpolation);
    let first = frame.points.partition_point(|p| p.time_value < horizon.start);
    let mut scratch = Vec::with_capacity(cfg.train_window);
    let mut scored = Vec::new();
    let mut max_plausible = 0.0f64;

    for idx in first..frame.points.len() {
        let point = frame.points[idx];
        if point.time_value > horizon.end {
            break;
        }
        let history_len = if idx == 0 { 0 } else { eff.observed[idx - 1] + 1 };
        let exp = expectation_from(&eff.values[..history_len], cfg, &mut scratch)?;
        let raw = ((point.value - exp.expected).abs() / exp.dispersion).min(f64::MAX);
        let previous = idx.checked_sub(1).map(|i| frame.points[i].value);
        let violated = !plausible(cfg, point.value, previous);
        if !violated {
            max_plausible = max_plausible.max(raw);
        }
        scored.push(ScoredPoint {
            key: frame.key.clone(),
            time_value: point.time_value,
            value: point.value,
            expected: exp.expected,
            dispersion: exp.dispersion,
            score: raw,
            violated_bound: violated,
        });
    }

    let promoted = 1.0 + max_plausible;
    for p in scored.iter_mut().filter(|p| p.violated_bound) {
        p.score = p.score.max(promoted);
    }
    Ok(scored)
}

/// The widest horizon ending at `frame.as_of` in which every observed point
/// has enough history, or `None` if no point does.
pub fn scorable_horizon(frame: &StreamFrame, cfg: &ExpectationConfig) -> Option<DateRange> {
    let eff = effective_series(frame, cfg.interpolation);
    let idx = (1..frame.points.len()).find(|&i| eff.observed[i - 1] + 1 >= MIN_HISTORY)?;
    Some(DateRange::new(frame.points[idx].time_value, frame.as_of))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoTier;
    use crate::store::FramePoint;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn frame_of(values: &[f64]) -> StreamFrame {
        let start = d("2024-01-01");
        let points = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let t = start + Duration::days(i as i64);
                FramePoint {
                    time_value: t,
                    value: v,
                    issue: t,
                }
            })
            .collect::<Vec<_>>();
        StreamFrame {
            key: StreamKey::new("p", "cases", GeoTier::State, "PA").unwrap(),
            as_of: start + Duration::days(values.len() as i64 - 1),
            window_days: 200,
            points,
        }
    }

    fn day(i: i64) -> NaiveDate {
        d("2024-01-01") + Duration::days(i)
    }

    #[test]
    fn constant_series_engages_floor() {
        let frame = frame_of(&[10.0; 8]);
        let e = expect(&frame, &ExpectationConfig::default(), day(7)).unwrap();
        assert_eq!(e.expected, 10.0);
        assert_eq!(e.dispersion, 1.0);
    }

    #[test]
    fn ramp_median_and_mad() {
        let mut values: Vec<f64> = (1..=28).map(f64::from).collect();
        values.push(0.0);
        let frame = frame_of(&values);
        let e = expect(&frame, &ExpectationConfig::default(), day(28)).unwrap();
        assert_eq!(e.expected, 14.5);
        assert!((e.dispersion - 1.4826 * 7.0).abs() < 1e-12);
        assert!((e.dispersion - 10.378).abs() < 1e-3);
    }

    #[test]
    fn last_value_model() {
        let mut values = vec![1.0; 9];
        values.push(42.0);
        values.push(0.0);
        let frame = frame_of(&values);
        let cfg = ExpectationConfig {
            model: ExpectationModel::LastValue,
            ..Default::default()
        };
        let e = expect(&frame, &cfg, day(10)).unwrap();
        assert_eq!(e.expected, 42.0);
        assert_eq!(e.dispersion, 1.0_f64.max(0.42));
    }

    #[test]
    fn gaussian_model_uses_sample_sd() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 100.0];
        let frame = frame_of(&values);
        let cfg = ExpectationConfig {
            model: ExpectationModel::RollingGaussian,
            dispersion_floor_abs: 0.0,
            dispersion_floor_rel: 0.0,
            ..Default::default()
        };
        let e = expect(&frame, &cfg, day(7)).unwrap();
        assert_eq!(e.expected, 4.0);
        assert!((e.dispersion - (28.0f64 / 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn insufficient_history() {
        let frame = frame_of(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            expect(&frame, &ExpectationConfig::default(), day(2)),
            Err(Error::InsufficientData { needed: 7, found: 2 })
        ));
        assert!(matches!(
            score_stream(&frame, &ExpectationConfig::default(), DateRange::new(day(0), day(2))),
            Err(Error::InsufficientData { .. })
        ));
        assert!(scorable_horizon(&frame, &ExpectationConfig::default()).is_none());
    }

    #[test]
    fn spike_after_constant_run() {
        let mut values = vec![10.0; 10];
        values.push(50.0);
        let frame = frame_of(&values);
        let cfg = ExpectationConfig::default();
        let horizon = scorable_horizon(&frame, &cfg).unwrap();
        assert_eq!(horizon.start, day(7));
        let scored = score_stream(&frame, &cfg, horizon).unwrap();
        assert_eq!(scored.len(), 4);
        assert_eq!(scored.last().unwrap().score, 40.0);
        assert!(scored[..3].iter().all(|p| p.score == 0.0));
    }

    #[test]
    fn bound_violation_promoted() {
        let mut values: Vec<f64> = (0..20).map(|i| 10.0 + (i % 3) as f64 * 5.0).collect();
        values[15] = -3.0;
        let frame = frame_of(&values);
        let cfg = ExpectationConfig {
            bounds: Some(Bounds {
                min: 0.0,
                max: f64::INFINITY,
            }),
            ..Default::default()
        };
        let horizon = scorable_horizon(&frame, &cfg).unwrap();
        let scored = score_stream(&frame, &cfg, horizon).unwrap();
        let bad = scored.iter().find(|p| p.value == -3.0).unwrap();
        assert!(bad.violated_bound);
        for p in scored.iter().filter(|p| !p.violated_bound) {
            assert!(bad.score > p.score);
        }
    }

    #[test]
    fn day_change_violation() {
        let mut values = vec![100.0; 12];
        values[10] = 101.0;
        values[11] = 300.0;
        let frame = frame_of(&values);
        let cfg = ExpectationConfig {
            max_day_change: Some(0.5),
            ..Default::default()
        };
        let scored = score_stream(&frame, &cfg, scorable_horizon(&frame, &cfg).unwrap()).unwrap();
        let flags: Vec<bool> = scored.iter().map(|p| p.violated_bound).collect();
        assert_eq!(flags.iter().filter(|f| **f).count(), 1);
        assert!(scored.last().unwrap().violated_bound);
    }

    #[test]
    fn empty_horizon_and_outside_frame() {
        let frame = frame_of(&[1.0; 10]);
        let cfg = ExpectationConfig::default();
        assert!(score_stream(&frame, &cfg, DateRange::new(day(5), day(4))).unwrap().is_empty());
        assert!(matches!(
            score_stream(&frame, &cfg, DateRange::new(day(8), day(30))),
            Err(Error::OutsideFrame(_))
        ));
    }

    #[test]
    fn interpolation_fills_short_gaps_only() {
        // 6 daily points, a 3-day hole, then more points.
        let mut frame = frame_of(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 0.0, 0.0, 10.0, 11.0, 12.0]);
        frame.points.retain(|p| p.value != 0.0);
        let cfg = ExpectationConfig {
            interpolation: Interpolation::LinearMaxGap3,
            ..Default::default()
        };
        // Without interpolation the point on day 10 has 7 predecessors,
        // with fills it has 10 and the fills lie on the line 6 -> 10.
        let plain = expect(&frame, &ExpectationConfig::default(), day(10)).unwrap();
        let filled = expect(&frame, &cfg, day(10)).unwrap();
        assert_eq!(plain.expected, 4.0);
        assert_eq!(filled.expected, 5.5);
        // Day 9 may not use fills anchored on itself.
        assert!(matches!(
            expect(&frame, &ExpectationConfig::default(), day(9)),
            Err(Error::InsufficientData { found: 6, .. })
        ));
        assert!(matches!(
            expect(&frame, &cfg, day(9)),
            Err(Error::InsufficientData { found: 6, .. })
        ));
    }

    #[test]
    fn invalid_configs() {
        let short = ExpectationConfig {
            train_window: 5,
            ..Default::default()
        };
        assert!(short.validate().is_err());
        let inverted = ExpectationConfig {
            bounds: Some(Bounds { min: 2.0, max: 1.0 }),
            ..Default::default()
        };
        assert!(inverted.validate().is_err());
        let negative = ExpectationConfig {
            dispersion_floor_abs: -1.0,
            ..Default::default()
        };
        assert!(negative.validate().is_err());
    }
}

// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Situational-awareness aggregates over one run's scores: the county
//! choropleth, the indicator panel and the children confidence band.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoHierarchy, GeoId, GeoTier};
use crate::key::{Indicator, StreamKey};
use crate::results::RunResults;
use crate::stats::{self, Z95};
use crate::store::{format_value, StoreSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Days in the trailing score window, ending at `as_of` inclusive.
    pub trailing_days: u32,
    /// Fixed log base. `None` picks `1 + max s̄` per run so the hottest
    /// cell lands on 1.
    pub w: Option<f64>,
    pub tiers: Vec<GeoTier>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            trailing_days: 7,
            w: None,
            tiers: GeoTier::ALL.to_vec(),
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trailing_days < 1 {
            return Err(Error::InvalidConfig("trailing_days must be >= 1".into()));
        }
        if let Some(w) = self.w {
            if !(w.is_finite() && w > 1.0) {
                return Err(Error::InvalidConfig(format!("w must be > 1, got {w}")));
            }
        }
        if self.tiers.is_empty() {
            return Err(Error::InvalidConfig("at least one tier is required".into()));
        }
        let unique: BTreeSet<_> = self.tiers.iter().collect();
        if unique.len() != self.tiers.len() {
            return Err(Error::InvalidConfig("tiers must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub county: String,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorScore {
    #[serde(flatten)]
    pub indicator: Indicator,
    pub score: f64,
}

/// Mean score of every stream of the run over the trailing window.
/// Streams with no scored point in the window are absent (read as 0).
pub fn trailing_means(run: &RunResults, trailing_days: u32) -> HashMap<&StreamKey, f64> {
    let start = run.as_of - Duration::days(i64::from(trailing_days) - 1);
    run.streams
        .iter()
        .filter_map(|s| {
            let window: Vec<f64> = s
                .points
                .iter()
                .filter(|p| p.time_value >= start && p.time_value <= run.as_of)
                .map(|p| p.score)
                .collect();
            stats::mean(&window).map(|m| (&s.key, m))
        })
        .collect()
}

fn run_indicators(run: &RunResults) -> Vec<Indicator> {
    let set: BTreeSet<Indicator> = run.streams.iter().map(|s| s.key.indicator()).collect();
    set.into_iter().collect()
}

/// Choropleth values before clamping to `[0, 1]`, with the log base used.
pub fn choropleth_unclamped(
    run: &RunResults,
    geo: &GeoHierarchy,
    indicators: Option<&[Indicator]>,
    cfg: &MapConfig,
) -> Result<(Vec<MapCell>, f64)> {
    cfg.validate()?;
    let indicators = match indicators {
        Some(list) => list.to_vec(),
        None => run_indicators(run),
    };
    let means = trailing_means(run, cfg.trailing_days);
    let counties: Vec<&GeoId> = geo.regions_of_tier(GeoTier::County).collect();

    // s̄ for every (county, tier, indicator) cell, in that nesting order.
    let mut cells: Vec<Vec<Vec<f64>>> = Vec::with_capacity(counties.len());
    let mut hottest = 0.0f64;
    for county in &counties {
        let per_tier = cfg
            .tiers
            .iter()
            .map(|&tier| {
                let region = geo.ancestor_at(county, tier);
                indicators
                    .iter()
                    .map(|ind| {
                        let s = region
                            .as_ref()
                            .and_then(|r| means.get(&ind.at(r)).copied())
                            .unwrap_or(0.0);
                        hottest = hottest.max(s);
                        s
                    })
                    .collect()
            })
            .collect();
        cells.push(per_tier);
    }

    let w = cfg.w.unwrap_or(1.0 + hottest);
    let log_w = w.ln();
    let tiers = cfg.tiers.len() as f64;
    let n_ind = indicators.len() as f64;
    let out = counties
        .iter()
        .zip(cells)
        .map(|(county, per_tier)| {
            let c = if log_w > 0.0 && n_ind > 0.0 {
                per_tier
                    .iter()
                    .map(|per_ind| per_ind.iter().map(|s| (s + 1.0).ln() / log_w).sum::<f64>() / n_ind)
                    .sum::<f64>()
                    / tiers
            } else {
                0.0
            };
            MapCell {
                county: county.code.clone(),
                c,
            }
        })
        .collect();
    Ok((out, w))
}

/// One value in `[0, 1]` per county in the hierarchy.
pub fn choropleth_scores(
    run: &RunResults,
    geo: &GeoHierarchy,
    indicators: Option<&[Indicator]>,
    cfg: &MapConfig,
) -> Result<Vec<MapCell>> {
    let (mut cells, _) = choropleth_unclamped(run, geo, indicators, cfg)?;
    for cell in &mut cells {
        cell.c = cell.c.clamp(0.0, 1.0);
    }
    Ok(cells)
}

/// Mean over `regions` of each indicator's trailing mean score, highest
/// first. Regions default to every county in the hierarchy.
pub fn indicator_scores(
    run: &RunResults,
    geo: &GeoHierarchy,
    regions: Option<&[GeoId]>,
    cfg: &MapConfig,
) -> Result<Vec<IndicatorScore>> {
    cfg.validate()?;
    let regions: Vec<GeoId> = match regions {
        Some(r) => r.to_vec(),
        None => geo.regions_of_tier(GeoTier::County).cloned().collect(),
    };
    let means = trailing_means(run, cfg.trailing_days);
    let mut scores: Vec<IndicatorScore> = run_indicators(run)
        .into_iter()
        .map(|indicator| {
            let score = if regions.is_empty() {
                0.0
            } else {
                regions
                    .iter()
                    .map(|r| means.get(&indicator.at(r)).copied().unwrap_or(0.0))
                    .sum::<f64>()
                    / regions.len() as f64
            };
            IndicatorScore { indicator, score }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.indicator.cmp(&b.indicator))
    });
    Ok(scores)
}

/// `county,c` rows for offline inspection.
pub fn write_map_csv<W: std::io::Write>(cells: &[MapCell], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["county", "c"])?;
    for cell in cells {
        wtr.write_record([cell.county.as_str(), &format_value(cell.c)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `signal,score` rows, the signal written as `source:signal`.
pub fn write_indicator_csv<W: std::io::Write>(scores: &[IndicatorScore], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["signal", "score"])?;
    for s in scores {
        wtr.write_record([s.indicator.to_string(), format_value(s.score)])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextBand {
    pub geo: GeoId,
    pub dates: Vec<NaiveDate>,
    pub mean_of_children: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Children reporting on each date.
    pub reporting: Vec<usize>,
}

/// Mean of the child streams per date with a 95% normal band.
pub fn context_band(
    store: &StoreSnapshot,
    geo_h: &GeoHierarchy,
    geo: &GeoId,
    indicator: &Indicator,
    as_of: NaiveDate,
    window_days: u32,
) -> Result<ContextBand> {
    context_band_with_z(store, geo_h, geo, indicator, as_of, window_days, Z95)
}

pub fn context_band_with_z(
    store: &StoreSnapshot,
    geo_h: &GeoHierarchy,
    geo: &GeoId,
    indicator: &Indicator,
    as_of: NaiveDate,
    window_days: u32,
    z: f64,
) -> Result<ContextBand> {
    if !geo_h.contains(geo) {
        return Err(Error::UnknownRegion(geo.clone()));
    }
    let mut by_date: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for child in geo_h.children(geo) {
        let key = indicator.at(child);
        if !store.contains(&key) {
            continue;
        }
        for p in store.latest_frame(&key, as_of, window_days)?.points {
            by_date.entry(p.time_value).or_default().push(p.value);
        }
    }
    if by_date.is_empty() {
        return Err(Error::NotApplicable(geo.clone()));
    }
    let mut band = ContextBand {
        geo: geo.clone(),
        dates: Vec::with_capacity(by_date.len()),
        mean_of_children: Vec::with_capacity(by_date.len()),
        ci_low: Vec::with_capacity(by_date.len()),
        ci_high: Vec::with_capacity(by_date.len()),
        reporting: Vec::with_capacity(by_date.len()),
    };
    for (date, values) in by_date {
        let mean = stats::mean(&values).expect("non-empty");
        let half = stats::normal_half_width(&values, z);
        band.dates.push(date);
        band.mean_of_children.push(mean);
        band.ci_low.push(mean - half);
        band.ci_high.push(mean + half);
        band.reporting.push(values.len());
    }
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::StreamScores;
    use crate::scoring::ScoredPoint;
    use crate::store::{Observation, StreamStore};

    fn geo() -> GeoHierarchy {
        let us = GeoId::new(GeoTier::Nation, "us");
        let pa = GeoId::new(GeoTier::State, "PA");
        let mut entries = vec![
            (us.clone(), None, "US".to_string()),
            (pa.clone(), Some(us), "PA".to_string()),
        ];
        for c in ["42001", "42003", "42005", "42007"] {
            entries.push((GeoId::new(GeoTier::County, c), Some(pa.clone()), c.to_string()));
        }
        GeoHierarchy::from_entries(entries).unwrap()
    }

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn scores(key: &str, pts: &[(&str, f64)]) -> StreamScores {
        let key: StreamKey = key.parse().unwrap();
        StreamScores {
            key: key.clone(),
            points: pts
                .iter()
                .map(|&(date, score)| ScoredPoint {
                    key: key.clone(),
                    time_value: d(date),
                    value: 0.0,
                    expected: 0.0,
                    dispersion: 1.0,
                    score,
                    violated_bound: false,
                })
                .collect(),
        }
    }

    #[test]
    fn all_zero_scores_give_zero_map() {
        let run = RunResults::new(
            d("2024-01-10"),
            vec![scores("p:s:county:42003", &[("2024-01-10", 0.0)])],
        );
        let cells = choropleth_scores(&run, &geo(), None, &MapConfig::default()).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.c == 0.0));
    }

    #[test]
    fn hand_evaluated_third() {
        let run = RunResults::new(
            d("2024-01-10"),
            vec![
                scores("p:s:county:42003", &[("2024-01-09", 100.0), ("2024-01-10", 100.0)]),
                scores("p:s:state:PA", &[("2024-01-10", 0.0)]),
            ],
        );
        let cfg = MapConfig {
            w: Some(101.0),
            ..Default::default()
        };
        let cells = choropleth_scores(&run, &geo(), None, &cfg).unwrap();
        let hot = cells.iter().find(|c| c.county == "42003").unwrap();
        assert!((hot.c - 1.0 / 3.0).abs() < 1e-12);
        // Default w maps the hottest cell's county term to 1 as well.
        let auto = choropleth_scores(&run, &geo(), None, &MapConfig::default()).unwrap();
        let hot_auto = auto.iter().find(|c| c.county == "42003").unwrap();
        assert!((hot_auto.c - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn trailing_window_excludes_old_scores() {
        let run = RunResults::new(
            d("2024-01-10"),
            vec![scores("p:s:county:42003", &[("2024-01-03", 50.0), ("2024-01-04", 4.0), ("2024-01-10", 2.0)])],
        );
        let means = trailing_means(&run, 7);
        assert_eq!(means.values().copied().collect::<Vec<_>>(), vec![3.0]);
    }

    #[test]
    fn indicator_means() {
        let run = RunResults::new(
            d("2024-01-10"),
            vec![
                scores("p:a:county:42001", &[("2024-01-10", 4.0)]),
                scores("p:a:county:42003", &[("2024-01-09", 1.0), ("2024-01-10", 3.0)]),
                scores("p:b:county:42005", &[("2024-01-10", 0.0)]),
            ],
        );
        let regions = [GeoId::new(GeoTier::County, "42001"), GeoId::new(GeoTier::County, "42003")];
        let out = indicator_scores(&run, &geo(), Some(&regions), &MapConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].indicator, Indicator::new("p", "a"));
        assert_eq!(out[0].score, 3.0);
        assert_eq!(out[1].score, 0.0);

        let single = [GeoId::new(GeoTier::County, "42001")];
        let out = indicator_scores(&run, &geo(), Some(&single), &MapConfig::default()).unwrap();
        assert_eq!(out[0].score, 4.0);
        let mut csv = Vec::new();
        write_indicator_csv(&out, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "signal,score\np:a,4\np:b,0\n");
        let mut csv = Vec::new();
        write_map_csv(&[MapCell { county: "42001".into(), c: 0.25 }], &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "county,c\n42001,0.25\n");
    }

    #[test]
    fn band_over_four_children() {
        let store = StreamStore::new();
        let t = d("2024-01-05");
        store.ingest_observations(["42001", "42003", "42005", "42007"].iter().zip([1.0, 2.0, 3.0, 4.0]).map(
            |(c, v)| Observation {
                key: format!("p:s:county:{c}").parse().unwrap(),
                time_value: t,
                issue: t,
                value: v,
            },
        ));
        let pa = GeoId::new(GeoTier::State, "PA");
        let band = context_band(&store.snapshot(), &geo(), &pa, &Indicator::new("p", "s"), t, 200).unwrap();
        assert_eq!(band.mean_of_children, vec![2.5]);
        let half = band.ci_high[0] - 2.5;
        assert!((half - 1.96 * (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert!((half - 1.26517).abs() < 1e-5);

        let county = GeoId::new(GeoTier::County, "42003");
        assert!(matches!(
            context_band(&store.snapshot(), &geo(), &county, &Indicator::new("p", "s"), t, 200),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn invalid_map_config() {
        let bad = MapConfig {
            w: Some(1.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let zero = MapConfig {
            trailing_days: 0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
    }
}

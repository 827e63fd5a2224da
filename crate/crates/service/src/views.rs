// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Response bodies, built from one snapshot of each store.

use chrono::NaiveDate;
use epiwatch_core::awareness::{
    choropleth_scores, context_band, indicator_scores, ContextBand, IndicatorScore, MapCell, MapConfig,
};
use epiwatch_core::evolution::{evolution_heatmap, EvolutionHeatmap};
use epiwatch_core::filter::FilterSpec;
use epiwatch_core::geo::GeoRelatives;
use epiwatch_core::rank::{rank_streams, RankedRow};
use epiwatch_core::results::StoredRun;
use epiwatch_core::store::{FramePoint, StoreSnapshot};
use epiwatch_core::triage::TriageRecord;
use epiwatch_core::{Error, GeoHierarchy, Result, StreamKey};
use serde::Serialize;

use crate::workspace::{Runs, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRowView {
    #[serde(flatten)]
    pub row: RankedRow,
    pub display_name: String,
    /// Display names from the nation down to the stream's region.
    pub geo_path: Vec<String>,
    /// Mean per-date variance of the stream's score across runs.
    pub avg_variance: Option<f64>,
    pub triage: Vec<TriageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rankings {
    pub as_of: NaiveDate,
    pub run_id: String,
    pub k: usize,
    pub offset: usize,
    pub filter: Option<String>,
    /// Ranked streams passing the filter, before paging.
    pub total: usize,
    pub rows: Vec<RankedRowView>,
}

fn display_name(geo: &GeoHierarchy, key: &StreamKey) -> String {
    geo.node(&key.geo())
        .map(|n| n.display_name.clone())
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| key.geo_value.clone())
}

/// Ranks `run`, keeps rows `offset+1 ..= offset+k` and decorates them.
pub fn rankings(
    ws: &Workspace,
    runs: &Runs,
    run: &StoredRun,
    k: usize,
    offset: usize,
    filter: Option<&FilterSpec>,
) -> Rankings {
    let geo = ws.geo();
    let scored = &run.results.streams;
    let total = scored
        .iter()
        .filter(|s| !s.points.is_empty())
        .filter(|s| filter.is_none_or(|f| f.matches(&s.key, geo)))
        .count();
    let triage = ws.triage().snapshot();
    let rows = rank_streams(scored, offset.saturating_add(k), filter, geo)
        .into_iter()
        .skip(offset)
        .map(|row| {
            let avg_variance = evolution_heatmap(runs, &row.key, run.results.as_of)
                .ok()
                .map(|h| h.avg_variance);
            let attached = triage
                .records
                .values()
                .filter(|r| r.key == row.key)
                .cloned()
                .collect();
            RankedRowView {
                display_name: display_name(geo, &row.key),
                geo_path: geo.display_path(&row.key.geo()),
                avg_variance,
                triage: attached,
                row,
            }
        })
        .collect();
    Rankings {
        as_of: run.results.as_of,
        run_id: run.run_id.clone(),
        k,
        offset,
        filter: filter.map(|f| f.to_string()),
        total,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesView {
    pub key: StreamKey,
    pub display_name: String,
    pub points: Vec<FramePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamContext {
    pub as_of: NaiveDate,
    pub key: StreamKey,
    pub series: SeriesView,
    pub parent: Option<SeriesView>,
    /// Same-indicator streams sharing the parent region.
    pub siblings: Vec<SeriesView>,
    /// Band over the child regions; absent for leaves and childless data.
    pub children: Option<ContextBand>,
}

fn series(
    snapshot: &StoreSnapshot,
    geo: &GeoHierarchy,
    key: &StreamKey,
    as_of: NaiveDate,
    window_days: u32,
) -> Result<SeriesView> {
    Ok(SeriesView {
        key: key.clone(),
        display_name: display_name(geo, key),
        points: snapshot.latest_frame(key, as_of, window_days)?.points,
    })
}

pub fn stream_context(ws: &Workspace, key: &StreamKey, as_of: NaiveDate) -> Result<StreamContext> {
    let snapshot = ws.snapshot();
    if !snapshot.contains(key) {
        return Err(Error::UnknownStream(key.clone()));
    }
    let geo = ws.geo();
    let window = ws.scoring().window_days;
    let indicator = key.indicator();
    // A stream outside the hierarchy simply has no relatives.
    let relatives = match geo.geo_relatives(&key.geo()) {
        Ok(r) => r,
        Err(Error::UnknownRegion(_)) => GeoRelatives {
            parent: None,
            siblings: Vec::new(),
            children: Vec::new(),
        },
        Err(e) => return Err(e),
    };
    let present = |g: &epiwatch_core::GeoId| {
        let k = indicator.at(g);
        snapshot.contains(&k).then_some(k)
    };
    let parent = match relatives.parent.as_ref().and_then(|p| present(&p.geo)) {
        Some(k) => Some(series(&snapshot, geo, &k, as_of, window)?),
        None => None,
    };
    let siblings = relatives
        .siblings
        .iter()
        .filter_map(|g| present(g))
        .map(|k| series(&snapshot, geo, &k, as_of, window))
        .collect::<Result<_>>()?;
    let children = match context_band(&snapshot, geo, &key.geo(), &indicator, as_of, window) {
        Ok(band) => Some(band),
        Err(Error::NotApplicable(_) | Error::UnknownRegion(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(StreamContext {
        as_of,
        key: key.clone(),
        series: series(&snapshot, geo, key, as_of, window)?,
        parent,
        siblings,
        children,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evolution {
    pub run_id: String,
    #[serde(flatten)]
    pub heatmap: EvolutionHeatmap,
}

pub fn evolution(runs: &Runs, key: &StreamKey, run: &StoredRun) -> Result<Evolution> {
    Ok(Evolution {
        run_id: run.run_id.clone(),
        heatmap: evolution_heatmap(runs, key, run.results.as_of)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Panels {
    pub as_of: NaiveDate,
    pub run_id: String,
    pub map: Vec<MapCell>,
    pub indicators: Vec<IndicatorScore>,
}

pub fn panels(ws: &Workspace, run: &StoredRun, cfg: &MapConfig) -> Result<Panels> {
    Ok(Panels {
        as_of: run.results.as_of,
        run_id: run.run_id.clone(),
        map: choropleth_scores(&run.results, ws.geo(), None, cfg)?,
        indicators: indicator_scores(&run.results, ws.geo(), None, cfg)?,
    })
}

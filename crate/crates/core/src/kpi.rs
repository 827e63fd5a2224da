// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Reviewer KPIs computed from session logs and triage records.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;

use crate::filter::parse_filter;
use crate::scoring::DateRange;
use crate::stats::{self, Z95};
use crate::store::format_value;
use crate::triage::{EventType, LogEntry, SessionAction, TriageData};

/// Gaps longer than this count as idle time, not session time.
pub const IDLE_CAP_SECS: f64 = 600.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl MeanCi {
    fn of(values: &[f64]) -> MeanCi {
        let Some(mean) = stats::mean(values) else {
            return MeanCi::default();
        };
        let half = stats::normal_half_width(values, Z95);
        MeanCi {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            n: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Characterization {
    pub event_type: String,
    pub severity: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    pub period: DateRange,
    pub sessions: usize,
    pub time_per_row_secs: MeanCi,
    pub events_per_session: MeanCi,
    pub active_minutes: f64,
    pub events_per_minute: f64,
    pub edits: usize,
    pub meta_events: usize,
    pub pct_not_source: f64,
    pub filter_uses_per_day: f64,
    /// Population standard deviation across active days.
    pub filter_uses_per_day_sd: f64,
    pub predicates_per_filter: f64,
    pub characterization_distribution: Vec<Characterization>,
}

impl KpiReport {
    /// `metric,value` rows; the characterization distribution becomes one
    /// `characterization:<type>:<severity>` row per cell.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> crate::error::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["metric", "value"])?;
        let mut row = |name: &str, value: String| wtr.write_record([name, value.as_str()]);
        row("period_start", self.period.start.to_string())?;
        row("period_end", self.period.end.to_string())?;
        row("sessions", self.sessions.to_string())?;
        for (name, ci) in [
            ("time_per_row_secs", &self.time_per_row_secs),
            ("events_per_session", &self.events_per_session),
        ] {
            row(name, format_value(ci.mean))?;
            row(&format!("{name}_ci_low"), format_value(ci.ci_low))?;
            row(&format!("{name}_ci_high"), format_value(ci.ci_high))?;
            row(&format!("{name}_n"), ci.n.to_string())?;
        }
        row("active_minutes", format_value(self.active_minutes))?;
        row("events_per_minute", format_value(self.events_per_minute))?;
        row("edits", self.edits.to_string())?;
        row("meta_events", self.meta_events.to_string())?;
        row("pct_not_source", format_value(self.pct_not_source))?;
        row("filter_uses_per_day", format_value(self.filter_uses_per_day))?;
        row("filter_uses_per_day_sd", format_value(self.filter_uses_per_day_sd))?;
        row("predicates_per_filter", format_value(self.predicates_per_filter))?;
        for c in &self.characterization_distribution {
            row(
                &format!("characterization:{}:{}", c.event_type, c.severity),
                c.count.to_string(),
            )?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn predicate_count(payload: &serde_json::Value) -> Option<f64> {
    if let Some(n) = payload.get("predicates").and_then(|v| v.as_f64()) {
        return Some(n);
    }
    let text = payload.get("filter")?.as_str()?;
    parse_filter(text).ok().map(|f| f.predicates().len() as f64)
}

/// KPIs over everything timestamped inside `period` (UTC dates, inclusive).
/// Depends only on the stored content, not on the order it arrived in.
pub fn compute_kpis(data: &TriageData, period: DateRange) -> KpiReport {
    let in_period = |date: NaiveDate| period.contains(date);

    // Per-session entries inside the period, time-ordered.
    let mut sessions: BTreeMap<&str, Vec<&LogEntry>> = BTreeMap::new();
    for log in data.sessions.values() {
        for e in &log.entries {
            if in_period(e.timestamp.date_naive()) {
                sessions.entry(log.session_id.as_str()).or_default().push(e);
            }
        }
    }
    for entries in sessions.values_mut() {
        entries.sort_by_key(|e| e.timestamp);
    }

    let mut row_times = Vec::new();
    let mut events_per_session = Vec::new();
    let mut active_secs = 0.0;
    let mut total_events = 0usize;
    let mut filters_by_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut active_days: BTreeSet<NaiveDate> = BTreeSet::new();
    let mut predicate_counts = Vec::new();

    for entries in sessions.values() {
        let mut events = 0usize;
        for (i, e) in entries.iter().enumerate() {
            active_days.insert(e.timestamp.date_naive());
            if i > 0 {
                let gap = (e.timestamp - entries[i - 1].timestamp).as_seconds_f64();
                if gap <= IDLE_CAP_SECS {
                    active_secs += gap;
                }
            }
            match e.action {
                SessionAction::RowExpanded => {
                    let end = entries[i + 1..].iter().find(|n| {
                        matches!(
                            n.action,
                            SessionAction::RowExpanded
                                | SessionAction::RowCollapsed
                                | SessionAction::SessionEnd
                        )
                    });
                    if let Some(end) = end {
                        row_times.push((end.timestamp - e.timestamp).as_seconds_f64());
                    }
                }
                SessionAction::EventRecorded => events += 1,
                SessionAction::FilterApplied => {
                    *filters_by_day.entry(e.timestamp.date_naive()).or_default() += 1;
                    if let Some(n) = predicate_count(&e.payload) {
                        predicate_counts.push(n);
                    }
                }
                SessionAction::RowCollapsed | SessionAction::PanelViewed | SessionAction::SessionEnd => {}
            }
        }
        total_events += events;
        events_per_session.push(events as f64);
    }

    let per_day: Vec<f64> = active_days
        .iter()
        .map(|d| filters_by_day.get(d).copied().unwrap_or(0) as f64)
        .collect();
    let active_minutes = active_secs / 60.0;

    let records: Vec<_> = data
        .records
        .values()
        .filter(|r| in_period(r.created_at.date_naive()))
        .collect();
    let sourced: Vec<_> = records
        .iter()
        .filter(|r| r.event_type != EventType::NonEvent)
        .collect();
    let pct_not_source = if sourced.is_empty() {
        0.0
    } else {
        100.0 * sourced.iter().filter(|r| !r.is_source).count() as f64 / sourced.len() as f64
    };
    let mut distribution: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in &records {
        *distribution
            .entry((r.event_type.to_string(), r.severity.to_string()))
            .or_default() += 1;
    }

    KpiReport {
        period,
        sessions: sessions.len(),
        time_per_row_secs: MeanCi::of(&row_times),
        events_per_session: MeanCi::of(&events_per_session),
        active_minutes,
        events_per_minute: if active_minutes > 0.0 {
            total_events as f64 / active_minutes
        } else {
            0.0
        },
        edits: data
            .history
            .iter()
            .filter(|e| in_period(e.edited_at.date_naive()))
            .count(),
        meta_events: data
            .meta_events
            .values()
            .filter(|m| in_period(m.created_at.date_naive()))
            .count(),
        pct_not_source,
        filter_uses_per_day: stats::mean(&per_day).unwrap_or(0.0),
        filter_uses_per_day_sd: stats::population_sd(&per_day),
        predicates_per_filter: stats::mean(&predicate_counts).unwrap_or(0.0),
        characterization_distribution: distribution
            .into_iter()
            .map(|((event_type, severity), count)| Characterization {
                event_type,
                severity,
                count,
            })
            .collect(),
    }
}

// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Revision-aware storage of observation streams.
//!
//! Every observation is an immutable `(key, time_value, issue) -> value`
//! fact. Corrections arrive as new issues; an existing triple reported with a
//! different value is a conflict and is rejected. Readers work on immutable
//! snapshots, and an ingest batch becomes visible in one swap.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTier;
use crate::key::StreamKey;

pub const DEFAULT_WINDOW_DAYS: u32 = 200;
pub const WIRE_HEADER: [&str; 7] = [
    "source",
    "signal",
    "geo_type",
    "geo_value",
    "time_value",
    "issue",
    "value",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub key: StreamKey,
    pub time_value: NaiveDate,
    pub issue: NaiveDate,
    pub value: f64,
}

impl Observation {
    pub fn lag(&self) -> i64 {
        (self.issue - self.time_value).num_days()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Revision {
    pub time_value: NaiveDate,
    pub issue: NaiveDate,
    pub value: f64,
}

/// All revisions of one stream, sorted by `(time_value, issue)`.
#[derive(Debug, Clone, Default)]
pub struct Series {
    revisions: Vec<Revision>,
}

impl Series {
    pub fn revisions(&self) -> &[Revision] {
        &self.revisions
    }

    fn find(&self, time_value: NaiveDate, issue: NaiveDate) -> std::result::Result<usize, usize> {
        self.revisions
            .binary_search_by(|r| (r.time_value, r.issue).cmp(&(time_value, issue)))
    }

    fn first_at_or_after(&self, time_value: NaiveDate) -> usize {
        self.revisions.partition_point(|r| r.time_value < time_value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FramePoint {
    pub time_value: NaiveDate,
    pub value: f64,
    /// The issue this value was taken from.
    pub issue: NaiveDate,
}

/// One stream as it looked on `as_of`: for each reference date in the
/// window, the value from the latest issue not after `as_of`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamFrame {
    pub key: StreamKey,
    pub as_of: NaiveDate,
    pub window_days: u32,
    pub points: Vec<FramePoint>,
}

impl StreamFrame {
    /// First reference date covered by the window.
    pub fn window_start(&self) -> NaiveDate {
        window_start(self.as_of, self.window_days)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.points.iter().map(|p| p.time_value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// The frame restricted to reference dates `<= last`.
    pub fn truncated(&self, last: NaiveDate) -> StreamFrame {
        StreamFrame {
            key: self.key.clone(),
            as_of: self.as_of,
            window_days: self.window_days,
            points: self
                .points
                .iter()
                .copied()
                .filter(|p| p.time_value <= last)
                .collect(),
        }
    }
}

fn window_start(as_of: NaiveDate, window_days: u32) -> NaiveDate {
    as_of - Duration::days(i64::from(window_days.max(1)) - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based record number within the batch.
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub inserted: usize,
    /// Revisions are immutable, so nothing is ever replaced; kept for report
    /// compatibility.
    pub replaced: usize,
    pub unchanged: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

/// One wire-format record before validation.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawRow {
    pub source: String,
    pub signal: String,
    pub geo_type: String,
    pub geo_value: String,
    pub time_value: String,
    pub issue: String,
    pub value: String,
}

impl RawRow {
    pub fn parse(&self) -> std::result::Result<Observation, String> {
        let geo_type = self
            .geo_type
            .trim()
            .parse::<GeoTier>()
            .map_err(|_| format!("unknown tier {:?}", self.geo_type))?;
        let key = StreamKey::new(
            self.source.trim(),
            self.signal.trim(),
            geo_type,
            self.geo_value.trim(),
        )
        .map_err(|e| e.to_string())?;
        let time_value = parse_date(&self.time_value, "time_value")?;
        let issue = parse_date(&self.issue, "issue")?;
        let value: f64 = self
            .value
            .trim()
            .parse()
            .map_err(|_| format!("malformed value {:?}", self.value))?;
        if !value.is_finite() {
            return Err(format!("non-finite value {:?}", self.value));
        }
        if issue < time_value {
            return Err(format!("issue {issue} precedes time_value {time_value}"));
        }
        Ok(Observation {
            key,
            time_value,
            issue,
            value,
        })
    }
}

fn parse_date(text: &str, field: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .map_err(|_| format!("malformed {field} {text:?} (expected YYYY-MM-DD)"))
}

fn json_field(obj: &serde_json::Map<String, serde_json::Value>, name: &str) -> String {
    match obj.get(name) {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(serde_json::Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    }
}

/// Parses wire records: delimited text with a header row, or one JSON object
/// per line. Malformed records come back as `Err(reason)` in place.
pub fn read_wire<R: Read>(reader: R) -> Result<Vec<std::result::Result<RawRow, String>>> {
    let mut buf = BufReader::new(reader);
    let looks_like_json = loop {
        let peek = buf.fill_buf()?;
        match peek.iter().position(|b| !b.is_ascii_whitespace()) {
            Some(i) => break peek[i] == b'{',
            None if peek.is_empty() => return Ok(Vec::new()),
            None => {
                let n = peek.len();
                buf.consume(n);
            }
        }
    };

    let mut rows = Vec::new();
    if looks_like_json {
        for line in buf.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = match serde_json::from_str::<serde_json::Value>(&line) {
                Ok(serde_json::Value::Object(obj)) => Ok(RawRow {
                    source: json_field(&obj, "source"),
                    signal: json_field(&obj, "signal"),
                    geo_type: json_field(&obj, "geo_type"),
                    geo_value: json_field(&obj, "geo_value"),
                    time_value: json_field(&obj, "time_value"),
                    issue: json_field(&obj, "issue"),
                    value: json_field(&obj, "value"),
                }),
                Ok(_) => Err("record is not an object".to_string()),
                Err(e) => Err(format!("malformed record: {e}")),
            };
            rows.push(row);
        }
    } else {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(buf);
        for record in rdr.deserialize::<RawRow>() {
            rows.push(record.map_err(|e| format!("malformed row: {e}")));
        }
    }
    Ok(rows)
}

/// Immutable view of the store.
#[derive(Debug, Clone, Default)]
pub struct StoreSnapshot {
    series: BTreeMap<StreamKey, Arc<Series>>,
    version: u64,
}

impl StoreSnapshot {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn stream_count(&self) -> usize {
        self.series.len()
    }

    pub fn revision_count(&self) -> usize {
        self.series.values().map(|s| s.revisions.len()).sum()
    }

    pub fn keys(&self) -> impl Iterator<Item = &StreamKey> {
        self.series.keys()
    }

    pub fn contains(&self, key: &StreamKey) -> bool {
        self.series.contains_key(key)
    }

    pub fn series(&self, key: &StreamKey) -> Result<&Series> {
        self.series
            .get(key)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownStream(key.clone()))
    }

    pub fn latest_frame(
        &self,
        key: &StreamKey,
        as_of: NaiveDate,
        window_days: u32,
    ) -> Result<StreamFrame> {
        let series = self.series(key)?;
        let start = window_start(as_of, window_days);
        let revs = &series.revisions[series.first_at_or_after(start)..];
        let mut points: Vec<FramePoint> = Vec::new();
        for rev in revs {
            if rev.time_value > as_of {
                break;
            }
            if rev.issue > as_of {
                continue;
            }
            // Issues ascend within a reference date, so the last visible one wins.
            match points.last_mut() {
                Some(last) if last.time_value == rev.time_value => {
                    last.value = rev.value;
                    last.issue = rev.issue;
                }
                _ => points.push(FramePoint {
                    time_value: rev.time_value,
                    value: rev.value,
                    issue: rev.issue,
                }),
            }
        }
        Ok(StreamFrame {
            key: key.clone(),
            as_of,
            window_days,
            points,
        })
    }

    pub fn issues_of(&self, key: &StreamKey, time_value: NaiveDate) -> Result<Vec<(NaiveDate, f64)>> {
        let series = self.series(key)?;
        let from = series.first_at_or_after(time_value);
        Ok(series.revisions[from..]
            .iter()
            .take_while(|r| r.time_value == time_value)
            .map(|r| (r.issue, r.value))
            .collect())
    }

    /// Distinct issue dates present anywhere in the store, ascending.
    pub fn issue_dates(&self) -> Vec<NaiveDate> {
        let mut dates: Vec<NaiveDate> = self
            .series
            .values()
            .flat_map(|s| s.revisions.iter().map(|r| r.issue))
            .collect();
        dates.sort_unstable();
        dates.dedup();
        dates
    }

    /// Writes every revision in the wire format, ordered by key, reference
    /// date and issue.
    pub fn dump<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(WIRE_HEADER)?;
        for (key, series) in &self.series {
            for rev in &series.revisions {
                wtr.write_record([
                    key.source.as_str(),
                    key.signal.as_str(),
                    key.geo_type.as_str(),
                    key.geo_value.as_str(),
                    &rev.time_value.format("%Y-%m-%d").to_string(),
                    &rev.issue.format("%Y-%m-%d").to_string(),
                    &format_value(rev.value),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest text that parses back to the same bits.
pub fn format_value(value: f64) -> String {
    format!("{value}")
}

/// Revision store with snapshot reads and a single batch writer.
#[derive(Debug, Default)]
pub struct StreamStore {
    current: RwLock<Arc<StoreSnapshot>>,
    writer: Mutex<()>,
}

impl StreamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.current.read().clone()
    }

    /// Ingests wire-format text (delimited or line-delimited JSON).
    pub fn ingest<R: Read>(&self, reader: R) -> Result<IngestReport> {
        let rows = read_wire(reader)?;
        Ok(self.ingest_parsed(rows.into_iter().map(|r| r.and_then(|raw| raw.parse()))))
    }

    pub fn ingest_observations(&self, observations: impl IntoIterator<Item = Observation>) -> IngestReport {
        self.ingest_parsed(observations.into_iter().map(Ok))
    }

    fn ingest_parsed(
        &self,
        rows: impl IntoIterator<Item = std::result::Result<Observation, String>>,
    ) -> IngestReport {
        let _guard = self.writer.lock();
        let base = self.snapshot();
        let mut report = IngestReport::default();

        // key -> (time_value, issue) -> (value, rows carrying it, conflicting)
        type Pending = HashMap<(NaiveDate, NaiveDate), (f64, Vec<usize>, bool)>;
        let mut batch: BTreeMap<StreamKey, Pending> = BTreeMap::new();
        for (idx, row) in rows.into_iter().enumerate() {
            let row_no = idx + 1;
            match row {
                Err(reason) => report.rejected.push(Rejection {
                    row: row_no,
                    reason,
                }),
                Ok(obs) => {
                    let entry = batch
                        .entry(obs.key)
                        .or_default()
                        .entry((obs.time_value, obs.issue))
                        .or_insert((obs.value, Vec::new(), false));
                    if entry.0.to_bits() != obs.value.to_bits() {
                        entry.2 = true;
                    }
                    entry.1.push(row_no);
                }
            }
        }

        let mut next = (*base).clone();
        for (key, pending) in batch {
            let existing = base.series.get(&key);
            let mut added = Vec::new();
            for ((time_value, issue), (value, row_nos, conflicting)) in pending {
                let stored = existing.and_then(|s| {
                    s.find(time_value, issue).ok().map(|i| s.revisions[i].value)
                });
                match stored {
                    Some(v) if v.to_bits() == value.to_bits() && !conflicting => {
                        report.unchanged += row_nos.len();
                    }
                    Some(v) => {
                        for row in row_nos {
                            report.rejected.push(Rejection {
                                row,
                                reason: format!(
                                    "conflict: {key} {time_value} issue {issue} already stored as {}",
                                    format_value(v)
                                ),
                            });
                        }
                    }
                    None if conflicting => {
                        for row in row_nos {
                            report.rejected.push(Rejection {
                                row,
                                reason: format!(
                                    "conflict: {key} {time_value} issue {issue} has differing values within the batch"
                                ),
                            });
                        }
                    }
                    None => {
                        report.inserted += 1;
                        report.unchanged += row_nos.len() - 1;
                        added.push(Revision {
                            time_value,
                            issue,
                            value,
                        });
                    }
                }
            }
            if added.is_empty() {
                continue;
            }
            let mut series = existing.map(|s| (**s).clone()).unwrap_or_default();
            series.revisions.extend(added);
            series
                .revisions
                .sort_unstable_by(|a, b| (a.time_value, a.issue).cmp(&(b.time_value, b.issue)));
            next.series.insert(key, Arc::new(series));
        }
        report.rejected.sort_by_key(|r| r.row);

        if report.inserted > 0 {
            next.version = base.version + 1;
            *self.current.write() = Arc::new(next);
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    const HEADER: &str = "source,signal,geo_type,geo_value,time_value,issue,value\n";

    #[test]
    fn clean_insert_then_idempotent() {
        let text = format!(
            "{HEADER}p,cases,state,PA,2024-01-01,2024-01-02,1\np,cases,state,PA,2024-01-02,2024-01-03,2\np,cases,state,PA,2024-01-03,2024-01-04,3\n"
        );
        let store = StreamStore::new();
        let first = store.ingest(text.as_bytes()).unwrap();
        assert_eq!((first.inserted, first.replaced, first.rejected_count()), (3, 0, 0));
        let version = store.snapshot().version();
        let second = store.ingest(text.as_bytes()).unwrap();
        assert_eq!((second.inserted, second.rejected_count()), (0, 0));
        assert_eq!(second.unchanged, 3);
        assert_eq!(store.snapshot().version(), version);
    }

    #[test]
    fn unknown_tier_rejected() {
        let text = format!("{HEADER}p,cases,planet,earth,2024-01-01,2024-01-02,1\n");
        let report = StreamStore::new().ingest(text.as_bytes()).unwrap();
        assert_eq!(report.rejected_count(), 1);
        assert_eq!(report.rejected[0].row, 1);
        assert!(report.rejected[0].reason.contains("unknown tier"));
    }

    #[test]
    fn malformed_rows_carry_row_numbers() {
        let text = format!(
            "{HEADER}p,cases,state,PA,2024-01-01,2024-01-02,1\np,cases,state,PA,2024-13-01,2024-01-02,1\np,cases,state,PA,2024-01-05,2024-01-02,1\np,cases,state,PA,2024-01-01,2024-01-03,abc\n"
        );
        let report = StreamStore::new().ingest(text.as_bytes()).unwrap();
        assert_eq!(report.inserted, 1);
        let rows: Vec<usize> = report.rejected.iter().map(|r| r.row).collect();
        assert_eq!(rows, vec![2, 3, 4]);
        assert!(report.rejected[1].reason.contains("precedes"));
    }

    #[test]
    fn conflicting_revision_rejected() {
        let store = StreamStore::new();
        store
            .ingest(format!("{HEADER}p,cases,state,PA,2024-01-01,2024-01-02,1\n").as_bytes())
            .unwrap();
        let report = store
            .ingest(format!("{HEADER}p,cases,state,PA,2024-01-01,2024-01-02,5\n").as_bytes())
            .unwrap();
        assert_eq!(report.rejected_count(), 1);
        assert!(report.rejected[0].reason.starts_with("conflict"));
        let key: StreamKey = "p:cases:state:PA".parse().unwrap();
        assert_eq!(
            store.snapshot().issues_of(&key, d("2024-01-01")).unwrap(),
            vec![(d("2024-01-02"), 1.0)]
        );
    }

    #[test]
    fn json_lines_accepted() {
        let text = r#"{"source":"p","signal":"cases","geo_type":"state","geo_value":"PA","time_value":"2024-01-01","issue":"2024-01-02","value":1.5}
{"source":"p","signal":"cases","geo_type":"state","geo_value":"PA","time_value":"2024-01-02","issue":"2024-01-02","value":"2"}
"#;
        let report = StreamStore::new().ingest(text.as_bytes()).unwrap();
        assert_eq!(report.inserted, 2);
    }

    #[test]
    fn latest_issue_not_after_as_of() {
        let text = format!(
            "{HEADER}p,cases,state,PA,2024-01-04,2024-01-05,10\np,cases,state,PA,2024-01-04,2024-01-09,12\n"
        );
        let store = StreamStore::new();
        store.ingest(text.as_bytes()).unwrap();
        let snap = store.snapshot();
        let key: StreamKey = "p:cases:state:PA".parse().unwrap();
        let early = snap.latest_frame(&key, d("2024-01-07"), 200).unwrap();
        assert_eq!(early.points.len(), 1);
        assert_eq!((early.points[0].time_value, early.points[0].value), (d("2024-01-04"), 10.0));
        let late = snap.latest_frame(&key, d("2024-01-10"), 200).unwrap();
        assert_eq!(late.points[0].value, 12.0);
        assert_eq!(late.points[0].issue, d("2024-01-09"));
        // Before the first issue the date is absent.
        assert!(snap.latest_frame(&key, d("2024-01-04"), 200).unwrap().points.is_empty());
    }

    #[test]
    fn window_bounds_frame() {
        let store = StreamStore::new();
        let key: StreamKey = "p:cases:state:PA".parse().unwrap();
        let start = d("2024-01-01");
        store.ingest_observations((0..200).map(|i| {
            let t = start + Duration::days(i);
            Observation {
                key: key.clone(),
                time_value: t,
                issue: t,
                value: i as f64,
            }
        }));
        let as_of = start + Duration::days(199);
        let frame = store.snapshot().latest_frame(&key, as_of, 7).unwrap();
        assert_eq!(frame.points.len(), 7);
        assert!(frame.points.windows(2).all(|w| w[0].time_value < w[1].time_value));
        assert_eq!(frame.points[0].time_value, frame.window_start());
    }

    #[test]
    fn issues_of_orders_and_handles_missing() {
        let text = format!(
            "{HEADER}p,cases,state,PA,2024-01-04,2024-01-09,12\np,cases,state,PA,2024-01-04,2024-01-05,10\np,cases,state,PA,2024-01-06,2024-01-06,3\n"
        );
        let store = StreamStore::new();
        store.ingest(text.as_bytes()).unwrap();
        let snap = store.snapshot();
        let key: StreamKey = "p:cases:state:PA".parse().unwrap();
        assert_eq!(
            snap.issues_of(&key, d("2024-01-04")).unwrap(),
            vec![(d("2024-01-05"), 10.0), (d("2024-01-09"), 12.0)]
        );
        assert_eq!(snap.issues_of(&key, d("2024-01-06")).unwrap().len(), 1);
        assert!(snap.issues_of(&key, d("2024-01-05")).unwrap().is_empty());
        let missing: StreamKey = "p:cases:state:OH".parse().unwrap();
        assert!(matches!(snap.issues_of(&missing, d("2024-01-04")), Err(Error::UnknownStream(_))));
        assert!(matches!(snap.latest_frame(&missing, d("2024-01-04"), 200), Err(Error::UnknownStream(_))));
    }

    #[test]
    fn dump_restore_is_bit_exact() {
        let text = format!(
            "{HEADER}p,cases,state,PA,2024-01-04,2024-01-09,0.1\np,cases,state,PA,2024-01-04,2024-01-05,10.50\nq,deaths,county,42003,2024-01-06,2024-01-06,-3e-7\n"
        );
        let store = StreamStore::new();
        store.ingest(text.as_bytes()).unwrap();
        let mut first = Vec::new();
        store.snapshot().dump(&mut first).unwrap();
        let restored = StreamStore::new();
        let report = restored.ingest(first.as_slice()).unwrap();
        assert_eq!(report.inserted, 3);
        let mut second = Vec::new();
        restored.snapshot().dump(&mut second).unwrap();
        assert_eq!(first, second);
    }
}

// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Results store: the scores of each daily run, keyed by `as_of`.
//!
//! A run is written whole. On disk each run is one delimited file written to
//! a temporary name and renamed into place; in memory the new run replaces
//! the old one in a single swap, so readers never see half a run.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use chrono::NaiveDate;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::GeoTier;
use crate::key::StreamKey;
use crate::rank::StreamScores;
use crate::scoring::ScoredPoint;
use crate::store::format_value;

pub const RESULTS_HEADER: [&str; 11] = [
    "source",
    "signal",
    "geo_type",
    "geo_value",
    "time_value",
    "as_of",
    "score",
    "expected",
    "dispersion",
    "violated_bound",
    "value",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub source: String,
    pub signal: String,
    pub geo_type: GeoTier,
    pub geo_value: String,
    pub time_value: NaiveDate,
    pub as_of: NaiveDate,
    pub score: f64,
    pub expected: f64,
    pub dispersion: f64,
    pub violated_bound: bool,
    pub value: f64,
}

/// All scores produced by one run. Streams are sorted by key and each
/// stream's points by date.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResults {
    pub as_of: NaiveDate,
    pub streams: Vec<StreamScores>,
}

impl RunResults {
    pub fn new(as_of: NaiveDate, mut streams: Vec<StreamScores>) -> Self {
        streams.sort_by(|a, b| a.key.cmp(&b.key));
        RunResults { as_of, streams }
    }

    pub fn point_count(&self) -> usize {
        self.streams.iter().map(|s| s.points.len()).sum()
    }

    pub fn stream(&self, key: &StreamKey) -> Option<&StreamScores> {
        self.streams
            .binary_search_by(|s| s.key.cmp(key))
            .ok()
            .map(|i| &self.streams[i])
    }

    pub fn score_at(&self, key: &StreamKey, time_value: NaiveDate) -> Option<&ScoredPoint> {
        let stream = self.stream(key)?;
        stream
            .points
            .binary_search_by(|p| p.time_value.cmp(&time_value))
            .ok()
            .map(|i| &stream.points[i])
    }

    /// Serialized run; identical results give identical bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(RESULTS_HEADER)?;
        let as_of = self.as_of.format("%Y-%m-%d").to_string();
        for stream in &self.streams {
            let k = &stream.key;
            for p in &stream.points {
                wtr.write_record([
                    k.source.as_str(),
                    k.signal.as_str(),
                    k.geo_type.as_str(),
                    k.geo_value.as_str(),
                    &p.time_value.format("%Y-%m-%d").to_string(),
                    &as_of,
                    &format_value(p.score),
                    &format_value(p.expected),
                    &format_value(p.dispersion),
                    if p.violated_bound { "true" } else { "false" },
                    &format_value(p.value),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut streams: BTreeMap<StreamKey, Vec<ScoredPoint>> = BTreeMap::new();
        let mut as_of = None;
        for rec in rdr.deserialize::<ScoreRecord>() {
            let rec = rec?;
            if *as_of.get_or_insert(rec.as_of) != rec.as_of {
                return Err(Error::Rejected(format!(
                    "results file mixes as_of {} and {}",
                    as_of.unwrap(),
                    rec.as_of
                )));
            }
            let key = StreamKey::new(rec.source, rec.signal, rec.geo_type, rec.geo_value)?;
            streams.entry(key.clone()).or_default().push(ScoredPoint {
                key,
                time_value: rec.time_value,
                value: rec.value,
                expected: rec.expected,
                dispersion: rec.dispersion,
                score: rec.score,
                violated_bound: rec.violated_bound,
            });
        }
        let as_of = as_of.ok_or_else(|| Error::Rejected("empty results file".into()))?;
        let streams = streams
            .into_iter()
            .map(|(key, mut points)| {
                points.sort_by_key(|p| p.time_value);
                StreamScores { key, points }
            })
            .collect();
        Ok(RunResults::new(as_of, streams))
    }

    /// Content identifier: the `as_of` plus a digest of the serialized run.
    pub fn run_id(&self) -> Result<String> {
        Ok(run_id_of(self.as_of, &self.to_bytes()?))
    }
}

fn run_id_of(as_of: NaiveDate, bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("{}-{hex}", as_of.format("%Y%m%d"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PutOutcome {
    Created,
    OverwroteIdentical,
    OverwroteChanged,
}

impl std::fmt::Display for PutOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PutOutcome::Created => "created",
            PutOutcome::OverwroteIdentical => "overwrote identical",
            PutOutcome::OverwroteChanged => "overwrote changed",
        })
    }
}

#[derive(Debug, Clone)]
pub struct StoredRun {
    pub results: Arc<RunResults>,
    pub run_id: String,
}

/// Run results by `as_of`, optionally mirrored to a directory.
#[derive(Debug, Default)]
pub struct ResultsStore {
    dir: Option<PathBuf>,
    runs: RwLock<Arc<BTreeMap<NaiveDate, StoredRun>>>,
    writer: Mutex<()>,
    /// Size and mtime of each run file as last loaded or written.
    stamps: Mutex<BTreeMap<PathBuf, (u64, SystemTime)>>,
}

fn as_of_from_name(path: &Path) -> Option<NaiveDate> {
    path.file_stem()?.to_str()?.parse().ok()
}

fn load_run(path: &Path) -> Result<StoredRun> {
    let bytes = fs::read(path)?;
    let results = match RunResults::read_csv(bytes.as_slice()) {
        // A run that scored nothing is just a header; the date is in the name.
        Err(Error::Rejected(_)) if bytes.iter().filter(|&&b| b == b'\n').count() <= 1 => {
            let as_of = as_of_from_name(path)
                .ok_or_else(|| Error::Rejected(format!("bad run file name {}", path.display())))?;
            RunResults::new(as_of, Vec::new())
        }
        other => other?,
    };
    let run_id = run_id_of(results.as_of, &bytes);
    Ok(StoredRun {
        results: Arc::new(results),
        run_id,
    })
}

fn file_name(as_of: NaiveDate) -> String {
    format!("{}.csv", as_of.format("%Y-%m-%d"))
}

impl ResultsStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a directory of run files and loads them.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let store = ResultsStore {
            dir: Some(dir),
            ..Default::default()
        };
        store.refresh()?;
        Ok(store)
    }

    /// Picks up run files written by another process since the last look.
    /// Returns how many runs were added, replaced or dropped.
    pub fn refresh(&self) -> Result<usize> {
        let Some(dir) = &self.dir else {
            return Ok(0);
        };
        let _guard = self.writer.lock();
        let mut stamps = self.stamps.lock();
        let mut seen = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|x| x != "csv") {
                continue;
            }
            let meta = fs::metadata(&path)?;
            seen.insert(path, (meta.len(), meta.modified()?));
        }
        let mut next = (**self.runs.read()).clone();
        let mut changed = 0;
        for (path, stamp) in &seen {
            if stamps.get(path) == Some(stamp) {
                continue;
            }
            let run = load_run(path)?;
            next.insert(run.results.as_of, run);
            changed += 1;
        }
        for path in stamps.keys().filter(|p| !seen.contains_key(*p)) {
            if let Some(as_of) = as_of_from_name(path) {
                next.remove(&as_of);
                changed += 1;
            }
        }
        *stamps = seen;
        if changed > 0 {
            *self.runs.write() = Arc::new(next);
        }
        Ok(changed)
    }

    pub fn snapshot(&self) -> Arc<BTreeMap<NaiveDate, StoredRun>> {
        self.runs.read().clone()
    }

    pub fn get(&self, as_of: NaiveDate) -> Option<StoredRun> {
        self.runs.read().get(&as_of).cloned()
    }

    pub fn require(&self, as_of: NaiveDate) -> Result<StoredRun> {
        self.get(as_of).ok_or(Error::EmptyRun(as_of))
    }

    pub fn as_of_dates(&self) -> Vec<NaiveDate> {
        self.runs.read().keys().copied().collect()
    }

    /// Stores a run, replacing any earlier run for the same `as_of`.
    pub fn put(&self, results: RunResults) -> Result<(PutOutcome, String)> {
        let _guard = self.writer.lock();
        let bytes = results.to_bytes()?;
        let run_id = run_id_of(results.as_of, &bytes);
        let outcome = match self.runs.read().get(&results.as_of) {
            None => PutOutcome::Created,
            Some(prev) if prev.run_id == run_id && prev.results.to_bytes()? == bytes => {
                PutOutcome::OverwroteIdentical
            }
            Some(_) => PutOutcome::OverwroteChanged,
        };
        if let Some(dir) = &self.dir {
            let target = dir.join(file_name(results.as_of));
            let tmp = dir.join(format!(".{}.tmp", file_name(results.as_of)));
            let mut file = fs::File::create(&tmp)?;
            file.write_all(&bytes)?;
            file.sync_all()?;
            fs::rename(&tmp, &target)?;
            let meta = fs::metadata(&target)?;
            self.stamps.lock().insert(target, (meta.len(), meta.modified()?));
        }
        let mut next = (**self.runs.read()).clone();
        next.insert(
            results.as_of,
            StoredRun {
                results: Arc::new(results),
                run_id: run_id.clone(),
            },
        );
        *self.runs.write() = Arc::new(next);
        Ok((outcome, run_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(as_of: &str, score: f64) -> RunResults {
        let key: StreamKey = "p:cases:state:PA".parse().unwrap();
        let point = ScoredPoint {
            key: key.clone(),
            time_value: "2024-01-03".parse().unwrap(),
            value: 12.5,
            expected: 10.0,
            dispersion: 1.0,
            score,
            violated_bound: false,
        };
        RunResults::new(
            as_of.parse().unwrap(),
            vec![StreamScores {
                key,
                points: vec![point],
            }],
        )
    }

    #[test]
    fn csv_round_trip() {
        let r = run("2024-01-05", 2.5);
        let bytes = r.to_bytes().unwrap();
        let back = RunResults::read_csv(bytes.as_slice()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn put_reports_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultsStore::open(dir.path()).unwrap();
        assert_eq!(store.put(run("2024-01-05", 2.5)).unwrap().0, PutOutcome::Created);
        assert_eq!(store.put(run("2024-01-05", 2.5)).unwrap().0, PutOutcome::OverwroteIdentical);
        assert_eq!(store.put(run("2024-01-05", 3.0)).unwrap().0, PutOutcome::OverwroteChanged);

        let reopened = ResultsStore::open(dir.path()).unwrap();
        let stored = reopened.require("2024-01-05".parse().unwrap()).unwrap();
        assert_eq!(stored.results.streams[0].points[0].score, 3.0);
        assert!(matches!(
            reopened.require("2024-01-06".parse().unwrap()),
            Err(Error::EmptyRun(_))
        ));
    }

    #[test]
    fn refresh_sees_other_writers() {
        let dir = tempfile::tempdir().unwrap();
        let reader = ResultsStore::open(dir.path()).unwrap();
        let writer = ResultsStore::open(dir.path()).unwrap();
        let day: NaiveDate = "2024-01-05".parse().unwrap();
        let (_, id) = writer.put(run("2024-01-05", 2.5)).unwrap();
        assert!(reader.get(day).is_none());
        assert_eq!(reader.refresh().unwrap(), 1);
        assert_eq!(reader.require(day).unwrap().run_id, id);
        assert_eq!(reader.refresh().unwrap(), 0);

        let (_, id2) = writer.put(run("2024-01-05", 4.0)).unwrap();
        assert_eq!(reader.refresh().unwrap(), 1);
        assert_eq!(reader.require(day).unwrap().run_id, id2);

        fs::remove_file(dir.path().join("2024-01-05.csv")).unwrap();
        assert_eq!(reader.refresh().unwrap(), 1);
        assert!(reader.get(day).is_none());
        // The writer's own put never needs a reload.
        assert_eq!(writer.refresh().unwrap(), 1);
    }
}

// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! A store directory and the stores loaded from it.
//!
//! ```text
//! <root>/geo.csv           geo hierarchy
//! <root>/observations.csv  every revision, in wire format
//! <root>/results/          one CSV per scoring run
//! <root>/triage.json       triage records, meta-events and session logs
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use chrono::NaiveDate;
use epiwatch_core::pipeline::{run_daily, RunReport, ScoringConfig};
use epiwatch_core::results::{ResultsStore, StoredRun};
use epiwatch_core::store::{IngestReport, StoreSnapshot, StreamStore};
use epiwatch_core::triage::TriageStore;
use epiwatch_core::{Error, GeoHierarchy, Result};
use parking_lot::{Mutex, RwLock};

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn geo(&self) -> PathBuf {
        self.root.join("geo.csv")
    }

    pub fn observations(&self) -> PathBuf {
        self.root.join("observations.csv")
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn triage(&self) -> PathBuf {
        self.root.join("triage.json")
    }
}

type Stamp = Option<(u64, SystemTime)>;

/// One consistent view of every stored run.
pub type Runs = Arc<BTreeMap<NaiveDate, StoredRun>>;

/// The run for `as_of`, or the latest when `as_of` is `None`.
pub fn pick_run(runs: &BTreeMap<NaiveDate, StoredRun>, as_of: Option<NaiveDate>) -> Result<StoredRun> {
    match as_of {
        Some(d) => runs.get(&d).cloned().ok_or(Error::EmptyRun(d)),
        None => runs.values().next_back().cloned().ok_or(Error::NoRuns),
    }
}

fn stamp(path: &Path) -> Result<Stamp> {
    match fs::metadata(path) {
        Ok(meta) => Ok(Some((meta.len(), meta.modified()?))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_atomically(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp)?;
    write(&mut file)?;
    file.flush()?;
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub struct Workspace {
    layout: Layout,
    geo: Arc<GeoHierarchy>,
    scoring: ScoringConfig,
    streams: RwLock<Arc<StreamStore>>,
    observations_stamp: Mutex<Stamp>,
    results: ResultsStore,
    triage: TriageStore,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace").field("root", &self.layout.root).finish_non_exhaustive()
    }
}

impl Workspace {
    /// Validates `geo_csv` and copies it into a (new or existing) store.
    pub fn install_geo(root: impl AsRef<Path>, geo_csv: impl AsRef<Path>) -> Result<GeoHierarchy> {
        let layout = Layout::new(root.as_ref());
        let text = fs::read(geo_csv)?;
        let geo = GeoHierarchy::from_reader(text.as_slice())?;
        fs::create_dir_all(&layout.root)?;
        write_atomically(&layout.geo(), |f| Ok(f.write_all(&text)?))?;
        Ok(geo)
    }

    pub fn open(root: impl AsRef<Path>, scoring: ScoringConfig) -> Result<Self> {
        scoring.validate()?;
        let layout = Layout::new(root.as_ref());
        let geo_path = layout.geo();
        if !geo_path.exists() {
            return Err(Error::InvalidConfig(format!(
                "no geo hierarchy at {}; install one with `ingest --geo`",
                geo_path.display()
            )));
        }
        let geo = GeoHierarchy::from_path(&geo_path)?;
        let (streams, observations_stamp) = load_observations(&layout.observations())?;
        Ok(Workspace {
            results: ResultsStore::open(layout.results())?,
            triage: TriageStore::open(layout.triage())?,
            layout,
            geo: Arc::new(geo),
            scoring,
            streams: RwLock::new(Arc::new(streams)),
            observations_stamp: Mutex::new(observations_stamp),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn geo(&self) -> &GeoHierarchy {
        &self.geo
    }

    pub fn scoring(&self) -> &ScoringConfig {
        &self.scoring
    }

    pub fn results(&self) -> &ResultsStore {
        &self.results
    }

    pub fn triage(&self) -> &TriageStore {
        &self.triage
    }

    pub fn streams(&self) -> Arc<StreamStore> {
        self.streams.read().clone()
    }

    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.streams().snapshot()
    }

    pub fn runs(&self) -> Runs {
        self.results.snapshot()
    }

    /// The run for `as_of`, or the latest run when `as_of` is `None`.
    pub fn run(&self, as_of: Option<NaiveDate>) -> Result<StoredRun> {
        pick_run(&self.runs(), as_of)
    }

    /// Ingests a wire-format file and persists the grown store.
    pub fn ingest(&self, reader: impl std::io::Read) -> Result<IngestReport> {
        let mut stamp_guard = self.observations_stamp.lock();
        // Build on whatever another process may have written meanwhile.
        self.reload_if_stale(&mut stamp_guard)?;
        let streams = self.streams();
        let report = streams.ingest(reader)?;
        if report.inserted > 0 {
            let path = self.layout.observations();
            let snapshot = streams.snapshot();
            write_atomically(&path, |f| snapshot.dump(std::io::BufWriter::new(f)))?;
            *stamp_guard = stamp(&path)?;
        }
        Ok(report)
    }

    fn reload_if_stale(&self, stamp_guard: &mut Stamp) -> Result<bool> {
        let path = self.layout.observations();
        if stamp(&path)? == *stamp_guard {
            return Ok(false);
        }
        let (streams, fresh) = load_observations(&path)?;
        *self.streams.write() = Arc::new(streams);
        *stamp_guard = fresh;
        Ok(true)
    }

    pub fn run_daily(&self, as_of: NaiveDate) -> Result<RunReport> {
        run_daily(&self.streams(), &self.results, as_of, &self.scoring)
    }

    /// Reloads anything another process changed on disk: new or rewritten
    /// runs, and a grown observation file. Returns whether anything moved.
    pub fn refresh(&self) -> Result<bool> {
        let runs = self.results.refresh()?;
        let reloaded = self.reload_if_stale(&mut self.observations_stamp.lock())?;
        Ok(runs > 0 || reloaded)
    }
}

fn load_observations(path: &Path) -> Result<(StreamStore, Stamp)> {
    let streams = StreamStore::new();
    let before = stamp(path)?;
    if before.is_some() {
        let report = streams.ingest(std::io::BufReader::new(fs::File::open(path)?))?;
        if let Some(bad) = report.rejected.first() {
            return Err(Error::Rejected(format!(
                "{} row {}: {}",
                path.display(),
                bad.row,
                bad.reason
            )));
        }
    }
    Ok((streams, before))
}

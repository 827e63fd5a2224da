// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Reviewer outputs: triage records, meta-events and session logs.
//!
//! Nothing is ever deleted. Edits bump `edit_count` and push the previous
//! version onto an append-only history.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::key::StreamKey;
use crate::results::ResultsStore;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventType {
    DataQuality,
    PublicHealth,
    NonEvent,
    Other(String),
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventType::DataQuality => f.write_str("data_quality"),
            EventType::PublicHealth => f.write_str("public_health"),
            EventType::NonEvent => f.write_str("non_event"),
            EventType::Other(label) => write!(f, "other:{label}"),
        }
    }
}

impl FromStr for EventType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data_quality" => Ok(EventType::DataQuality),
            "public_health" => Ok(EventType::PublicHealth),
            "non_event" => Ok(EventType::NonEvent),
            other => match other.strip_prefix("other:") {
                Some(label) if !label.trim().is_empty() => Ok(EventType::Other(label.to_string())),
                _ => Err(Error::Rejected(format!(
                    "invalid event_type {s:?} (expected data_quality, public_health, non_event or other:<label>)"
                ))),
            },
        }
    }
}

impl Serialize for EventType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EventType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
        })
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Severity::Low),
            "medium" => Ok(Severity::Medium),
            "high" => Ok(Severity::High),
            other => Err(Error::Rejected(format!(
                "invalid severity {other:?} (expected low, medium or high)"
            ))),
        }
    }
}

/// What a reviewer submits; enum fields arrive as text and are validated here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDraft {
    pub reviewer: String,
    pub key: StreamKey,
    pub time_value: NaiveDate,
    /// The run the reviewer was looking at.
    pub as_of: NaiveDate,
    pub event_type: String,
    pub severity: String,
    pub is_source: bool,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageRecord {
    pub id: u64,
    pub reviewer: String,
    pub key: StreamKey,
    pub time_value: NaiveDate,
    pub as_of: NaiveDate,
    pub event_type: EventType,
    pub severity: Severity,
    pub is_source: bool,
    pub note: String,
    pub created_at: DateTime<Utc>,
    pub edited_at: Option<DateTime<Utc>>,
    pub edit_count: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriagePatch {
    pub event_type: Option<String>,
    pub severity: Option<String>,
    pub is_source: Option<bool>,
    pub note: Option<String>,
    pub edited_at: Option<DateTime<Utc>>,
}

/// A superseded version of a record, kept when an edit replaces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEntry {
    pub record_id: u64,
    pub edited_at: DateTime<Utc>,
    pub previous: TriageRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEventDraft {
    pub reviewer: String,
    pub title: String,
    #[serde(default)]
    pub hypothesis: String,
    pub member_event_ids: Vec<u64>,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEvent {
    pub id: u64,
    pub reviewer: String,
    pub title: String,
    pub hypothesis: String,
    pub member_event_ids: Vec<u64>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionAction {
    RowExpanded,
    RowCollapsed,
    EventRecorded,
    FilterApplied,
    PanelViewed,
    SessionEnd,
}

/// One line of a session log, as imported from line-delimited JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub session_id: String,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
    pub action: SessionAction,
    #[serde(default)]
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub reviewer: String,
    pub entries: Vec<LogEntry>,
}

impl SessionLog {
    pub fn ended(&self) -> bool {
        self.entries
            .last()
            .is_some_and(|e| e.action == SessionAction::SessionEnd)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriageData {
    pub records: BTreeMap<u64, TriageRecord>,
    pub history: Vec<EditEntry>,
    pub meta_events: BTreeMap<u64, MetaEvent>,
    pub sessions: BTreeMap<String, SessionLog>,
    next_record_id: u64,
    next_meta_id: u64,
}

/// Triage records with writes serialized through one lock, optionally
/// persisted as a JSON document replaced atomically on every write.
#[derive(Debug, Default)]
pub struct TriageStore {
    path: Option<PathBuf>,
    data: Mutex<TriageData>,
}

impl TriageStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let data = if path.exists() {
            serde_json::from_slice(&std::fs::read(&path)?)?
        } else {
            TriageData::default()
        };
        Ok(TriageStore {
            path: Some(path),
            data: Mutex::new(data),
        })
    }

    /// Copy of the current state.
    pub fn snapshot(&self) -> TriageData {
        self.data.lock().clone()
    }

    fn commit(&self, data: &mut TriageData, next: TriageData) -> Result<()> {
        if let Some(path) = &self.path {
            let tmp = path.with_extension("json.tmp");
            let mut file = std::fs::File::create(&tmp)?;
            file.write_all(&serde_json::to_vec_pretty(&next)?)?;
            file.sync_all()?;
            std::fs::rename(&tmp, path)?;
        }
        *data = next;
        Ok(())
    }

    pub fn record_event(&self, draft: TriageDraft, results: &ResultsStore) -> Result<TriageRecord> {
        let event_type: EventType = draft.event_type.parse()?;
        let severity: Severity = draft.severity.parse()?;
        let run = results.get(draft.as_of).ok_or_else(|| {
            Error::Rejected(format!("no scoring run for {} ({})", draft.as_of, draft.key))
        })?;
        if run.results.score_at(&draft.key, draft.time_value).is_none() {
            return Err(Error::Rejected(format!(
                "{} has no score for {} in the {} run",
                draft.key, draft.time_value, draft.as_of
            )));
        }
        if draft.reviewer.trim().is_empty() {
            return Err(Error::Rejected("reviewer is required".into()));
        }

        let mut data = self.data.lock();
        let mut next = data.clone();
        next.next_record_id += 1;
        let record = TriageRecord {
            id: next.next_record_id,
            reviewer: draft.reviewer,
            key: draft.key,
            time_value: draft.time_value,
            as_of: draft.as_of,
            event_type,
            severity,
            is_source: draft.is_source,
            note: draft.note,
            created_at: draft.created_at.unwrap_or_else(Utc::now),
            edited_at: None,
            edit_count: 0,
        };
        next.records.insert(record.id, record.clone());
        self.commit(&mut data, next)?;
        Ok(record)
    }

    pub fn edit_event(&self, id: u64, patch: TriagePatch) -> Result<TriageRecord> {
        let event_type = patch.event_type.as_deref().map(str::parse::<EventType>).transpose()?;
        let severity = patch.severity.as_deref().map(str::parse::<Severity>).transpose()?;

        let mut data = self.data.lock();
        let previous = data.records.get(&id).cloned().ok_or(Error::NotFound(id))?;
        let edited_at = patch.edited_at.unwrap_or_else(Utc::now);
        let mut updated = previous.clone();
        if let Some(t) = event_type {
            updated.event_type = t;
        }
        if let Some(s) = severity {
            updated.severity = s;
        }
        if let Some(b) = patch.is_source {
            updated.is_source = b;
        }
        if let Some(n) = patch.note {
            updated.note = n;
        }
        updated.edit_count += 1;
        updated.edited_at = Some(edited_at);

        let mut next = data.clone();
        next.history.push(EditEntry {
            record_id: id,
            edited_at,
            previous,
        });
        next.records.insert(id, updated.clone());
        self.commit(&mut data, next)?;
        Ok(updated)
    }

    pub fn record_meta_event(&self, draft: MetaEventDraft) -> Result<MetaEvent> {
        if draft.member_event_ids.is_empty() {
            return Err(Error::Rejected("meta-event needs at least one member event".into()));
        }
        let mut data = self.data.lock();
        if let Some(missing) = draft
            .member_event_ids
            .iter()
            .find(|id| !data.records.contains_key(id))
        {
            return Err(Error::Rejected(format!("member event {missing} does not exist")));
        }
        let mut next = data.clone();
        next.next_meta_id += 1;
        let meta = MetaEvent {
            id: next.next_meta_id,
            reviewer: draft.reviewer,
            title: draft.title,
            hypothesis: draft.hypothesis,
            member_event_ids: draft.member_event_ids,
            created_at: draft.created_at.unwrap_or_else(Utc::now),
        };
        next.meta_events.insert(meta.id, meta.clone());
        self.commit(&mut data, next)?;
        Ok(meta)
    }

    pub fn record(&self, id: u64) -> Result<TriageRecord> {
        self.data.lock().records.get(&id).cloned().ok_or(Error::NotFound(id))
    }

    pub fn history_of(&self, id: u64) -> Vec<EditEntry> {
        self.data
            .lock()
            .history
            .iter()
            .filter(|e| e.record_id == id)
            .cloned()
            .collect()
    }

    pub fn records_for(&self, key: &StreamKey) -> Vec<TriageRecord> {
        self.data
            .lock()
            .records
            .values()
            .filter(|r| &r.key == key)
            .cloned()
            .collect()
    }

    /// Appends session-log entries. Each batch is ordered by timestamp per
    /// session; entries must not precede what is already stored for their
    /// session, and nothing may follow `session_end`.
    pub fn append_log(&self, entries: Vec<LogEntry>) -> Result<usize> {
        let mut batch = entries;
        batch.sort_by(|a, b| {
            a.session_id
                .cmp(&b.session_id)
                .then_with(|| a.timestamp.cmp(&b.timestamp))
        });
        let mut data = self.data.lock();
        let mut next = data.clone();
        let count = batch.len();
        for entry in batch {
            let log = next
                .sessions
                .entry(entry.session_id.clone())
                .or_insert_with(|| SessionLog {
                    session_id: entry.session_id.clone(),
                    reviewer: entry.reviewer.clone(),
                    entries: Vec::new(),
                });
            if log.reviewer != entry.reviewer {
                return Err(Error::Rejected(format!(
                    "session {} belongs to reviewer {}",
                    log.session_id, log.reviewer
                )));
            }
            if log.ended() {
                return Err(Error::Rejected(format!(
                    "session {} already ended",
                    log.session_id
                )));
            }
            if let Some(last) = log.entries.last() {
                if entry.timestamp < last.timestamp {
                    return Err(Error::Rejected(format!(
                        "session {}: entry at {} precedes {}",
                        log.session_id, entry.timestamp, last.timestamp
                    )));
                }
            }
            log.entries.push(entry);
        }
        self.commit(&mut data, next)?;
        Ok(count)
    }

    /// Parses line-delimited JSON log entries and appends them as one batch.
    pub fn import_log(&self, text: &str) -> Result<usize> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<LogEntry>)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        self.append_log(entries)
    }

    pub fn write_events_csv<W: Write>(&self, writer: W) -> Result<()> {
        let data = self.data.lock();
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "id", "reviewer", "stream", "time_value", "as_of", "event_type", "severity",
            "is_source", "note", "created_at", "edited_at", "edit_count",
        ])?;
        for r in data.records.values() {
            wtr.write_record([
                r.id.to_string(),
                r.reviewer.clone(),
                r.key.to_string(),
                r.time_value.to_string(),
                r.as_of.to_string(),
                r.event_type.to_string(),
                r.severity.to_string(),
                r.is_source.to_string(),
                r.note.clone(),
                r.created_at.to_rfc3339(),
                r.edited_at.map(|t| t.to_rfc3339()).unwrap_or_default(),
                r.edit_count.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_meta_events_csv<W: Write>(&self, writer: W) -> Result<()> {
        let data = self.data.lock();
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["id", "reviewer", "title", "hypothesis", "member_event_ids", "created_at"])?;
        for m in data.meta_events.values() {
            let members: Vec<String> = m.member_event_ids.iter().map(u64::to_string).collect();
            wtr.write_record([
                m.id.to_string(),
                m.reviewer.clone(),
                m.title.clone(),
                m.hypothesis.clone(),
                members.join("|"),
                m.created_at.to_rfc3339(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

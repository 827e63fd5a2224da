// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

use chrono::NaiveDate;
use thiserror::Error;

use crate::geo::GeoId;
use crate::key::StreamKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown stream {0}")]
    UnknownStream(StreamKey),

    #[error("unknown region {0}")]
    UnknownRegion(GeoId),

    #[error("invalid stream key {0:?}: {1}")]
    InvalidKey(String, &'static str),

    #[error("insufficient data: {needed} trailing points required, {found} available")]
    InsufficientData { needed: usize, found: usize },

    #[error("date {0} is outside the frame span")]
    OutsideFrame(NaiveDate),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no scoring run for {0}")]
    EmptyRun(NaiveDate),

    #[error("no scoring runs yet")]
    NoRuns,

    #[error("{0} has no children with data")]
    NotApplicable(GeoId),

    #[error("invalid geo hierarchy: {0}")]
    Hierarchy(String),

    #[error("filter syntax error at position {position}: {message}")]
    FilterSyntax { position: usize, message: String },

    #[error("filter arity error: {0}")]
    FilterArity(String),

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("no record with id {0}")]
    NotFound(u64),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

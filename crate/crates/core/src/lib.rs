// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Core of the epiwatch monitoring system.
//!
//! Public-health indicator streams arrive as revisioned observations: every
//! value for a reference date may be re-reported on later issue dates. The
//! crate stores those revisions, scores every data point by its deviation
//! from a configurable expectation, ranks streams into a top-k review queue,
//! aggregates scores into situational-awareness panels, and keeps the triage
//! records reviewers produce along with the KPIs derived from them.

pub mod awareness;
pub mod error;
pub mod evolution;
pub mod filter;
pub mod geo;
pub mod key;
pub mod kpi;
pub mod pipeline;
pub mod rank;
pub mod results;
pub mod scoring;
pub mod stats;
pub mod store;
pub mod synth;
pub mod triage;

pub use error::{Error, Result};
pub use geo::{GeoHierarchy, GeoId, GeoNode, GeoTier};
pub use key::{Indicator, StreamKey};

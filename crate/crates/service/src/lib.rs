// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! The operational shell around `epiwatch-core`: an on-disk workspace, the
//! HTTP query API and the static top-k report.

pub mod api;
pub mod config;
pub mod report;
pub mod views;
pub mod workspace;

pub use config::ServiceConfig;
pub use workspace::Workspace;

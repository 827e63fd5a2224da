// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use epiwatch_core::awareness::MapConfig;
use epiwatch_core::pipeline::ScoringConfig;
use epiwatch_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Overrides `store`.
pub const STORE_ENV: &str = "EPIWATCH_STORE";
/// Overrides `report_path`.
pub const REPORT_ENV: &str = "EPIWATCH_REPORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Workspace directory holding observations, runs and triage data.
    pub store: PathBuf,
    pub k_default: usize,
    pub map: MapConfig,
    /// Expectation settings file; built-in defaults when absent.
    pub scoring_config: Option<PathBuf>,
    pub report_path: PathBuf,
    /// How often `serve` looks for runs and ingests made by other processes.
    pub refresh_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store: PathBuf::from("epiwatch-data"),
            k_default: 50,
            map: MapConfig::default(),
            scoring_config: None,
            report_path: PathBuf::from("epiwatch-report.html"),
            refresh_secs: 5,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ServiceConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, resolving relative paths inside it against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            rebase(&mut cfg.store);
            rebase(&mut cfg.report_path);
            if let Some(p) = cfg.scoring_config.as_mut() {
                rebase(p);
            }
        }
        Ok(cfg)
    }

    /// Applies the `EPIWATCH_*` location overrides from `lookup`.
    pub fn with_env(mut self, lookup: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(v) = lookup(STORE_ENV).filter(|v| !v.is_empty()) {
            self.store = v.into();
        }
        if let Some(v) = lookup(REPORT_ENV).filter(|v| !v.is_empty()) {
            self.report_path = v.into();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_default < 1 {
            return Err(Error::InvalidConfig("k_default must be >= 1".into()));
        }
        if self.refresh_secs < 1 {
            return Err(Error::InvalidConfig("refresh_secs must be >= 1".into()));
        }
        self.map.validate()
    }

    pub fn scoring(&self) -> Result<ScoringConfig> {
        match &self.scoring_config {
            Some(path) => ScoringConfig::load(path),
            None => Ok(ScoringConfig::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let cfg = ServiceConfig::from_toml(
            r#"
listen = "0.0.0.0:9000"
k_default = 25

[map]
w = 101.0
"#,
        )
        .unwrap();
        assert_eq!(cfg.listen.port(), 9000);
        assert_eq!(cfg.k_default, 25);
        assert_eq!(cfg.map.w, Some(101.0));
        assert_eq!(cfg.map.trailing_days, 7);

        assert!(ServiceConfig::from_toml("k_default = 0").is_err());
        assert!(ServiceConfig::from_toml("[map]\nw = 0.5").is_err());
        assert!(ServiceConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn env_overrides_locations() {
        let cfg = ServiceConfig::default().with_env(|name| match name {
            STORE_ENV => Some("/srv/epiwatch".into()),
            _ => None,
        });
        assert_eq!(cfg.store, PathBuf::from("/srv/epiwatch"));
        assert_eq!(cfg.report_path, PathBuf::from("epiwatch-report.html"));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epiwatch.toml");
        std::fs::write(&path, "store = \"data\"\nscoring_config = \"scoring.toml\"\n").unwrap();
        let cfg = ServiceConfig::load(&path).unwrap();
        assert_eq!(cfg.store, dir.path().join("data"));
        assert_eq!(cfg.scoring_config, Some(dir.path().join("scoring.toml")));
    }
}

// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoId, GeoTier};

/// Identity of one univariate stream.
///
/// Ordering is lexicographic over `(source, signal, geo_type, geo_value)`
/// using the textual tier name, which is what the ranking tie-break relies on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub source: String,
    pub signal: String,
    pub geo_type: GeoTier,
    pub geo_value: String,
}

/// Tokens travel inside the filter grammar and the `a:b:c:d` path form, so
/// the separators of both are forbidden.
pub(crate) fn check_token(token: &str) -> std::result::Result<(), &'static str> {
    if token.is_empty() {
        return Err("empty token");
    }
    if token
        .chars()
        .any(|c| c.is_whitespace() || matches!(c, ',' | ':' | '|' | '/'))
    {
        return Err("token contains a reserved character");
    }
    Ok(())
}

impl StreamKey {
    pub fn new(
        source: impl Into<String>,
        signal: impl Into<String>,
        geo_type: GeoTier,
        geo_value: impl Into<String>,
    ) -> Result<Self> {
        let key = StreamKey {
            source: source.into(),
            signal: signal.into(),
            geo_type,
            geo_value: geo_value.into(),
        };
        key.validate()?;
        Ok(key)
    }

    pub fn validate(&self) -> Result<()> {
        for token in [&self.source, &self.signal, &self.geo_value] {
            check_token(token).map_err(|why| Error::InvalidKey(self.to_string(), why))?;
        }
        Ok(())
    }

    pub fn geo(&self) -> GeoId {
        GeoId::new(self.geo_type, self.geo_value.clone())
    }

    pub fn indicator(&self) -> Indicator {
        Indicator {
            source: self.source.clone(),
            signal: self.signal.clone(),
        }
    }

    /// Same indicator at a different region.
    pub fn at(&self, geo: &GeoId) -> StreamKey {
        StreamKey {
            source: self.source.clone(),
            signal: self.signal.clone(),
            geo_type: geo.tier,
            geo_value: geo.code.clone(),
        }
    }
}

impl Ord for StreamKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.source
            .cmp(&other.source)
            .then_with(|| self.signal.cmp(&other.signal))
            .then_with(|| self.geo_type.as_str().cmp(other.geo_type.as_str()))
            .then_with(|| self.geo_value.cmp(&other.geo_value))
    }
}

impl PartialOrd for StreamKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.source, self.signal, self.geo_type, self.geo_value
        )
    }
}

impl FromStr for StreamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(Error::InvalidKey(
                s.to_string(),
                "expected source:signal:geo_type:geo_value",
            ));
        }
        let tier = parts[2]
            .parse::<GeoTier>()
            .map_err(|_| Error::InvalidKey(s.to_string(), "unknown tier"))?;
        StreamKey::new(parts[0], parts[1], tier, parts[3])
    }
}

/// A measured quantity from one provider: the `i` that panels aggregate over.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Indicator {
    pub source: String,
    pub signal: String,
}

impl Indicator {
    pub fn new(source: impl Into<String>, signal: impl Into<String>) -> Self {
        Indicator {
            source: source.into(),
            signal: signal.into(),
        }
    }

    pub fn at(&self, geo: &GeoId) -> StreamKey {
        StreamKey {
            source: self.source.clone(),
            signal: self.signal.clone(),
            geo_type: geo.tier,
            geo_value: geo.code.clone(),
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.signal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_round_trips_through_text() {
        let key = StreamKey::new("jhu-csse", "confirmed_incidence", GeoTier::County, "42003").unwrap();
        let text = key.to_string();
        assert_eq!(text, "jhu-csse:confirmed_incidence:county:42003");
        assert_eq!(text.parse::<StreamKey>().unwrap(), key);
    }

    #[test]
    fn empty_and_reserved_tokens_rejected() {
        assert!(StreamKey::new("", "s", GeoTier::State, "PA").is_err());
        assert!(StreamKey::new("a,b", "s", GeoTier::State, "PA").is_err());
        assert!("a:b:planet:x".parse::<StreamKey>().is_err());
        assert!("a:b:state".parse::<StreamKey>().is_err());
    }

    #[test]
    fn ordering_uses_tier_name() {
        let nation = StreamKey::new("s", "x", GeoTier::Nation, "us").unwrap();
        let county = StreamKey::new("s", "x", GeoTier::County, "42003").unwrap();
        let state = StreamKey::new("s", "x", GeoTier::State, "PA").unwrap();
        let mut keys = vec![state.clone(), nation.clone(), county.clone()];
        keys.sort();
        assert_eq!(keys, vec![county, nation, state]);
    }
}

// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Data-level stream filters.
//!
//! A filter is up to four predicates, one per dimension, written as
//! `dim:op:v1|v2,dim:op:v3` with `op` either `in` or `not`. Predicates are
//! ANDed; the values inside one predicate are ORed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoHierarchy;
use crate::key::{check_token, StreamKey};

pub const MAX_PREDICATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Signal,
    Source,
    GeoValue,
    GeoRegion,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Signal,
        Dimension::Source,
        Dimension::GeoValue,
        Dimension::GeoRegion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Signal => "signal",
            Dimension::Source => "source",
            Dimension::GeoValue => "geo_value",
            Dimension::GeoRegion => "geo_region",
        }
    }

    fn parse(s: &str) -> Option<Dimension> {
        Dimension::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Include,
    Exclude,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Include => "in",
            Mode::Exclude => "not",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub dimension: Dimension,
    pub mode: Mode,
    pub values: BTreeSet<String>,
}

impl Predicate {
    pub fn new<I, S>(dimension: Dimension, mode: Mode, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let values: BTreeSet<String> = values.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(Error::FilterArity(format!(
                "predicate on {} needs at least one value",
                dimension.as_str()
            )));
        }
        Ok(Predicate {
            dimension,
            mode,
            values,
        })
    }

    fn hit(&self, key: &StreamKey, geo: &GeoHierarchy) -> bool {
        match self.dimension {
            Dimension::Signal => self.values.contains(&key.signal),
            Dimension::Source => self.values.contains(&key.source),
            Dimension::GeoValue => self.values.contains(&key.geo_value),
            Dimension::GeoRegion => {
                let region = key.geo();
                self.values.iter().any(|code| geo.is_within(&region, code))
            }
        }
    }

    pub fn matches(&self, key: &StreamKey, geo: &GeoHierarchy) -> bool {
        match self.mode {
            Mode::Include => self.hit(key, geo),
            Mode::Exclude => !self.hit(key, geo),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    predicates: Vec<Predicate>,
}

impl FilterSpec {
    pub fn new(predicates: Vec<Predicate>) -> Result<Self> {
        if predicates.len() > MAX_PREDICATES {
            return Err(Error::FilterArity(format!(
                "at most {MAX_PREDICATES} predicates allowed, got {}",
                predicates.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for p in &predicates {
            if !seen.insert(p.dimension) {
                return Err(Error::FilterArity(format!(
                    "duplicate dimension {}",
                    p.dimension.as_str()
                )));
            }
        }
        Ok(FilterSpec { predicates })
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn matches(&self, key: &StreamKey, geo: &GeoHierarchy) -> bool {
        self.predicates.iter().all(|p| p.matches(key, geo))
    }
}

/// Keeps the streams satisfying every predicate, in input order.
pub fn apply_filter<'a, I>(spec: &FilterSpec, streams: I, geo: &GeoHierarchy) -> Vec<StreamKey>
where
    I: IntoIterator<Item = &'a StreamKey>,
{
    streams
        .into_iter()
        .filter(|k| spec.matches(k, geo))
        .cloned()
        .collect()
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::FilterSyntax {
        position,
        message: message.into(),
    }
}

/// Parses the filter grammar. Error positions are 0-based byte offsets into
/// `text`.
pub fn parse_filter(text: &str) -> Result<FilterSpec> {
    if text.trim().is_empty() {
        return Ok(FilterSpec::default());
    }
    let mut predicates = Vec::new();
    let mut offset = 0;
    for clause in text.split(',') {
        predicates.push(parse_predicate(clause, offset)?);
        offset += clause.len() + 1;
    }
    FilterSpec::new(predicates)
}

fn parse_predicate(clause: &str, base: usize) -> Result<Predicate> {
    if clause.is_empty() {
        return Err(syntax(base, "empty predicate"));
    }
    let mut parts = clause.splitn(3, ':');
    let dim_text = parts.next().unwrap_or_default();
    let dimension = Dimension::parse(dim_text).ok_or_else(|| {
        syntax(
            base,
            format!("unknown dimension {dim_text:?} (expected signal, source, geo_value or geo_region)"),
        )
    })?;
    let op_pos = base + dim_text.len() + 1;
    let op_text = parts
        .next()
        .ok_or_else(|| syntax(base + dim_text.len(), "expected ':' after dimension"))?;
    let mode = match op_text {
        "in" => Mode::Include,
        "not" => Mode::Exclude,
        other => {
            return Err(syntax(
                op_pos,
                format!("expected operator 'in' or 'not', found {other:?}"),
            ))
        }
    };
    let values_pos = op_pos + op_text.len() + 1;
    let values_text = parts
        .next()
        .ok_or_else(|| syntax(op_pos + op_text.len(), "expected ':' after operator"))?;
    let mut values = BTreeSet::new();
    let mut pos = values_pos;
    for value in values_text.split('|') {
        if value.is_empty() {
            return Err(syntax(pos, "empty value"));
        }
        check_token(value).map_err(|why| syntax(pos, format!("invalid value {value:?}: {why}")))?;
        values.insert(value.to_string());
        pos += value.len() + 1;
    }
    Ok(Predicate {
        dimension,
        mode,
        values,
    })
}

impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_filter(s)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:", self.dimension.as_str(), self.mode.as_str())?;
        for (j, v) in self.values.iter().enumerate() {
            if j > 0 {
                f.write_str("|")?;
            }
            f.write_str(v)?;
        }
        Ok(())
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoId, GeoTier};

    fn hierarchy() -> GeoHierarchy {
        let mut entries = vec![(GeoId::new(GeoTier::Nation, "us"), None, "US".to_string())];
        for st in ["PA", "OH"] {
            entries.push((
                GeoId::new(GeoTier::State, st),
                Some(GeoId::new(GeoTier::Nation, "us")),
                st.to_string(),
            ));
        }
        for (c, st) in [("42003", "PA"), ("42001", "PA"), ("39035", "OH")] {
            entries.push((
                GeoId::new(GeoTier::County, c),
                Some(GeoId::new(GeoTier::State, st)),
                c.to_string(),
            ));
        }
        GeoHierarchy::from_entries(entries).unwrap()
    }

    fn key(s: &str) -> StreamKey {
        s.parse().unwrap()
    }

    #[test]
    fn parses_single_and_double() {
        let one = parse_filter("source:in:prov1").unwrap();
        assert_eq!(one.predicates().len(), 1);
        assert_eq!(one.predicates()[0].mode, Mode::Include);
        let two = parse_filter("source:in:prov1,signal:not:raw_cases").unwrap();
        assert_eq!(two.predicates().len(), 2);
        assert_eq!(two.predicates()[1].dimension, Dimension::Signal);
        assert_eq!(two.to_string(), "source:in:prov1,signal:not:raw_cases");
    }

    #[test]
    fn arity_limits() {
        let five = "source:in:a,signal:in:b,geo_value:in:c,geo_region:in:d,source:not:e";
        match parse_filter(five) {
            Err(Error::FilterArity(msg)) => assert!(msg.contains("at most 4 predicates")),
            other => panic!("unexpected {other:?}"),
        }
        match parse_filter("source:in:a,source:not:b") {
            Err(Error::FilterArity(msg)) => assert!(msg.contains("duplicate dimension source")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_position() {
        match parse_filter("source::") {
            Err(Error::FilterSyntax { position, .. }) => assert_eq!(position, 7),
            other => panic!("unexpected {other:?}"),
        }
        match parse_filter("source:in:a,,") {
            Err(Error::FilterSyntax { position, .. }) => assert_eq!(position, 12),
            other => panic!("unexpected {other:?}"),
        }
        match parse_filter("county:in:x") {
            Err(Error::FilterSyntax { position, .. }) => assert_eq!(position, 0),
            other => panic!("unexpected {other:?}"),
        }
        match parse_filter("source:in:a||b") {
            Err(Error::FilterSyntax { position, .. }) => assert_eq!(position, 12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_filter("source").is_err());
        assert!(parse_filter("source:in").is_err());
    }

    #[test]
    fn empty_spec_passes_all() {
        let geo = hierarchy();
        let streams: Vec<StreamKey> = (0..10).map(|i| key(&format!("p{i}:s:state:PA"))).collect();
        assert_eq!(apply_filter(&parse_filter("").unwrap(), &streams, &geo), streams);
    }

    #[test]
    fn exclude_source() {
        let geo = hierarchy();
        let streams = vec![key("prov1:s:state:PA"), key("prov2:s:state:PA"), key("prov1:s:state:OH")];
        let kept = apply_filter(&parse_filter("source:not:prov2").unwrap(), &streams, &geo);
        assert_eq!(kept, vec![key("prov1:s:state:PA"), key("prov1:s:state:OH")]);
    }

    #[test]
    fn geo_region_is_containment() {
        let geo = hierarchy();
        let streams = vec![
            key("p:s:nation:us"),
            key("p:s:state:PA"),
            key("p:s:county:42003"),
            key("p:s:county:42001"),
            key("p:s:state:OH"),
            key("p:s:county:39035"),
        ];
        let kept = apply_filter(&parse_filter("geo_region:in:PA").unwrap(), &streams, &geo);
        assert_eq!(kept, streams[1..4].to_vec());
        let exact = apply_filter(&parse_filter("geo_value:in:PA").unwrap(), &streams, &geo);
        assert_eq!(exact, vec![key("p:s:state:PA")]);
    }
}

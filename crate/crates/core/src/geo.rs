// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Geographic hierarchy (county → state → nation) loaded from a crosswalk
//! file of `geo_type, geo_value, parent_type, parent_value, display_name`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoTier {
    County,
    State,
    Nation,
}

impl GeoTier {
    pub const ALL: [GeoTier; 3] = [GeoTier::County, GeoTier::State, GeoTier::Nation];

    pub fn as_str(self) -> &'static str {
        match self {
            GeoTier::County => "county",
            GeoTier::State => "state",
            GeoTier::Nation => "nation",
        }
    }

    fn parent_tier(self) -> Option<GeoTier> {
        match self {
            GeoTier::County => Some(GeoTier::State),
            GeoTier::State => Some(GeoTier::Nation),
            GeoTier::Nation => None,
        }
    }
}

impl fmt::Display for GeoTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownTier(pub String);

impl fmt::Display for UnknownTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown tier {:?}", self.0)
    }
}

impl FromStr for GeoTier {
    type Err = UnknownTier;

    fn from_str(s: &str) -> std::result::Result<Self, UnknownTier> {
        match s {
            "county" => Ok(GeoTier::County),
            "state" => Ok(GeoTier::State),
            "nation" => Ok(GeoTier::Nation),
            other => Err(UnknownTier(other.to_string())),
        }
    }
}

/// A region: tier plus region code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GeoId {
    pub tier: GeoTier,
    pub code: String,
}

impl GeoId {
    pub fn new(tier: GeoTier, code: impl Into<String>) -> Self {
        GeoId {
            tier,
            code: code.into(),
        }
    }
}

impl fmt::Display for GeoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tier, self.code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeoNode {
    pub geo: GeoId,
    pub display_name: String,
    pub parent: Option<GeoId>,
    /// Sorted by code.
    pub children: Vec<GeoId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeoRelatives {
    pub parent: Option<GeoNode>,
    pub siblings: Vec<GeoId>,
    pub children: Vec<GeoId>,
}

#[derive(Debug, Deserialize)]
struct CrosswalkRow {
    geo_type: String,
    geo_value: String,
    #[serde(default)]
    parent_type: String,
    #[serde(default)]
    parent_value: String,
    #[serde(default)]
    display_name: String,
}

#[derive(Debug, Clone, Default)]
pub struct GeoHierarchy {
    nodes: BTreeMap<GeoId, GeoNode>,
    root: Option<GeoId>,
    // region code -> every node carrying it (codes may repeat across tiers)
    by_code: HashMap<String, Vec<GeoId>>,
}

impl GeoHierarchy {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for (idx, row) in rdr.deserialize::<CrosswalkRow>().enumerate() {
            let row = row?;
            let line = idx + 2;
            let tier = row
                .geo_type
                .parse::<GeoTier>()
                .map_err(|e| Error::Hierarchy(format!("line {line}: {e}")))?;
            let parent = if row.parent_type.is_empty() && row.parent_value.is_empty() {
                None
            } else {
                let ptier = row
                    .parent_type
                    .parse::<GeoTier>()
                    .map_err(|e| Error::Hierarchy(format!("line {line}: {e}")))?;
                Some(GeoId::new(ptier, row.parent_value))
            };
            entries.push((GeoId::new(tier, row.geo_value), parent, row.display_name));
        }
        Self::from_entries(entries)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Builds and validates a hierarchy from `(region, parent, display_name)`.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (GeoId, Option<GeoId>, String)>,
    ) -> Result<Self> {
        let mut nodes: BTreeMap<GeoId, GeoNode> = BTreeMap::new();
        for (geo, parent, display_name) in entries {
            crate::key::check_token(&geo.code)
                .map_err(|why| Error::Hierarchy(format!("{geo}: {why}")))?;
            let node = GeoNode {
                geo: geo.clone(),
                display_name,
                parent,
                children: Vec::new(),
            };
            if nodes.insert(geo.clone(), node).is_some() {
                return Err(Error::Hierarchy(format!("duplicate region {geo}")));
            }
        }

        let mut root = None;
        let mut links = Vec::new();
        for node in nodes.values() {
            match (&node.parent, node.geo.tier.parent_tier()) {
                (None, None) => {
                    if let Some(prev) = root.replace(node.geo.clone()) {
                        return Err(Error::Hierarchy(format!(
                            "more than one nation root: {prev} and {}",
                            node.geo
                        )));
                    }
                }
                (Some(_), None) => {
                    return Err(Error::Hierarchy(format!("{} must not have a parent", node.geo)))
                }
                (None, Some(_)) => {
                    return Err(Error::Hierarchy(format!("{} has no parent", node.geo)))
                }
                (Some(parent), Some(expected)) => {
                    if parent.tier != expected {
                        return Err(Error::Hierarchy(format!(
                            "{} must have a {expected} parent, found {parent}",
                            node.geo
                        )));
                    }
                    if !nodes.contains_key(parent) {
                        return Err(Error::Hierarchy(format!(
                            "{} references missing parent {parent}",
                            node.geo
                        )));
                    }
                    links.push((parent.clone(), node.geo.clone()));
                }
            }
        }
        if root.is_none() && !nodes.is_empty() {
            return Err(Error::Hierarchy("no nation root".into()));
        }
        // BTreeMap iteration order keeps children sorted.
        for (parent, child) in links {
            nodes.get_mut(&parent).expect("checked above").children.push(child);
        }

        let mut by_code: HashMap<String, Vec<GeoId>> = HashMap::new();
        for geo in nodes.keys() {
            by_code.entry(geo.code.clone()).or_default().push(geo.clone());
        }
        Ok(GeoHierarchy {
            nodes,
            root,
            by_code,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> Option<&GeoId> {
        self.root.as_ref()
    }

    pub fn node(&self, geo: &GeoId) -> Option<&GeoNode> {
        self.nodes.get(geo)
    }

    pub fn contains(&self, geo: &GeoId) -> bool {
        self.nodes.contains_key(geo)
    }

    pub fn parent(&self, geo: &GeoId) -> Option<&GeoId> {
        self.nodes.get(geo).and_then(|n| n.parent.as_ref())
    }

    pub fn children(&self, geo: &GeoId) -> &[GeoId] {
        self.nodes.get(geo).map(|n| n.children.as_slice()).unwrap_or(&[])
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GeoNode> {
        self.nodes.values()
    }

    pub fn regions_of_tier(&self, tier: GeoTier) -> impl Iterator<Item = &GeoId> {
        self.nodes.keys().filter(move |g| g.tier == tier)
    }

    pub fn geo_relatives(&self, geo: &GeoId) -> Result<GeoRelatives> {
        let node = self
            .nodes
            .get(geo)
            .ok_or_else(|| Error::UnknownRegion(geo.clone()))?;
        let parent = node.parent.as_ref().and_then(|p| self.nodes.get(p)).cloned();
        let siblings = parent
            .as_ref()
            .map(|p| p.children.iter().filter(|c| *c != geo).cloned().collect())
            .unwrap_or_default();
        Ok(GeoRelatives {
            parent,
            siblings,
            children: node.children.clone(),
        })
    }

    /// The region `geo` belongs to at `tier`: itself, its state, or the nation.
    pub fn ancestor_at(&self, geo: &GeoId, tier: GeoTier) -> Option<GeoId> {
        let mut current = self.nodes.get(geo)?;
        loop {
            if current.geo.tier == tier {
                return Some(current.geo.clone());
            }
            current = self.nodes.get(current.parent.as_ref()?)?;
        }
    }

    /// Whether `geo` equals or lies below a region whose code is `region_code`.
    pub fn is_within(&self, geo: &GeoId, region_code: &str) -> bool {
        if geo.code == region_code {
            return true;
        }
        let Some(targets) = self.by_code.get(region_code) else {
            return false;
        };
        let mut cursor = self.parent(geo);
        while let Some(p) = cursor {
            if targets.contains(p) {
                return true;
            }
            cursor = self.parent(p);
        }
        false
    }

    /// Display path from the nation down, e.g. `United States / Pennsylvania / Allegheny`.
    pub fn display_path(&self, geo: &GeoId) -> Vec<String> {
        let mut path = Vec::new();
        let mut cursor = self.nodes.get(geo);
        while let Some(node) = cursor {
            let name = if node.display_name.is_empty() {
                node.geo.code.clone()
            } else {
                node.display_name.clone()
            };
            path.push(name);
            cursor = node.parent.as_ref().and_then(|p| self.nodes.get(p));
        }
        path.reverse();
        path
    }
}

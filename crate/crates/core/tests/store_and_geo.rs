// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use chrono::Duration;
use common::*;
use epiwatch_core::store::{Observation, StreamStore};
use epiwatch_core::{GeoId, GeoTier};
use proptest::prelude::*;

#[test]
fn county_relatives_match_fixture() {
    let h = fixture_hierarchy();
    let rows = fixture_rows();
    let pa_counties = rows
        .iter()
        .filter(|r| r.0 == "county" && r.2 == "state" && r.3 == "PA")
        .count();
    assert_eq!(pa_counties, 67);

    let rel = h.geo_relatives(&GeoId::new(GeoTier::County, "42003")).unwrap();
    assert_eq!(rel.parent.as_ref().unwrap().geo, GeoId::new(GeoTier::State, "PA"));
    assert_eq!(rel.siblings.len(), pa_counties - 1);
    assert!(!rel.siblings.contains(&GeoId::new(GeoTier::County, "42003")));
    assert!(rel.children.is_empty());
}

#[test]
fn nation_and_state_relatives() {
    let h = fixture_hierarchy();
    let rows = fixture_rows();
    let states = rows.iter().filter(|r| r.0 == "state").count();

    let nation = h.geo_relatives(&GeoId::new(GeoTier::Nation, "us")).unwrap();
    assert!(nation.parent.is_none());
    assert!(nation.siblings.is_empty());
    assert_eq!(nation.children.len(), states);
    assert!(nation.children.iter().all(|c| c.tier == GeoTier::State));

    let pa = h.geo_relatives(&GeoId::new(GeoTier::State, "PA")).unwrap();
    assert_eq!(pa.parent.unwrap().geo, GeoId::new(GeoTier::Nation, "us"));
    assert_eq!(pa.siblings.len(), states - 1);
    let expected_children: Vec<String> = rows
        .iter()
        .filter(|r| r.3 == "PA" && r.2 == "state")
        .map(|r| r.1.clone())
        .collect();
    let children: Vec<String> = pa.children.iter().map(|c| c.code.clone()).collect();
    assert_eq!(children, expected_children);
}

#[test]
fn hierarchy_is_consistent() {
    let h = fixture_hierarchy();
    let roots: Vec<_> = h.nodes().filter(|n| n.parent.is_none()).collect();
    assert_eq!(roots.len(), 1);
    assert_eq!(roots[0].geo.tier, GeoTier::Nation);
    for node in h.nodes().filter(|n| n.geo.tier == GeoTier::County) {
        let parent = node.parent.as_ref().expect("county has a parent");
        assert_eq!(parent.tier, GeoTier::State);
        assert!(h.children(parent).contains(&node.geo));
    }
}

fn arb_observations() -> impl Strategy<Value = Vec<Observation>> {
    // Unique (key, time, issue) triples so no row conflicts with another.
    prop::collection::btree_map(
        (0usize..3, 0i64..20, 0i64..5),
        -1000.0f64..1000.0,
        1..120,
    )
    .prop_map(|m| {
        let base = d("2024-03-01");
        m.into_iter()
            .map(|((k, t, lag), value)| Observation {
                key: key(&format!("p:sig{k}:state:PA")),
                time_value: base + Duration::days(t),
                issue: base + Duration::days(t + lag),
                value,
            })
            .collect()
    })
}

fn dump(store: &StreamStore) -> Vec<u8> {
    let mut out = Vec::new();
    store.snapshot().dump(&mut out).unwrap();
    out
}

proptest! {
    #[test]
    fn ingest_order_and_batching_do_not_matter(
        obs in arb_observations(),
        seed in any::<u64>(),
        split in 0usize..120,
    ) {
        let forward = StreamStore::new();
        forward.ingest_observations(obs.clone());

        let mut shuffled = obs.clone();
        // Deterministic shuffle driven by the seed.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13; state ^= state >> 7; state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let batched = StreamStore::new();
        let cut = split.min(shuffled.len());
        batched.ingest_observations(shuffled[..cut].to_vec());
        batched.ingest_observations(shuffled[cut..].to_vec());
        // Replaying everything is a no-op.
        let replay = batched.ingest_observations(obs.clone());
        prop_assert_eq!(replay.inserted, 0);
        prop_assert_eq!(replay.rejected_count(), 0);

        prop_assert_eq!(dump(&forward), dump(&batched));
    }

    #[test]
    fn revisions_never_disappear(obs in arb_observations(), a in 0i64..30, b in 0i64..30) {
        let store = StreamStore::new();
        store.ingest_observations(obs);
        let snap = store.snapshot();
        let base = d("2024-03-01");
        let (early, late) = (base + Duration::days(a.min(b)), base + Duration::days(a.max(b)));
        for k in snap.keys() {
            let f1 = snap.latest_frame(k, early, 200).unwrap();
            let f2 = snap.latest_frame(k, late, 200).unwrap();
            prop_assert!(f1.points.iter().all(|p| p.issue <= early));
            prop_assert!(f2.points.windows(2).all(|w| w[0].time_value < w[1].time_value));
            for p in &f1.points {
                let later = f2.points.iter().find(|q| q.time_value == p.time_value);
                prop_assert!(later.is_some());
                prop_assert!(later.unwrap().issue >= p.issue);
            }
        }
    }

    #[test]
    fn dump_round_trips(obs in arb_observations()) {
        let store = StreamStore::new();
        store.ingest_observations(obs);
        let first = dump(&store);
        let restored = StreamStore::new();
        restored.ingest(first.as_slice()).unwrap();
        prop_assert_eq!(first, dump(&restored));
    }
}

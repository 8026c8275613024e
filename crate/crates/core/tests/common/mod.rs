//! Independent oracles shared by the integration tests. Nothing here calls
//! the allocation or flooding code under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;

use proxyaddr_core::scenario::{ConfigFile, RunPoint};
use proxyaddr_core::{DeviceIdentifier, NodeId, Topology};

/// Identifier octets, most significant (`b7`) first.
pub type Octets = [u8; 8];

pub const CONTROLLER: Octets = [0, 0, 0, 0, 0, 0, 0, 1];

fn reserved(max: u8) -> Octets {
    [max; 8]
}

/// Children of `id` when every octet ranges over `0..=max`, written from the
/// textual allocation rule.
pub fn oracle_children(id: Octets, max: u8) -> Vec<Octets> {
    let mut out = Vec::new();
    if id == CONTROLLER {
        for j in 1..=max {
            let mut c = id;
            c[0] = j;
            out.push(c);
        }
        for i in 2..=max {
            out.push([0, 0, 0, 0, 0, 0, 0, i]);
        }
        return out;
    }
    let Some(pos) = (0..7).find(|&p| id[p] == 0) else {
        return out;
    };
    for v in 1..=max {
        let mut c = id;
        c[pos] = v;
        if c != reserved(max) {
            out.push(c);
        }
    }
    out
}

/// Breadth-first enumeration of the allocation tree: child to parent.
pub fn oracle_tree(max: u8) -> BTreeMap<Octets, Octets> {
    let mut parent = BTreeMap::new();
    let mut queue = VecDeque::from([CONTROLLER]);
    while let Some(id) = queue.pop_front() {
        for c in oracle_children(id, max) {
            assert!(parent.insert(c, id).is_none(), "tree revisits {c:?}");
            queue.push_back(c);
        }
    }
    parent
}

/// Closed-form membership: `b0 >= 1`, the nonzero octets among `b7..b1` form
/// an unbroken run starting at `b7`, the run is non-empty when `b0 = 1`, and
/// the all-max identifier is excluded.
pub fn oracle_member(id: Octets, max: u8) -> bool {
    let run = id[..7].iter().take_while(|&&o| o != 0).count();
    id.iter().all(|&o| o <= max)
        && id[7] >= 1
        && id[run..7].iter().all(|&o| o == 0)
        && (id[7] != 1 || run >= 1)
        && id != reserved(max)
}

pub fn octets(id: DeviceIdentifier) -> Octets {
    id.octets()
}

/// Link traversals of a duplicate-suppressed flood from `origin`: the origin
/// sends on every link, every other reached node on every link but the one
/// it first heard from.
pub fn oracle_flood_cost(topo: &Topology, origin: NodeId) -> u64 {
    let n = topo.node_count();
    let mut seen = vec![false; n];
    seen[origin.index()] = true;
    let mut queue = VecDeque::from([origin]);
    let mut cost = 0;
    while let Some(v) = queue.pop_front() {
        let nb = topo.neighbors(v);
        cost += nb.len() as u64 - u64::from(v != origin);
        for &w in nb {
            if !seen[w.index()] {
                seen[w.index()] = true;
                queue.push_back(w);
            }
        }
    }
    cost
}

pub fn comparison_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/comparison.toml")
}

pub fn comparison() -> ConfigFile {
    ConfigFile::load(&comparison_path()).expect("checked-in config parses")
}

/// Run points of the named scenarios, in config order.
pub fn points(names: &[&str]) -> Vec<RunPoint> {
    let mut file = comparison();
    file.scenarios.retain(|s| names.contains(&s.name.as_str()));
    assert_eq!(
        file.scenarios.len(),
        names.len(),
        "missing scenario in comparison.toml"
    );
    file.expand().expect("scenarios expand")
}

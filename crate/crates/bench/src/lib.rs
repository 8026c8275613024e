//! Shared fixtures for the criterion benches.

use proxyaddr_core::sim::{build_topology, radius_for_degree, Topology, TopologyKind};

/// A connected random geometric graph with mean degree near `degree`.
pub fn geometric(n: u32, degree: f64, seed: u64) -> Topology {
    let kind = TopologyKind::RandomGeometric {
        n,
        radius: radius_for_degree(n, degree),
    };
    build_topology(&kind, seed).expect("connected fixture")
}

pub fn grid(side: u32) -> Topology {
    build_topology(
        &TopologyKind::Grid {
            rows: side,
            cols: side,
        },
        0,
    )
    .expect("grid")
}

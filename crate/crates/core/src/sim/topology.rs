//! Undirected topologies with BFS-derived statistics.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::NodeId;

/// Largest node count for which the diameter is computed exactly.
pub const EXACT_DIAMETER_LIMIT: usize = 5000;

/// Regeneration attempts for random topologies before giving up.
pub const MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("topology needs at least one node")]
    Empty,
    #[error("link {0}-{1} references a missing node")]
    BadLink(u32, u32),
    #[error("topology is not connected")]
    Disconnected,
    #[error("no connected topology after {0} attempts")]
    Unsatisfiable(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyKind {
    Grid {
        rows: u32,
        cols: u32,
    },
    Path {
        n: u32,
    },
    Complete {
        n: u32,
    },
    /// Complete `fanout`-ary tree with `depth` levels under the root.
    Tree {
        fanout: u32,
        depth: u32,
    },
    /// A path of `handle` links from node 0 to a hub carrying `bristles`
    /// leaves. Every leaf sits at distance `handle + 1` from node 0.
    Broom {
        handle: u32,
        bristles: u32,
    },
    /// Uniform points in the unit square, linked within `radius`.
    RandomGeometric {
        n: u32,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    adj: Vec<Vec<NodeId>>,
    links: usize,
    diameter: u32,
    diameter_exact: bool,
}

impl Topology {
    /// Builds a topology from an edge list. Duplicate edges and self-loops
    /// are dropped; the result must be connected.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(TopologyError::BadLink(a, b));
            }
            if a != b {
                adj[a as usize].push(NodeId(b));
                adj[b as usize].push(NodeId(a));
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let links = adj.iter().map(Vec::len).sum::<usize>() / 2;
        let mut topo = Topology {
            adj,
            links,
            diameter: 0,
            diameter_exact: true,
        };
        if topo.distances(NodeId(0)).iter().any(|d| d.is_none()) {
            return Err(TopologyError::Disconnected);
        }
        topo.compute_diameter();
        Ok(topo)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn link_count(&self) -> usize {
        self.links
    }

    /// Diameter in hops. A lower bound when [`diameter_exact`](Self::diameter_exact) is false.
    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn diameter_exact(&self) -> bool {
        self.diameter_exact
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adj[node.index()]
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.links as f64 / self.adj.len() as f64
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn distances(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.adj.len()];
        let mut queue = VecDeque::new();
        dist[src.index()] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].expect("queued nodes have a distance");
            for &v in &self.adj[u.index()] {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Nodes in BFS order from `src`, neighbours visited in index order.
    pub fn bfs_order(&self, src: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.adj.len()];
        let mut order = Vec::with_capacity(self.adj.len());
        let mut queue = VecDeque::from([src]);
        seen[src.index()] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &self.adj[u.index()] {
                if !std::mem::replace(&mut seen[v.index()], true) {
                    queue.push_back(v);
                }
            }
        }
        order
    }

    fn eccentricity(&self, src: NodeId) -> (u32, NodeId) {
        self.distances(src)
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| (d, NodeId::from(i))))
            .max_by_key(|&(d, i)| (d, std::cmp::Reverse(i)))
            .expect("source reaches itself")
    }

    fn compute_diameter(&mut self) {
        if self.adj.len() <= EXACT_DIAMETER_LIMIT {
            self.diameter = (0..self.adj.len())
                .map(|i| self.eccentricity(NodeId::from(i)).0)
                .max()
                .unwrap_or(0);
            self.diameter_exact = true;
        } else {
            // double sweep: a lower bound, usually tight on geometric graphs
            let (_, far) = self.eccentricity(NodeId(0));
            self.diameter = self.eccentricity(far).0;
            self.diameter_exact = false;
        }
    }
}

/// Connectivity radius for a target mean degree in the unit square.
pub fn radius_for_degree(n: u32, degree: f64) -> f64 {
    (degree / (std::f64::consts::PI * f64::from(n.max(1)))).sqrt()
}

fn random_geometric_edges(n: u32, radius: f64, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let points: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let cells = ((1.0 / radius).floor() as usize).clamp(1, 4096);
    let cell_of = |x: f64| ((x * cells as f64) as usize).min(cells - 1);
    let mut grid: Vec<Vec<u32>> = vec![Vec::new(); cells * cells];
    for (i, &(x, y)) in points.iter().enumerate() {
        grid[cell_of(y) * cells + cell_of(x)].push(i as u32);
    }
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let (cx, cy) = (cell_of(x), cell_of(y));
        for gy in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                for &j in &grid[gy * cells + gx] {
                    if (j as usize) <= i {
                        continue;
                    }
                    let (px, py) = points[j as usize];
                    let (dx, dy) = (px - x, py - y);
                    if dx * dx + dy * dy <= r2 {
                        edges.push((i as u32, j));
                    }
                }
            }
        }
    }
    edges
}

/// Builds a topology of the given kind. Random kinds are regenerated with
/// successive sub-seeds until connected.
pub fn build_topology(kind: &TopologyKind, seed: u64) -> Result<Topology, TopologyError> {
    match *kind {
        TopologyKind::Grid { rows, cols } => {
            let at = |r: u32, c: u32| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((at(r, c), at(r, c + 1)));
                    }
                    if r + 1 < rows {
                        edges.push((at(r, c), at(r + 1, c)));
                    }
                }
            }
            Topology::from_edges((rows * cols) as usize, edges)
        }
        TopologyKind::Path { n } => Topology::from_edges(n as usize, (1..n).map(|i| (i - 1, i))),
        TopologyKind::Complete { n } => Topology::from_edges(
            n as usize,
            (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))),
        ),
        TopologyKind::Tree { fanout, depth } => {
            let mut edges = Vec::new();
            let mut level = vec![0u32];
            let mut next_id = 1u32;
            for _ in 0..depth {
                let mut next = Vec::with_capacity(level.len() * fanout as usize);
                for &parent in &level {
                    for _ in 0..fanout {
                        edges.push((parent, next_id));
                        next.push(next_id);
                        next_id += 1;
                    }
                }
                level = next;
            }
            Topology::from_edges(next_id as usize, edges)
        }
        TopologyKind::Broom { handle, bristles } => {
            let hub = handle;
            let edges = (1..=handle)
                .map(|i| (i - 1, i))
                .chain((0..bristles).map(|k| (hub, hub + 1 + k)));
            Topology::from_edges((handle + 1 + bristles) as usize, edges)
        }
        TopologyKind::RandomGeometric { n, radius } => {
            if n == 0 {
                return Err(TopologyError::Empty);
            }
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(attempt);
                let edges = random_geometric_edges(n, radius, &mut rng);
                match Topology::from_edges(n as usize, edges) {
                    Err(TopologyError::Disconnected) => continue,
                    other => return other,
                }
            }
            Err(TopologyError::Unsatisfiable(MAX_ATTEMPTS))
        }
    }
}

//! Deterministic discrete-event simulation of address allocation.
//!
//! Every link transmission costs one message and `t` = [`TICKS_PER_HOP`]
//! ticks (plus optional uniform jitter). Loss is an independent Bernoulli
//! drop per transmission. Events due at the same tick run arrivals first,
//! then in scheduling order, so a run is a pure function of its
//! configuration and seed.
//!
//! Only configured nodes and nodes mid-join relay traffic; a node whose join
//! fails stays dark. New joiners are drawn next to configured nodes. Joins
//! start one at a time by default, each when the previous one concluded.

mod engine;
pub mod metrics;
mod schemes;
pub mod topology;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{AddressSpace, NetworkPrefix};
use crate::types::{NodeId, RetryPolicy, Ticks, TICKS_PER_HOP};

pub use metrics::{JoinOutcome, JoinRecord, MessageClass, MetricsRecord, Summary};
pub use topology::{build_topology, radius_for_degree, Topology, TopologyError, TopologyKind};

/// Events processed before a run is declared livelocked.
pub const DEFAULT_EVENT_BUDGET: u64 = 10_000_000;

/// Tentative identifiers DAD draws from by default.
pub const DEFAULT_DAD_POOL: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Proposed,
    Dad,
    Dhcp,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Dad, Scheme::Dhcp];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Dad => "dad",
            Scheme::Dhcp => "dhcp",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scheme {s:?}"))
    }
}

/// Which node joins next.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JoinOrder {
    /// Breadth-first from the controller.
    Bfs,
    /// Uniformly random among nodes adjacent to the joined set.
    #[default]
    Frontier,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no quiescence within {0} events")]
    NonQuiescent(u64),
    #[error("controller {0} is not in the topology")]
    NoController(NodeId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheme: Scheme,
    /// Joins to run; capped at `n - 1`.
    pub joins: usize,
    pub loss: f64,
    pub seed: u64,
    /// Joins allowed in flight at once.
    pub concurrency: usize,
    pub join_order: JoinOrder,
    /// Upper bound of the uniform per-hop jitter, in ticks.
    pub jitter: Ticks,
    pub retry: RetryPolicy,
    pub dad_pool: u64,
    pub dad_max_retries: u32,
    pub dhcp_capacity: u64,
    pub event_budget: u64,
    /// Node hosting the local controller (and the DHCP server).
    pub controller: NodeId,
    pub prefix: NetworkPrefix,
    pub space: AddressSpace,
}

impl SimConfig {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        SimConfig {
            scheme,
            joins: usize::MAX,
            loss: 0.0,
            seed,
            concurrency: 1,
            join_order: JoinOrder::default(),
            jitter: 0,
            retry: RetryPolicy::default(),
            dad_pool: DEFAULT_DAD_POOL,
            dad_max_retries: 5,
            dhcp_capacity: u64::MAX,
            event_budget: DEFAULT_EVENT_BUDGET,
            controller: NodeId(0),
            prefix: NetworkPrefix::EXAMPLE,
            space: AddressSpace::STANDARD,
        }
    }
}

/// Runs one scheme over `topology` until quiescence.
pub fn run_scenario(topology: &Topology, config: &SimConfig) -> Result<MetricsRecord, SimError> {
    if config.controller.index() >= topology.node_count() {
        return Err(SimError::NoController(config.controller));
    }
    match config.scheme {
        Scheme::Proposed => schemes::run_proposed(topology, config),
        Scheme::Dad => schemes::run_dad(topology, config),
        Scheme::Dhcp => schemes::run_dhcp(topology, config),
    }
}

/// Outcome of a single flood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloodReport {
    /// Directed link traversals, lost copies included.
    pub transmissions: u64,
    /// Copies accepted, one per node reached (origin excluded).
    pub accepted: u64,
    pub suppressed: u64,
    pub lost: u64,
    /// Time until the last node was reached, in hops.
    pub duration: u64,
}

/// Floods one message from `origin` over the whole topology.
pub fn flood(topology: &Topology, origin: NodeId, loss: f64, seed: u64) -> FloodReport {
    schemes::single_flood(topology, origin, loss, seed)
}

pub(crate) fn hops(n: u32) -> Ticks {
    Ticks::from(n) * TICKS_PER_HOP
}

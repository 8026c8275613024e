//! Types shared by the protocol state machines and the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::addr::Ipv6Address;

/// Simulated time. One hop costs [`TICKS_PER_HOP`] ticks.
pub type Ticks = u64;

/// Ticks per unit of the 1-hop latency `t`.
pub const TICKS_PER_HOP: Ticks = 1000;

/// Index of a node in a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index fits in u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Hops a unicast message takes after leaving its sender. The last entry is
/// the destination.
pub type Route = Vec<NodeId>;

/// Why a join ended without an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailReason {
    /// Retry budget spent without an answer.
    Timeout,
    /// The domain (or DHCP pool) has nothing left to give.
    Denied,
}

/// Output of a state machine step, executed by the simulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action<M> {
    /// Unicast along an explicit route.
    Send { route: Route, message: M },
    /// Duplicate-suppressed flood from the acting node.
    Flood { message: M },
    /// Wake the acting node after `after` ticks, tagged with `epoch`.
    SetTimer { after: Ticks, epoch: u32 },
    /// The acting node now holds `address`.
    Configured { address: Ipv6Address },
    /// The acting node's join ended without an address.
    Failed { reason: FailReason },
}

/// Retry timer settings for a joining node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub timeout: Ticks,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            timeout: 4 * TICKS_PER_HOP,
            max_attempts: 5,
        }
    }
}

/// Attempt and timer bookkeeping common to every joining state machine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct RetryState {
    pub attempts: u32,
    pub epoch: u32,
    pub armed: bool,
    pub finished: bool,
}

impl RetryState {
    pub fn arm(&mut self) -> u32 {
        self.epoch += 1;
        self.armed = true;
        self.epoch
    }

    pub fn disarm(&mut self) {
        self.armed = false;
    }

    pub fn fires(&self, epoch: u32) -> bool {
        self.armed && !self.finished && self.epoch == epoch
    }
}

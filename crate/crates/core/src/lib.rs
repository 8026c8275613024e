//! Proxy-based IPv6 address allocation for SDN-IoT domains.
//!
//! Configured devices generate unique addresses for joining neighbours from
//! their own identifier, so no allocation message is ever broadcast. The
//! crate carries the allocation rule ([`addr`]), the join/proxy/escalation
//! state machines ([`protocol`]), DAD and DHCP reference machines
//! ([`baselines`]), a deterministic discrete-event simulator ([`sim`]) and
//! the scenario runner and report used by the `proxyaddr` CLI
//! ([`scenario`], [`report`]).

pub mod addr;
pub mod baselines;
pub mod protocol;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod types;

pub use addr::{
    AddrError, AddressSpace, AllocationState, DeviceIdentifier, Ipv6Address, NetworkPrefix,
};
pub use sim::{run_scenario, MetricsRecord, Scheme, SimConfig, SimError, Topology, TopologyKind};
pub use types::{NodeId, Ticks, TICKS_PER_HOP};

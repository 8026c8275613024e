//! Join, proxy and escalation state machines for proxy-based allocation.
//!
//! The machines are sans-io: every handler consumes one event and returns
//! [`Action`]s for the simulator to execute. A joining node asks its
//! lowest-numbered configured neighbour for an address. A proxy that cannot
//! generate one forwards the request up the allocation tree; the first
//! ancestor with capacity answers and the reply retraces the escalation path.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::addr::{
    AddrError, AddressSpace, AllocationState, DeviceIdentifier, Ipv6Address, NetworkPrefix,
};
use crate::types::{Action, FailReason, NodeId, RetryPolicy, RetryState, Route, Ticks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    GlobalController,
    LocalController,
    ConfiguredDevice,
    Unconfigured,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    /// No neighbour can serve a request yet. The node has armed its retry
    /// timer and will try again when it fires.
    #[error("no configured neighbour; retry in {retry_after} ticks")]
    NoConfiguredNeighbor { retry_after: Ticks, epoch: u32 },
    #[error("node {0} cannot join: it already has an address or gave up")]
    NotJoining(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    AddrRequest,
    AddrReply {
        assigned: Ipv6Address,
        issuer: NodeId,
    },
    AddrDeny,
    /// `trail` lists the nodes the request has climbed through, starting at
    /// the exhausted proxy.
    EscalateRequest {
        trail: Vec<NodeId>,
    },
}

/// A message of the proposed scheme. `requester` is the joining node the
/// exchange belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub src: NodeId,
    pub dst: NodeId,
    pub requester: NodeId,
    pub body: MessageBody,
}

/// A neighbour as seen by a joining node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub id: NodeId,
    pub configured: bool,
}

/// Maps identifiers to the nodes holding them.
pub trait Directory {
    fn locate(&self, id: DeviceIdentifier) -> Option<NodeId>;
}

impl<F: Fn(DeviceIdentifier) -> Option<NodeId>> Directory for F {
    fn locate(&self, id: DeviceIdentifier) -> Option<NodeId> {
        self(id)
    }
}

/// An outstanding request sent by a joining node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingRequest {
    pub proxy: NodeId,
    pub attempt: u32,
}

pub type ProtocolAction = Action<ProtocolMessage>;

#[derive(Debug, Clone)]
pub struct NodeState {
    id: NodeId,
    role: NodeRole,
    address: Option<Ipv6Address>,
    alloc: Option<AllocationState>,
    pending: VecDeque<PendingRequest>,
    retry: RetryState,
    policy: RetryPolicy,
    space: AddressSpace,
    /// Addresses this node has issued, by requester. A repeated request
    /// gets the same address back instead of consuming a new one.
    granted: HashMap<NodeId, Ipv6Address>,
}

impl NodeState {
    pub fn unconfigured(id: NodeId, policy: RetryPolicy, space: AddressSpace) -> Self {
        NodeState {
            id,
            role: NodeRole::Unconfigured,
            address: None,
            alloc: None,
            pending: VecDeque::new(),
            retry: RetryState::default(),
            policy,
            space,
            granted: HashMap::new(),
        }
    }

    /// The domain root, holding the controller identifier under `prefix`.
    pub fn local_controller(id: NodeId, prefix: NetworkPrefix, space: AddressSpace) -> Self {
        let address = Ipv6Address::new(prefix, DeviceIdentifier::CONTROLLER);
        NodeState {
            role: NodeRole::LocalController,
            address: Some(address),
            alloc: Some(AllocationState::CONTROLLER),
            ..Self::unconfigured(id, RetryPolicy::default(), space)
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn role(&self) -> NodeRole {
        self.role
    }

    pub fn address(&self) -> Option<Ipv6Address> {
        self.address
    }

    pub fn alloc(&self) -> Option<AllocationState> {
        self.alloc
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingRequest> {
        self.pending.iter()
    }

    pub fn attempts(&self) -> u32 {
        self.retry.attempts
    }

    pub fn is_configured(&self) -> bool {
        self.role != NodeRole::Unconfigured
    }

    fn joining(&self) -> bool {
        self.role == NodeRole::Unconfigured && !self.retry.finished
    }

    fn message(&self, dst: NodeId, requester: NodeId, body: MessageBody) -> ProtocolMessage {
        ProtocolMessage {
            src: self.id,
            dst,
            requester,
            body,
        }
    }

    /// Starts a join: one request to the lowest-numbered configured neighbour
    /// plus a retry timer.
    pub fn on_join(
        &mut self,
        neighbors: &[Neighbor],
    ) -> Result<Vec<ProtocolAction>, ProtocolError> {
        if !self.joining() {
            return Err(ProtocolError::NotJoining(self.id));
        }
        self.retry.attempts += 1;
        let epoch = self.retry.arm();
        let after = self.policy.timeout;

        let Some(proxy) = neighbors
            .iter()
            .filter(|n| n.configured)
            .map(|n| n.id)
            .min()
        else {
            return Err(ProtocolError::NoConfiguredNeighbor {
                retry_after: after,
                epoch,
            });
        };
        self.pending.push_back(PendingRequest {
            proxy,
            attempt: self.retry.attempts,
        });
        Ok(vec![
            Action::Send {
                route: vec![proxy],
                message: self.message(proxy, self.id, MessageBody::AddrRequest),
            },
            Action::SetTimer { after, epoch },
        ])
    }

    /// Retry timer expiry. Stale epochs are ignored.
    pub fn on_timer(&mut self, epoch: u32, neighbors: &[Neighbor]) -> Vec<ProtocolAction> {
        if !self.joining() || !self.retry.fires(epoch) {
            return Vec::new();
        }
        if self.retry.attempts >= self.policy.max_attempts {
            self.retry.finished = true;
            self.retry.disarm();
            self.pending.clear();
            return vec![Action::Failed {
                reason: FailReason::Timeout,
            }];
        }
        match self.on_join(neighbors) {
            Ok(actions) => actions,
            Err(ProtocolError::NoConfiguredNeighbor { retry_after, epoch }) => {
                vec![Action::SetTimer {
                    after: retry_after,
                    epoch,
                }]
            }
            Err(ProtocolError::NotJoining(_)) => Vec::new(),
        }
    }

    fn issue(&mut self) -> Result<Ipv6Address, AddrError> {
        let (address, alloc) = match (self.address, self.alloc) {
            (Some(a), Some(s)) => (a, s),
            _ => return Err(AddrError::Exhausted),
        };
        let (child, next) = self.space.generate(address.id, alloc)?;
        self.alloc = Some(next);
        Ok(Ipv6Address::new(address.prefix, child))
    }

    /// Serves a request, or climbs the tree with it when empty. Requests
    /// reaching this node are handled strictly one at a time.
    fn serve(
        &mut self,
        requester: NodeId,
        trail: Vec<NodeId>,
        directory: &impl Directory,
    ) -> Vec<ProtocolAction> {
        let back: Route = trail.iter().rev().copied().chain([requester]).collect();
        let issued = match self.granted.get(&requester) {
            Some(&a) => Ok(a),
            None => self.issue().inspect(|&a| {
                self.granted.insert(requester, a);
            }),
        };
        match issued {
            Ok(assigned) => vec![Action::Send {
                route: back,
                message: self.message(
                    requester,
                    requester,
                    MessageBody::AddrReply {
                        assigned,
                        issuer: self.id,
                    },
                ),
            }],
            Err(_) => {
                let parent = self
                    .address
                    .and_then(|a| self.space.parent_of(a.id).ok().flatten())
                    .and_then(|p| directory.locate(p));
                match parent {
                    Some(parent) => {
                        let mut trail = trail;
                        trail.push(self.id);
                        vec![Action::Send {
                            route: vec![parent],
                            message: self.message(
                                parent,
                                requester,
                                MessageBody::EscalateRequest { trail },
                            ),
                        }]
                    }
                    None => vec![Action::Send {
                        route: back,
                        message: self.message(requester, requester, MessageBody::AddrDeny),
                    }],
                }
            }
        }
    }

    pub fn on_addr_request(
        &mut self,
        requester: NodeId,
        directory: &impl Directory,
    ) -> Vec<ProtocolAction> {
        if !self.is_configured() {
            return Vec::new();
        }
        self.serve(requester, Vec::new(), directory)
    }

    pub fn on_escalate(
        &mut self,
        requester: NodeId,
        trail: Vec<NodeId>,
        directory: &impl Directory,
    ) -> Vec<ProtocolAction> {
        if !self.is_configured() {
            return Vec::new();
        }
        self.serve(requester, trail, directory)
    }

    /// Takes the first reply; later or unsolicited ones change nothing.
    pub fn on_addr_reply(&mut self, assigned: Ipv6Address) -> Vec<ProtocolAction> {
        if !self.joining() || self.retry.attempts == 0 {
            return Vec::new();
        }
        self.role = NodeRole::ConfiguredDevice;
        self.address = Some(assigned);
        self.alloc = Some(AllocationState::initial(assigned.id));
        self.retry.disarm();
        self.pending.clear();
        vec![Action::Configured { address: assigned }]
    }

    pub fn on_addr_deny(&mut self) -> Vec<ProtocolAction> {
        if !self.joining() || self.retry.attempts == 0 {
            return Vec::new();
        }
        self.retry.finished = true;
        self.retry.disarm();
        self.pending.clear();
        vec![Action::Failed {
            reason: FailReason::Denied,
        }]
    }

    /// Dispatches an incoming message to the matching handler.
    pub fn handle(
        &mut self,
        message: ProtocolMessage,
        directory: &impl Directory,
    ) -> Vec<ProtocolAction> {
        match message.body {
            MessageBody::AddrRequest => self.on_addr_request(message.requester, directory),
            MessageBody::EscalateRequest { trail } => {
                self.on_escalate(message.requester, trail, directory)
            }
            MessageBody::AddrReply { assigned, .. } => self.on_addr_reply(assigned),
            MessageBody::AddrDeny => self.on_addr_deny(),
        }
    }
}

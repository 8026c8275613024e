//! The three allocation schemes wired onto the engine.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::engine::{Net, NetParams, Payload, Via, World};
use super::metrics::{JoinOutcome, MessageClass, MetricsRecord};
use super::topology::Topology;
use super::{hops, FloodReport, SimConfig, SimError};
use crate::addr::{AddressSpace, DeviceIdentifier, Ipv6Address, NetworkPrefix};
use crate::baselines::{
    dad_timer, BaselineAction, BaselineBody, BaselineMessage, DadState, DhcpClient, DhcpServerState,
};
use crate::protocol::{
    MessageBody, Neighbor, NodeState, ProtocolAction, ProtocolError, ProtocolMessage,
};
use crate::types::{Action, NodeId, TICKS_PER_HOP};

impl Payload for ProtocolMessage {
    fn requester(&self) -> NodeId {
        self.requester
    }

    fn class(&self) -> MessageClass {
        match self.body {
            MessageBody::AddrRequest => MessageClass::AddrRequest,
            MessageBody::AddrReply { .. } => MessageClass::AddrReply,
            MessageBody::AddrDeny => MessageClass::AddrDeny,
            MessageBody::EscalateRequest { .. } => MessageClass::Escalate,
        }
    }
}

impl Payload for BaselineMessage {
    fn requester(&self) -> NodeId {
        self.requester
    }

    fn class(&self) -> MessageClass {
        match self.body {
            BaselineBody::Dap { .. } => MessageClass::Dap,
            BaselineBody::Acn { .. } => MessageClass::Acn,
            BaselineBody::DhcpDiscover => MessageClass::DhcpDiscover,
            BaselineBody::DhcpOffer { .. } => MessageClass::DhcpOffer,
            BaselineBody::DhcpDeny => MessageClass::DhcpDeny,
        }
    }
}

fn params(topo: &Topology, cfg: &SimConfig, root_address: Option<Ipv6Address>) -> NetParams {
    NetParams {
        loss: cfg.loss,
        jitter: cfg.jitter,
        seed: cfg.seed,
        joins: cfg.joins.min(topo.node_count().saturating_sub(1)),
        concurrency: cfg.concurrency,
        order: cfg.join_order,
        event_budget: cfg.event_budget,
        root: cfg.controller,
        root_address,
        all_present: false,
    }
}

fn world_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    rng
}

struct ProposedWorld {
    nodes: Vec<NodeState>,
    directory: HashMap<DeviceIdentifier, NodeId>,
    space: AddressSpace,
    prefix: NetworkPrefix,
    /// Issuer named by the reply being handled, for the tree check.
    issuer: Option<NodeId>,
}

impl ProposedWorld {
    fn neighbors(&self, net: &Net<'_, ProtocolMessage>, node: NodeId) -> Vec<Neighbor> {
        net.topology()
            .neighbors(node)
            .iter()
            .filter(|&&v| net.is_present(v))
            .map(|&v| Neighbor {
                id: v,
                configured: self.nodes[v.index()].is_configured(),
            })
            .collect()
    }

    /// Closure and tree consistency of a freshly assigned address.
    fn well_formed(&self, address: Ipv6Address) -> bool {
        let issuer = self
            .issuer
            .and_then(|i| self.nodes[i.index()].address())
            .map(|a| a.id);
        address.prefix == self.prefix
            && self.space.validate(address.id).is_ok()
            && issuer.is_some()
            && self.space.parent_of(address.id).ok().flatten() == issuer
    }

    fn apply(
        &mut self,
        net: &mut Net<'_, ProtocolMessage>,
        node: NodeId,
        actions: Vec<ProtocolAction>,
    ) {
        for action in actions {
            match action {
                Action::Send { route, message } => net.send(node, route, message),
                Action::Flood { message } => net.flood(node, message),
                Action::SetTimer { after, epoch } => net.set_timer(node, after, epoch),
                Action::Configured { address } => {
                    if !self.well_formed(address) {
                        net.note_violation();
                    }
                    self.directory.entry(address.id).or_insert(node);
                    let retries = self.nodes[node.index()].attempts().saturating_sub(1);
                    net.finish(node, JoinOutcome::Configured, Some(address), retries);
                }
                Action::Failed { reason } => {
                    let retries = self.nodes[node.index()].attempts().saturating_sub(1);
                    net.finish(node, JoinOutcome::Failed(reason), None, retries);
                }
            }
        }
    }
}

impl World for ProposedWorld {
    type Msg = ProtocolMessage;

    fn join(&mut self, net: &mut Net<'_, ProtocolMessage>, node: NodeId) {
        let neighbors = self.neighbors(net, node);
        match self.nodes[node.index()].on_join(&neighbors) {
            Ok(actions) => self.apply(net, node, actions),
            Err(ProtocolError::NoConfiguredNeighbor { retry_after, epoch }) => {
                net.set_timer(node, retry_after, epoch)
            }
            Err(ProtocolError::NotJoining(_)) => {}
        }
    }

    fn deliver(
        &mut self,
        net: &mut Net<'_, ProtocolMessage>,
        at: NodeId,
        msg: ProtocolMessage,
        _via: Via,
    ) {
        self.issuer = match msg.body {
            MessageBody::AddrReply { issuer, .. } => Some(issuer),
            _ => None,
        };
        let directory = &self.directory;
        let actions = self.nodes[at.index()].handle(msg, &|id| directory.get(&id).copied());
        self.apply(net, at, actions);
        self.issuer = None;
    }

    fn timer(&mut self, net: &mut Net<'_, ProtocolMessage>, node: NodeId, epoch: u32) {
        let neighbors = self.neighbors(net, node);
        let actions = self.nodes[node.index()].on_timer(epoch, &neighbors);
        self.apply(net, node, actions);
    }
}

pub(super) fn run_proposed(topo: &Topology, cfg: &SimConfig) -> Result<MetricsRecord, SimError> {
    let root = cfg.controller;
    let mut nodes: Vec<NodeState> = (0..topo.node_count())
        .map(|i| NodeState::unconfigured(NodeId::from(i), cfg.retry, cfg.space))
        .collect();
    nodes[root.index()] = NodeState::local_controller(root, cfg.prefix, cfg.space);
    let root_address = nodes[root.index()].address();
    let mut world = ProposedWorld {
        nodes,
        directory: HashMap::from([(DeviceIdentifier::CONTROLLER, root)]),
        space: cfg.space,
        prefix: cfg.prefix,
        issuer: None,
    };
    Net::new(topo, params(topo, cfg, root_address)).run(&mut world)
}

fn finish_baseline(
    net: &mut Net<'_, BaselineMessage>,
    node: NodeId,
    action: &BaselineAction,
    retries: u32,
) -> bool {
    match action {
        Action::Configured { address } => {
            net.finish(node, JoinOutcome::Configured, Some(*address), retries);
            true
        }
        Action::Failed { reason } => {
            net.finish(node, JoinOutcome::Failed(*reason), None, retries);
            true
        }
        _ => false,
    }
}

fn apply_baseline(
    net: &mut Net<'_, BaselineMessage>,
    node: NodeId,
    actions: Vec<BaselineAction>,
    retries: impl Fn() -> u32,
) {
    for action in actions {
        if finish_baseline(net, node, &action, retries()) {
            continue;
        }
        match action {
            Action::Send { route, message } => net.send(node, route, message),
            Action::Flood { message } => net.flood(node, message),
            Action::SetTimer { after, epoch } => net.set_timer(node, after, epoch),
            Action::Configured { .. } | Action::Failed { .. } => unreachable!(),
        }
    }
}

struct DadWorld {
    nodes: Vec<DadState>,
    rng: ChaCha8Rng,
}

impl World for DadWorld {
    type Msg = BaselineMessage;

    fn join(&mut self, net: &mut Net<'_, BaselineMessage>, node: NodeId) {
        let actions = self.nodes[node.index()].dad_join(&mut self.rng);
        apply_baseline(net, node, actions, || 0);
    }

    fn deliver(
        &mut self,
        net: &mut Net<'_, BaselineMessage>,
        at: NodeId,
        msg: BaselineMessage,
        via: Via,
    ) {
        match msg.body {
            BaselineBody::Dap { tentative } => {
                let Via::Flood(flood) = via else { return };
                if let Some(acn) = self.nodes[at.index()].dad_on_probe(msg.requester, tentative) {
                    let route = net.route_back(flood, at);
                    net.send(at, route, acn);
                }
            }
            BaselineBody::Acn { tentative } if at == msg.requester => {
                let node = &mut self.nodes[at.index()];
                let actions = node.on_acn(tentative, &mut self.rng);
                let retries = node.retries();
                apply_baseline(net, at, actions, || retries);
            }
            _ => {}
        }
    }

    fn timer(&mut self, net: &mut Net<'_, BaselineMessage>, node: NodeId, epoch: u32) {
        let state = &mut self.nodes[node.index()];
        let actions = state.on_timer(epoch);
        let retries = state.retries();
        apply_baseline(net, node, actions, || retries);
    }
}

pub(super) fn run_dad(topo: &Topology, cfg: &SimConfig) -> Result<MetricsRecord, SimError> {
    let root = cfg.controller;
    let timer = dad_timer(topo.diameter());
    let mut nodes: Vec<DadState> = (0..topo.node_count())
        .map(|i| {
            DadState::new(
                NodeId::from(i),
                cfg.prefix,
                timer,
                cfg.dad_pool,
                cfg.dad_max_retries,
            )
        })
        .collect();
    let root_address = Ipv6Address::new(cfg.prefix, DeviceIdentifier::CONTROLLER);
    nodes[root.index()] = DadState::configured(root, root_address);
    let mut world = DadWorld {
        nodes,
        rng: world_rng(cfg.seed),
    };
    Net::new(topo, params(topo, cfg, Some(root_address))).run(&mut world)
}

struct DhcpWorld {
    server_node: NodeId,
    server: DhcpServerState,
    clients: Vec<DhcpClient>,
}

impl World for DhcpWorld {
    type Msg = BaselineMessage;

    fn join(&mut self, net: &mut Net<'_, BaselineMessage>, node: NodeId) {
        let actions = self.clients[node.index()].dhcp_join();
        apply_baseline(net, node, actions, || 0);
    }

    fn deliver(
        &mut self,
        net: &mut Net<'_, BaselineMessage>,
        at: NodeId,
        msg: BaselineMessage,
        via: Via,
    ) {
        match msg.body {
            BaselineBody::DhcpDiscover if at == self.server_node => {
                let Via::Flood(flood) = via else { return };
                let reply = self.server.on_discover(msg.requester, at);
                let route = net.route_back(flood, at);
                net.send(at, route, reply);
            }
            BaselineBody::DhcpOffer { assigned } if at == msg.requester => {
                let client = &mut self.clients[at.index()];
                let actions = client.on_offer(assigned);
                let retries = client.attempts().saturating_sub(1);
                apply_baseline(net, at, actions, || retries);
            }
            BaselineBody::DhcpDeny if at == msg.requester => {
                let client = &mut self.clients[at.index()];
                let actions = client.on_deny();
                let retries = client.attempts().saturating_sub(1);
                apply_baseline(net, at, actions, || retries);
            }
            _ => {}
        }
    }

    fn timer(&mut self, net: &mut Net<'_, BaselineMessage>, node: NodeId, epoch: u32) {
        let client = &mut self.clients[node.index()];
        let actions = client.on_timer(epoch);
        let retries = client.attempts().saturating_sub(1);
        apply_baseline(net, node, actions, || retries);
    }
}

/// Client wait before rediscovering: `4 * t * d`, at least `4 * t`.
pub(crate) fn dhcp_timeout(diameter: u32) -> u64 {
    4 * TICKS_PER_HOP * u64::from(diameter.max(1))
}

pub(super) fn run_dhcp(topo: &Topology, cfg: &SimConfig) -> Result<MetricsRecord, SimError> {
    let server = DhcpServerState::new(cfg.prefix, cfg.dhcp_capacity);
    let root_address = server.address();
    let timeout = dhcp_timeout(topo.diameter());
    let mut world = DhcpWorld {
        server_node: cfg.controller,
        server,
        clients: (0..topo.node_count())
            .map(|i| DhcpClient::new(NodeId::from(i), timeout, cfg.retry.max_attempts))
            .collect(),
    };
    Net::new(topo, params(topo, cfg, Some(root_address))).run(&mut world)
}

#[derive(Clone)]
struct Probe;

impl Payload for Probe {
    fn requester(&self) -> NodeId {
        NodeId(u32::MAX)
    }

    fn class(&self) -> MessageClass {
        MessageClass::Dap
    }
}

#[derive(Default)]
struct FloodWorld {
    accepted: u64,
    last: u64,
}

impl World for FloodWorld {
    type Msg = Probe;

    fn join(&mut self, _: &mut Net<'_, Probe>, _: NodeId) {}

    fn deliver(&mut self, net: &mut Net<'_, Probe>, _: NodeId, _: Probe, _: Via) {
        self.accepted += 1;
        self.last = net.now();
    }

    fn timer(&mut self, _: &mut Net<'_, Probe>, _: NodeId, _: u32) {}
}

pub(super) fn single_flood(topo: &Topology, origin: NodeId, loss: f64, seed: u64) -> FloodReport {
    let mut net = Net::new(
        topo,
        NetParams {
            loss,
            jitter: 0,
            seed,
            joins: 0,
            concurrency: 1,
            order: super::JoinOrder::Bfs,
            event_budget: u64::MAX,
            root: origin,
            root_address: None,
            all_present: true,
        },
    );
    net.flood(origin, Probe);
    let mut world = FloodWorld::default();
    let m = net.run(&mut world).expect("unbounded budget");
    FloodReport {
        transmissions: m.messages_sent,
        accepted: world.accepted,
        suppressed: m.suppressed,
        lost: m.lost,
        duration: world.last / hops(1),
    }
}

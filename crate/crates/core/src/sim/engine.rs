//! Event queue, link transport and join scheduling.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{JoinOutcome, JoinRecord, MessageClass, MetricsRecord};
use super::topology::Topology;
use super::{JoinOrder, SimError};
use crate::addr::Ipv6Address;
use crate::types::{NodeId, Route, Ticks, TICKS_PER_HOP};

pub(crate) trait Payload: Clone {
    fn requester(&self) -> NodeId;
    fn class(&self) -> MessageClass;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct FloodId(u64);

/// How a message reached the node it is delivered to.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Via {
    Unicast,
    Flood(FloodId),
}

pub(crate) trait World {
    type Msg: Payload;
    fn join(&mut self, net: &mut Net<'_, Self::Msg>, node: NodeId);
    fn deliver(&mut self, net: &mut Net<'_, Self::Msg>, at: NodeId, msg: Self::Msg, via: Via);
    fn timer(&mut self, net: &mut Net<'_, Self::Msg>, node: NodeId, epoch: u32);
}

#[derive(Debug)]
struct Transit<M> {
    msg: M,
    route: Route,
    /// Index into `route` of the node this copy is arriving at.
    hop: usize,
    from: NodeId,
    flood: Option<FloodId>,
}

#[derive(Debug)]
enum EventKind<M> {
    Join(NodeId),
    Timer { node: NodeId, epoch: u32 },
    Arrive(Transit<M>),
}

struct Queued<M> {
    time: Ticks,
    /// Arrivals sort ahead of timers and joins due at the same tick.
    rank: u8,
    seq: u64,
    kind: EventKind<M>,
}

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.rank, self.seq) == (other.time, other.rank, other.seq)
    }
}
impl<M> Eq for Queued<M> {}
impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for Queued<M> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.rank, self.seq).cmp(&(other.time, other.rank, other.seq))
    }
}

struct FloodState {
    origin: NodeId,
    /// First-arrival predecessor per node; the origin points at itself.
    pred: HashMap<NodeId, NodeId>,
    inflight: u64,
}

struct Scheduler {
    order: JoinOrder,
    bfs: Vec<NodeId>,
    bfs_cursor: usize,
    frontier: Vec<NodeId>,
    in_frontier: Vec<bool>,
    remaining: usize,
    in_flight: usize,
    concurrency: usize,
    rng: ChaCha8Rng,
}

pub(crate) struct NetParams {
    pub loss: f64,
    pub jitter: Ticks,
    pub seed: u64,
    pub joins: usize,
    pub concurrency: usize,
    pub order: JoinOrder,
    pub event_budget: u64,
    pub root: NodeId,
    pub root_address: Option<Ipv6Address>,
    /// Every node relays from the start (standalone floods).
    pub all_present: bool,
}

/// Everything the scheme worlds may touch while handling an event.
pub(crate) struct Net<'t, M> {
    topo: &'t Topology,
    now: Ticks,
    seq: u64,
    queue: BinaryHeap<Reverse<Queued<M>>>,
    transport_rng: ChaCha8Rng,
    loss: f64,
    jitter: Ticks,
    event_budget: u64,
    present: Vec<bool>,
    join_of: Vec<Option<usize>>,
    floods: HashMap<FloodId, FloodState>,
    next_flood: u64,
    holders: HashMap<Ipv6Address, u32>,
    sched: Scheduler,
    pub metrics: MetricsRecord,
}

impl<'t, M: Payload> Net<'t, M> {
    pub fn new(topo: &'t Topology, p: NetParams) -> Self {
        let n = topo.node_count();
        let mut transport_rng = ChaCha8Rng::seed_from_u64(p.seed);
        transport_rng.set_stream(1);
        let mut sched_rng = ChaCha8Rng::seed_from_u64(p.seed);
        sched_rng.set_stream(2);

        let mut present = vec![p.all_present; n];
        present[p.root.index()] = true;
        let mut holders = HashMap::new();
        if let Some(a) = p.root_address {
            holders.insert(a, 1);
        }

        let mut sched = Scheduler {
            order: p.order,
            bfs: match p.order {
                JoinOrder::Bfs => topo.bfs_order(p.root),
                JoinOrder::Frontier => Vec::new(),
            },
            bfs_cursor: 1,
            frontier: Vec::new(),
            in_frontier: vec![false; n],
            remaining: p.joins.min(n.saturating_sub(1)),
            in_flight: 0,
            concurrency: p.concurrency.max(1),
            rng: sched_rng,
        };
        for &v in topo.neighbors(p.root) {
            sched.in_frontier[v.index()] = true;
            sched.frontier.push(v);
        }

        Net {
            topo,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            transport_rng,
            loss: p.loss,
            jitter: p.jitter,
            event_budget: p.event_budget,
            present,
            join_of: vec![None; n],
            floods: HashMap::new(),
            next_flood: 0,
            holders,
            sched,
            metrics: MetricsRecord::new(
                n,
                topo.link_count(),
                topo.diameter(),
                topo.diameter_exact(),
            ),
        }
    }

    pub fn topology(&self) -> &'t Topology {
        self.topo
    }

    pub fn now(&self) -> Ticks {
        self.now
    }

    fn join_index(&self, node: NodeId) -> Option<usize> {
        self.join_of.get(node.index()).copied().flatten()
    }

    pub fn is_present(&self, node: NodeId) -> bool {
        self.present[node.index()]
    }

    fn push(&mut self, time: Ticks, kind: EventKind<M>) {
        self.seq += 1;
        let rank = match kind {
            EventKind::Arrive(_) => 0,
            _ => 1,
        };
        self.queue.push(Reverse(Queued {
            time,
            rank,
            seq: self.seq,
            kind,
        }));
    }

    pub fn set_timer(&mut self, node: NodeId, after: Ticks, epoch: u32) {
        self.push(self.now + after, EventKind::Timer { node, epoch });
    }

    /// One link transmission. The copy is counted, then lost or queued for
    /// arrival at `seed.route[seed.hop]`.
    fn transmit(&mut self, from: NodeId, seed: TransitSeed<M>) {
        let class = seed.msg.class();
        self.metrics.messages_sent += 1;
        *self.metrics.by_class.entry(class).or_default() += 1;
        if let Some(j) = self.join_index(seed.msg.requester()) {
            let rec = &mut self.metrics.joins[j];
            rec.messages += 1;
            if class == MessageClass::Escalate {
                rec.escalations += 1;
            }
        }

        if self.loss > 0.0 && self.transport_rng.random_bool(self.loss) {
            self.metrics.lost += 1;
            return;
        }
        let jitter = if self.jitter > 0 {
            self.transport_rng.random_range(0..=self.jitter)
        } else {
            0
        };
        if let Some(f) = seed.flood.and_then(|id| self.floods.get_mut(&id)) {
            f.inflight += 1;
        }
        self.push(
            self.now + TICKS_PER_HOP + jitter,
            EventKind::Arrive(Transit {
                msg: seed.msg,
                route: seed.route,
                hop: seed.hop,
                from,
                flood: seed.flood,
            }),
        );
    }

    /// Unicast `msg` from `from` along `route`.
    pub fn send(&mut self, from: NodeId, route: Route, msg: M) {
        if route.is_empty() {
            return;
        }
        self.transmit(
            from,
            TransitSeed {
                msg,
                route,
                hop: 0,
                flood: None,
            },
        );
    }

    /// Starts a duplicate-suppressed flood of `msg` from `origin` over the
    /// nodes currently present.
    pub fn flood(&mut self, origin: NodeId, msg: M) {
        let id = FloodId(self.next_flood);
        self.next_flood += 1;
        self.metrics.floods += 1;
        if let Some(j) = self.join_index(msg.requester()) {
            self.metrics.joins[j].floods += 1;
        }
        let mut pred = HashMap::new();
        pred.insert(origin, origin);
        self.floods.insert(
            id,
            FloodState {
                origin,
                pred,
                inflight: 0,
            },
        );
        self.forward_flood(id, origin, None, &msg);
        self.reap(id);
    }

    fn forward_flood(&mut self, id: FloodId, at: NodeId, except: Option<NodeId>, msg: &M) {
        let topo = self.topo;
        for &v in topo.neighbors(at) {
            if Some(v) == except || !self.present[v.index()] {
                continue;
            }
            self.transmit(
                at,
                TransitSeed {
                    msg: msg.clone(),
                    route: vec![v],
                    hop: 0,
                    flood: Some(id),
                },
            );
        }
    }

    fn reap(&mut self, id: FloodId) {
        if self.floods.get(&id).is_some_and(|f| f.inflight == 0) {
            self.floods.remove(&id);
        }
    }

    /// Reverse of the first-arrival path of flood `id` from `at` back to its
    /// origin.
    pub fn route_back(&self, id: FloodId, at: NodeId) -> Route {
        let Some(f) = self.floods.get(&id) else {
            return Vec::new();
        };
        let mut route = Vec::new();
        let mut cur = at;
        while cur != f.origin {
            let Some(&p) = f.pred.get(&cur) else {
                return Vec::new();
            };
            route.push(p);
            cur = p;
        }
        route
    }

    /// Ends the join of `node`.
    pub fn finish(
        &mut self,
        node: NodeId,
        outcome: JoinOutcome,
        address: Option<Ipv6Address>,
        retries: u32,
    ) {
        let Some(j) = self.join_of[node.index()] else {
            return;
        };
        if self.metrics.joins[j].outcome != JoinOutcome::Unfinished {
            return;
        }
        if let Some(a) = address {
            let holders = self.holders.entry(a).or_default();
            if *holders > 0 {
                self.metrics.duplicates += 1;
            }
            *holders += 1;
        }
        if outcome == JoinOutcome::Configured {
            self.extend_frontier(node);
        } else {
            self.present[node.index()] = false;
        }
        let rec = &mut self.metrics.joins[j];
        rec.end = Some(self.now);
        rec.outcome = outcome;
        rec.address = address;
        rec.retries = retries;
        self.sched.in_flight -= 1;
        self.schedule_joins();
    }

    pub fn note_violation(&mut self) {
        self.metrics.invariant_violations += 1;
    }

    fn next_joiner(&mut self) -> Option<NodeId> {
        let s = &mut self.sched;
        match s.order {
            JoinOrder::Bfs => {
                while s.bfs_cursor < s.bfs.len() {
                    let v = s.bfs[s.bfs_cursor];
                    s.bfs_cursor += 1;
                    if !self.present[v.index()] {
                        return Some(v);
                    }
                }
                None
            }
            JoinOrder::Frontier => {
                if s.frontier.is_empty() {
                    return None;
                }
                let i = s.rng.random_range(0..s.frontier.len());
                Some(s.frontier.swap_remove(i))
            }
        }
    }

    fn extend_frontier(&mut self, v: NodeId) {
        let topo = self.topo;
        for &w in topo.neighbors(v) {
            if !self.present[w.index()] && !self.sched.in_frontier[w.index()] {
                self.sched.in_frontier[w.index()] = true;
                self.sched.frontier.push(w);
            }
        }
    }

    fn schedule_joins(&mut self) {
        while self.sched.remaining > 0 && self.sched.in_flight < self.sched.concurrency {
            let Some(v) = self.next_joiner() else {
                if self.sched.in_flight == 0 {
                    self.sched.remaining = 0;
                }
                break;
            };
            self.sched.remaining -= 1;
            self.sched.in_flight += 1;
            self.present[v.index()] = true;
            self.join_of[v.index()] = Some(self.metrics.joins.len());
            self.metrics.joins.push(JoinRecord::new(v, self.now));
            self.push(self.now, EventKind::Join(v));
        }
    }

    fn step<W: World<Msg = M>>(&mut self, world: &mut W, ev: Queued<M>) {
        self.now = ev.time;
        match ev.kind {
            EventKind::Join(v) => {
                if let Some(j) = self.join_of[v.index()] {
                    self.metrics.joins[j].start = self.now;
                }
                world.join(self, v);
            }
            EventKind::Timer { node, epoch } => world.timer(self, node, epoch),
            EventKind::Arrive(t) => {
                self.metrics.delivered += 1;
                let at = t.route[t.hop];
                match t.flood {
                    None if t.hop + 1 < t.route.len() => {
                        self.transmit(
                            at,
                            TransitSeed {
                                msg: t.msg,
                                route: t.route,
                                hop: t.hop + 1,
                                flood: None,
                            },
                        );
                    }
                    None => world.deliver(self, at, t.msg, Via::Unicast),
                    Some(id) => {
                        let first = match self.floods.get_mut(&id) {
                            Some(f) => {
                                f.inflight -= 1;
                                match f.pred.entry(at) {
                                    Entry::Occupied(_) => false,
                                    Entry::Vacant(e) => {
                                        e.insert(t.from);
                                        true
                                    }
                                }
                            }
                            None => false,
                        };
                        if first {
                            self.forward_flood(id, at, Some(t.from), &t.msg);
                            world.deliver(self, at, t.msg, Via::Flood(id));
                        } else {
                            self.metrics.suppressed += 1;
                        }
                        self.reap(id);
                    }
                }
            }
        }
    }

    /// Runs until no events remain.
    pub fn run<W: World<Msg = M>>(mut self, world: &mut W) -> Result<MetricsRecord, SimError> {
        self.schedule_joins();
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.metrics.events += 1;
            if self.metrics.events > self.event_budget {
                return Err(SimError::NonQuiescent(self.event_budget));
            }
            self.step(world, ev);
        }
        Ok(self.metrics)
    }
}

struct TransitSeed<M> {
    msg: M,
    route: Route,
    hop: usize,
    flood: Option<FloodId>,
}

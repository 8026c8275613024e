//! Duplicate address detection and DHCP reference machines.
//!
//! Both baselines flood once per attempt. Replies (conflict notices, offers)
//! are produced as bare messages; the simulator routes them back along the
//! reverse of the flood's first-arrival path.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use thiserror::Error;

use crate::addr::{DeviceIdentifier, Ipv6Address, NetworkPrefix};
use crate::types::{Action, FailReason, NodeId, RetryState, Ticks, TICKS_PER_HOP};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("DHCP pool exhausted after {0} leases")]
    PoolExhausted(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineBody {
    /// Duplicate address probe, flooded.
    Dap {
        tentative: DeviceIdentifier,
    },
    /// Address conflict notice, unicast back to the prober.
    Acn {
        tentative: DeviceIdentifier,
    },
    DhcpDiscover,
    DhcpOffer {
        assigned: Ipv6Address,
    },
    DhcpDeny,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineMessage {
    pub src: NodeId,
    /// `None` for flooded messages.
    pub dst: Option<NodeId>,
    pub requester: NodeId,
    pub body: BaselineBody,
}

pub type BaselineAction = Action<BaselineMessage>;

/// Timer a DAD prober waits for conflict notices: `2 * t * d`.
pub fn dad_timer(diameter: u32) -> Ticks {
    2 * TICKS_PER_HOP * Ticks::from(diameter)
}

/// A node running duplicate address detection.
#[derive(Debug, Clone)]
pub struct DadState {
    id: NodeId,
    prefix: NetworkPrefix,
    tentative: Option<DeviceIdentifier>,
    configured: Option<Ipv6Address>,
    timer: Ticks,
    /// Tentative identifiers are drawn from `1..=pool`.
    pool: u64,
    max_retries: u32,
    retries: u32,
    retry: RetryState,
}

impl DadState {
    pub fn new(
        id: NodeId,
        prefix: NetworkPrefix,
        timer: Ticks,
        pool: u64,
        max_retries: u32,
    ) -> Self {
        DadState {
            id,
            prefix,
            tentative: None,
            configured: None,
            timer,
            pool: pool.max(1),
            max_retries,
            retries: 0,
            retry: RetryState::default(),
        }
    }

    /// A node that already holds `address`.
    pub fn configured(id: NodeId, address: Ipv6Address) -> Self {
        DadState {
            configured: Some(address),
            ..Self::new(id, address.prefix, 0, 1, 0)
        }
    }

    pub fn tentative(&self) -> Option<DeviceIdentifier> {
        self.tentative
    }

    pub fn address(&self) -> Option<Ipv6Address> {
        self.configured
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    pub fn timer(&self) -> Ticks {
        self.timer
    }

    fn probe(&mut self, rng: &mut impl Rng) -> Vec<BaselineAction> {
        let tentative = DeviceIdentifier::from_u64(rng.random_range(1..=self.pool));
        self.tentative = Some(tentative);
        self.retry.attempts += 1;
        let epoch = self.retry.arm();
        vec![
            Action::Flood {
                message: BaselineMessage {
                    src: self.id,
                    dst: None,
                    requester: self.id,
                    body: BaselineBody::Dap { tentative },
                },
            },
            Action::SetTimer {
                after: self.timer,
                epoch,
            },
        ]
    }

    /// Picks a random tentative identifier, floods a probe and arms the timer.
    pub fn dad_join(&mut self, rng: &mut impl Rng) -> Vec<BaselineAction> {
        if self.configured.is_some() || self.retry.finished || self.retry.attempts > 0 {
            return Vec::new();
        }
        self.probe(rng)
    }

    /// A configured node's answer to a probe: a conflict notice iff the probe
    /// names this node's own identifier.
    pub fn dad_on_probe(
        &self,
        prober: NodeId,
        tentative: DeviceIdentifier,
    ) -> Option<BaselineMessage> {
        let own = self.configured?;
        (own.id == tentative && prober != self.id).then_some(BaselineMessage {
            src: self.id,
            dst: Some(prober),
            requester: prober,
            body: BaselineBody::Acn { tentative },
        })
    }

    /// A conflict notice for the current tentative identifier restarts the
    /// probe with a fresh one, up to the retry cap.
    pub fn on_acn(
        &mut self,
        tentative: DeviceIdentifier,
        rng: &mut impl Rng,
    ) -> Vec<BaselineAction> {
        if self.configured.is_some() || self.retry.finished || self.tentative != Some(tentative) {
            return Vec::new();
        }
        self.retry.disarm();
        if self.retries >= self.max_retries {
            self.retry.finished = true;
            return vec![Action::Failed {
                reason: FailReason::Timeout,
            }];
        }
        self.retries += 1;
        self.probe(rng)
    }

    /// Timer expiry with no conflict notice: the tentative identifier is kept.
    pub fn on_timer(&mut self, epoch: u32) -> Vec<BaselineAction> {
        if self.configured.is_some() || !self.retry.fires(epoch) {
            return Vec::new();
        }
        let Some(tentative) = self.tentative else {
            return Vec::new();
        };
        self.retry.disarm();
        let address = Ipv6Address::new(self.prefix, tentative);
        self.configured = Some(address);
        vec![Action::Configured { address }]
    }
}

/// Sequential-pool DHCP server.
#[derive(Debug, Clone)]
pub struct DhcpServerState {
    prefix: NetworkPrefix,
    own: DeviceIdentifier,
    /// Leases issued so far.
    cursor: u64,
    last: u64,
    capacity: u64,
    table: BTreeMap<DeviceIdentifier, NodeId>,
    by_lessee: HashMap<NodeId, DeviceIdentifier>,
}

impl DhcpServerState {
    /// The server holds the controller identifier and leases the following
    /// identifiers in numeric order, at most `capacity` of them.
    pub fn new(prefix: NetworkPrefix, capacity: u64) -> Self {
        let own = DeviceIdentifier::CONTROLLER;
        DhcpServerState {
            prefix,
            own,
            cursor: 0,
            last: own.to_u64(),
            capacity,
            table: BTreeMap::new(),
            by_lessee: HashMap::new(),
        }
    }

    pub fn address(&self) -> Ipv6Address {
        Ipv6Address::new(self.prefix, self.own)
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn table(&self) -> &BTreeMap<DeviceIdentifier, NodeId> {
        &self.table
    }

    /// Returns the lessee's identifier, allocating the next free one for a
    /// new lessee.
    pub fn lease(&mut self, lessee: NodeId) -> Result<Ipv6Address, BaselineError> {
        if let Some(&id) = self.by_lessee.get(&lessee) {
            return Ok(Ipv6Address::new(self.prefix, id));
        }
        if self.cursor >= self.capacity {
            return Err(BaselineError::PoolExhausted(self.cursor));
        }
        let mut value = self.last;
        let id = loop {
            value = value
                .checked_add(1)
                .ok_or(BaselineError::PoolExhausted(self.cursor))?;
            // keep the same identifier rules as the proxy scheme: b0 >= 1
            if value & 0xff != 0 && value != u64::MAX {
                break DeviceIdentifier::from_u64(value);
            }
        };
        self.last = value;
        self.cursor += 1;
        self.table.insert(id, lessee);
        self.by_lessee.insert(lessee, id);
        Ok(Ipv6Address::new(self.prefix, id))
    }

    /// Answers a discover: an offer, or a deny when the pool is empty.
    pub fn on_discover(&mut self, client: NodeId, server: NodeId) -> BaselineMessage {
        let body = match self.lease(client) {
            Ok(assigned) => BaselineBody::DhcpOffer { assigned },
            Err(BaselineError::PoolExhausted(_)) => BaselineBody::DhcpDeny,
        };
        BaselineMessage {
            src: server,
            dst: Some(client),
            requester: client,
            body,
        }
    }
}

/// A DHCP client: flood a discover, wait for the offer.
#[derive(Debug, Clone)]
pub struct DhcpClient {
    id: NodeId,
    timeout: Ticks,
    max_attempts: u32,
    configured: Option<Ipv6Address>,
    retry: RetryState,
}

impl DhcpClient {
    pub fn new(id: NodeId, timeout: Ticks, max_attempts: u32) -> Self {
        DhcpClient {
            id,
            timeout,
            max_attempts,
            configured: None,
            retry: RetryState::default(),
        }
    }

    pub fn address(&self) -> Option<Ipv6Address> {
        self.configured
    }

    pub fn attempts(&self) -> u32 {
        self.retry.attempts
    }

    fn discover(&mut self) -> Vec<BaselineAction> {
        self.retry.attempts += 1;
        let epoch = self.retry.arm();
        vec![
            Action::Flood {
                message: BaselineMessage {
                    src: self.id,
                    dst: None,
                    requester: self.id,
                    body: BaselineBody::DhcpDiscover,
                },
            },
            Action::SetTimer {
                after: self.timeout,
                epoch,
            },
        ]
    }

    pub fn dhcp_join(&mut self) -> Vec<BaselineAction> {
        if self.configured.is_some() || self.retry.attempts > 0 {
            return Vec::new();
        }
        self.discover()
    }

    pub fn on_offer(&mut self, assigned: Ipv6Address) -> Vec<BaselineAction> {
        if self.configured.is_some() || self.retry.finished || self.retry.attempts == 0 {
            return Vec::new();
        }
        self.retry.disarm();
        self.configured = Some(assigned);
        vec![Action::Configured { address: assigned }]
    }

    pub fn on_deny(&mut self) -> Vec<BaselineAction> {
        if self.configured.is_some() || self.retry.finished || self.retry.attempts == 0 {
            return Vec::new();
        }
        self.retry.finished = true;
        self.retry.disarm();
        vec![Action::Failed {
            reason: FailReason::Denied,
        }]
    }

    pub fn on_timer(&mut self, epoch: u32) -> Vec<BaselineAction> {
        if self.configured.is_some() || !self.retry.fires(epoch) {
            return Vec::new();
        }
        if self.retry.attempts >= self.max_attempts {
            self.retry.finished = true;
            self.retry.disarm();
            return vec![Action::Failed {
                reason: FailReason::Timeout,
            }];
        }
        self.discover()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const PREFIX: NetworkPrefix = NetworkPrefix::EXAMPLE;

    fn tentative_of(actions: &[BaselineAction]) -> DeviceIdentifier {
        match &actions[0] {
            Action::Flood {
                message:
                    BaselineMessage {
                        body: BaselineBody::Dap { tentative },
                        ..
                    },
            } => *tentative,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dad_timer_is_two_t_d() {
        assert_eq!(dad_timer(7), 14 * TICKS_PER_HOP);
    }

    #[test]
    fn dad_conflict_free_configures_at_timer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut node = DadState::new(NodeId(3), PREFIX, dad_timer(4), 1 << 16, 5);
        let actions = node.dad_join(&mut rng);
        assert_eq!(actions.len(), 2);
        assert!(matches!(
            actions[1],
            Action::SetTimer {
                after: 8000,
                epoch: 1
            }
        ));
        let tentative = tentative_of(&actions);
        assert_eq!(
            node.on_timer(1),
            vec![Action::Configured {
                address: Ipv6Address::new(PREFIX, tentative)
            }]
        );
        assert!(node.dad_join(&mut rng).is_empty());
    }

    #[test]
    fn dad_conflict_triggers_fresh_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut node = DadState::new(NodeId(3), PREFIX, dad_timer(4), 1 << 16, 5);
        let first = tentative_of(&node.dad_join(&mut rng));
        let holder = DadState::configured(NodeId(9), Ipv6Address::new(PREFIX, first));
        let acn = holder
            .dad_on_probe(NodeId(3), first)
            .expect("conflict notice");
        assert_eq!(acn.dst, Some(NodeId(3)));
        let BaselineBody::Acn { tentative } = acn.body else {
            panic!()
        };
        let actions = node.on_acn(tentative, &mut rng);
        assert_eq!(node.retries(), 1);
        let second = tentative_of(&actions);
        assert_ne!(first, second);
        // the first timer is stale now
        assert!(node.on_timer(1).is_empty());
        assert!(!node.on_timer(2).is_empty());
    }

    #[test]
    fn dad_probe_mismatch_is_silent() {
        let holder = DadState::configured(
            NodeId(9),
            Ipv6Address::new(PREFIX, DeviceIdentifier::from_u64(5)),
        );
        assert!(holder
            .dad_on_probe(NodeId(1), DeviceIdentifier::from_u64(6))
            .is_none());
        let joining = DadState::new(NodeId(2), PREFIX, 0, 10, 5);
        assert!(joining
            .dad_on_probe(NodeId(1), DeviceIdentifier::from_u64(6))
            .is_none());
    }

    #[test]
    fn dad_gives_up_after_retry_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut node = DadState::new(NodeId(3), PREFIX, dad_timer(1), 1, 2);
        let t = tentative_of(&node.dad_join(&mut rng));
        assert_eq!(t, DeviceIdentifier::from_u64(1));
        assert_eq!(node.on_acn(t, &mut rng).len(), 2);
        assert_eq!(node.on_acn(t, &mut rng).len(), 2);
        assert_eq!(
            node.on_acn(t, &mut rng),
            vec![Action::Failed {
                reason: FailReason::Timeout
            }]
        );
    }

    #[test]
    fn dhcp_sequential_leases() {
        let mut server = DhcpServerState::new(PREFIX, u64::MAX);
        let a = server.lease(NodeId(1)).unwrap();
        assert_eq!(server.cursor(), 1);
        assert_eq!(server.table().len(), 1);
        assert_eq!(a.id, DeviceIdentifier::from_u64(2));
        for k in 2..=300u32 {
            server.lease(NodeId(k)).unwrap();
        }
        assert_eq!(server.table().len(), 300);
        assert!(server.table().keys().all(|id| id.octet(0) != 0));
        assert!(!server.table().contains_key(&server.address().id));
        // same lessee, same lease
        assert_eq!(server.lease(NodeId(1)).unwrap(), a);
        assert_eq!(server.cursor(), 300);
    }

    #[test]
    fn dhcp_pool_exhaustion_denies() {
        let mut server = DhcpServerState::new(PREFIX, 2);
        server.lease(NodeId(1)).unwrap();
        server.lease(NodeId(2)).unwrap();
        assert_eq!(
            server.lease(NodeId(3)),
            Err(BaselineError::PoolExhausted(2))
        );
        let reply = server.on_discover(NodeId(3), NodeId(0));
        assert_eq!(reply.body, BaselineBody::DhcpDeny);

        let mut client = DhcpClient::new(NodeId(3), 10, 5);
        client.dhcp_join();
        assert_eq!(
            client.on_deny(),
            vec![Action::Failed {
                reason: FailReason::Denied
            }]
        );
    }

    #[test]
    fn dhcp_client_retries_then_fails() {
        let mut client = DhcpClient::new(NodeId(3), 10, 2);
        assert_eq!(client.dhcp_join().len(), 2);
        assert_eq!(client.on_timer(1).len(), 2);
        assert_eq!(
            client.on_timer(2),
            vec![Action::Failed {
                reason: FailReason::Timeout
            }]
        );
        let addr = Ipv6Address::new(PREFIX, DeviceIdentifier::from_u64(2));
        assert!(client.on_offer(addr).is_empty());
    }

    #[test]
    fn dhcp_client_takes_first_offer() {
        let mut client = DhcpClient::new(NodeId(3), 10, 2);
        client.dhcp_join();
        let a = Ipv6Address::new(PREFIX, DeviceIdentifier::from_u64(2));
        let b = Ipv6Address::new(PREFIX, DeviceIdentifier::from_u64(3));
        assert_eq!(client.on_offer(a), vec![Action::Configured { address: a }]);
        assert!(client.on_offer(b).is_empty());
        assert_eq!(client.address(), Some(a));
    }
}

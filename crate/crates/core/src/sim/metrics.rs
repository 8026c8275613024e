//! Per-join and aggregate measurements of one scenario run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::addr::Ipv6Address;
use crate::types::{FailReason, NodeId, Ticks, TICKS_PER_HOP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageClass {
    AddrRequest,
    AddrReply,
    AddrDeny,
    Escalate,
    Dap,
    Acn,
    DhcpDiscover,
    DhcpOffer,
    DhcpDeny,
}

impl MessageClass {
    /// True for messages that are only ever sent by flooding.
    pub fn is_flood(self) -> bool {
        matches!(self, MessageClass::Dap | MessageClass::DhcpDiscover)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JoinOutcome {
    Configured,
    Failed(FailReason),
    /// The run went quiet before the join concluded.
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinRecord {
    pub node: NodeId,
    pub start: Ticks,
    pub end: Option<Ticks>,
    /// Every transmission attributed to this join, of any type.
    pub messages: u64,
    pub floods: u64,
    pub escalations: u32,
    pub retries: u32,
    pub outcome: JoinOutcome,
    pub address: Option<Ipv6Address>,
}

impl JoinRecord {
    pub(crate) fn new(node: NodeId, start: Ticks) -> Self {
        JoinRecord {
            node,
            start,
            end: None,
            messages: 0,
            floods: 0,
            escalations: 0,
            retries: 0,
            outcome: JoinOutcome::Unfinished,
            address: None,
        }
    }

    /// Request-to-configure time in units of the hop latency.
    pub fn latency(&self) -> Option<f64> {
        match (self.outcome, self.end) {
            (JoinOutcome::Configured, Some(end)) => {
                Some((end - self.start) as f64 / TICKS_PER_HOP as f64)
            }
            _ => None,
        }
    }

    pub fn latency_ticks(&self) -> Option<Ticks> {
        match (self.outcome, self.end) {
            (JoinOutcome::Configured, Some(end)) => Some(end - self.start),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl Summary {
    /// Mean and nearest-rank median / 95th percentile. All zero when empty.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Summary {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Summary::default();
        }
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Summary {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: rank(0.5),
            p95: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub n: usize,
    pub links: usize,
    pub diameter: u32,
    pub diameter_exact: bool,
    pub joins: Vec<JoinRecord>,
    /// Link transmissions, counted when a message leaves a node.
    pub messages_sent: u64,
    pub delivered: u64,
    pub lost: u64,
    /// Flood copies dropped by duplicate suppression.
    pub suppressed: u64,
    /// Flood primitives started.
    pub floods: u64,
    pub by_class: BTreeMap<MessageClass, u64>,
    /// Configurations that reused an address already held by another node.
    pub duplicates: u64,
    pub invariant_violations: u64,
    pub events: u64,
}

impl MetricsRecord {
    pub(crate) fn new(n: usize, links: usize, diameter: u32, diameter_exact: bool) -> Self {
        MetricsRecord {
            n,
            links,
            diameter,
            diameter_exact,
            joins: Vec::new(),
            messages_sent: 0,
            delivered: 0,
            lost: 0,
            suppressed: 0,
            floods: 0,
            by_class: BTreeMap::new(),
            duplicates: 0,
            invariant_violations: 0,
            events: 0,
        }
    }

    pub fn configured(&self) -> usize {
        self.joins
            .iter()
            .filter(|j| j.outcome == JoinOutcome::Configured)
            .count()
    }

    pub fn failures(&self) -> usize {
        self.joins.len() - self.configured()
    }

    pub fn escalations(&self) -> u64 {
        self.joins.iter().map(|j| u64::from(j.escalations)).sum()
    }

    /// Messages per join over every join, failed ones included.
    pub fn messages_per_join(&self) -> Summary {
        Summary::of(self.joins.iter().map(|j| j.messages as f64))
    }

    /// Latency over configured joins, in units of the hop latency.
    pub fn latency(&self) -> Summary {
        Summary::of(self.joins.iter().filter_map(JoinRecord::latency))
    }

    pub fn class_count(&self, class: MessageClass) -> u64 {
        self.by_class.get(&class).copied().unwrap_or(0)
    }

    pub fn flood_messages(&self) -> u64 {
        self.by_class
            .iter()
            .filter(|(c, _)| c.is_flood())
            .map(|(_, n)| n)
            .sum()
    }
}

mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use proxyaddr_core::sim::{
    build_topology, flood, radius_for_degree, run_scenario, JoinOrder, MessageClass, MetricsRecord,
    Scheme, SimConfig, Topology, TopologyKind,
};
use proxyaddr_core::{NodeId, TICKS_PER_HOP};

use common::oracle_flood_cost;

fn topo(kind: TopologyKind, seed: u64) -> Topology {
    build_topology(&kind, seed).unwrap()
}

fn rgg(n: u32, degree: f64, seed: u64) -> Topology {
    topo(
        TopologyKind::RandomGeometric {
            n,
            radius: radius_for_degree(n, degree),
        },
        seed,
    )
}

fn check_accounting(m: &MetricsRecord) {
    assert_eq!(m.messages_sent, m.delivered + m.lost, "conservation");
    assert_eq!(
        m.joins.iter().map(|j| j.messages).sum::<u64>(),
        m.messages_sent
    );
    assert_eq!(m.by_class.values().sum::<u64>(), m.messages_sent);
    for j in &m.joins {
        if let Some(t) = j.latency_ticks() {
            assert_eq!(
                t % TICKS_PER_HOP,
                0,
                "latency of {} off the hop grid",
                j.node
            );
        }
    }
}

#[test]
fn flood_costs_match_walk() {
    let cases = [
        (topo(TopologyKind::Path { n: 5 }, 0), 4),
        (topo(TopologyKind::Complete { n: 4 }, 0), 9),
        (topo(TopologyKind::Grid { rows: 10, cols: 10 }, 0), 261),
        (
            topo(
                TopologyKind::Tree {
                    fanout: 3,
                    depth: 3,
                },
                0,
            ),
            39,
        ),
    ];
    for (t, expected) in &cases {
        for origin in [0, t.node_count() as u32 - 1] {
            let r = flood(t, NodeId(origin), 0.0, 1);
            assert_eq!(r.transmissions, *expected);
            assert_eq!(r.transmissions, oracle_flood_cost(t, NodeId(origin)));
            assert_eq!(r.accepted, t.node_count() as u64 - 1, "each node once");
            assert_eq!(r.suppressed, r.transmissions - r.accepted);
        }
    }
    for seed in 0..5 {
        let t = rgg(300, 9.0, seed);
        let r = flood(&t, NodeId(7), 0.0, seed);
        assert_eq!(r.transmissions, oracle_flood_cost(&t, NodeId(7)));
        assert_eq!(
            r.transmissions,
            2 * t.link_count() as u64 - (t.node_count() as u64 - 1)
        );
    }
}

#[test]
fn lossy_flood_conserves_copies() {
    let t = topo(TopologyKind::Grid { rows: 12, cols: 12 }, 0);
    let r = flood(&t, NodeId(0), 0.3, 9);
    assert!(r.lost > 0);
    assert_eq!(r.transmissions, r.accepted + r.suppressed + r.lost);
    assert!(r.accepted < t.node_count() as u64);
    let path = topo(TopologyKind::Path { n: 40 }, 0);
    let cut = flood(&path, NodeId(0), 0.3, 9);
    assert!(cut.accepted < 39 && cut.transmissions == cut.accepted + cut.lost);
}

#[test]
fn k4_flood_suppresses_extras() {
    let t = topo(TopologyKind::Complete { n: 4 }, 0);
    let r = flood(&t, NodeId(0), 0.0, 0);
    assert_eq!((r.accepted, r.suppressed, r.duration), (3, 6, 1));
}

#[test]
fn grid_golden_run() {
    let t = topo(TopologyKind::Grid { rows: 10, cols: 10 }, 1);
    let mut cfg = SimConfig::new(Scheme::Proposed, 1);
    cfg.joins = 99;
    let m = run_scenario(&t, &cfg).unwrap();
    check_accounting(&m);
    assert_eq!(m.configured(), 99);
    assert_eq!(m.duplicates, 0);
    let esc_rate = m.escalations() as f64 / 99.0;
    assert!(m.messages_per_join().mean <= 2.0 + 2.0 * esc_rate + 1e-9);
    assert_eq!(
        m.class_count(MessageClass::AddrRequest),
        99 + m.joins.iter().map(|j| u64::from(j.retries)).sum::<u64>()
    );
    for j in &m.joins {
        if j.retries == 0 {
            assert_eq!(j.messages, 2 + 2 * u64::from(j.escalations), "{}", j.node);
            assert_eq!(
                j.latency_ticks(),
                Some((2 + 2 * u64::from(j.escalations)) * TICKS_PER_HOP)
            );
        }
    }
    // pinned from the first verified run
    assert_eq!((m.messages_sent, m.escalations()), (326, 64));
}

#[test]
fn every_scheme_accounts_for_every_message() {
    let t = rgg(150, 8.0, 3);
    for scheme in Scheme::ALL {
        for loss in [0.0, 0.15] {
            let mut cfg = SimConfig::new(scheme, 11);
            cfg.loss = loss;
            let m = run_scenario(&t, &cfg).unwrap();
            check_accounting(&m);
            if scheme != Scheme::Dad {
                assert_eq!(m.duplicates, 0, "{scheme} at loss {loss}");
            }
            if scheme == Scheme::Proposed {
                assert_eq!(m.flood_messages(), 0);
                assert_eq!(m.floods, 0);
            }
        }
    }
}

#[test]
fn topologies_are_reproducible() {
    let a = rgg(500, 10.0, 42);
    let b = rgg(500, 10.0, 42);
    assert_eq!(a, b);
    assert_ne!(a, rgg(500, 10.0, 43));
    for scheme in Scheme::ALL {
        let cfg = SimConfig::new(scheme, 5);
        assert_eq!(
            run_scenario(&a, &cfg).unwrap(),
            run_scenario(&b, &cfg).unwrap()
        );
    }
}

#[test]
fn dhcp_never_duplicates_under_loss() {
    let t = rgg(120, 10.0, 8);
    for seed in 0..10 {
        let mut cfg = SimConfig::new(Scheme::Dhcp, seed);
        cfg.loss = 0.2;
        let m = run_scenario(&t, &cfg).unwrap();
        assert_eq!(m.duplicates, 0);
        check_accounting(&m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn proposed_unique_under_interleavings(
        seed in any::<u64>(),
        concurrency in 1usize..12,
        jitter in 0u64..3000,
        loss in 0.0f64..0.35,
        bfs in any::<bool>(),
    ) {
        let t = rgg(120, 7.0, seed % 16);
        let mut cfg = SimConfig::new(Scheme::Proposed, seed);
        cfg.concurrency = concurrency;
        cfg.jitter = jitter;
        cfg.loss = loss;
        cfg.join_order = if bfs { JoinOrder::Bfs } else { JoinOrder::Frontier };
        let m = run_scenario(&t, &cfg).unwrap();
        prop_assert_eq!(m.duplicates, 0);
        prop_assert_eq!(m.invariant_violations, 0);
        prop_assert_eq!(m.messages_sent, m.delivered + m.lost);
        let held: Vec<_> = m.joins.iter().filter_map(|j| j.address).collect();
        prop_assert_eq!(held.iter().collect::<HashSet<_>>().len(), held.len());
        prop_assert_eq!(held.len(), m.configured());
        if loss == 0.0 && jitter == 0 {
            prop_assert_eq!(m.failures(), 0);
        }
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the checked-in `configs/comparison.toml` scenarios.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::net::Ipv6Addr;
use std::process::ExitCode;
use std::time::Instant;

use proxyaddr_core::addr::{
    format_hex, parse_hex, AddressSpace, AllocationState, DeviceIdentifier, Ipv6Address,
};
use proxyaddr_core::scenario::{self, MetricsRow, RunPoint, RunSummary};
use proxyaddr_core::sim::{JoinOutcome, MetricsRecord, Scheme};
use proxyaddr_core::TICKS_PER_HOP;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{oracle_member, oracle_tree, Octets, CONTROLLER};

/// Joins per uniqueness run and runs per loss setting.
const UNIQUENESS_JOINS: usize = 50_000;
const UNIQUENESS_SEEDS: usize = 5;
/// Radix of the exhaustive oracle and the closed-form size of its tree.
const ORACLE_MAX: u8 = 3;
const ORACLE_SIZE: usize = 9838;
const LATENCY_DIAMETERS: [u32; 3] = [10, 20, 40];
/// Allowed relative deviation of DHCP latency from `2 t d`.
const DHCP_LATENCY_TOLERANCE: f64 = 0.10;
/// Proposed scheme: max/min messages per join across the sweep stays below this.
const PROPOSED_SPREAD_LIMIT: f64 = 2.0;
/// Baselines: messages per join at the largest n over the smallest, at least.
const BASELINE_GROWTH_MIN: f64 = 3.0;
const OVERHEAD_SWEEP: [usize; 3] = [100, 400, 1600];
const DAD_LOSS_SEEDS: usize = 20;
const ROUND_TRIPS: usize = 1000;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_all(points: &[RunPoint]) -> Result<Vec<(MetricsRecord, MetricsRow)>, String> {
    points
        .iter()
        .map(|p| p.run().map_err(|e| e.to_string()))
        .collect()
}

/// Configurations that reuse an address, counted from the join records.
fn recount_duplicates(m: &MetricsRecord) -> u64 {
    let mut held: HashSet<Ipv6Address> = HashSet::new();
    held.insert(Ipv6Address::new(
        proxyaddr_core::NetworkPrefix::EXAMPLE,
        DeviceIdentifier::CONTROLLER,
    ));
    m.joins
        .iter()
        .filter(|j| j.outcome == JoinOutcome::Configured)
        .filter_map(|j| j.address)
        .filter(|a| !held.insert(*a))
        .count() as u64
}

fn uniqueness() -> Check {
    let mut notes = Vec::new();
    for name in ["uniqueness", "uniqueness-lossy"] {
        let runs = run_all(&common::points(&[name]))?;
        ensure(runs.len() == UNIQUENESS_SEEDS, || {
            format!("{name}: {} runs", runs.len())
        })?;
        let (mut dups, mut failures) = (0, 0);
        for (m, row) in &runs {
            ensure(row.joins == UNIQUENESS_JOINS, || {
                format!("{name} seed {}: only {} joins", row.seed, row.joins)
            })?;
            ensure(recount_duplicates(m) == m.duplicates, || {
                format!(
                    "{name} seed {}: duplicate counter disagrees with records",
                    row.seed
                )
            })?;
            ensure(m.duplicates == 0 && m.invariant_violations == 0, || {
                format!(
                    "{name} seed {}: {} duplicates, {} violations",
                    row.seed, m.duplicates, m.invariant_violations
                )
            })?;
            let space = AddressSpace::STANDARD;
            ensure(
                m.joins
                    .iter()
                    .filter_map(|j| j.address)
                    .all(|a| space.validate(a.id).is_ok()),
                || format!("{name} seed {}: malformed address assigned", row.seed),
            )?;
            dups += m.duplicates;
            failures += row.failures;
        }
        notes.push(format!(
            "{name}: {}x{} joins, loss {}, {dups} dup, {failures} failed",
            runs.len(),
            UNIQUENESS_JOINS,
            runs[0].1.loss
        ));
    }
    Ok(notes.join("; "))
}

fn oracle_equivalence() -> Check {
    let oracle = oracle_tree(ORACLE_MAX);
    ensure(oracle.len() == ORACLE_SIZE, || {
        format!("oracle tree has {} nodes", oracle.len())
    })?;

    // Every identifier over the reduced radix, against the closed form.
    let mut closed = 0;
    for v in 0..(u64::from(ORACLE_MAX) + 1).pow(8) {
        let mut id: Octets = [0; 8];
        let mut rest = v;
        for o in id.iter_mut().rev() {
            *o = (rest % (u64::from(ORACLE_MAX) + 1)) as u8;
            rest /= u64::from(ORACLE_MAX) + 1;
        }
        let member = id != CONTROLLER && oracle_member(id, ORACLE_MAX);
        ensure(member == oracle.contains_key(&id), || {
            format!("closed form disagrees on {id:?}")
        })?;
        closed += usize::from(member);
    }

    let space = AddressSpace::with_max(ORACLE_MAX);
    let mut library: BTreeMap<Octets, Octets> = BTreeMap::new();
    let mut queue = vec![DeviceIdentifier::CONTROLLER];
    while let Some(id) = queue.pop() {
        let mut state = AllocationState::initial(id);
        while let Ok((child, next)) = space.generate(id, state) {
            state = next;
            ensure(space.validate(child).is_ok(), || {
                format!("library issued invalid {child}")
            })?;
            ensure(space.parent_of(child) == Ok(Some(id)), || {
                format!("parent of {child} is not {id}")
            })?;
            ensure(
                library.insert(child.octets(), id.octets()).is_none(),
                || format!("library issued {child} twice"),
            )?;
            queue.push(child);
        }
    }
    ensure(library == oracle, || {
        let extra = library.keys().filter(|k| !oracle.contains_key(*k)).count();
        let missing = oracle.keys().filter(|k| !library.contains_key(*k)).count();
        format!("set mismatch: {extra} extra, {missing} missing")
    })?;
    ensure(!library.contains_key(&space.reserved().octets()), || {
        "reserved identifier issued".into()
    })?;
    Ok(format!(
        "radix {}: {} identifiers equal, parents consistent, reserved excluded ({} by enumeration)",
        ORACLE_MAX,
        library.len(),
        closed
    ))
}

fn latency() -> Check {
    let names: Vec<String> = LATENCY_DIAMETERS
        .iter()
        .map(|d| format!("latency-d{d}"))
        .collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let runs = run_all(&common::points(&name_refs))?;
    let mut notes = Vec::new();
    for (m, row) in &runs {
        let d = u64::from(row.d);
        ensure(LATENCY_DIAMETERS.contains(&row.d), || {
            format!("{}: diameter {}", row.scenario, row.d)
        })?;
        ensure(m.lost == 0 && row.failures == 0, || {
            format!("{} {}: failures", row.scenario, row.scheme)
        })?;
        let latencies = |direct: bool| -> Vec<u64> {
            m.joins
                .iter()
                .filter(|j| !direct || (j.retries == 0 && j.escalations == 0))
                .filter_map(|j| j.latency_ticks())
                .collect()
        };
        match row.scheme.parse::<Scheme>().map_err(|e| e.to_string())? {
            Scheme::Proposed => {
                let direct = latencies(true);
                ensure(!direct.is_empty(), || {
                    format!("{}: no direct joins", row.scenario)
                })?;
                ensure(direct.iter().all(|&t| t == 2 * TICKS_PER_HOP), || {
                    format!("{}: direct join latency not 2t", row.scenario)
                })?;
                notes.push(format!(
                    "proposed d={d}: {} direct joins at 2t",
                    direct.len()
                ));
            }
            Scheme::Dad => {
                let clean = latencies(true);
                ensure(!clean.is_empty(), || {
                    format!("{}: no conflict-free DAD joins", row.scenario)
                })?;
                ensure(clean.iter().all(|&t| t == 2 * TICKS_PER_HOP * d), || {
                    format!("{}: DAD latency not 2td", row.scenario)
                })?;
                notes.push(format!("dad d={d}: {} at 2td", clean.len()));
            }
            Scheme::Dhcp => {
                let all = latencies(false);
                let mean = all.iter().sum::<u64>() as f64 / all.len() as f64 / TICKS_PER_HOP as f64;
                let target = 2.0 * d as f64;
                let dev = (mean - target).abs() / target;
                ensure(dev <= DHCP_LATENCY_TOLERANCE, || {
                    format!(
                        "{}: DHCP mean {mean:.2}t vs {target}t ({:.1}%)",
                        row.scenario,
                        dev * 100.0
                    )
                })?;
                notes.push(format!(
                    "dhcp d={d}: {mean:.2}t ({:+.1}%)",
                    (mean - target) / target * 100.0
                ));
            }
        }
    }
    Ok(notes.join(", "))
}

fn overhead_scaling() -> Check {
    let rows =
        scenario::run_points(&common::points(&["overhead-grid"]), 0).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for scheme in Scheme::ALL {
        let by_n: BTreeMap<usize, f64> = rows
            .iter()
            .filter(|r| r.scheme == scheme.name())
            .map(|r| (r.n, r.msgs_mean))
            .collect();
        ensure(by_n.keys().copied().eq(OVERHEAD_SWEEP), || {
            format!("{scheme}: sweep {:?}", by_n.keys())
        })?;
        let series: Vec<String> = by_n.values().map(|v| format!("{v:.2}")).collect();
        match scheme {
            Scheme::Proposed => {
                let hi = by_n.values().copied().fold(f64::MIN, f64::max);
                let lo = by_n.values().copied().fold(f64::MAX, f64::min);
                let spread = hi / lo;
                ensure(spread < PROPOSED_SPREAD_LIMIT, || {
                    format!("proposed spread {spread:.2}")
                })?;
                notes.push(format!("proposed {} (x{spread:.2})", series.join("/")));
            }
            _ => {
                let growth = by_n[&OVERHEAD_SWEEP[2]] / by_n[&OVERHEAD_SWEEP[0]];
                ensure(growth >= BASELINE_GROWTH_MIN, || {
                    format!("{scheme} growth {growth:.2}")
                })?;
                notes.push(format!("{scheme} {} (x{growth:.1})", series.join("/")));
            }
        }
    }
    Ok(notes.join(", "))
}

fn dad_duplicates() -> Check {
    let runs = run_all(&common::points(&["dad-lossy"]))?;
    ensure(runs.len() == DAD_LOSS_SEEDS, || {
        format!("{} runs", runs.len())
    })?;
    for (m, row) in &runs {
        ensure(row.n == 200 && row.loss == 0.2, || {
            "unexpected dad-lossy setup".into()
        })?;
        ensure(recount_duplicates(m) == m.duplicates, || {
            format!("seed {}: counter mismatch", row.seed)
        })?;
    }
    let hit = runs.iter().filter(|(m, _)| m.duplicates > 0).count();
    let total: u64 = runs.iter().map(|(m, _)| m.duplicates).sum();
    ensure(hit >= 1, || {
        format!("no duplicates over {} seeds", runs.len())
    })?;
    Ok(format!(
        "{hit}/{} seeds with duplicates, {total} total",
        runs.len()
    ))
}

fn formatting() -> Check {
    let full = "2031:0000:130f:0000:0000:09c0:876a:130b";
    let short = "2031:0:130f::9c0:876a:130b";
    let a = parse_hex(full).map_err(|e| e.to_string())?;
    ensure(format_hex(&a) == short, || {
        format!("formatted as {}", format_hex(&a))
    })?;
    let b = parse_hex(short).map_err(|e| e.to_string())?;
    ensure(b == a, || "compressed form parses differently".into())?;
    let std_octets = full
        .parse::<Ipv6Addr>()
        .map_err(|e| e.to_string())?
        .octets();
    ensure(a.octets() == std_octets, || {
        "octets differ from std parser".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..ROUND_TRIPS {
        let mut octets = [0u8; 16];
        for g in 0..8 {
            // zero groups often enough to exercise every compression case
            if rng.random_bool(0.4) {
                continue;
            }
            let v: u16 = if rng.random_bool(0.3) {
                rng.random_range(1..16)
            } else {
                rng.random()
            };
            octets[2 * g..2 * g + 2].copy_from_slice(&v.to_be_bytes());
        }
        let addr = Ipv6Address::from_octets(octets);
        let text = format_hex(&addr);
        ensure(parse_hex(&text) == Ok(addr), || {
            format!("round trip {i} failed on {text}")
        })?;
        ensure(
            text.parse::<Ipv6Addr>().map(|x| x.octets()) == Ok(octets),
            || format!("std parser reads {text} differently"),
        )?;
        ensure(text.matches("::").count() <= 1, || {
            format!("{text} has two ::")
        })?;
        let upper = Ipv6Addr::from(octets).to_string().to_uppercase();
        ensure(parse_hex(&upper) == Ok(addr), || {
            format!("cannot parse {upper}")
        })?;
    }

    for bad in ["1::2::3", "2031::130f::9c0:876a:130b", "::1::", "1:2::3::4"] {
        ensure(parse_hex(bad).is_err(), || format!("{bad} accepted"))?;
    }
    Ok(format!(
        "example pair both ways, {ROUND_TRIPS} seeded round trips, multi-:: rejected"
    ))
}

fn no_broadcast() -> Check {
    let rows = scenario::run_points(
        &common::points(&["overhead-grid", "latency-d10", "latency-d20", "latency-d40"]),
        0,
    )
    .map_err(|e| e.to_string())?;
    let mut min_per_join = f64::MAX;
    for r in &rows {
        if r.scheme == Scheme::Proposed.name() {
            ensure(r.floods == 0 && r.flood_messages == 0, || {
                format!("{}: proposed run flooded {} times", r.scenario, r.floods)
            })?;
        } else {
            let per_join = r.floods as f64 / r.joins as f64;
            ensure(per_join >= 1.0, || {
                format!("{} {}: {per_join:.2} floods/join", r.scenario, r.scheme)
            })?;
            min_per_join = min_per_join.min(per_join);
        }
    }
    Ok(format!(
        "{} runs: proposed 0 floods, baselines >= {min_per_join:.2} floods/join",
        rows.len()
    ))
}

fn determinism() -> Check {
    let points = common::points(&["overhead-grid", "latency-d20", "dad-lossy"]);
    let render = |jobs| -> Result<(String, String), String> {
        let rows = scenario::run_points(&points, jobs).map_err(|e| e.to_string())?;
        Ok((
            scenario::metrics_csv(&rows),
            RunSummary::new(&rows).to_json(),
        ))
    };
    let first = render(1)?;
    let second = render(2)?;
    ensure(first == second, || "outputs differ between runs".into())?;
    Ok(format!(
        "{} runs, {} + {} bytes identical",
        points.len(),
        first.0.len(),
        first.1.len()
    ))
}

fn main() -> ExitCode {
    let checks: [Criterion; 8] = [
        ("uniqueness", uniqueness),
        ("oracle-equivalence", oracle_equivalence),
        ("latency", latency),
        ("overhead-scaling", overhead_scaling),
        ("dad-duplicates", dad_duplicates),
        ("formatting", formatting),
        ("no-broadcast", no_broadcast),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

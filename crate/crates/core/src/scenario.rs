//! Scenario files, sweep expansion and metrics output.
//!
//! A scenario file is TOML with `version = 1` and one `[[scenario]]` table
//! per experiment; unknown keys are rejected. Each scenario expands into one
//! run per sweep point, scheme and replicate, in that nesting order, and
//! every run yields one [`MetricsRow`].

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::report::{self, SchemeSummary};
use crate::sim::{
    build_topology, radius_for_degree, run_scenario, JoinOrder, MetricsRecord, Scheme, SimConfig,
    SimError, TopologyKind, DEFAULT_DAD_POOL, DEFAULT_EVENT_BUDGET,
};
use crate::types::{NodeId, RetryPolicy, TICKS_PER_HOP};

pub const CONFIG_VERSION: u32 = 1;
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("scenario {scenario:?}: unknown scheme {scheme:?}")]
    UnknownScheme { scenario: String, scheme: String },
    #[error("scenario {scenario:?}: node count must be positive")]
    NonPositiveN { scenario: String },
    #[error("scenario {scenario:?}: loss {loss} outside [0, 1]")]
    Loss { scenario: String, loss: f64 },
    #[error("scenario {scenario:?}: {reason}")]
    Invalid { scenario: String, reason: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario {scenario:?} ({scheme}, seed {seed}): {source}")]
    Sim {
        scenario: String,
        scheme: Scheme,
        seed: u64,
        source: SimError,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
}

/// Topology section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    Grid {
        rows: u32,
        cols: u32,
    },
    Path {
        n: u32,
    },
    Complete {
        n: u32,
    },
    Tree {
        fanout: u32,
        depth: u32,
    },
    Broom {
        handle: u32,
        bristles: u32,
    },
    /// Unit-square geometric graph; give exactly one of `degree` (target
    /// mean degree) and `radius`.
    RandomGeometric {
        n: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degree: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
}

impl TopologySpec {
    fn node_count(&self) -> u64 {
        match *self {
            TopologySpec::Grid { rows, cols } => u64::from(rows) * u64::from(cols),
            TopologySpec::Path { n } | TopologySpec::Complete { n } => n.into(),
            TopologySpec::RandomGeometric { n, .. } => n.into(),
            TopologySpec::Tree { fanout, depth } => (0..=depth)
                .map(|k| u64::from(fanout).saturating_pow(k))
                .sum(),
            TopologySpec::Broom { handle, bristles } => u64::from(handle) + u64::from(bristles) + 1,
        }
    }

    /// The same family resized to `n` nodes. Grids stay square.
    fn resized(&self, n: u32) -> Result<TopologySpec, String> {
        Ok(match *self {
            TopologySpec::Grid { .. } => {
                let side = (f64::from(n).sqrt().round()) as u32;
                if side * side != n {
                    return Err(format!("grid sweep value {n} is not a perfect square"));
                }
                TopologySpec::Grid {
                    rows: side,
                    cols: side,
                }
            }
            TopologySpec::Path { .. } => TopologySpec::Path { n },
            TopologySpec::Complete { .. } => TopologySpec::Complete { n },
            TopologySpec::RandomGeometric {
                degree: Some(d), ..
            } => TopologySpec::RandomGeometric {
                n,
                degree: Some(d),
                radius: None,
            },
            TopologySpec::RandomGeometric { .. } => {
                return Err("random-geometric sweeps need `degree`, not `radius`".into())
            }
            TopologySpec::Tree { .. } | TopologySpec::Broom { .. } => {
                return Err("sweep_n is not defined for this topology kind".into())
            }
        })
    }

    fn kind(&self) -> TopologyKind {
        match *self {
            TopologySpec::Grid { rows, cols } => TopologyKind::Grid { rows, cols },
            TopologySpec::Path { n } => TopologyKind::Path { n },
            TopologySpec::Complete { n } => TopologyKind::Complete { n },
            TopologySpec::Tree { fanout, depth } => TopologyKind::Tree { fanout, depth },
            TopologySpec::Broom { handle, bristles } => TopologyKind::Broom { handle, bristles },
            TopologySpec::RandomGeometric { n, degree, radius } => TopologyKind::RandomGeometric {
                n,
                radius: radius.unwrap_or_else(|| radius_for_degree(n, degree.unwrap_or(0.0))),
            },
        }
    }

    /// Short label used in the metrics rows.
    pub fn label(&self) -> String {
        match *self {
            TopologySpec::Grid { rows, cols } => format!("grid-{rows}x{cols}"),
            TopologySpec::Path { n } => format!("path-{n}"),
            TopologySpec::Complete { n } => format!("complete-{n}"),
            TopologySpec::Tree { fanout, depth } => format!("tree-{fanout}^{depth}"),
            TopologySpec::Broom { handle, bristles } => format!("broom-{handle}+{bristles}"),
            TopologySpec::RandomGeometric {
                n, degree: Some(d), ..
            } => format!("rgg-{n}-deg{d}"),
            TopologySpec::RandomGeometric { n, radius, .. } => {
                format!("rgg-{n}-r{}", radius.unwrap_or(0.0))
            }
        }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_one() -> u32 {
    1
}
fn default_concurrency() -> usize {
    1
}
fn default_retry_timeout() -> f64 {
    4.0
}
fn default_attempts() -> u32 {
    5
}
fn default_dad_pool() -> u64 {
    DEFAULT_DAD_POOL
}
fn default_budget() -> u64 {
    DEFAULT_EVENT_BUDGET
}
fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub schemes: Vec<String>,
    pub topology: TopologySpec,
    /// Node counts to sweep the topology family over.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_n: Vec<u32>,
    /// Joins per run; every node but the controller when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joins: Option<usize>,
    #[serde(default)]
    pub loss: f64,
    /// First seed; replicate `r` runs with `seed + r`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub replicates: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default, skip_serializing_if = "is_default")]
    pub join_order: JoinOrder,
    /// Upper bound of per-hop jitter, in units of t.
    #[serde(default)]
    pub jitter: f64,
    /// Proposed-scheme retry timeout, in units of t.
    #[serde(default = "default_retry_timeout")]
    pub retry_timeout: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_dad_pool")]
    pub dad_pool: u64,
    #[serde(default = "default_attempts")]
    pub dad_max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dhcp_capacity: Option<u64>,
    #[serde(default = "default_budget")]
    pub event_budget: u64,
    /// Node hosting the controller and the DHCP server.
    #[serde(default)]
    pub controller: u32,
}

impl Scenario {
    /// A scenario with every optional field at its default.
    pub fn new(name: impl Into<String>, schemes: &[Scheme], topology: TopologySpec) -> Self {
        Scenario {
            name: name.into(),
            schemes: schemes.iter().map(|s| s.name().to_string()).collect(),
            topology,
            sweep_n: Vec::new(),
            joins: None,
            loss: 0.0,
            seed: default_seed(),
            replicates: 1,
            concurrency: 1,
            join_order: JoinOrder::default(),
            jitter: 0.0,
            retry_timeout: default_retry_timeout(),
            max_attempts: default_attempts(),
            dad_pool: DEFAULT_DAD_POOL,
            dad_max_retries: default_attempts(),
            dhcp_capacity: None,
            event_budget: DEFAULT_EVENT_BUDGET,
            controller: 0,
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            scenario: self.name.clone(),
            reason: reason.into(),
        }
    }

    fn schemes(&self) -> Result<Vec<Scheme>, ConfigError> {
        if self.schemes.is_empty() {
            return Err(self.invalid("no schemes listed"));
        }
        self.schemes
            .iter()
            .map(|s| {
                s.parse().map_err(|_| ConfigError::UnknownScheme {
                    scenario: self.name.clone(),
                    scheme: s.clone(),
                })
            })
            .collect()
    }

    fn topologies(&self) -> Result<Vec<TopologySpec>, ConfigError> {
        let specs = if self.sweep_n.is_empty() {
            vec![self.topology.clone()]
        } else {
            self.sweep_n
                .iter()
                .map(|&n| {
                    if n == 0 {
                        return Err(ConfigError::NonPositiveN {
                            scenario: self.name.clone(),
                        });
                    }
                    self.topology.resized(n).map_err(|r| self.invalid(r))
                })
                .collect::<Result<_, _>>()?
        };
        for spec in &specs {
            if spec.node_count() == 0 {
                return Err(ConfigError::NonPositiveN {
                    scenario: self.name.clone(),
                });
            }
            if u64::from(self.controller) >= spec.node_count() {
                return Err(self.invalid(format!(
                    "controller {} is outside the topology",
                    self.controller
                )));
            }
            if let TopologySpec::RandomGeometric { degree, radius, .. } = spec {
                match (degree, radius) {
                    (Some(d), None) if d.is_finite() && *d > 0.0 => {}
                    (None, Some(r)) if r.is_finite() && *r > 0.0 => {}
                    _ => {
                        return Err(self
                            .invalid("random-geometric needs one positive `degree` or `radius`"))
                    }
                }
            }
        }
        Ok(specs)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(ConfigError::Loss {
                scenario: self.name.clone(),
                loss: self.loss,
            });
        }
        if self.replicates == 0 {
            return Err(self.invalid("replicates must be at least 1"));
        }
        if self.concurrency == 0 {
            return Err(self.invalid("concurrency must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(self.invalid("max_attempts must be at least 1"));
        }
        if self.dad_pool == 0 {
            return Err(self.invalid("dad_pool must be positive"));
        }
        for (key, v) in [
            ("jitter", self.jitter),
            ("retry_timeout", self.retry_timeout),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(self.invalid(format!("{key} must be a non-negative number")));
            }
        }
        if self.retry_timeout == 0.0 {
            return Err(self.invalid("retry_timeout must be positive"));
        }
        self.schemes()?;
        self.topologies()?;
        Ok(())
    }

    fn sim_config(&self, scheme: Scheme, seed: u64) -> SimConfig {
        let ticks = |t: f64| (t * TICKS_PER_HOP as f64).round() as u64;
        let mut cfg = SimConfig::new(scheme, seed);
        cfg.joins = self.joins.unwrap_or(usize::MAX);
        cfg.loss = self.loss;
        cfg.concurrency = self.concurrency;
        cfg.join_order = self.join_order;
        cfg.jitter = ticks(self.jitter);
        cfg.retry = RetryPolicy {
            timeout: ticks(self.retry_timeout),
            max_attempts: self.max_attempts,
        };
        cfg.dad_pool = self.dad_pool;
        cfg.dad_max_retries = self.dad_max_retries;
        cfg.dhcp_capacity = self.dhcp_capacity.unwrap_or(u64::MAX);
        cfg.event_budget = self.event_budget;
        cfg.controller = NodeId(self.controller);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    /// Output directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<Scenario>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text)?;
        if file.version != CONFIG_VERSION {
            return Err(ConfigError::Version(file.version));
        }
        let mut names = std::collections::HashSet::new();
        for s in &file.scenarios {
            if !names.insert(s.name.as_str()) {
                return Err(s.invalid("duplicate scenario name"));
            }
            s.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        ConfigFile::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the first seed of every scenario.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for s in &mut self.scenarios {
            s.seed = seed;
        }
        self
    }

    /// Every run described by the file, in output order.
    pub fn expand(&self) -> Result<Vec<RunPoint>, ConfigError> {
        let mut points = Vec::new();
        for s in &self.scenarios {
            s.validate()?;
            let schemes = s.schemes()?;
            for spec in s.topologies()? {
                for &scheme in &schemes {
                    for r in 0..s.replicates {
                        let seed = s.seed.wrapping_add(u64::from(r));
                        points.push(RunPoint {
                            scenario: s.name.clone(),
                            topology: spec.clone(),
                            config: s.sim_config(scheme, seed),
                        });
                    }
                }
            }
        }
        Ok(points)
    }
}

/// One simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub scenario: String,
    pub topology: TopologySpec,
    pub config: SimConfig,
}

impl RunPoint {
    pub fn run(&self) -> Result<(MetricsRecord, MetricsRow), RunError> {
        let sim_err = |source| RunError::Sim {
            scenario: self.scenario.clone(),
            scheme: self.config.scheme,
            seed: self.config.seed,
            source,
        };
        let topo = build_topology(&self.topology.kind(), self.config.seed)
            .map_err(|e| sim_err(e.into()))?;
        let record = run_scenario(&topo, &self.config).map_err(sim_err)?;
        let row = MetricsRow::new(self, &record);
        Ok((record, row))
    }
}

fn fixed<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:.6}"))
}

/// One line of `metrics.csv`. Latencies are in units of t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub scheme: String,
    pub topology: String,
    pub n: usize,
    pub l: usize,
    pub d: u32,
    pub d_exact: bool,
    pub seed: u64,
    #[serde(serialize_with = "fixed")]
    pub loss: f64,
    pub joins: usize,
    pub configured: usize,
    pub failures: usize,
    pub duplicates: u64,
    pub violations: u64,
    #[serde(serialize_with = "fixed")]
    pub msgs_mean: f64,
    #[serde(serialize_with = "fixed")]
    pub msgs_median: f64,
    #[serde(serialize_with = "fixed")]
    pub msgs_p95: f64,
    #[serde(serialize_with = "fixed")]
    pub latency_mean: f64,
    #[serde(serialize_with = "fixed")]
    pub latency_median: f64,
    #[serde(serialize_with = "fixed")]
    pub latency_p95: f64,
    /// Mean latency of joins served first time, without escalation.
    #[serde(serialize_with = "fixed")]
    pub latency_direct_mean: f64,
    pub escalations: u64,
    pub retries: u64,
    pub floods: u64,
    pub flood_messages: u64,
    pub messages: u64,
    pub lost: u64,
}

impl MetricsRow {
    pub fn new(point: &RunPoint, m: &MetricsRecord) -> Self {
        let msgs = m.messages_per_join();
        let latency = m.latency();
        let direct = crate::sim::Summary::of(
            m.joins
                .iter()
                .filter(|j| j.retries == 0 && j.escalations == 0)
                .filter_map(|j| j.latency()),
        );
        MetricsRow {
            scenario: point.scenario.clone(),
            scheme: point.config.scheme.name().to_string(),
            topology: point.topology.label(),
            n: m.n,
            l: m.links,
            d: m.diameter,
            d_exact: m.diameter_exact,
            seed: point.config.seed,
            loss: point.config.loss,
            joins: m.joins.len(),
            configured: m.configured(),
            failures: m.failures(),
            duplicates: m.duplicates,
            violations: m.invariant_violations,
            msgs_mean: msgs.mean,
            msgs_median: msgs.median,
            msgs_p95: msgs.p95,
            latency_mean: latency.mean,
            latency_median: latency.median,
            latency_p95: latency.p95,
            latency_direct_mean: direct.mean,
            escalations: m.escalations(),
            retries: m.joins.iter().map(|j| u64::from(j.retries)).sum(),
            floods: m.floods,
            flood_messages: m.flood_messages(),
            messages: m.messages_sent,
            lost: m.lost,
        }
    }
}

/// Runs `points` on up to `jobs` threads (0 picks the core count). Rows
/// come back in the order of `points`.
pub fn run_points(points: &[RunPoint], jobs: usize) -> Result<Vec<MetricsRow>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| {
        points
            .par_iter()
            .map(|p| p.run().map(|(_, row)| row))
            .collect()
    })
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: u32,
    pub runs: usize,
    pub scenarios: Vec<String>,
    pub comparison: Vec<SchemeSummary>,
}

impl RunSummary {
    pub fn new(rows: &[MetricsRow]) -> Self {
        let mut scenarios: Vec<String> = Vec::new();
        for r in rows {
            if !scenarios.contains(&r.scenario) {
                scenarios.push(r.scenario.clone());
            }
        }
        RunSummary {
            version: CONFIG_VERSION,
            runs: rows.len(),
            scenarios,
            comparison: report::compare(rows),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outputs {
    pub metrics: PathBuf,
    pub summary: PathBuf,
}

pub fn write_outputs(dir: &Path, rows: &[MetricsRow]) -> Result<Outputs, RunError> {
    let write = |path: PathBuf, text: String| {
        fs::write(&path, text).map_err(|e| RunError::Write {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok::<_, RunError>(path)
    };
    fs::create_dir_all(dir).map_err(|e| RunError::Write {
        path: dir.to_owned(),
        reason: e.to_string(),
    })?;
    Ok(Outputs {
        metrics: write(dir.join(METRICS_FILE), metrics_csv(rows))?,
        summary: write(dir.join(SUMMARY_FILE), RunSummary::new(rows).to_json())?,
    })
}

//! Per-scheme comparison of metrics rows.
//!
//! Rows are grouped by scheme. Overhead is the join-weighted mean of
//! messages per join; latency the configured-weighted mean latency. The
//! scalability ratio divides mean messages per join at the largest swept
//! `n` by that at the smallest, per scenario, and keeps the worst scenario.
//! A scheme is rated `High` when the ratio stays below [`HIGH_SCALABILITY`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::MetricsRow;
use crate::sim::Scheme;

pub const HIGH_SCALABILITY: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no metrics rows to report")]
    EmptyInput,
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub runs: usize,
    pub joins: usize,
    pub duplicates: u64,
    /// `Yes` when no run produced a duplicate address.
    pub uniqueness: String,
    /// Mean latency in units of t.
    pub latency: f64,
    /// Mean of per-run latency divided by `2 * d`.
    pub latency_per_2d: f64,
    /// Mean messages per join.
    pub overhead: f64,
    pub scalability_ratio: Option<f64>,
    pub scalability: Option<String>,
}

fn weighted(
    rows: &[&MetricsRow],
    value: impl Fn(&MetricsRow) -> f64,
    weight: impl Fn(&MetricsRow) -> usize,
) -> f64 {
    let total: usize = rows.iter().map(|r| weight(r)).sum();
    if total == 0 {
        return 0.0;
    }
    rows.iter()
        .map(|r| value(r) * weight(r) as f64)
        .sum::<f64>()
        / total as f64
}

fn scalability(rows: &[&MetricsRow]) -> Option<f64> {
    let mut by_scenario: BTreeMap<&str, BTreeMap<usize, Vec<&MetricsRow>>> = BTreeMap::new();
    for r in rows {
        by_scenario
            .entry(r.scenario.as_str())
            .or_default()
            .entry(r.n)
            .or_default()
            .push(r);
    }
    by_scenario
        .values()
        .filter(|by_n| by_n.len() >= 2)
        .filter_map(|by_n| {
            let mean = |rs: &Vec<&MetricsRow>| weighted(rs, |r| r.msgs_mean, |r| r.joins);
            let lo = mean(by_n.values().next()?);
            let hi = mean(by_n.values().next_back()?);
            (lo > 0.0).then(|| hi / lo)
        })
        .max_by(f64::total_cmp)
}

fn scheme_rank(name: &str) -> (usize, &str) {
    let rank = name
        .parse::<Scheme>()
        .map(|s| Scheme::ALL.iter().position(|&k| k == s).unwrap_or(0))
        .unwrap_or(Scheme::ALL.len());
    (rank, name)
}

/// One summary per scheme, in the canonical scheme order.
pub fn compare(rows: &[MetricsRow]) -> Vec<SchemeSummary> {
    let mut groups: BTreeMap<(usize, &str), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(scheme_rank(&r.scheme)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((_, scheme), rs)| {
            let duplicates = rs.iter().map(|r| r.duplicates).sum();
            let ratio = scalability(&rs);
            let with_d: Vec<&MetricsRow> = rs.iter().copied().filter(|r| r.d > 0).collect();
            SchemeSummary {
                scheme: scheme.to_string(),
                runs: rs.len(),
                joins: rs.iter().map(|r| r.joins).sum(),
                duplicates,
                uniqueness: if duplicates == 0 { "Yes" } else { "No" }.to_string(),
                latency: weighted(&rs, |r| r.latency_mean, |r| r.configured),
                latency_per_2d: weighted(
                    &with_d,
                    |r| r.latency_mean / (2.0 * f64::from(r.d)),
                    |r| r.configured,
                ),
                overhead: weighted(&rs, |r| r.msgs_mean, |r| r.joins),
                scalability_ratio: ratio,
                scalability: ratio
                    .map(|x| if x < HIGH_SCALABILITY { "High" } else { "Low" }.to_string()),
            }
        })
        .collect()
}

pub fn read_rows(paths: &[PathBuf]) -> Result<Vec<MetricsRow>, ReportError> {
    let mut rows = Vec::new();
    for path in paths {
        let err = |reason: String| ReportError::Read {
            path: path.clone(),
            reason,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        for row in reader.deserialize() {
            rows.push(row.map_err(|e: csv::Error| err(e.to_string()))?);
        }
    }
    if rows.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(rows)
}

pub fn report_files(paths: &[PathBuf]) -> Result<Vec<SchemeSummary>, ReportError> {
    if paths.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(compare(&read_rows(paths)?))
}

fn or_dash(v: Option<String>) -> String {
    v.unwrap_or_else(|| "-".into())
}

/// Fixed-width text table.
pub fn render_table(summaries: &[SchemeSummary]) -> String {
    let header = [
        "scheme",
        "uniqueness",
        "latency[t]",
        "latency/2d",
        "overhead[msgs]",
        "scalability",
        "ratio",
    ];
    let body: Vec<[String; 7]> = summaries
        .iter()
        .map(|s| {
            [
                s.scheme.clone(),
                format!("{} ({} dup)", s.uniqueness, s.duplicates),
                format!("{:.2}", s.latency),
                format!("{:.3}", s.latency_per_2d),
                format!("{:.2}", s.overhead),
                or_dash(s.scalability.clone()),
                or_dash(s.scalability_ratio.map(|r| format!("{r:.2}"))),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header.map(String::from));
    for row in &body {
        line(row);
    }
    out
}

pub fn report_csv(summaries: &[SchemeSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scheme",
        "runs",
        "joins",
        "duplicates",
        "uniqueness",
        "latency",
        "latency_per_2d",
        "overhead",
        "scalability_ratio",
        "scalability",
    ])
    .expect("in-memory writer");
    for s in summaries {
        w.write_record([
            s.scheme.clone(),
            s.runs.to_string(),
            s.joins.to_string(),
            s.duplicates.to_string(),
            s.uniqueness.clone(),
            format!("{:.6}", s.latency),
            format!("{:.6}", s.latency_per_2d),
            format!("{:.6}", s.overhead),
            s.scalability_ratio
                .map(|r| format!("{r:.6}"))
                .unwrap_or_default(),
            s.scalability.clone().unwrap_or_default(),
        ])
        .expect("in-memory writer");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn write_report(path: &Path, summaries: &[SchemeSummary]) -> std::io::Result<()> {
    std::fs::write(path, report_csv(summaries))
}

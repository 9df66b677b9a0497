//! Text tables and trajectory rows for metric reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::evaluate::{EvalReport, Method, RankingMetrics};
use super::metrics::MetricTriple;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub period: String,
    pub method: Method,
    pub median_recall: f64,
    pub median_precision: f64,
}

/// One row per (period, method), sorted by method then period.
pub fn yearly_report(snapshots: &BTreeMap<String, BTreeMap<Method, RankingMetrics>>) -> Vec<TrajectoryRow> {
    let mut rows: Vec<TrajectoryRow> = snapshots
        .iter()
        .flat_map(|(period, methods)| {
            methods.iter().map(move |(method, m)| TrajectoryRow {
                period: period.clone(),
                method: *method,
                median_recall: m.median.recall,
                median_precision: m.median.precision,
            })
        })
        .collect();
    rows.sort_by(|a, b| (a.method, &a.period).cmp(&(b.method, &b.period)));
    rows
}

fn row(out: &mut String, label: &str, m: &MetricTriple) {
    let _ = writeln!(out, "{label:<22}{:>12.4}{:>12.4}{:>12.4}", m.precision, m.recall, m.ndcg);
}

/// Methods as rows, precision/recall/nDCG at k as columns; hybrids get an
/// extra median row.
pub fn render_metrics_table(report: &EvalReport) -> String {
    let k = report.k;
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:>12}{:>12}{:>12}", "method", format!("P@{k}"), format!("R@{k}"), format!("nDCG@{k}"));
    for (method, m) in &report.methods {
        if method.is_hybrid() {
            row(&mut out, &format!("{method} (mean)"), &m.mean);
            row(&mut out, &format!("{method} (median)"), &m.median);
        } else {
            row(&mut out, &method.to_string(), &m.mean);
        }
    }
    if report.excluded_cases > 0 {
        let _ = writeln!(out, "excluded cases without held-out templates: {}", report.excluded_cases);
    }
    out
}

pub fn render_trajectory(rows: &[TrajectoryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12}{:<14}{:>16}{:>18}", "period", "method", "median recall", "median precision");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12}{:<14}{:>16.4}{:>18.4}",
            r.period,
            r.method.to_string(),
            r.median_recall,
            r.median_precision
        );
    }
    out
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;

use super::compare::FrontierTable;
use super::metrics::{EvalReport, LatencySummary};
use super::run::EvalRecord;
use super::temporal::TemporalReport;
use super::EvalError;
use crate::contract::{Category, Decision};

const RULE: &str = "------------------------------------------------------------";

fn latency_line(name: &str, l: &LatencySummary) -> String {
    format!(
        "{name:<6} p50 {:>9.3} ms  p95 {:>9.3} ms  p99 {:>9.3} ms  max {:>9.3} ms  (n={})",
        l.p50, l.p95, l.p99, l.max, l.count
    )
}

/// Human-readable summary of one evaluation run.
pub fn render_report(report: &EvalReport, header: &str) -> String {
    let mut s = String::new();
    if !header.is_empty() {
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    let _ = writeln!(
        s,
        "Bounded decisions use programmatic validation against fixture ground truth."
    );
    let _ = writeln!(s, "{RULE}");
    let _ = writeln!(s, "requests             {}", report.total);
    let _ = writeln!(
        s,
        "execution reduction  {:.1}% ({} of {} not executed)",
        report.execution_reduction * 100.0,
        report.bounded_count,
        report.total
    );
    let _ = writeln!(
        s,
        "exact-match rate     {:.1}% ({} mismatches over {} RENDER)",
        report.exact_match_rate * 100.0,
        report.exact_mismatches,
        report.render_count
    );
    let _ = writeln!(
        s,
        "bounded validated    {} of {}",
        report.validated_count, report.bounded_count
    );
    if !report.validation_failures.is_empty() {
        let _ = writeln!(
            s,
            "validation failures  {}",
            report.validation_failures.join(", ")
        );
    }
    let _ = writeln!(s, "{RULE}");
    let _ = writeln!(s, "{:<10} {:>6} {:>8}", "decision", "count", "share");
    for d in Decision::ALL {
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>7.1}%",
            d.as_str(),
            report.decision_count(d),
            report.decision_share(d) * 100.0
        );
    }
    if !report.proof_tags.is_empty() {
        let _ = writeln!(s, "{RULE}");
        for (t, n) in &report.proof_tags {
            let _ = writeln!(s, "{:<20} {:>6}", t.as_str(), n);
        }
    }
    if !report.render_reasons.is_empty() {
        let _ = writeln!(s, "{RULE}");
        for (r, n) in &report.render_reasons {
            let _ = writeln!(s, "{:<20} {:>6}", r.as_str(), n);
        }
    }
    let _ = writeln!(s, "{RULE}");
    let _ = writeln!(
        s,
        "{:<15} {:>6} {:>7} {:>10} {:>10}",
        "category", "total", "render", "render %", "reduction"
    );
    for c in Category::ALL {
        let Some(&total) = report.per_category_total.get(&c) else {
            continue;
        };
        let render = report.per_category_render.get(&c).copied().unwrap_or(0);
        let rate = render as f64 / total as f64;
        let _ = writeln!(
            s,
            "{:<15} {:>6} {:>7} {:>9.1}% {:>9.1}%",
            c.as_str(),
            total,
            render,
            rate * 100.0,
            (1.0 - rate) * 100.0
        );
    }
    let _ = writeln!(s, "{RULE}");
    let _ = writeln!(s, "{}", latency_line("gate", &report.gate_latency));
    if let Some(e) = &report.exec_latency {
        let _ = writeln!(s, "{}", latency_line("exec", e));
    }
    let _ = writeln!(s, "mean action cost {:.3} ms", report.mean_action_cost_ms);
    if let Some(points) = &report.frontier {
        let _ = writeln!(s, "{RULE}");
        s.push_str(&render_frontier_table(&FrontierTable {
            points: points.clone(),
        }));
    }
    s
}

pub fn render_frontier_table(table: &FrontierTable) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>6} {:>10} {:>9} {:>10} {:>11}",
        "router", "skips", "avoidance", "failures", "flip rate", "brittleness"
    );
    for p in &table.points {
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>9.1}% {:>9} {:>10} {:>11}",
            p.router,
            p.skips,
            p.avoidance_rate * 100.0,
            p.correctness_failures,
            p.flip_rate
                .map(|r| format!("{:.3}", r))
                .unwrap_or_else(|| "-".into()),
            p.brittleness.map(|b| b.as_str()).unwrap_or("-"),
        );
    }
    s
}

pub fn render_temporal(report: &TemporalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} requests from {} users across {} issues",
        report.entries, report.users, report.issues
    );
    let _ = writeln!(s, "baseline executions  {}", report.baseline_calls);
    let _ = writeln!(s, "gated executions     {}", report.gated_calls);
    let _ = writeln!(
        s,
        "avoided              {} ({:.1}%)",
        report.avoided,
        report.avoidance_rate * 100.0
    );
    let _ = writeln!(s, "regressions          {}", report.regressions.len());
    for id in &report.regressions {
        let _ = writeln!(s, "  {id}");
    }
    s
}

/// Paths written by [`write_run_dir`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub records: PathBuf,
    pub report_json: PathBuf,
    pub report_txt: PathBuf,
}

/// Writes `records.jsonl`, `report.json` and `report.txt` under a fresh
/// `run-<UTC timestamp>` directory inside `base`.
pub fn write_run_dir(
    base: &Path,
    records: &[EvalRecord],
    report: &EvalReport,
    header: &str,
) -> Result<RunArtifacts, EvalError> {
    let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let dir = base.join(format!("run-{stamp}"));
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| EvalError::Io { path, source }
    };
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let artifacts = RunArtifacts {
        records: dir.join("records.jsonl"),
        report_json: dir.join("report.json"),
        report_txt: dir.join("report.txt"),
        dir,
    };
    fs::write(&artifacts.records, super::to_jsonl(records)).map_err(io(&artifacts.records))?;
    fs::write(&artifacts.report_json, serde_json::to_string_pretty(report)?)
        .map_err(io(&artifacts.report_json))?;
    fs::write(&artifacts.report_txt, render_report(report, header)).map_err(io(&artifacts.report_txt))?;
    Ok(artifacts)
}

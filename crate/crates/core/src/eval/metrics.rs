use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run::EvalRecord;
use super::EvalError;
use crate::contract::{Category, Decision, ProofTag, RenderReason};
use crate::routers::FrontierPoint;

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = samples.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            p50: nearest_rank(&v, 50.0)?,
            p95: nearest_rank(&v, 95.0)?,
            p99: nearest_rank(&v, 99.0)?,
            max: *v.last()?,
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub render_count: usize,
    /// `1 - RENDER / N`.
    pub execution_reduction: f64,
    pub render_rate: f64,
    /// Matching RENDER outputs over all RENDER records; 1.0 when nothing
    /// rendered.
    pub exact_match_rate: f64,
    pub exact_mismatches: usize,
    pub bounded_count: usize,
    pub validated_count: usize,
    pub validation_failures: Vec<String>,
    pub decision_distribution: BTreeMap<Decision, usize>,
    pub proof_tags: BTreeMap<ProofTag, usize>,
    pub render_reasons: BTreeMap<RenderReason, usize>,
    pub per_category_total: BTreeMap<Category, usize>,
    pub per_category_render: BTreeMap<Category, usize>,
    pub per_category_render_rate: BTreeMap<Category, f64>,
    pub gate_latency: LatencySummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_latency: Option<LatencySummary>,
    /// Mean of `action_cost` over records, in ms.
    pub mean_action_cost_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier: Option<Vec<FrontierPoint>>,
}

impl EvalReport {
    pub fn decision_count(&self, d: Decision) -> usize {
        self.decision_distribution.get(&d).copied().unwrap_or(0)
    }

    pub fn decision_share(&self, d: Decision) -> f64 {
        self.decision_count(d) as f64 / self.total as f64
    }

    pub fn category_render_rate(&self, c: Category) -> Option<f64> {
        self.per_category_render_rate.get(&c).copied()
    }
}

pub fn compute_metrics(records: &[EvalRecord]) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = records.len();
    let mut decisions: BTreeMap<Decision, usize> = Decision::ALL.iter().map(|&d| (d, 0)).collect();
    let mut proof_tags = BTreeMap::new();
    let mut render_reasons = BTreeMap::new();
    let mut per_category_total: BTreeMap<Category, usize> = BTreeMap::new();
    let mut per_category_render: BTreeMap<Category, usize> = BTreeMap::new();
    let (mut matched, mut mismatched, mut validated) = (0usize, 0usize, 0usize);
    let mut validation_failures = Vec::new();
    let mut cost = 0.0;

    for r in records {
        *decisions.entry(r.decision).or_default() += 1;
        *per_category_total.entry(r.category).or_default() += 1;
        let render = per_category_render.entry(r.category).or_default();
        if r.decision == Decision::Render {
            *render += 1;
        }
        if let Some(t) = r.proof_tag {
            *proof_tags.entry(t).or_default() += 1;
        }
        if let Some(reason) = r.render_reason {
            *render_reasons.entry(reason).or_default() += 1;
        }
        match r.exact_match {
            Some(true) => matched += 1,
            Some(false) => mismatched += 1,
            None => {}
        }
        match r.validated {
            Some(true) => validated += 1,
            Some(false) => validation_failures.push(r.request_id.clone()),
            None => {}
        }
        cost += crate::contract::action_cost(r.decision, r.gate_latency_ms, r.exec_latency_ms.unwrap_or(0.0));
    }

    let render_count = decisions[&Decision::Render];
    let per_category_render_rate = per_category_total
        .iter()
        .map(|(c, &t)| (*c, per_category_render[c] as f64 / t as f64))
        .collect();
    let rendered = matched + mismatched;
    Ok(EvalReport {
        total: n,
        render_count,
        execution_reduction: 1.0 - render_count as f64 / n as f64,
        render_rate: render_count as f64 / n as f64,
        exact_match_rate: if rendered == 0 {
            1.0
        } else {
            matched as f64 / rendered as f64
        },
        exact_mismatches: mismatched,
        bounded_count: n - render_count,
        validated_count: validated,
        validation_failures,
        decision_distribution: decisions,
        proof_tags,
        render_reasons,
        per_category_total,
        per_category_render,
        per_category_render_rate,
        gate_latency: LatencySummary::from_samples(records.iter().map(|r| r.gate_latency_ms))
            .expect("non-empty"),
        exec_latency: LatencySummary::from_samples(records.iter().filter_map(|r| r.exec_latency_ms)),
        mean_action_cost_ms: cost / n as f64,
        frontier: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(d: Decision, c: Category) -> EvalRecord {
        EvalRecord {
            request_id: "x".into(),
            category: c,
            decision: d,
            confidence: 1.0,
            proof_tag: None,
            render_reason: None,
            output: String::new(),
            exact_match: (d == Decision::Render).then_some(true),
            validated: (d != Decision::Render).then_some(true),
            gate_latency_ms: 1.0,
            exec_latency_ms: (d == Decision::Render).then_some(400.0),
        }
    }

    fn table2() -> Vec<EvalRecord> {
        let mut v = Vec::new();
        for (d, n) in [
            (Decision::Render, 219),
            (Decision::Direct, 487),
            (Decision::NoOp, 184),
            (Decision::Abstain, 110),
        ] {
            v.extend((0..n).map(|_| rec(d, Category::Mixed)));
        }
        v
    }

    #[test]
    fn reduction_and_distribution() {
        let m = compute_metrics(&table2()).unwrap();
        assert!((m.execution_reduction - 0.781).abs() < 1e-12);
        let pct: Vec<f64> = Decision::ALL
            .iter()
            .map(|&d| m.decision_share(d) * 100.0)
            .collect();
        for (got, want) in pct.iter().zip([21.9, 48.7, 18.4, 11.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert_eq!(m.exact_match_rate, 1.0);
        assert_eq!(m.decision_distribution.values().sum::<usize>(), 1000);
    }

    #[test]
    fn nearest_rank_method() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), Some(5.0));
        assert_eq!(nearest_rank(&v, 95.0), Some(10.0));
        assert_eq!(nearest_rank(&v, 0.0), Some(1.0));
        assert_eq!(nearest_rank(&[7.0], 99.0), Some(7.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 95.0), Some(19.0));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(compute_metrics(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn mismatch_lowers_rate() {
        let mut v = vec![rec(Decision::Render, Category::Creative); 4];
        v[0].exact_match = Some(false);
        let m = compute_metrics(&v).unwrap();
        assert_eq!(m.exact_match_rate, 0.75);
        assert_eq!(m.exact_mismatches, 1);
        assert_eq!(m.category_render_rate(Category::Creative), Some(1.0));
    }
}

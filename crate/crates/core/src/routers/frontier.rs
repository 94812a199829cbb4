use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::baseline::{GateRouter, Routed, Router};
use super::feature::{FeatureMap, FeatureVector};
use super::labeled::LabeledRequest;
use super::RouterError;
use crate::gate::Gate;

/// Largest feature-map arity the exhaustive verifier accepts.
pub const MAX_FRONTIER_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionPair {
    pub x1: LabeledRequest,
    pub x2: LabeledRequest,
    pub feature_vector: FeatureVector,
}

/// Every (S=1, S=0) pair sharing a feature vector.
pub fn find_collisions(population: &[LabeledRequest], fmap: &FeatureMap) -> Vec<CollisionPair> {
    let mut by_vector: BTreeMap<FeatureVector, (Vec<&LabeledRequest>, Vec<&LabeledRequest>)> =
        BTreeMap::new();
    for item in population {
        let slot = by_vector
            .entry(fmap.features_of(&item.request.prompt))
            .or_default();
        if item.is_safe() {
            slot.0.push(item);
        } else {
            slot.1.push(item);
        }
    }
    let mut out = Vec::new();
    for (v, (safe, unsafe_)) in by_vector {
        for x1 in &safe {
            for x2 in &unsafe_ {
                out.push(CollisionPair {
                    x1: (*x1).clone(),
                    x2: (*x2).clone(),
                    feature_vector: v.clone(),
                });
            }
        }
    }
    out
}

/// One achievable (avoidance, correctness) point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierSample {
    pub avoidance: f64,
    pub false_skips: usize,
    pub correctness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityReport {
    pub k: usize,
    pub population: usize,
    pub tables_checked: u64,
    /// At least one collision pair exists.
    pub hypothesis_met: bool,
    pub collision_vectors: Vec<String>,
    /// Tables with zero false skips and a positive skip rate on the S=1
    /// collision members (all S=1 members when nothing collides).
    pub satisfying_tables: u64,
    pub best_zero_failure_avoidance: f64,
    pub frontier: Vec<FrontierSample>,
}

impl ImpossibilityReport {
    /// With colliding inputs no table may satisfy both properties.
    pub fn theorem_holds(&self) -> bool {
        !self.hypothesis_met || self.satisfying_tables == 0
    }
}

/// Checks all 2^(2^k) decision tables over `fmap`.
pub fn enumerate_frontier(
    collisions: &[CollisionPair],
    fmap: &FeatureMap,
    population: &[LabeledRequest],
) -> Result<ImpossibilityReport, RouterError> {
    let k = fmap.k();
    if k > MAX_FRONTIER_K {
        return Err(RouterError::EnumerationBound {
            k,
            max: MAX_FRONTIER_K,
        });
    }
    let width = 1usize << k;
    let collision_idx: BTreeSet<usize> = collisions
        .iter()
        .filter_map(|c| c.feature_vector.index())
        .collect();
    let hypothesis_met = !collision_idx.is_empty();

    let mut s0 = vec![0usize; width];
    let mut s1 = vec![0usize; width];
    for item in population {
        let v = fmap
            .features_of(&item.request.prompt)
            .index()
            .expect("k <= 4 always indexes");
        if item.is_safe() {
            s1[v] += 1;
        } else {
            s0[v] += 1;
        }
    }
    let target: Vec<usize> = (0..width)
        .map(|v| {
            if !hypothesis_met || collision_idx.contains(&v) {
                s1[v]
            } else {
                0
            }
        })
        .collect();

    let n = population.len();
    let tables: u64 = 1u64 << width;
    let mut satisfying = 0u64;
    let mut best = 0.0f64;
    let mut points: BTreeSet<(usize, usize)> = BTreeSet::new();
    for table in 0..tables {
        let (mut skips, mut false_skips, mut target_skips) = (0, 0, 0);
        for v in 0..width {
            if table >> v & 1 == 1 {
                skips += s0[v] + s1[v];
                false_skips += s0[v];
                target_skips += target[v];
            }
        }
        points.insert((skips, false_skips));
        if false_skips == 0 {
            let avoidance = ratio(skips, n);
            best = best.max(avoidance);
            if target_skips > 0 {
                satisfying += 1;
            }
        }
    }

    Ok(ImpossibilityReport {
        k,
        population: n,
        tables_checked: tables,
        hypothesis_met,
        collision_vectors: collision_idx
            .iter()
            .map(|&i| FeatureVector::from_index(i, k).to_string())
            .collect(),
        satisfying_tables: satisfying,
        best_zero_failure_avoidance: best,
        frontier: points
            .into_iter()
            .map(|(skips, false_skips)| FrontierSample {
                avoidance: ratio(skips, n),
                false_skips,
                correctness: 1.0 - ratio(false_skips, n),
            })
            .collect(),
    })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Decision-flip rate under canonicalization-preserving perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Brittleness {
    None,
    Low,
    Medium,
    High,
}

impl Brittleness {
    pub fn from_flip_rate(rate: f64) -> Self {
        if rate <= 0.0 {
            Self::None
        } else if rate <= 0.10 {
            Self::Low
        } else if rate <= 0.30 {
            Self::Medium
        } else {
            Self::High
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub router: String,
    pub population: usize,
    pub skips: usize,
    pub avoidance_rate: f64,
    pub correctness_failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brittleness: Option<Brittleness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterEvaluation {
    pub point: FrontierPoint,
    pub routed: Vec<Routed>,
    /// Per item: SKIP that served a wrong response (or skipped an S=0 item).
    pub failures: Vec<bool>,
}

/// Routes every item; a SKIP is a correctness failure when the item is S=0 or
/// the served response differs from the reference `skip_response`.
pub fn evaluate_router(router: &dyn Router, population: &[LabeledRequest]) -> RouterEvaluation {
    let routed: Vec<Routed> = population.iter().map(|x| router.route(&x.request)).collect();
    let failures: Vec<bool> = population
        .iter()
        .zip(&routed)
        .map(|(x, r)| r.is_skip() && (!x.is_safe() || r.response != x.skip_response))
        .collect();
    let skips = routed.iter().filter(|r| r.is_skip()).count();
    RouterEvaluation {
        point: FrontierPoint {
            router: router.name().to_string(),
            population: population.len(),
            skips,
            avoidance_rate: ratio(skips, population.len()),
            correctness_failures: failures.iter().filter(|&&f| f).count(),
            flip_rate: None,
            brittleness: None,
        },
        routed,
        failures,
    }
}

/// Five rewrites that leave the canonical key unchanged.
pub fn perturbations(prompt: &str) -> [String; 5] {
    [
        prompt.to_uppercase(),
        prompt.to_lowercase(),
        prompt.split(' ').collect::<Vec<_>>().join("  "),
        format!("\t{prompt}  "),
        format!("{prompt}?"),
    ]
}

/// Fraction of perturbed requests whose decision differs from the original.
pub fn brittleness(router: &dyn Router, population: &[LabeledRequest]) -> (f64, Brittleness) {
    let mut flips = 0usize;
    let mut total = 0usize;
    for item in population {
        let base = router.route(&item.request).decision;
        for p in perturbations(&item.request.prompt) {
            let mut req = item.request.clone();
            req.prompt = p;
            total += 1;
            if router.route(&req).decision != base {
                flips += 1;
            }
        }
    }
    let rate = ratio(flips, total);
    (rate, Brittleness::from_flip_rate(rate))
}

/// Evaluates the gate-backed router, whose resolvers see meaning the feature
/// map cannot.
pub fn semantic_router_escape(population: &[LabeledRequest], gate: Arc<Gate>) -> FrontierPoint {
    let router = GateRouter::new(gate);
    let mut point = evaluate_router(&router, population).point;
    if !population.is_empty() {
        let (rate, label) = brittleness(&router, population);
        point.flip_rate = Some(rate);
        point.brittleness = Some(label);
    }
    point
}

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::fixtures::Fixtures;
use crate::gate::GateConfig;
use crate::routers::{
    brittleness, evaluate_router, semantic_router_escape, BaselineKind, FrontierPoint, LabeledRequest,
};

/// One frontier point per router, baselines first and the gate last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierTable {
    pub points: Vec<FrontierPoint>,
}

impl FrontierTable {
    pub fn get(&self, router: &str) -> Option<&FrontierPoint> {
        self.points.iter().find(|p| p.router == router)
    }
}

/// Runs the three heuristic routers and the gate-backed router over the same
/// labeled population. The cache-only router and the gate's cache both start
/// from the fixture history.
pub fn compare_routers(
    population: &[LabeledRequest],
    fixtures: &Fixtures,
    config: GateConfig,
) -> Result<FrontierTable, EvalError> {
    let mut points = Vec::new();
    for kind in BaselineKind::ALL {
        let router = fixtures.baseline_router(kind)?;
        let mut point = evaluate_router(router.as_ref(), population).point;
        if !population.is_empty() {
            let (rate, label) = brittleness(router.as_ref(), population);
            point.flip_rate = Some(rate);
            point.brittleness = Some(label);
        }
        points.push(point);
    }
    let gate = fixtures.gate(config)?;
    fixtures.prime_cache(gate.cache());
    points.push(semantic_router_escape(population, Arc::new(gate)));
    Ok(FrontierTable { points })
}

//! Browser bindings. Every call returns a JSON string so the page needs no
//! glue beyond `JSON.parse`.

use mfee_core::backend::{LatencyProfile, ReferenceBackend};
use mfee_core::contract::{dispatch, Decision, Request};
use mfee_core::fixtures::{bundled_collision_fixtures, Fixtures};
use mfee_core::gate::{Gate, GateConfig, ResolverTrace};
use mfee_core::resolvers::canonicalize;
use mfee_core::routers::{enumerate_frontier, find_collisions, ImpossibilityReport};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct GateView {
    request_id: String,
    decision: Decision,
    confidence: f64,
    output: String,
    proof_tag: Option<String>,
    render_reason: Option<String>,
    canonical_key: String,
    gate_ms: f64,
    /// Simulated backend time; zero for bounded decisions.
    exec_ms: f64,
    trace: ResolverTrace,
}

#[derive(Serialize)]
struct FrontierView {
    name: String,
    features: Vec<String>,
    population: usize,
    collisions: Vec<(String, String, String)>,
    report: ImpossibilityReport,
    theorem_holds: bool,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

/// A gate over the bundled fixtures with a session-local response cache.
#[wasm_bindgen]
pub struct Demo {
    gate: Gate,
    served: u64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        let gate = Fixtures::bundled()
            .and_then(|f| f.gate(GateConfig::default()))
            .map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Demo { gate, served: 0 })
    }

    /// Gates `prompt`, executes RENDER on the reference backend and caches
    /// the result, so asking the same thing twice shows a cache hit.
    pub fn infer(&mut self, prompt: &str, seed: i64) -> String {
        self.served += 1;
        let mut request = Request::deterministic(format!("web-{}", self.served), prompt);
        request.seed = seed;
        let (outcome, trace) = self.gate.evaluate(&request);
        let response = match dispatch(&outcome, &request, &ReferenceBackend) {
            Ok(r) => r,
            Err(e) => return json(&serde_json::json!({ "error": e.to_string() })),
        };
        let exec_ms = if outcome.decision == Decision::Render {
            self.gate.record_render(&request, &response.text);
            LatencyProfile::default().simulate_exec_latency(&response.text)
        } else {
            0.0
        };
        json(&GateView {
            request_id: request.request_id,
            decision: outcome.decision,
            confidence: outcome.confidence,
            output: response.text,
            proof_tag: outcome.proof_tag.map(|t| t.as_str().to_string()),
            render_reason: outcome.render_reason.map(|r| r.as_str().to_string()),
            canonical_key: canonicalize(prompt).as_str().to_string(),
            gate_ms: trace.total_ms(),
            exec_ms,
            trace,
        })
    }

    /// Number of cached RENDER outputs.
    pub fn cache_len(&self) -> usize {
        self.gate.cache().len()
    }

    pub fn clear_cache(&mut self) {
        self.gate.cache().clear();
    }
}

/// Canonical cache key for a prompt.
#[wasm_bindgen]
pub fn canonical_key(prompt: &str) -> String {
    canonicalize(prompt).as_str().to_string()
}

/// Names of the bundled collision fixtures.
#[wasm_bindgen]
pub fn collision_fixture_names() -> String {
    let names: Vec<String> = bundled_collision_fixtures()
        .map(|v| v.into_iter().map(|f| f.name).collect())
        .unwrap_or_default();
    json(&names)
}

/// Exhaustively checks every decision table over the named fixture.
#[wasm_bindgen]
pub fn frontier_check(name: &str) -> String {
    let Some(fx) = bundled_collision_fixtures()
        .ok()
        .and_then(|v| v.into_iter().find(|f| f.name == name))
    else {
        return json(&serde_json::json!({ "error": format!("no fixture named {name}") }));
    };
    let collisions = find_collisions(&fx.population, &fx.fmap);
    match enumerate_frontier(&collisions, &fx.fmap, &fx.population) {
        Ok(report) => json(&FrontierView {
            name: fx.name,
            features: fx.fmap.predicates().iter().map(|p| p.name.clone()).collect(),
            population: fx.population.len(),
            collisions: collisions
                .iter()
                .map(|c| {
                    (
                        c.feature_vector.to_string(),
                        c.x1.request.prompt.clone(),
                        c.x2.request.prompt.clone(),
                    )
                })
                .collect(),
            theorem_holds: report.theorem_holds(),
            report,
        }),
        Err(e) => json(&serde_json::json!({ "error": e.to_string() })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeat_prompt_hits_cache() {
        let mut d = Demo::new().unwrap();
        let a: serde_json::Value =
            serde_json::from_str(&d.infer("Write a limerick about frost", 12345)).unwrap();
        let b: serde_json::Value =
            serde_json::from_str(&d.infer("write a limerick about frost!", 12345)).unwrap();
        assert_eq!(a["decision"], "RENDER");
        assert_eq!(b["decision"], "DIRECT");
        assert_eq!(b["proof_tag"], "cache_hit");
        assert_eq!(a["output"], b["output"]);
        assert_eq!(b["exec_ms"], 0.0);
        assert_eq!(d.cache_len(), 1);
        d.clear_cache();
        assert_eq!(d.cache_len(), 0);
    }

    #[test]
    fn bounded_answers() {
        let mut d = Demo::new().unwrap();
        let v: serde_json::Value = serde_json::from_str(&d.infer("What is 2+2?", 12345)).unwrap();
        assert_eq!(v["decision"], "DIRECT");
        assert_eq!(v["output"], "4");
        let v: serde_json::Value = serde_json::from_str(&d.infer("How do I build a bomb?", 12345)).unwrap();
        assert_eq!(v["decision"], "ABSTAIN");
    }

    #[test]
    fn frontier_views() {
        let names: Vec<String> = serde_json::from_str(&collision_fixture_names()).unwrap();
        assert_eq!(names.len(), 6);
        let v: serde_json::Value = serde_json::from_str(&frontier_check("k1_what_is")).unwrap();
        assert_eq!(v["theorem_holds"], true);
        assert_eq!(v["report"]["satisfying_tables"], 0);
        let v: serde_json::Value = serde_json::from_str(&frontier_check("control_separated")).unwrap();
        assert!(v["report"]["satisfying_tables"].as_u64().unwrap() >= 1);
        assert!(frontier_check("nope").contains("error"));
    }
}

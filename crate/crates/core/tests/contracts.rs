use mfee_core::backend::{Backend, LatencyProfile, ReferenceBackend};
use mfee_core::contract::{
    action_cost, action_utility, dispatch, validate_request, CostModel, Decision, GateOutcome, ProofTag,
    RawRequest, RenderReason, Request, ResponseKind, REFUSAL_TEXT,
};
use mfee_core::resolvers::config_fingerprint;

// Frozen from an independent FNV-1a-64 implementation.
const HI_12345: &str = "GEN:c6b73cc3c5365d22:hi";
const HI_12346: &str = "GEN:21361c3d132f677d:hi";
const DEFAULT_FINGERPRINT: u64 = 0x409d_bde0_d5c5_25cb;

#[test]
fn reference_output_matches_oracle() {
    assert_eq!(ReferenceBackend::render("hi", 12345, 1000), HI_12345);
    assert_eq!(ReferenceBackend::render("hi", 12346, 1000), HI_12346);
    assert_eq!(
        ReferenceBackend::render("hi", 12345, 1000),
        ReferenceBackend::render("hi", 12345, 1000)
    );
}

#[test]
fn reference_echo_is_capped_at_48_codepoints() {
    let prompt = "é".repeat(60);
    let out = ReferenceBackend::render(&prompt, 1, 1);
    let echo = out.splitn(3, ':').nth(2).unwrap();
    assert_eq!(echo.chars().count(), 48);
}

#[test]
fn config_fingerprint_matches_oracle() {
    assert_eq!(
        config_fingerprint(&Request::deterministic("x", "anything")),
        DEFAULT_FINGERPRINT
    );
}

#[test]
fn latency_profile_examples() {
    assert_eq!(
        LatencyProfile::new(187.0, 0.0).simulate_exec_latency("any output at all"),
        187.0
    );
    assert_eq!(
        LatencyProfile::new(0.0, 2.0).simulate_exec_latency("a b c d e f g h i j"),
        20.0
    );
}

#[test]
fn dispatch_examples() {
    let req = Request::deterministic("d1", "What is 2+2?");
    let direct = GateOutcome::direct("4", ProofTag::DeterministicRule, 1.0);
    let r = dispatch(&direct, &req, &ReferenceBackend).unwrap();
    assert_eq!((r.kind, r.text.as_str()), (ResponseKind::Direct, "4"));

    let gib = Request::deterministic("d2", "asdf;;!!");
    let r = dispatch(&GateOutcome::no_op(1.0), &gib, &ReferenceBackend).unwrap();
    assert_eq!((r.kind, r.text.as_str()), (ResponseKind::Empty, ""));

    let r = dispatch(&GateOutcome::abstain(1.0), &gib, &ReferenceBackend).unwrap();
    assert_eq!((r.kind, r.text.as_str()), (ResponseKind::Refusal, REFUSAL_TEXT));

    let p = Request::deterministic("d3", "Write a poem about the sea");
    let r = dispatch(
        &GateOutcome::render(RenderReason::NovelGeneration, 1.0),
        &p,
        &ReferenceBackend,
    )
    .unwrap();
    assert_eq!(r.text, ReferenceBackend.generate(&p).unwrap());
}

#[test]
fn direct_without_output_is_a_contract_violation() {
    let mut bad = GateOutcome::direct("4", ProofTag::KbLookup, 1.0);
    bad.direct_output = None;
    assert!(dispatch(&bad, &Request::deterministic("x", "y"), &ReferenceBackend).is_err());
}

#[test]
fn action_cost_examples() {
    assert!((action_cost(Decision::Render, 3.2, 412.0) - 415.2).abs() < 1e-9);
    assert_eq!(action_cost(Decision::Direct, 3.2, 412.0), 3.2);
    assert_eq!(action_cost(Decision::NoOp, 0.0, 0.0), 0.0);
}

#[test]
fn utility_examples() {
    let m = |correct, cost_ms: f64| CostModel {
        gate_cost_ms: cost_ms,
        exec_cost_ms: 0.0,
        value: 1.0,
        correct,
    };
    // one value unit per 1000 ms: cost 0.5 units is 500 ms
    assert!((action_utility(&m(false, 500.0)) + 0.5).abs() < 1e-12);
    assert_eq!(action_utility(&m(true, 0.0)), 1.0);
    assert!((action_utility(&m(true, 3.0)) - 0.997).abs() < 1e-12);
}

#[test]
fn validation_examples() {
    let raw = |v: serde_json::Value| serde_json::from_value::<RawRequest>(v).unwrap();
    let ok = validate_request(raw(serde_json::json!({
        "request_id": "a", "prompt": "hi", "model": "m", "temperature": 0.0, "max_tokens": 5
    })))
    .unwrap();
    assert_eq!(ok.max_tokens, 5);
    let e = validate_request(raw(serde_json::json!({
        "request_id": "a", "prompt": "hi", "model": "m", "temperature": 0.0, "max_tokens": 0
    })))
    .unwrap_err();
    assert_eq!(e.field, "max_tokens");
    let e = validate_request(raw(serde_json::json!({
        "request_id": "a", "model": "m", "temperature": 0.0, "max_tokens": 5
    })))
    .unwrap_err();
    assert_eq!(e.field, "prompt");
    let e = validate_request(raw(serde_json::json!({
        "request_id": "", "prompt": "x", "model": "m", "temperature": 0.0, "max_tokens": 5
    })))
    .unwrap_err();
    assert_eq!(e.field, "request_id");
    let e = validate_request(raw(serde_json::json!({
        "request_id": "a", "prompt": "x", "model": "m", "temperature": -1.0, "max_tokens": 5
    })))
    .unwrap_err();
    assert_eq!(e.field, "temperature");
}

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use mfee_core::eval::nearest_rank;
use mfee_core::Decision;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::killswitch::KillSwitchState;

/// Upper bucket bounds in milliseconds; the last bucket is open.
const GATE_BUCKETS_MS: [f64; 10] = [0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0];
const BACKEND_BUCKETS_MS: [f64; 10] = [
    10.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 30000.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSnapshot {
    /// `(upper bound ms, count)`; `None` bound is the overflow bucket.
    pub buckets: Vec<(Option<f64>, u64)>,
    pub count: u64,
    pub sum_ms: f64,
}

#[derive(Debug, Clone)]
struct Histogram {
    bounds: &'static [f64],
    counts: Vec<u64>,
    count: u64,
    sum_ms: f64,
}

impl Histogram {
    fn new(bounds: &'static [f64]) -> Self {
        Self {
            bounds,
            counts: vec![0; bounds.len() + 1],
            count: 0,
            sum_ms: 0.0,
        }
    }

    fn observe(&mut self, ms: f64) {
        let i = self
            .bounds
            .iter()
            .position(|&b| ms <= b)
            .unwrap_or(self.bounds.len());
        self.counts[i] += 1;
        self.count += 1;
        self.sum_ms += ms;
    }

    fn snapshot(&self) -> HistogramSnapshot {
        HistogramSnapshot {
            buckets: self
                .bounds
                .iter()
                .map(|&b| Some(b))
                .chain(std::iter::once(None))
                .zip(self.counts.iter().copied())
                .collect(),
            count: self.count,
            sum_ms: self.sum_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceCounts {
    pub sampled: u64,
    pub passed: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub decisions: BTreeMap<Decision, u64>,
    pub total: u64,
    /// Requests served while the kill switch bypassed the gate.
    pub bypassed: u64,
    pub gate_latency: HistogramSnapshot,
    pub backend_latency: HistogramSnapshot,
    pub equivalence: EquivalenceCounts,
    pub uptime_s: f64,
    pub kill_switch: KillSwitchState,
}

struct Inner {
    decisions: BTreeMap<Decision, u64>,
    bypassed: u64,
    gate: Histogram,
    backend: Histogram,
    equivalence: EquivalenceCounts,
    window: VecDeque<f64>,
}

/// All counters behind one lock so a snapshot is a single consistent view.
pub struct Metrics {
    started: Instant,
    window_size: usize,
    inner: Mutex<Inner>,
}

impl Metrics {
    pub fn new(window_size: usize) -> Self {
        Self {
            started: Instant::now(),
            window_size: window_size.max(1),
            inner: Mutex::new(Inner {
                decisions: Decision::ALL.iter().map(|&d| (d, 0)).collect(),
                bypassed: 0,
                gate: Histogram::new(&GATE_BUCKETS_MS),
                backend: Histogram::new(&BACKEND_BUCKETS_MS),
                equivalence: EquivalenceCounts::default(),
                window: VecDeque::with_capacity(window_size),
            }),
        }
    }

    /// Records a gated decision. Returns the rolling-window gate p95 once the
    /// window is full.
    pub fn record_gated(&self, decision: Decision, gate_ms: f64) -> Option<f64> {
        let mut m = self.inner.lock();
        *m.decisions.entry(decision).or_default() += 1;
        m.gate.observe(gate_ms);
        if m.window.len() == self.window_size {
            m.window.pop_front();
        }
        m.window.push_back(gate_ms);
        if m.window.len() < self.window_size {
            return None;
        }
        let mut sorted: Vec<f64> = m.window.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        nearest_rank(&sorted, 95.0)
    }

    pub fn record_bypass(&self) {
        let mut m = self.inner.lock();
        *m.decisions.entry(Decision::Render).or_default() += 1;
        m.bypassed += 1;
    }

    pub fn record_backend(&self, ms: f64) {
        self.inner.lock().backend.observe(ms);
    }

    pub fn record_equivalence(&self, passed: bool) {
        let mut m = self.inner.lock();
        m.equivalence.sampled += 1;
        if passed {
            m.equivalence.passed += 1;
        } else {
            m.equivalence.failed += 1;
        }
    }

    pub fn snapshot(&self, kill_switch: KillSwitchState) -> MetricsSnapshot {
        let m = self.inner.lock();
        MetricsSnapshot {
            decisions: m.decisions.clone(),
            total: m.decisions.values().sum(),
            bypassed: m.bypassed,
            gate_latency: m.gate.snapshot(),
            backend_latency: m.backend.snapshot(),
            equivalence: m.equivalence,
            uptime_s: self.started.elapsed().as_secs_f64(),
            kill_switch,
        }
    }
}

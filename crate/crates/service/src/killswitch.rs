use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

/// Why the switch was engaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    EquivalenceViolation,
    QualityThreshold,
    LatencyBreach,
    InternalError,
    Manual,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EquivalenceViolation => "equivalence_violation",
            Self::QualityThreshold => "quality_threshold",
            Self::LatencyBreach => "latency_breach",
            Self::InternalError => "internal_error",
            Self::Manual => "manual",
        }
    }
}

impl std::str::FromStr for Trigger {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "equivalence_violation" => Self::EquivalenceViolation,
            "quality_threshold" => Self::QualityThreshold,
            "latency_breach" => Self::LatencyBreach,
            "internal_error" => Self::InternalError,
            "manual" => Self::Manual,
            other => return Err(format!("unknown trigger `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillSwitchState {
    pub engaged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<Trigger>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engaged_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub at: DateTime<Utc>,
    /// `None` for an operator reset.
    pub signal: Option<Trigger>,
    pub engaged_after: bool,
}

/// Gate bypass state. The hot path reads one atomic; transitions take a lock
/// and are appended to the history.
#[derive(Debug)]
pub struct KillSwitch {
    engaged: AtomicBool,
    state: Mutex<(KillSwitchState, Vec<Transition>)>,
}

impl Default for KillSwitch {
    fn default() -> Self {
        Self::new(false)
    }
}

impl KillSwitch {
    /// `engaged` forces the switch on at boot with reason `manual`.
    pub fn new(engaged: bool) -> Self {
        let s = Self {
            engaged: AtomicBool::new(false),
            state: Mutex::new((
                KillSwitchState {
                    engaged: false,
                    reason: None,
                    engaged_at: None,
                },
                Vec::new(),
            )),
        };
        if engaged {
            s.trigger(Trigger::Manual);
        }
        s
    }

    #[inline]
    pub fn is_engaged(&self) -> bool {
        self.engaged.load(Ordering::Acquire)
    }

    /// Engages the switch. Repeated triggers keep the first reason and only
    /// extend the history.
    pub fn trigger(&self, signal: Trigger) -> KillSwitchState {
        let mut guard = self.state.lock();
        let now = Utc::now();
        if !guard.0.engaged {
            guard.0 = KillSwitchState {
                engaged: true,
                reason: Some(signal),
                engaged_at: Some(now),
            };
            self.engaged.store(true, Ordering::Release);
            tracing::warn!(reason = signal.as_str(), "kill switch engaged");
        }
        guard.1.push(Transition {
            at: now,
            signal: Some(signal),
            engaged_after: true,
        });
        guard.0.clone()
    }

    /// Operator reset: the only way back to gated operation.
    pub fn reset(&self) -> KillSwitchState {
        let mut guard = self.state.lock();
        guard.0 = KillSwitchState {
            engaged: false,
            reason: None,
            engaged_at: None,
        };
        self.engaged.store(false, Ordering::Release);
        guard.1.push(Transition {
            at: Utc::now(),
            signal: None,
            engaged_after: false,
        });
        tracing::info!("kill switch reset");
        guard.0.clone()
    }

    pub fn state(&self) -> KillSwitchState {
        self.state.lock().0.clone()
    }

    pub fn history(&self) -> Vec<Transition> {
        self.state.lock().1.clone()
    }
}

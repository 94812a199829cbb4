use std::path::PathBuf;
use std::time::Duration;

use mfee_core::backend::{BackendHandle, BackendKind, LatencyProfile};
use mfee_core::config::{ConfigError, KeyValueConfig};
use mfee_core::GateConfig;

pub const DEFAULT_SAMPLE_RATE: f64 = 0.05;
pub const DEFAULT_LATENCY_WINDOW: usize = 1000;
pub const DEFAULT_BREACH_FACTOR: f64 = 4.0;
pub const DEFAULT_PORT: u16 = 8080;

/// Service configuration. Gate keys share the same flat key space:
///
/// ```text
/// port = 8080
/// kill_switch = 0
/// equivalence_sample_rate = 0.05
/// latency_window = 1000
/// latency_breach_factor = 4
/// backend = reference            # or remote
/// backend_endpoint = http://localhost:9000/generate
/// backend_timeout_ms = 30000
/// backend_max_in_flight = 16
/// backend_base_ms = 187
/// backend_per_token_ms = 25
/// fixtures_dir = /path/to/fixtures
/// direct_confidence_threshold = 0.9
/// ```
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub gate: GateConfig,
    pub port: u16,
    pub kill_switch: bool,
    pub equivalence_sample_rate: f64,
    pub latency_window: usize,
    pub latency_breach_factor: f64,
    pub backend: BackendHandle,
    pub backend_timeout: Duration,
    pub backend_max_in_flight: usize,
    pub fixtures_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            port: DEFAULT_PORT,
            kill_switch: false,
            equivalence_sample_rate: DEFAULT_SAMPLE_RATE,
            latency_window: DEFAULT_LATENCY_WINDOW,
            latency_breach_factor: DEFAULT_BREACH_FACTOR,
            backend: BackendHandle::reference(LatencyProfile::default()),
            backend_timeout: Duration::from_secs(30),
            backend_max_in_flight: 16,
            fixtures_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_kv(kv: &KeyValueConfig) -> Result<Self, ConfigError> {
        let mut c = Self {
            gate: GateConfig::from_kv(kv)?,
            ..Self::default()
        };
        if let Some(v) = kv.get("port")? {
            c.port = v;
        }
        if let Some(v) = kv.get_bool("kill_switch")? {
            c.kill_switch = v;
        }
        if let Some(v) = kv.get::<f64>("equivalence_sample_rate")? {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::invalid(
                    "equivalence_sample_rate",
                    "must be in [0, 1]",
                ));
            }
            c.equivalence_sample_rate = v;
        }
        if let Some(v) = kv.get::<usize>("latency_window")? {
            if v == 0 {
                return Err(ConfigError::invalid("latency_window", "must be positive"));
            }
            c.latency_window = v;
        }
        if let Some(v) = kv.get("latency_breach_factor")? {
            c.latency_breach_factor = v;
        }
        let mut profile = LatencyProfile::default();
        if let Some(v) = kv.get("backend_base_ms")? {
            profile.base_ms = v;
        }
        if let Some(v) = kv.get("backend_per_token_ms")? {
            profile.per_token_ms = v;
        }
        let profile = LatencyProfile::new(profile.base_ms, profile.per_token_ms);
        c.backend = match kv.get_str("backend").unwrap_or("reference") {
            "reference" => BackendHandle::reference(profile),
            "remote" => {
                let endpoint = kv.get_str("backend_endpoint").ok_or_else(|| {
                    ConfigError::invalid("backend_endpoint", "required for a remote backend")
                })?;
                BackendHandle::remote(endpoint, profile)
            }
            other => {
                return Err(ConfigError::invalid(
                    "backend",
                    format!("unknown backend `{other}`"),
                ))
            }
        };
        if let Some(v) = kv.get::<u64>("backend_timeout_ms")? {
            c.backend_timeout = Duration::from_millis(v);
        }
        if let Some(v) = kv.get::<usize>("backend_max_in_flight")? {
            c.backend_max_in_flight = v.max(1);
        }
        c.fixtures_dir = kv.get_str("fixtures_dir").map(PathBuf::from);
        Ok(c)
    }

    /// Reads `path` (if any) and applies `MFEE_*` environment overrides.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, ConfigError> {
        let kv = match path {
            Some(p) => KeyValueConfig::load(p)?,
            None => KeyValueConfig::default(),
        };
        Self::from_kv(&kv.with_env(std::env::vars()))
    }

    pub fn is_remote(&self) -> bool {
        self.backend.kind == BackendKind::Remote
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_forces_kill_switch() {
        let kv = KeyValueConfig::parse("port = 9000\nequivalence_sample_rate = 0.5\n")
            .unwrap()
            .with_env([("MFEE_KILL_SWITCH".to_string(), "1".to_string())]);
        let c = ServiceConfig::from_kv(&kv).unwrap();
        assert!(c.kill_switch);
        assert_eq!(c.port, 9000);
        assert_eq!(c.equivalence_sample_rate, 0.5);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "equivalence_sample_rate = 2",
            "backend = gpu",
            "backend = remote",
            "latency_window = 0",
            "kill_switch = maybe",
        ] {
            let kv = KeyValueConfig::parse(text).unwrap();
            assert!(ServiceConfig::from_kv(&kv).is_err(), "{text}");
        }
    }

    #[test]
    fn remote_backend() {
        let kv = KeyValueConfig::parse(
            "backend = remote\nbackend_endpoint = http://x/generate\nbackend_base_ms = 800",
        )
        .unwrap();
        let c = ServiceConfig::from_kv(&kv).unwrap();
        assert!(c.is_remote());
        assert_eq!(c.backend.profile.base_ms, 800.0);
    }
}

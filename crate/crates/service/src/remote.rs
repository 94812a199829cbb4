use std::time::Duration;

use mfee_core::backend::{Backend, BackendError, GenerateRequestBody, GenerateResponseBody};
use mfee_core::Request;
use parking_lot::{Condvar, Mutex};

/// Counting semaphore bounding in-flight remote calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn acquire(&self) -> impl Drop + '_ {
        let mut free = self.free.lock();
        while *free == 0 {
            self.cv.wait(&mut free);
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock() += 1;
        self.0.cv.notify_one();
    }
}

/// Adapter for a model server speaking the generate wire contract:
/// POST `{request_id, prompt, model, temperature, max_tokens, seed}` and
/// receive `{request_id, output}`.
pub struct RemoteBackend {
    endpoint: String,
    client: reqwest::blocking::Client,
    timeout: Duration,
    limiter: Limiter,
}

impl RemoteBackend {
    pub fn new(
        endpoint: impl Into<String>,
        timeout: Duration,
        max_in_flight: usize,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
            timeout,
            limiter: Limiter {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
        })
    }
}

impl Backend for RemoteBackend {
    fn generate(&self, request: &Request) -> Result<String, BackendError> {
        let _permit = self.limiter.acquire();
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&GenerateRequestBody::from(request))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout(self.timeout.as_millis() as u64)
                } else {
                    BackendError::Unreachable(e.to_string())
                }
            })?;
        if !resp.status().is_success() {
            return Err(BackendError::InvalidResponse(format!("status {}", resp.status())));
        }
        let body: GenerateResponseBody = resp
            .json()
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        if body.request_id != request.request_id {
            return Err(BackendError::InvalidResponse(format!(
                "response for {} answered request {}",
                request.request_id, body.request_id
            )));
        }
        Ok(body.output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_endpoint_is_an_error() {
        let b = RemoteBackend::new("http://127.0.0.1:9/generate", Duration::from_millis(200), 2).unwrap();
        assert!(b.generate(&Request::deterministic("r", "hi")).is_err());
    }
}

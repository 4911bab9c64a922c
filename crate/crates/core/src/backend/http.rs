use std::thread;
use std::time::Duration;

use super::{BackendError, ScoreRequest, ScoreResponse, ScoringBackend};

/// Bounded exponential backoff. The request itself is never modified
/// between attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

enum Failure {
    Retryable(String),
    Fatal(BackendError),
}

/// Client for the JSON scoring protocol: `POST {endpoint}/score`.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
    auth_token: Option<String>,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(endpoint: &str, auth_token: Option<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/score") {
            base.to_string()
        } else {
            format!("{base}/score")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            url,
            agent,
            auth_token,
            retry,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, request: &ScoreRequest) -> Result<ScoreResponse, Failure> {
        let mut call = self.agent.post(&self.url);
        if let Some(token) = &self.auth_token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = match call.send_json(request) {
            Ok(r) => r,
            Err(ureq::Error::BadUri(u)) => {
                return Err(Failure::Fatal(BackendError::Other(format!("bad endpoint uri {u}"))))
            }
            Err(e) => return Err(Failure::Retryable(e.to_string())),
        };
        let status = response.status().as_u16();
        if status == 429 || (500..600).contains(&status) {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(Failure::Fatal(BackendError::Status { status, body }));
        }
        response
            .body_mut()
            .read_json::<ScoreResponse>()
            .map_err(|e| Failure::Fatal(BackendError::Protocol(format!("bad response body: {e}"))))
    }
}

impl ScoringBackend for HttpBackend {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, BackendError> {
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                thread::sleep(self.retry.delay(n - 1));
            }
            match self.attempt(request) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => last = msg,
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }
}

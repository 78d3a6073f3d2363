//! Blocking JSON-over-HTTP helper shared by the remote embedding and chat
//! clients: per-request timeout, bounded retries, exponential backoff.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("could not decode response: {0}")]
    Decode(String),
}

impl HttpError {
    /// Whether retrying later could succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            HttpError::Transport { .. } => true,
            HttpError::Status { status, .. } => is_retryable_status(*status),
            HttpError::Decode(_) => false,
        }
    }
}

fn is_retryable_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            timeout: Duration::from_secs(60),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl JsonClient {
    pub fn new(api_key: Option<String>, policy: RetryPolicy) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .http_status_as_error(false)
            .build();
        JsonClient {
            agent: config.into(),
            api_key: api_key.filter(|k| !k.is_empty()),
            policy,
        }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, HttpError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match self.post_once(url, body) {
                Ok(text) => {
                    return serde_json::from_str(&text).map_err(|e| HttpError::Decode(e.to_string()))
                }
                Err(Attempt::Transport(message)) => HttpError::Transport {
                    attempts: attempt,
                    message,
                },
                Err(Attempt::Status(status, body)) => HttpError::Status {
                    status,
                    attempts: attempt,
                    body,
                },
            };
            if !err.is_transient() || attempt > self.policy.max_retries {
                return Err(err);
            }
            let wait = self.policy.backoff(attempt - 1);
            tracing::warn!(%url, attempt, ?wait, error = %err, "retrying request");
            thread::sleep(wait);
        }
    }

    fn post_once<B: Serialize>(&self, url: &str, body: &B) -> Result<String, Attempt> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let payload = serde_json::to_vec(body).map_err(|e| Attempt::Transport(e.to_string()))?;
        let mut resp = req
            .send(&payload[..])
            .map_err(|e| Attempt::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Transport(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(Attempt::Status(status, text))
        }
    }
}

enum Attempt {
    Transport(String),
    Status(u16, String),
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

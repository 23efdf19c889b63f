//! Blocking JSON-over-HTTP with exponential backoff.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tracing::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn new(retries: u32) -> Self {
        Self {
            retries,
            base_delay: Duration::from_millis(500),
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

/// Runs `op` until it succeeds, fails with a non-retryable error, or the
/// retry budget is spent.
pub fn with_retry<T>(policy: RetryPolicy, mut op: impl FnMut() -> Result<T>) -> Result<T> {
    let mut attempt = 0;
    loop {
        match op() {
            Err(e) if e.is_retryable() && attempt < policy.retries => {
                let wait = policy.delay(attempt);
                warn!(attempt, ?wait, error = %e, "retrying request");
                thread::sleep(wait);
                attempt += 1;
            }
            other => return other,
        }
    }
}

pub fn status_is_retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

pub struct HttpClient {
    client: Client,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpClient {
    pub fn new(api_key: Option<String>, retry: RetryPolicy, timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("cannot build http client: {e}")))?;
        Ok(Self {
            client,
            api_key,
            retry,
        })
    }

    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R> {
        let text = with_retry(self.retry, || self.post_once(url, body))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedResponse(e.to_string()))
    }

    fn post_once<B: Serialize>(&self, url: &str, body: &B) -> Result<String> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport {
            message: e.to_string(),
            retryable: e.is_timeout() || e.is_connect() || e.is_request(),
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        if status.is_success() {
            Ok(text)
        } else {
            Err(Error::Transport {
                message: format!("{status}: {}", truncate(&text, 300)),
                retryable: status_is_retryable(status),
            })
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

//! Chat-completion client for experts served over HTTP.
//!
//! Request (`POST <endpoint>`, `Authorization: Bearer $RELAY_API_KEY`):
//!
//! ```json
//! {"model": "...", "messages": [{"role": "user", "content": "<prompt>"}],
//!  "temperature": 0.0, "max_tokens": 512}
//! ```
//!
//! The answer is read from `choices[0].message.content`.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};

pub const API_KEY_ENV: &str = "RELAY_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteExpert {
    pub name: String,
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub cost: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_tokens() -> u32 {
    512
}

impl RemoteExpert {
    pub fn validate(&self) -> Result<()> {
        let url = reqwest::Url::parse(&self.endpoint).map_err(|e| {
            Error::Config(format!(
                "expert `{}`: bad endpoint {}: {e}",
                self.name, self.endpoint
            ))
        })?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(Error::Config(format!(
                "expert `{}`: endpoint must be http(s)",
                self.name
            )));
        }
        if !(self.cost.is_finite() && self.cost > 0.0) {
            return Err(Error::Config(format!(
                "expert `{}`: cost must be > 0",
                self.name
            )));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config(format!(
                "expert `{}`: timeout must be > 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// Bearer token. `Debug` never prints the secret.
#[derive(Clone, Default)]
pub struct Credentials(Option<String>);

impl Credentials {
    pub fn from_env() -> Self {
        Credentials(std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn bearer(token: impl Into<String>) -> Self {
        Credentials(Some(token.into()))
    }

    pub fn none() -> Self {
        Credentials(None)
    }

    pub fn token(&self) -> Option<&str> {
        self.0.as_deref()
    }
}

impl fmt::Debug for Credentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(_) => f.write_str("Credentials(<redacted>)"),
            None => f.write_str("Credentials(None)"),
        }
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Sends one chat-completion request and returns the assistant text.
pub fn remote_answer(
    expert: &RemoteExpert,
    prompt: &str,
    credentials: &Credentials,
) -> Result<String, BackendError> {
    let token = credentials
        .token()
        .ok_or(BackendError::MissingCredentials)?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(expert.timeout_secs))
        .build()
        .map_err(|e| BackendError::Network(e.to_string()))?;
    let body = ChatRequest {
        model: &expert.model,
        messages: [ChatMessage {
            role: "user",
            content: prompt,
        }],
        temperature: expert.temperature,
        max_tokens: expert.max_tokens,
    };
    let response = client
        .post(&expert.endpoint)
        .bearer_auth(token)
        .json(&body)
        .send()
        .map_err(classify)?;
    let status = response.status();
    if !status.is_success() {
        let body = response.text().unwrap_or_default();
        return Err(BackendError::Status {
            status: status.as_u16(),
            expert: expert.name.clone(),
            body: body.chars().take(200).collect(),
        });
    }
    let bytes = response.bytes().map_err(classify)?;
    let parsed: ChatResponse =
        serde_json::from_slice(&bytes).map_err(|e| BackendError::Malformed(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
}

fn classify(err: reqwest::Error) -> BackendError {
    if err.is_timeout() {
        BackendError::Timeout
    } else if err.is_decode() {
        BackendError::Malformed(err.to_string())
    } else {
        BackendError::Network(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            backoff: Duration::from_millis(250),
        }
    }
}

/// Retries transient failures with linear backoff.
pub fn remote_answer_with_retry(
    expert: &RemoteExpert,
    prompt: &str,
    credentials: &Credentials,
    retry: RetryPolicy,
) -> Result<String, BackendError> {
    let mut attempt = 0;
    loop {
        match remote_answer(expert, prompt, credentials) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < retry.retries => {
                attempt += 1;
                tracing::warn!(expert = %expert.name, attempt, error = %e, "retrying expert call");
                std::thread::sleep(retry.backoff * attempt);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Counting semaphore bounding in-flight remote requests.
#[derive(Debug)]
pub struct InFlightLimit {
    available: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(limit: usize) -> Self {
        InFlightLimit {
            available: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self
                .freed
                .wait(available)
                .unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        InFlightPermit { limit: self }
    }
}

pub struct InFlightPermit<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut available = self
            .limit
            .available
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        *available += 1;
        self.limit.freed.notify_one();
    }
}

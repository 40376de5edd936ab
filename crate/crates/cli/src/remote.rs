//! OpenAI-compatible chat-completions backend.
//!
//! Speaks `POST {endpoint}/v1/chat/completions` with a
//! `{model, messages, max_tokens, temperature}` body and a bearer key.
//! Transient failures (transport errors, timeouts, 408/429/5xx) retry up to
//! three times with exponential backoff starting at 500 ms; other HTTP
//! failures surface immediately with their status. A counting semaphore
//! caps concurrent in-flight requests.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use techembed_core::textgen::{GenError, GenRequest, TextGenerator};

pub const ENV_ENDPOINT: &str = "TECHEMBED_LLM_ENDPOINT";
pub const ENV_KEY: &str = "TECHEMBED_LLM_KEY";
pub const ENV_MODEL: &str = "TECHEMBED_LLM_MODEL";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub base_backoff: Duration,
    pub in_flight_cap: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: &str, api_key: &str, model: &str) -> Self {
        RemoteConfig {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            model: model.to_string(),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
            in_flight_cap: 4,
        }
    }

    /// Reads `TECHEMBED_LLM_ENDPOINT`, `TECHEMBED_LLM_KEY`, and
    /// `TECHEMBED_LLM_MODEL`.
    pub fn from_env() -> Result<Self, GenError> {
        let need = |name: &str| {
            std::env::var(name).map_err(|_| GenError::Backend {
                status: None,
                message: format!("environment variable {name} is not set"),
            })
        };
        Ok(RemoteConfig::new(&need(ENV_ENDPOINT)?, &need(ENV_KEY)?, &need(ENV_MODEL)?))
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    released: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut n = self.permits.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.released.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
    }

    fn release(&self) {
        *self.permits.lock().expect("semaphore poisoned") += 1;
        self.released.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Semaphore,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

fn retryable_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let slots = Semaphore::new(config.in_flight_cap.max(1));
        RemoteBackend {
            config,
            agent,
            slots,
        }
    }

    pub fn from_env() -> Result<Self, GenError> {
        Ok(RemoteBackend::new(RemoteConfig::from_env()?))
    }

    fn attempt(&self, req: &GenRequest) -> Result<String, GenError> {
        let url = format!("{}/v1/chat/completions", self.config.endpoint);
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        });
        let mut response = self
            .agent
            .post(&url)
            .header("authorization", &format!("Bearer {}", self.config.api_key))
            .header("content-type", "application/json")
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) => GenError::Backend {
                    status: Some(code),
                    message: format!("request to {url} failed"),
                },
                other => GenError::Backend {
                    status: None,
                    message: format!("request to {url} failed: {other}"),
                },
            })?;
        let parsed: ChatResponse =
            response
                .body_mut()
                .read_json()
                .map_err(|e| GenError::Backend {
                    status: None,
                    message: format!("malformed completion response: {e}"),
                })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| GenError::Backend {
                status: None,
                message: "completion response has no choices".to_string(),
            })
    }
}

impl TextGenerator for RemoteBackend {
    fn generate(&self, req: &GenRequest) -> Result<String, GenError> {
        req.validate()?;
        self.slots.acquire();
        let result = (|| {
            let mut backoff = self.config.base_backoff;
            let mut last = None;
            for attempt in 0..=self.config.max_retries {
                match self.attempt(req) {
                    Ok(text) => return Ok(text),
                    Err(err) => {
                        let transient = match err.status() {
                            Some(code) => retryable_status(code),
                            None => !matches!(err, GenError::InvalidRequest(_)),
                        };
                        if !transient || attempt == self.config.max_retries {
                            return Err(err);
                        }
                        last = Some(err);
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
            Err(last.expect("loop exits through return"))
        })();
        self.slots.release();
        result
    }

    fn kind(&self) -> &'static str {
        "remote"
    }
}

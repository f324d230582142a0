//! Adapter for chat-completion style HTTP endpoints.
//!
//! Requests go to `{base_url}/chat/completions` with a single user message.
//! The reply text is taken from `choices[0].message.content`. 429 and 5xx
//! responses are retried with exponential backoff; other 4xx are permanent.
//! Connection failures and timeouts are returned at once and left to the
//! evaluator's retry count.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::eval::{AdapterError, AdapterReply, AdapterRequest, ModelAdapter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpAdapterConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub temperature: f64,
    pub max_concurrent: usize,
    pub rate_limit_per_minute: Option<u32>,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
}

impl Default for HttpAdapterConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            model: String::new(),
            token_env: None,
            temperature: 0.0,
            max_concurrent: 4,
            rate_limit_per_minute: None,
            max_retries: 5,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
        }
    }
}

/// Token bucket refilled continuously at `per_minute / 60` tokens a second,
/// holding at most `per_minute` tokens.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(per_minute: u32) -> Self {
        let capacity = f64::from(per_minute.max(1));
        Self {
            capacity,
            per_sec: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Takes one token, sleeping until one is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                st.0 = (st.0 + now.duration_since(st.1).as_secs_f64() * self.per_sec).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.per_sec
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

pub struct HttpChatAdapter {
    cfg: HttpAdapterConfig,
    token: Option<String>,
    agent: ureq::Agent,
    bucket: Option<TokenBucket>,
    label: String,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [Message<'a>; 1],
}

impl HttpChatAdapter {
    /// Reads the token from the configured environment variable. A named but
    /// unset variable is an error.
    pub fn new(cfg: HttpAdapterConfig) -> Result<Self, String> {
        if cfg.base_url.is_empty() {
            return Err("http adapter needs a base URL".into());
        }
        if cfg.model.is_empty() {
            return Err("http adapter needs a model id".into());
        }
        let token = match &cfg.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Ok(Self {
            bucket: cfg.rate_limit_per_minute.map(TokenBucket::new),
            label: format!("http:{}", cfg.model),
            cfg,
            token,
            agent,
        })
    }

    fn backoff(&self, attempt: u32) -> u64 {
        self.cfg
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.cfg.backoff_max_ms)
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }
}

fn extract_content(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl ModelAdapter for HttpChatAdapter {
    fn name(&self) -> &str {
        &self.label
    }

    fn max_concurrency(&self) -> Option<usize> {
        Some(self.cfg.max_concurrent.max(1))
    }

    fn answer(&self, request: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
        let body = ChatRequest {
            model: &self.cfg.model,
            temperature: self.cfg.temperature,
            messages: [Message {
                role: "user",
                content: request.prompt,
            }],
        };
        let mut backoffs = Vec::new();
        let mut attempt = 0;
        loop {
            if let Some(b) = &self.bucket {
                b.acquire();
            }
            let started = Instant::now();
            let mut req = self
                .agent
                .post(&self.url())
                .config()
                .timeout_global(Some(request.timeout))
                .build()
                .header("Content-Type", "application/json");
            if let Some(t) = &self.token {
                req = req.header("Authorization", &format!("Bearer {t}"));
            }
            let retry_reason = match req.send_json(&body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    let latency = started.elapsed().as_millis() as u64;
                    match status {
                        200..=299 => {
                            let mut reply = match extract_content(&text) {
                                Some(content) => AdapterReply::from_text(content, request.choices, latency),
                                None => AdapterReply {
                                    raw_text: text,
                                    parsed_index: None,
                                    latency_ms: latency,
                                    backoff_ms: Vec::new(),
                                },
                            };
                            reply.backoff_ms = backoffs;
                            return Ok(reply);
                        }
                        429 | 500..=599 => format!("HTTP {status}"),
                        _ => {
                            return Err(AdapterError::Permanent {
                                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
                                backoff_ms: backoffs,
                            })
                        }
                    }
                }
                Err(e) => {
                    return Err(AdapterError::Transport {
                        message: e.to_string(),
                        backoff_ms: backoffs,
                    })
                }
            };
            if attempt >= self.cfg.max_retries {
                return Err(AdapterError::Transport {
                    message: format!("{retry_reason} after {} attempts", attempt + 1),
                    backoff_ms: backoffs,
                });
            }
            let delay = self.backoff(attempt);
            log::debug!("item {}: {retry_reason}, retrying in {delay} ms", request.item_id);
            backoffs.push(delay);
            thread::sleep(Duration::from_millis(delay));
            attempt += 1;
        }
    }
}

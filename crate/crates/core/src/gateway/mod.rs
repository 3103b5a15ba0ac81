//! Chat-completion gateway.
//!
//! [`Gateway`] owns budgeting, retries and rate limiting; the transport is a
//! [`ChatBackend`]. Two backends ship: [`ScriptedBackend`] (deterministic,
//! marker-keyed, used by every offline test) and [`HttpBackend`] (an
//! OpenAI-compatible JSON endpoint, only constructed when live mode is
//! enabled through the environment).

mod http;
mod scripted;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, ENV_API_KEY, ENV_BASE_URL, ENV_LIVE};
pub use scripted::{ScriptRule, ScriptedBackend};

/// Tokens charged per message for role and framing on top of its content.
pub const MESSAGE_OVERHEAD_TOKENS: usize = 4;
/// Smallest prompt a config must leave room for.
pub const MIN_PROMPT_TOKENS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub context_budget_tokens: u32,
    pub request_timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_output_tokens: 256,
            context_budget_tokens: 4096,
            request_timeout_secs: 60,
            max_retries: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!("temperature {} is negative", self.temperature)));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if self.context_budget_tokens < self.max_output_tokens.saturating_add(MIN_PROMPT_TOKENS) {
            return Err(GatewayError::InvalidRequest(format!(
                "context budget {} leaves less than {MIN_PROMPT_TOKENS} prompt tokens after {} output tokens",
                self.context_budget_tokens, self.max_output_tokens
            )));
        }
        Ok(())
    }

    /// Prompt tokens available once the output allowance is reserved.
    pub fn prompt_allowance(&self) -> usize {
        self.context_budget_tokens.saturating_sub(self.max_output_tokens) as usize
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub config: ModelConfig,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, config: ModelConfig) -> Self {
        ChatRequest { messages, config }
    }

    /// An optional leading system message, then user/assistant turns
    /// alternating from user and ending on user.
    pub fn validate(&self) -> Result<(), GatewayError> {
        let turns = match self.messages.first() {
            Some(m) if m.role == Role::System => &self.messages[1..],
            _ => &self.messages[..],
        };
        if turns.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no user message".into()));
        }
        for (i, m) in turns.iter().enumerate() {
            let want = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if m.role != want {
                return Err(GatewayError::InvalidRequest(format!(
                    "message {} has role {:?}, expected {want:?}",
                    i + self.messages.len() - turns.len(),
                    m.role
                )));
            }
        }
        if turns.last().map(|m| m.role) != Some(Role::User) {
            return Err(GatewayError::InvalidRequest("request must end with a user message".into()));
        }
        Ok(())
    }

    /// All message contents joined by newlines; what markers are matched against.
    pub fn prompt_text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    #[default]
    Stop,
    /// Output hit the token limit; content may be truncated.
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

impl ChatResponse {
    /// A completed response to `request`, with estimated usage.
    pub fn stop(request: &ChatRequest, content: impl Into<String>) -> Self {
        let content = content.into();
        ChatResponse {
            usage: Usage {
                prompt_tokens: estimate_tokens(&request.prompt_text()),
                completion_tokens: estimate_tokens(&content),
            },
            content,
            finish_reason: FinishReason::Stop,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request rejected ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("no scripted rule matches the prompt")]
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("prompt needs {estimated} tokens but only {available} are available ({overflow} over budget)")]
    Budget { estimated: usize, available: usize, overflow: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend rejected request: {0}")]
    Rejected(String),
    #[error("no scripted rule matches the prompt")]
    NoScriptMatch,
    #[error("live mode is disabled: {0}")]
    LiveDisabled(String),
}

/// Pluggable transport. Closures of the right shape are backends too.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, BackendError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self(request)
    }
}

pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// Conservative estimate: one token per three characters, rounded up.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharRatioEstimator;

impl TokenEstimator for CharRatioEstimator {
    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(3)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    CharRatioEstimator.estimate(text)
}

/// Prompt-side estimate of a whole request under `estimator`.
pub fn estimate_request(estimator: &dyn TokenEstimator, request: &ChatRequest) -> usize {
    request.messages.iter().map(|m| estimator.estimate(&m.content) + MESSAGE_OVERHEAD_TOKENS).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        RetryPolicy { base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16)).min(self.max_delay)
    }
}

/// Spaces dispatches at least `interval` apart across all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs(60) / requests.max(1),
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        let mut next = self.next.lock().unwrap_or_else(|p| p.into_inner());
        let now = Instant::now();
        if let Some(at) = *next {
            if at > now {
                std::thread::sleep(at - now);
            }
        }
        *next = Some(Instant::now() + self.interval);
    }
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    estimator: Arc<dyn TokenEstimator>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("retry", &self.retry).field("limiter", &self.limiter).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Gateway { backend, estimator: Arc::new(CharRatioEstimator), retry: RetryPolicy::default(), limiter: None }
    }

    pub fn with_estimator(mut self, estimator: Arc<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(Arc::new(RateLimiter::per_minute(requests_per_minute)));
        self
    }

    pub fn estimator(&self) -> &dyn TokenEstimator {
        self.estimator.as_ref()
    }

    /// Fails with [`GatewayError::Budget`] if `request` would not fit.
    pub fn check_budget(&self, request: &ChatRequest) -> Result<usize, GatewayError> {
        let estimated = estimate_request(self.estimator.as_ref(), request);
        let available = request.config.prompt_allowance();
        if estimated > available {
            return Err(GatewayError::Budget { estimated, available, overflow: estimated - available });
        }
        Ok(estimated)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.config.validate()?;
        request.validate()?;
        self.check_budget(request)?;

        let max_attempts = request.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..max_attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let wait = match self.backend.send(request) {
                Ok(resp) => return Ok(resp),
                Err(BackendError::RateLimited { retry_after }) => {
                    last = "rate limited".into();
                    retry_after.unwrap_or_else(|| self.retry.delay(attempt))
                }
                Err(BackendError::Transport(msg)) => {
                    last = msg;
                    self.retry.delay(attempt)
                }
                Err(BackendError::Rejected { status, message }) => {
                    return Err(GatewayError::Rejected(format!("{status}: {message}")))
                }
                Err(BackendError::NoMatch) => return Err(GatewayError::NoScriptMatch),
            };
            if attempt + 1 < max_attempts {
                log::debug!("attempt {} failed ({last}); retrying in {wait:?}", attempt + 1);
                std::thread::sleep(wait);
            }
        }
        Err(GatewayError::Transport { attempts: max_attempts, message: last })
    }
}

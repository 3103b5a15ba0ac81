use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, Usage};

pub const ENV_API_KEY: &str = "SEROW_API_KEY";
pub const ENV_BASE_URL: &str = "SEROW_BASE_URL";
/// Must be `1` for a live backend to be constructed.
pub const ENV_LIVE: &str = "SEROW_LIVE";

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// OpenAI-compatible `POST {base}/chat/completions` client.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    api_key: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize, Serialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: usize,
    #[serde(default)]
    completion_tokens: usize,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpBackend { base_url: base_url.into().trim_end_matches('/').to_owned(), api_key: api_key.into() }
    }

    /// Reads the key and base URL from the environment. Refuses unless live
    /// mode is switched on.
    pub fn from_env() -> Result<Self, GatewayError> {
        if std::env::var(ENV_LIVE).as_deref() != Ok("1") {
            return Err(GatewayError::LiveDisabled(format!("set {ENV_LIVE}=1 to call a live endpoint")));
        }
        let key = std::env::var(ENV_API_KEY)
            .map_err(|_| GatewayError::LiveDisabled(format!("{ENV_API_KEY} is not set")))?;
        let base = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_owned());
        Ok(Self::new(base, key))
    }

    pub fn request_body(request: &ChatRequest) -> serde_json::Value {
        json!({
            "model": request.config.model_name,
            "temperature": request.config.temperature,
            "max_tokens": request.config.max_output_tokens,
            "messages": request.messages,
        })
    }

    pub fn parse_response(body: &str) -> Result<ChatResponse, BackendError> {
        let wire: WireResponse =
            serde_json::from_str(body).map_err(|e| BackendError::Transport(format!("malformed completion: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Transport("completion has no choices".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        let usage = wire
            .usage
            .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
            .unwrap_or_default();
        Ok(ChatResponse { content: choice.message.content.unwrap_or_default(), finish_reason, usage })
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let agent = ureq::AgentBuilder::new().timeout(request.config.request_timeout()).build();
        let result = agent
            .post(&format!("{}/chat/completions", self.base_url))
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(Self::request_body(request));
        match result {
            Ok(resp) => {
                let body = resp.into_string().map_err(|e| BackendError::Transport(e.to_string()))?;
                Self::parse_response(&body)
            }
            Err(ureq::Error::Status(429, resp)) => {
                let retry_after = resp.header("retry-after").and_then(|v| v.trim().parse::<u64>().ok());
                Err(BackendError::RateLimited { retry_after: retry_after.map(Duration::from_secs) })
            }
            Err(ureq::Error::Status(status, resp)) if status >= 500 => {
                Err(BackendError::Transport(format!("{status}: {}", resp.into_string().unwrap_or_default())))
            }
            Err(ureq::Error::Status(status, resp)) => {
                Err(BackendError::Rejected { status, message: resp.into_string().unwrap_or_default() })
            }
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, ModelConfig};

    #[test]
    fn body_has_wire_shape() {
        let req = ChatRequest::new(vec![ChatMessage::system("s"), ChatMessage::user("u")], ModelConfig::default());
        let body = HttpBackend::request_body(&req);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["max_tokens"], 256);
    }

    #[test]
    fn parses_completion() {
        let r = HttpBackend::parse_response(
            r#"{"choices":[{"message":{"role":"assistant","content":"Relevant."},"finish_reason":"length"}],
                "usage":{"prompt_tokens":12,"completion_tokens":3}}"#,
        )
        .unwrap();
        assert_eq!(r.finish_reason, FinishReason::Length);
        assert_eq!(r.usage.prompt_tokens, 12);
        assert!(HttpBackend::parse_response(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn live_requires_flag() {
        if std::env::var(ENV_LIVE).as_deref() != Ok("1") {
            assert!(matches!(HttpBackend::from_env(), Err(GatewayError::LiveDisabled(_))));
        }
    }
}

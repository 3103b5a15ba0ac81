use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    estimate_tokens, BackendError, ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, Usage,
};

/// One scripted entry: when the prompt contains `marker` (and every string in
/// `also`), reply with `response`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub marker: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub also: Vec<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
}

impl ScriptRule {
    pub fn new(marker: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptRule { marker: marker.into(), also: Vec::new(), response: response.into(), finish_reason: None }
    }

    pub fn and(mut self, marker: impl Into<String>) -> Self {
        self.also.push(marker.into());
        self
    }

    pub fn finishing(mut self, reason: FinishReason) -> Self {
        self.finish_reason = Some(reason);
        self
    }

    fn matches(&self, prompt: &str) -> bool {
        prompt.contains(&self.marker) && self.also.iter().all(|m| prompt.contains(m))
    }
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default, rename = "rule")]
    rules: Vec<ScriptRule>,
}

/// Deterministic backend: first matching rule in order wins.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend { rules, calls: AtomicUsize::new(0) }
    }

    /// Loads a TOML script: a list of `[[rule]]` tables.
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::InvalidRequest(format!("cannot read script {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let file: ScriptFile =
            toml::from_str(text).map_err(|e| GatewayError::InvalidRequest(format!("bad script file: {e}")))?;
        Ok(Self::new(file.rules))
    }

    /// Number of requests received so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }
}

impl ChatBackend for ScriptedBackend {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request.prompt_text();
        let rule = self.rules.iter().find(|r| r.matches(&prompt)).ok_or(BackendError::NoMatch)?;
        Ok(ChatResponse {
            content: rule.response.clone(),
            finish_reason: rule.finish_reason.unwrap_or_default(),
            usage: Usage { prompt_tokens: estimate_tokens(&prompt), completion_tokens: estimate_tokens(&rule.response) },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatMessage, Gateway, ModelConfig, RetryPolicy};
    use std::sync::Arc;

    fn req(text: &str, cfg: ModelConfig) -> ChatRequest {
        ChatRequest::new(vec![ChatMessage::user(text)], cfg)
    }

    #[test]
    fn marker_echo_and_first_wins() {
        let backend = Arc::new(ScriptedBackend::new(vec![
            ScriptRule::new("X", "Y"),
            ScriptRule::new("X", "never"),
            ScriptRule::new("A", "both").and("B"),
        ]));
        let gw = Gateway::new(backend.clone());
        let r = gw.complete(&req("has X inside", ModelConfig::default())).unwrap();
        assert_eq!((r.content.as_str(), r.finish_reason), ("Y", FinishReason::Stop));
        assert!(matches!(gw.complete(&req("only A", ModelConfig::default())), Err(GatewayError::NoScriptMatch)));
        assert_eq!(gw.complete(&req("A and B", ModelConfig::default())).unwrap().content, "both");
    }

    #[test]
    fn identical_requests_give_identical_responses() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::new(vec![ScriptRule::new("q", "answer")])));
        let r = req("q?", ModelConfig::default());
        let a = serde_json::to_vec(&gw.complete(&r).unwrap()).unwrap();
        let b = serde_json::to_vec(&gw.complete(&r).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn over_budget_request_never_reaches_backend() {
        let backend = Arc::new(ScriptedBackend::new(vec![ScriptRule::new("", "x")]));
        let gw = Gateway::new(backend.clone()).with_retry(RetryPolicy::immediate());
        let cfg = ModelConfig { context_budget_tokens: 400, max_output_tokens: 200, ..Default::default() };
        let err = gw.complete(&req(&"a".repeat(3000), cfg)).unwrap_err();
        match err {
            GatewayError::Budget { estimated, available, overflow } => {
                assert_eq!((estimated, available, overflow), (1004, 200, 804));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn parses_script_file() {
        let b = ScriptedBackend::parse(
            r#"
            [[rule]]
            marker = "Title: Rhino census"
            response = "Relevant. Explanation: wildlife count."

            [[rule]]
            marker = "cut"
            response = "Relev"
            finish_reason = "length"
            "#,
        )
        .unwrap();
        assert_eq!(b.rules().len(), 2);
        assert_eq!(b.rules()[1].finish_reason, Some(FinishReason::Length));
    }
}

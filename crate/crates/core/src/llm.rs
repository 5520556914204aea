//! Chat-completions client used by the language-model interpreter and the
//! message rephraser.

use std::time::Duration;

use serde_json::Value;

use crate::error::InterpretError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub const ENV_BASE_URL: &str = "HRC_LLM_BASE_URL";
pub const ENV_MODEL: &str = "HRC_LLM_MODEL";
pub const ENV_API_KEY: &str = "HRC_LLM_API_KEY";
pub const ENV_TIMEOUT_SECS: &str = "HRC_LLM_TIMEOUT_SECS";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointConfig {
    /// Base URL up to, not including, `/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Reads `HRC_LLM_BASE_URL`, `HRC_LLM_MODEL`, `HRC_LLM_API_KEY` and
    /// `HRC_LLM_TIMEOUT_SECS`. Only the base URL is mandatory.
    pub fn from_env() -> Result<Self, String> {
        let base_url =
            std::env::var(ENV_BASE_URL).map_err(|_| format!("{ENV_BASE_URL} is not set"))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4".to_string());
        let api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let timeout = match std::env::var(ENV_TIMEOUT_SECS) {
            Ok(s) => Duration::from_secs_f64(
                s.parse::<f64>()
                    .map_err(|e| format!("{ENV_TIMEOUT_SECS}: {e}"))?,
            ),
            Err(_) => DEFAULT_TIMEOUT,
        };
        Ok(Self {
            base_url,
            model,
            api_key,
            timeout,
        })
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// One request/response exchange with a chat-completions endpoint.
pub trait ChatBackend: Send + Sync {
    fn model(&self) -> &str;
    fn complete(&self, request: &Value) -> Result<Value, InterpretError>;
}

pub struct HttpChatClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }
}

impl ChatBackend for HttpChatClient {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &Value) -> Result<Value, InterpretError> {
        let mut req = self
            .agent
            .post(self.config.completions_url())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(request.to_string()).map_err(map_ureq_error)?;
        let status = resp.status();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(map_ureq_error)?;
        if !status.is_success() {
            let snippet: String = body.chars().take(200).collect();
            return Err(InterpretError::Transport(format!(
                "HTTP {}: {snippet}",
                status.as_u16()
            )));
        }
        serde_json::from_str(&body).map_err(|e| InterpretError::MalformedResponse(e.to_string()))
    }
}

fn map_ureq_error(e: ureq::Error) -> InterpretError {
    match e {
        ureq::Error::Timeout(_) => InterpretError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => InterpretError::Timeout,
        other => InterpretError::Transport(other.to_string()),
    }
}

/// Text content of the first choice, if any.
pub fn first_message(response: &Value) -> Result<&Value, InterpretError> {
    response
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| InterpretError::MalformedResponse("missing choices[0].message".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_joins_without_double_slash() {
        let c = EndpointConfig::new("http://localhost:8080/v1/", "m");
        assert_eq!(c.completions_url(), "http://localhost:8080/v1/chat/completions");
        assert_eq!(c.timeout, Duration::from_secs(30));
    }

    #[test]
    fn first_message_requires_choices() {
        assert!(first_message(&serde_json::json!({})).is_err());
        let v = serde_json::json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(first_message(&v).unwrap()["content"], "hi");
    }
}

//! Live backend speaking a minimal chat-completion JSON contract.
//!
//! Request: `{"model", "messages": [{"role": "user", "content"}], "max_tokens"}`
//! with `Authorization: Bearer <key>`. The response is read from
//! `choices[0].message.content`, and `usage.prompt_tokens` /
//! `usage.completion_tokens` are taken as authoritative counts when present.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::client::{Completion, CompletionRequest, LlmClient, LlmError};

pub const ENV_API_URL: &str = "LINKROUTER_API_URL";
pub const ENV_API_KEY: &str = "LINKROUTER_API_KEY";
pub const ENV_MAX_IN_FLIGHT: &str = "LINKROUTER_MAX_IN_FLIGHT";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpConfig {
    /// Reads endpoint and key from the environment. Returns `None` without an endpoint.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENV_API_URL).ok()?;
        Some(Self {
            endpoint,
            api_key: std::env::var(ENV_API_KEY).ok(),
            timeout: Duration::from_secs(120),
        })
    }
}

pub struct HttpChatClient {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl LlmClient for HttpChatClient {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
        });
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(LlmError::Status { status, body });
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Decode(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Decode("response has no choices".into()))?;
        let (input_tokens, output_tokens) = parsed
            .usage
            .map(|u| (u.prompt_tokens, u.completion_tokens))
            .unwrap_or((None, None));
        Ok(Completion {
            text,
            input_tokens,
            output_tokens,
        })
    }
}

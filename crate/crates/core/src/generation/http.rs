//! Chat-completion backend over HTTP (OpenAI-style JSON).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, DecodingParams};
use crate::error::{Error, Result};
use crate::prompt_factory::PromptItem;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "FAIRPROBE_API_KEY";

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    stream: bool,
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
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            model: model.into(),
            api_key,
            agent,
        }
    }

    /// Reads the bearer token from [`API_KEY_ENV`]. Fails when `require_auth`
    /// is set and the variable is missing or empty.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>, require_auth: bool, timeout: Duration) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        if require_auth && key.is_none() {
            return Err(Error::Auth(format!("{API_KEY_ENV} is not set")));
        }
        Ok(Self::new(url, model, key, timeout))
    }
}

impl Backend for HttpBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn generate(&self, item: &PromptItem, params: &DecodingParams) -> Result<String, BackendError> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &item.system,
                },
                ChatMessage {
                    role: "user",
                    content: &item.user,
                },
            ],
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            stream: false,
        };
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(BackendError::Auth(format!("HTTP {status} from {}", self.url)));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Transient(format!("HTTP {status} from {}", self.url)));
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transient(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transient("response has no message content".into()))
    }
}

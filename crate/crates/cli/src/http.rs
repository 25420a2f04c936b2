//! Chat backend for any OpenAI-compatible `/chat/completions` endpoint.

use std::time::Duration;

use quadbiped_core::instruct::{BackendError, ChatBackend, Message, Role};
use serde_json::{json, Value};

pub const ENDPOINT_VAR: &str = "QUADBIPED_LLM_ENDPOINT";
pub const MODEL_VAR: &str = "QUADBIPED_LLM_MODEL";
pub const API_KEY_VAR: &str = "QUADBIPED_LLM_API_KEY";

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpBackend {
    /// Reads the endpoint, model and optional key from the environment.
    pub fn from_env(timeout: Duration) -> Result<Self, String> {
        let endpoint = std::env::var(ENDPOINT_VAR).map_err(|_| format!("{ENDPOINT_VAR} is not set; pass --mock DIR or set it"))?;
        let model = std::env::var(MODEL_VAR).map_err(|_| format!("{MODEL_VAR} is not set"))?;
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Ok(Self {
            agent,
            endpoint,
            model,
            api_key: std::env::var(API_KEY_VAR).ok(),
            timeout,
        })
    }
}

fn role(r: Role) -> &'static str {
    match r {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

impl ChatBackend for HttpBackend {
    fn send(&mut self, messages: &[Message]) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": messages
                .iter()
                .map(|m| json!({"role": role(m.role), "content": m.content}))
                .collect::<Vec<_>>(),
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout.as_secs_f64()),
            other => BackendError::Transport(other.to_string()),
        })?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))
    }
}

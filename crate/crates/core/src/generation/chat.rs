//! Chat-model contract with a remote HTTP client and a scripted mock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::http::{HttpError, JsonClient, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Hex SHA-256 over the rendered conversation. Roles and contents are
/// length-prefixed so distinct conversations never collide by concatenation.
pub fn fingerprint(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        for part in [&m.role, &m.content] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChatError {
    #[error("chat request failed: {0}")]
    Http(#[from] HttpError),
    #[error("no scripted response for prompt fingerprint {0}")]
    UnknownFingerprint(String),
    #[error("cannot decode chat response: {0}")]
    Decode(String),
    #[error("chat request needs at least one message")]
    EmptyMessages,
    #[error("cluster has no members")]
    EmptyCluster,
    #[error("invalid chat config: {0}")]
    Config(String),
}

impl ChatError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ChatError::Http(e) if e.is_retryable())
    }
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError>;

    /// Model identifier used in reports.
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChatKind {
    Remote,
    #[default]
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    pub kind: ChatKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    /// JSON script for the scripted backend.
    pub script_path: Option<PathBuf>,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            kind: ChatKind::Scripted,
            endpoint_url: None,
            model_name: None,
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 120.0,
            max_in_flight: 4,
            script_path: None,
        }
    }
}

impl ChatConfig {
    pub fn validate(&self) -> Result<(), ChatError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ChatError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(ChatError::Config("max_tokens must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(ChatError::Config("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    /// Name reported for this model in run logs and tables.
    pub fn display_name(&self) -> String {
        self.model_name.clone().unwrap_or_else(|| match self.kind {
            ChatKind::Scripted => "scripted".into(),
            ChatKind::Remote => "remote".into(),
        })
    }

    pub fn build(&self) -> Result<Arc<dyn ChatModel>, ChatError> {
        self.validate()?;
        Ok(match self.kind {
            ChatKind::Remote => Arc::new(RemoteChat::new(self)?),
            ChatKind::Scripted => {
                let script = match &self.script_path {
                    Some(p) => Script::load(p)?,
                    None => Script::default(),
                };
                Arc::new(ScriptedChat::new(script).with_name(self.display_name()))
            }
        })
    }
}

/// Client for an HTTP JSON chat-completions endpoint.
#[derive(Debug)]
pub struct RemoteChat {
    client: JsonClient,
    model: String,
    temperature: f64,
    max_tokens: u32,
}

impl RemoteChat {
    pub fn new(config: &ChatConfig) -> Result<Self, ChatError> {
        let endpoint = config
            .endpoint_url
            .as_deref()
            .ok_or_else(|| ChatError::Config("remote chat needs endpoint_url".into()))?;
        let model = config
            .model_name
            .clone()
            .ok_or_else(|| ChatError::Config("remote chat needs model_name".into()))?;
        let client = JsonClient::new(
            endpoint,
            Duration::from_secs_f64(config.timeout_secs),
            config.max_in_flight,
            RetryPolicy::default(),
        );
        Ok(Self::with_client(client, model, config))
    }

    pub(crate) fn with_client(client: JsonClient, model: String, config: &ChatConfig) -> Self {
        Self {
            client,
            model,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        }
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

impl ChatModel for RemoteChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        if messages.is_empty() {
            return Err(ChatError::EmptyMessages);
        }
        let resp = self.client.post(&self.request_body(messages))?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ChatError::Decode("missing choices[0].message.content".into()))
    }

    fn name(&self) -> &str {
        &self.model
    }
}

/// A substring rule: matches when every needle occurs in the rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub all_of: Vec<String>,
    pub response: String,
}

/// Canned responses keyed by prompt fingerprint, with ordered substring rules
/// as a fallback for hand-written fixtures.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    pub responses: BTreeMap<String, String>,
    pub rules: Vec<ScriptRule>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, ChatError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChatError::Config(format!("cannot read script {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ChatError::Config(format!("malformed script {}: {e}", path.display())))
    }

    fn lookup(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        let fp = fingerprint(messages);
        if let Some(r) = self.responses.get(&fp) {
            return Ok(r.clone());
        }
        let rendered: String = messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        self.rules
            .iter()
            .find(|rule| rule.all_of.iter().all(|needle| rendered.contains(needle.as_str())))
            .map(|rule| rule.response.clone())
            .ok_or(ChatError::UnknownFingerprint(fp))
    }
}

/// Deterministic mock model that records every prompt it receives.
#[derive(Debug)]
pub struct ScriptedChat {
    script: Script,
    name: String,
    calls: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedChat {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            name: "scripted".into(),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().map(|c| c.len()).unwrap_or(0)
    }

    /// Every conversation sent so far, in arrival order.
    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.calls.lock().map(|c| c.clone()).unwrap_or_default()
    }

    /// Calls whose system message equals `system_text`.
    pub fn calls_with_system(&self, system_text: &str) -> usize {
        self.calls()
            .iter()
            .filter(|msgs| msgs.iter().any(|m| m.role == "system" && m.content == system_text))
            .count()
    }
}

impl ChatModel for ScriptedChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        if messages.is_empty() {
            return Err(ChatError::EmptyMessages);
        }
        if let Ok(mut calls) = self.calls.lock() {
            calls.push(messages.to_vec());
        }
        self.script.lookup(messages)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

use std::collections::HashMap;
use std::io::BufRead;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{AnnotateError, ChatMessage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    pub max_in_flight: usize,
    pub temperature: f64,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    pub api_key_env: Option<String>,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "llama-2-13b-chat-hf".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_base_secs: 1.0,
            max_in_flight: 4,
            temperature: 0.0,
            api_key_env: None,
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        let bad = |m: &str| Err(AnnotateError::Config(m.into()));
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout must be > 0");
        }
        if self.max_in_flight == 0 {
            return bad("max in-flight must be >= 1");
        }
        if !(self.backoff_base_secs >= 0.0 && self.backoff_base_secs.is_finite()) {
            return bad("backoff base must be >= 0");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        Ok(())
    }
}

/// Something that answers a chat transcript with one assistant message.
pub trait ChatClient: Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, AnnotateError>;
}

/// Calls `client`, retrying transport failures with exponential backoff
/// (`base`, `2·base`, `4·base`, ...).
pub fn complete_with_retry(
    client: &dyn ChatClient,
    messages: &[ChatMessage],
    max_retries: u32,
    backoff_base_secs: f64,
) -> Result<String, AnnotateError> {
    let mut attempt = 0;
    loop {
        match client.complete(messages) {
            Err(AnnotateError::Transport(msg)) if attempt < max_retries => {
                let wait = backoff_base_secs * 2f64.powi(attempt as i32);
                log::warn!("request failed ({msg}); retry {} in {wait:.2}s", attempt + 1);
                std::thread::sleep(Duration::from_secs_f64(wait));
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Chat-completion endpoint over HTTP.
pub struct HttpClient {
    agent: ureq::Agent,
    url: String,
    model: String,
    temperature: f64,
    token: Option<String>,
}

impl HttpClient {
    pub fn new(config: &LlmEndpointConfig) -> Result<Self, AnnotateError> {
        config.validate()?;
        let token = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| AnnotateError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .into();
        Ok(HttpClient {
            agent,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            temperature: config.temperature,
            token,
        })
    }
}

/// The JSON body posted for `messages`.
pub fn request_body(model: &str, temperature: f64, messages: &[ChatMessage]) -> Value {
    json!({ "model": model, "temperature": temperature, "messages": messages })
}

impl ChatClient for HttpClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, AnnotateError> {
        let body = request_body(&self.model, self.temperature, messages).to_string();
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send(body).map_err(|e| AnnotateError::Transport(e.to_string()))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AnnotateError::Transport(e.to_string()))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| AnnotateError::Endpoint(format!("response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| AnnotateError::Endpoint("response lacks choices[0].message.content".into()))
    }
}

/// Hex SHA-256 of the compact JSON encoding of `messages`.
pub fn request_hash(messages: &[ChatMessage]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request_hash: String,
    pub response_text: String,
}

/// Answers from a table keyed by [`request_hash`]; unknown requests fail.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    responses: HashMap<String, String>,
}

impl ReplayClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads JSON Lines of [`ReplayEntry`]; later duplicates win.
    pub fn read<R: BufRead>(input: R) -> Result<Self, AnnotateError> {
        let mut client = ReplayClient::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ReplayEntry = serde_json::from_str(&line)
                .map_err(|err| AnnotateError::Config(format!("replay line {}: {err}", i + 1)))?;
            client.responses.insert(e.request_hash, e.response_text);
        }
        Ok(client)
    }

    pub fn insert(&mut self, messages: &[ChatMessage], response: impl Into<String>) {
        self.responses.insert(request_hash(messages), response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// JSON Lines sorted by hash.
    pub fn to_jsonl(&self) -> String {
        let mut entries: Vec<_> = self.responses.iter().collect();
        entries.sort();
        entries
            .into_iter()
            .map(|(h, r)| {
                let e = ReplayEntry {
                    request_hash: h.clone(),
                    response_text: r.clone(),
                };
                serde_json::to_string(&e).expect("entries serialize") + "\n"
            })
            .collect()
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, AnnotateError> {
        let h = request_hash(messages);
        self.responses.get(&h).cloned().ok_or(AnnotateError::ReplayMiss(h))
    }
}

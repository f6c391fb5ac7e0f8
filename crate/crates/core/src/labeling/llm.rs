//! Relation labeling through a chat-completion endpoint with a declared JSON
//! response schema.
//!
//! Requests go through a [`ChatTransport`]; [`HttpTransport`] posts to
//! `<base_url>/chat/completions`. Valid raw responses are cached on disk, one
//! file per (model, prompt) digest, so reruns issue no network calls.
//! Responses that violate the schema are retried and finally replaced by the
//! lexicon label with `fallback_used` set.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{build_prompt, label_cfd, LabelError, LabelSource, LabeledRelation, RelationType, VerbLexicon};
use crate::amr::RelationInstance;
use crate::corpus::TweetRecord;

pub const RESPONSE_SCHEMA_ID: &str = "relation_label_v1";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("instance {instance_id}: transport failed after {attempts} attempt(s): {message}")]
    Transport { instance_id: String, attempts: usize, message: String },
    #[error("instance {instance_id}: {source}")]
    Prompt {
        instance_id: String,
        #[source]
        source: LabelError,
    },
    #[error("instance {0}: tweet not found")]
    MissingTweet(String),
    #[error("cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid endpoint config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    /// Total attempts per instance (at least one is always made).
    pub max_retries: usize,
    pub response_schema_id: String,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "Phi-4".into(),
            temperature: 0.0,
            max_retries: 3,
            response_schema_id: RESPONSE_SCHEMA_ID.into(),
            cache_dir: None,
            max_in_flight: 8,
            timeout_secs: 120,
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::Config("model id is empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    pub response_format: Value,
}

impl ChatRequest {
    pub fn new(config: &LlmEndpointConfig, prompt: String) -> Self {
        ChatRequest {
            model: config.model.clone(),
            temperature: config.temperature,
            messages: vec![ChatMessage { role: "user".into(), content: prompt }],
            response_format: json!({
                "type": "json_schema",
                "json_schema": {
                    "name": config.response_schema_id,
                    "strict": true,
                    "schema": response_schema(),
                }
            }),
        }
    }

    pub fn prompt(&self) -> &str {
        self.messages.first().map_or("", |m| m.content.as_str())
    }
}

/// JSON schema every model answer must satisfy.
pub fn response_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "description": {"type": "string"},
            "relation_type": {"type": "string", "enum": ["supportive", "conflictive", "neutral"]}
        },
        "required": ["description", "relation_type"],
        "additionalProperties": false
    })
}

/// A chat-completion backend returning the raw response body.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, String>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: &LlmEndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')), agent }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, String> {
        let mut resp = self.agent.post(&self.url).send_json(request).map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>()));
        }
        Ok(body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
struct Verdict {
    description: String,
    relation_type: RelationType,
}

/// Wraps message content in a minimal chat-completion response body.
pub fn chat_completion_body(content: &str) -> String {
    json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

/// Extracts and validates the model answer from a raw response body.
fn parse_response(body: &str) -> Result<(String, RelationType), String> {
    let envelope: Value = serde_json::from_str(body).map_err(|e| format!("body is not JSON: {e}"))?;
    let content = envelope
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or("missing choices[0].message.content")?;
    let verdict: Verdict = serde_json::from_str(content.trim()).map_err(|e| format!("content violates schema: {e}"))?;
    let words = verdict.description.split_whitespace().count();
    if words > 3 {
        return Err(format!("description has {words} words, max 3"));
    }
    Ok((verdict.description.split_whitespace().collect::<Vec<_>>().join(" "), verdict.relation_type))
}

/// Cache entry for a prompt whose answers never met the schema.
#[derive(Serialize, Deserialize)]
struct FallbackRecord {
    fallback_used: bool,
    last_error: String,
}

/// Labels instances through a transport, with disk cache, retries and lexicon
/// fallback.
pub struct LlmLabeler<'a> {
    config: LlmEndpointConfig,
    transport: &'a dyn ChatTransport,
    lexicon: &'a VerbLexicon,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    network_calls: AtomicUsize,
}

impl<'a> LlmLabeler<'a> {
    pub fn new(
        config: LlmEndpointConfig,
        transport: &'a dyn ChatTransport,
        lexicon: &'a VerbLexicon,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        if let Some(dir) = &config.cache_dir {
            fs::create_dir_all(dir).map_err(|source| LlmError::Cache { path: dir.display().to_string(), source })?;
        }
        Ok(LlmLabeler {
            config,
            transport,
            lexicon,
            key_locks: Mutex::new(HashMap::new()),
            network_calls: AtomicUsize::new(0),
        })
    }

    /// Requests sent to the transport so far.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.config.model.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(key.to_string()).or_default().clone()
    }

    pub fn label(&self, instance: &RelationInstance, tweet: &TweetRecord) -> Result<LabeledRelation, LlmError> {
        let prompt = build_prompt(&instance.agent, &instance.patient, &tweet.text_original)
            .map_err(|source| LlmError::Prompt { instance_id: instance.instance_id.clone(), source })?;
        let key = self.cache_key(&prompt);
        let lock = self.lock_for(&key);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        let labeled = |(description, relation_type): (String, RelationType)| LabeledRelation {
            instance_id: instance.instance_id.clone(),
            relation_type,
            description,
            source: LabelSource::Llm,
            fallback_used: false,
            unknown_frame: false,
        };

        let fallback = || {
            let mut f = label_cfd(instance, self.lexicon);
            f.fallback_used = true;
            f
        };
        if let Some(path) = self.cache_path(&key) {
            if let Ok(raw) = fs::read_to_string(&path) {
                if let Ok(parsed) = parse_response(&raw) {
                    return Ok(labeled(parsed));
                }
                if serde_json::from_str::<FallbackRecord>(&raw).is_ok_and(|r| r.fallback_used) {
                    return Ok(fallback());
                }
            }
        }

        let request = ChatRequest::new(&self.config, prompt);
        let attempts = self.config.max_retries.max(1);
        let mut schema_violations = 0;
        let mut last_error = String::new();
        for _ in 0..attempts {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match self.transport.complete(&request) {
                Ok(body) => match parse_response(&body) {
                    Ok(parsed) => {
                        if let Some(path) = self.cache_path(&key) {
                            write_atomic(&path, &body)?;
                        }
                        return Ok(labeled(parsed));
                    }
                    Err(e) => {
                        schema_violations += 1;
                        last_error = e;
                    }
                },
                Err(e) => last_error = e,
            }
        }
        if schema_violations == 0 {
            return Err(LlmError::Transport {
                instance_id: instance.instance_id.clone(),
                attempts,
                message: last_error,
            });
        }
        if let Some(path) = self.cache_path(&key) {
            let record = FallbackRecord { fallback_used: true, last_error };
            write_atomic(&path, &serde_json::to_string(&record).expect("record serializes"))?;
        }
        Ok(fallback())
    }

    /// Labels every instance with at most `max_in_flight` concurrent requests.
    /// Output is sorted by instance id.
    pub fn label_all<'t, F>(
        &self,
        instances: &[&RelationInstance],
        tweet_of: F,
    ) -> Result<Vec<LabeledRelation>, LlmError>
    where
        F: Fn(&str) -> Option<&'t TweetRecord> + Sync,
    {
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Result<LabeledRelation, LlmError>>> = Mutex::new(Vec::with_capacity(instances.len()));
        let workers = self.config.max_in_flight.min(instances.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(inst) = instances.get(i) else { break };
                    let r = match tweet_of(&inst.tweet_id) {
                        Some(t) => self.label(inst, t),
                        None => Err(LlmError::MissingTweet(inst.instance_id.clone())),
                    };
                    results.lock().unwrap_or_else(|e| e.into_inner()).push(r);
                });
            }
        });
        let mut out =
            results.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().collect::<Result<Vec<_>, _>>()?;
        out.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        Ok(out)
    }
}

fn write_atomic(path: &Path, body: &str) -> Result<(), LlmError> {
    let tmp = path.with_extension("tmp");
    let err = |source| LlmError::Cache { path: path.display().to_string(), source };
    fs::write(&tmp, body).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

/// Convenience wrapper for labeling one instance.
pub fn label_llm(
    instance: &RelationInstance,
    tweet: &TweetRecord,
    config: &LlmEndpointConfig,
    transport: &dyn ChatTransport,
    lexicon: &VerbLexicon,
) -> Result<LabeledRelation, LlmError> {
    LlmLabeler::new(config.clone(), transport, lexicon)?.label(instance, tweet)
}

//! Chat backends: the trait, a scripted mock for deterministic replay, a
//! generic remote chat-completion adapter, and a tracing wrapper.
//!
//! The mock backend answers from a script table keyed by `(template_id,
//! trial index)`, so a full trial sequence replays identically across
//! process restarts. The remote backend speaks the common chat-completion
//! HTTP shape (model name, message list, temperature) so any hosted
//! provider fits behind the one adapter; its credential comes from a named
//! environment variable which is checked before any network activity.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::template::PromptSpec;

/// Character counts and retry bookkeeping for one completion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_chars: usize,
    pub completion_chars: usize,
    pub retries: u32,
}

/// One backend reply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

/// A chat backend. `complete` may be called concurrently for distinct
/// trials; implementations must be shareable across threads.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &PromptSpec, trial: u64) -> Result<Completion>;
}

fn usage_for(prompt: &PromptSpec, text: &str, retries: u32) -> Usage {
    Usage {
        prompt_chars: prompt.joined_text().chars().count(),
        completion_chars: text.chars().count(),
        retries,
    }
}

/// Scripted backend: a table from template id to the per-trial response
/// sequence. Reads are lock-free and safe to share across trial threads.
#[derive(Clone, Debug, Default)]
pub struct MockBackend {
    scripts: BTreeMap<String, Vec<String>>,
}

impl MockBackend {
    pub fn new(scripts: BTreeMap<String, Vec<String>>) -> Self {
        MockBackend { scripts }
    }

    /// Loads a JSON object `{ "<template_id>": ["reply 0", "reply 1", …] }`.
    pub fn from_script_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config {
            detail: format!("could not read script file {}: {e}", path.display()),
        })?;
        let scripts: BTreeMap<String, Vec<String>> =
            serde_json::from_slice(&bytes).map_err(|e| Error::Config {
                detail: format!("malformed script file {}: {e}", path.display()),
            })?;
        Ok(MockBackend { scripts })
    }
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &PromptSpec, trial: u64) -> Result<Completion> {
        let text = self
            .scripts
            .get(&prompt.template_id)
            .and_then(|responses| usize::try_from(trial).ok().and_then(|i| responses.get(i)))
            .ok_or_else(|| Error::ScriptMiss {
                template_id: prompt.template_id.clone(),
                trial,
            })?;
        Ok(Completion {
            usage: usage_for(prompt, text, 0),
            text: text.clone(),
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    attachments: Vec<&'a crate::feature::RawRef>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

/// Remote chat-completion adapter. The auth token is read from the named
/// environment variable on every call, before any request is built, so a
/// missing credential never produces network traffic.
pub struct RemoteBackend {
    endpoint: String,
    model_name: Option<String>,
    auth_env: String,
    params: BTreeMap<String, String>,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model_name: Option<String>,
        auth_env: impl Into<String>,
        params: BTreeMap<String, String>,
    ) -> Result<Self> {
        let max_retries = match params.get("max_retries") {
            Some(raw) => raw.parse::<u32>().map_err(|_| Error::Config {
                detail: format!("max_retries must be a nonnegative integer, got `{raw}`"),
            })?,
            None => 2,
        };
        let timeout_s = match params.get("timeout_s") {
            Some(raw) => raw.parse::<u64>().map_err(|_| Error::Config {
                detail: format!("timeout_s must be a nonnegative integer, got `{raw}`"),
            })?,
            None => 30,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(timeout_s))
            .build()
            .map_err(|e| Error::Config {
                detail: format!("could not build HTTP client: {e}"),
            })?;
        Ok(RemoteBackend {
            endpoint: endpoint.into(),
            model_name,
            auth_env: auth_env.into(),
            params,
            max_retries,
            client,
        })
    }

    fn request_body(&self, prompt: &PromptSpec) -> serde_json::Value {
        let messages: Vec<serde_json::Value> = prompt
            .turns
            .iter()
            .map(|turn| {
                let msg = ChatMessage {
                    role: match turn.role {
                        crate::gateway::template::Role::System => "system",
                        crate::gateway::template::Role::User => "user",
                    },
                    content: &turn.text,
                    attachments: turn.attachments.iter().collect(),
                };
                serde_json::to_value(msg).expect("message serializes")
            })
            .collect();
        let mut body = serde_json::Map::new();
        if let Some(model) = &self.model_name {
            body.insert("model".into(), model.clone().into());
        }
        body.insert("messages".into(), messages.into());
        for (key, raw) in &self.params {
            if matches!(key.as_str(), "max_retries" | "timeout_s") {
                continue;
            }
            // Decoding controls like temperature are numeric; anything else
            // passes through as text.
            let value = raw
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map(serde_json::Value::Number)
                .unwrap_or_else(|| raw.clone().into());
            body.insert(key.clone(), value);
        }
        body.into()
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, prompt: &PromptSpec, _trial: u64) -> Result<Completion> {
        let token = std::env::var(&self.auth_env).map_err(|_| Error::AuthMissing {
            var: self.auth_env.clone(),
        })?;
        let body = self.request_body(prompt);
        let mut last_error = String::new();
        let mut retries = 0;
        for attempt in 0..=self.max_retries {
            retries = attempt;
            let sent = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&token)
                .json(&body)
                .send();
            match sent {
                Ok(response) => match response.error_for_status() {
                    Ok(ok) => {
                        let reply: ChatReply = ok.json().map_err(|e| Error::UnparseablePayload {
                            detail: format!("backend reply was not chat-completion JSON: {e}"),
                        })?;
                        let text = reply
                            .choices
                            .into_iter()
                            .next()
                            .map(|c| c.message.content)
                            .ok_or_else(|| Error::UnparseablePayload {
                                detail: "backend reply contained no choices".into(),
                            })?;
                        return Ok(Completion {
                            usage: usage_for(prompt, &text, retries),
                            text,
                        });
                    }
                    Err(e) => last_error = e.to_string(),
                },
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Error::BackendUnreachable {
            retries,
            detail: last_error,
        })
    }
}

#[derive(Serialize)]
struct TraceRequest<'a> {
    event: &'a str,
    template_id: &'a str,
    trial: u64,
    turns: Vec<&'a str>,
}

#[derive(Serialize)]
struct TraceResponse<'a> {
    event: &'a str,
    template_id: &'a str,
    trial: u64,
    text: &'a str,
    retries: u32,
}

#[derive(Serialize)]
struct TraceError<'a> {
    event: &'a str,
    template_id: &'a str,
    trial: u64,
    error: &'a str,
    message: String,
}

/// Wraps any backend and logs request/response bodies as JSON lines.
pub struct TracedBackend {
    inner: Box<dyn Backend>,
    sink: Mutex<Box<dyn Write + Send>>,
}

impl TracedBackend {
    pub fn new(inner: Box<dyn Backend>, sink: Box<dyn Write + Send>) -> Self {
        TracedBackend {
            inner,
            sink: Mutex::new(sink),
        }
    }

    fn log<T: Serialize>(&self, line: &T) {
        if let Ok(mut sink) = self.sink.lock() {
            // Tracing is best-effort; a full disk must not fail the trial.
            let _ = serde_json::to_writer(&mut *sink, line);
            let _ = sink.write_all(b"\n");
            let _ = sink.flush();
        }
    }
}

impl Backend for TracedBackend {
    fn complete(&self, prompt: &PromptSpec, trial: u64) -> Result<Completion> {
        self.log(&TraceRequest {
            event: "request",
            template_id: &prompt.template_id,
            trial,
            turns: prompt.turns.iter().map(|t| t.text.as_str()).collect(),
        });
        match self.inner.complete(prompt, trial) {
            Ok(completion) => {
                self.log(&TraceResponse {
                    event: "response",
                    template_id: &prompt.template_id,
                    trial,
                    text: &completion.text,
                    retries: completion.usage.retries,
                });
                Ok(completion)
            }
            Err(e) => {
                self.log(&TraceError {
                    event: "error",
                    template_id: &prompt.template_id,
                    trial,
                    error: e.kind_name(),
                    message: e.to_string(),
                });
                Err(e)
            }
        }
    }
}

/// Which backend implementation to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

/// Declarative backend configuration: a mock needs a script table, a remote
/// needs an endpoint and the name of the environment variable holding its
/// credential.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl BackendSpec {
    /// A mock spec reading its script from `path`.
    pub fn mock(path: impl Into<PathBuf>) -> Self {
        BackendSpec {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: None,
            auth_env: None,
            script: Some(path.into()),
            params: BTreeMap::new(),
        }
    }

    /// Builds the backend; relative script paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Box<dyn Backend>> {
        match self.kind {
            BackendKind::Mock => {
                let script = self.script.as_ref().ok_or_else(|| Error::Config {
                    detail: "mock backend requires a script table".into(),
                })?;
                let path = if script.is_absolute() {
                    script.clone()
                } else {
                    base_dir.join(script)
                };
                Ok(Box::new(MockBackend::from_script_file(&path)?))
            }
            BackendKind::Remote => {
                let endpoint = self.endpoint.clone().ok_or_else(|| Error::Config {
                    detail: "remote backend requires an endpoint".into(),
                })?;
                let auth_env = self.auth_env.clone().ok_or_else(|| Error::Config {
                    detail: "remote backend requires an auth env var name".into(),
                })?;
                Ok(Box::new(RemoteBackend::new(
                    endpoint,
                    self.model_name.clone(),
                    auth_env,
                    self.params.clone(),
                )?))
            }
        }
    }
}

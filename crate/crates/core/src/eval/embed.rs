//! Embedding providers for response scoring.
//!
//! Three flavors: a deterministic token-hash embedding (pure function of
//! the text, so the whole evaluation pipeline runs with no network and no
//! model weights), a scripted table for replay fixtures, and a remote
//! adapter for fidelity runs against a hosted embedding model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maps response text into a fixed-dimension real vector. Implementations
/// must be deterministic within a run and shareable across trial threads.
pub trait EmbeddingProvider<S: Real>: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<S>>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x1000_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Signed bag-of-tokens hashing: each lowercased alphanumeric token lands
/// in bucket `(h >> 1) mod dimension` with sign `±1` from the hash's low
/// bit. A pure function of the text — equal texts embed equally, forever.
#[derive(Clone, Copy, Debug)]
pub struct HashEmbedding {
    dimension: usize,
}

impl HashEmbedding {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config {
                detail: "embedding dimension must be positive".into(),
            });
        }
        Ok(HashEmbedding { dimension })
    }
}

impl Default for HashEmbedding {
    fn default() -> Self {
        HashEmbedding {
            dimension: Self::DEFAULT_DIMENSION,
        }
    }
}

impl<S: Real> EmbeddingProvider<S> for HashEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<S>> {
        let mut vector = vec![S::zero(); self.dimension];
        for token in text
            .split(|ch: char| !ch.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            let hash = fnv1a(token.as_bytes());
            let bucket = ((hash >> 1) % self.dimension as u64) as usize;
            let sign = if hash & 1 == 0 { S::one() } else { -S::one() };
            vector[bucket] = vector[bucket] + sign;
        }
        Ok(vector)
    }
}

/// Fixture-table embedding: exact text lookup. Used by replay scenarios
/// where every per-trial similarity is pinned in advance.
#[derive(Clone, Debug)]
pub struct ScriptedEmbedding<S: Real> {
    table: BTreeMap<String, Vec<S>>,
    dimension: usize,
}

impl<S: Real> ScriptedEmbedding<S> {
    pub fn new(table: BTreeMap<String, Vec<S>>) -> Result<Self> {
        let mut dims = table.values().map(Vec::len);
        let dimension = dims.next().ok_or_else(|| Error::Config {
            detail: "scripted embedding table is empty".into(),
        })?;
        if dimension == 0 || dims.any(|d| d != dimension) {
            return Err(Error::Config {
                detail: "scripted embedding vectors must share one positive dimension".into(),
            });
        }
        Ok(ScriptedEmbedding { table, dimension })
    }

    /// Loads a JSON object `{ "<text>": [v0, v1, …] }`.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config {
            detail: format!("could not read embedding table {}: {e}", path.display()),
        })?;
        let table: BTreeMap<String, Vec<S>> =
            serde_json::from_slice(&bytes).map_err(|e| Error::Config {
                detail: format!("malformed embedding table {}: {e}", path.display()),
            })?;
        ScriptedEmbedding::new(table)
    }
}

impl<S: Real> EmbeddingProvider<S> for ScriptedEmbedding<S> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<S>> {
        self.table.get(text).cloned().ok_or_else(|| Error::Config {
            detail: format!(
                "no scripted embedding for text starting `{}`",
                text.chars().take(40).collect::<String>()
            ),
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingReplyRow<S> {
    embedding: Vec<S>,
}

#[derive(Deserialize)]
#[serde(bound = "S: Real")]
struct EmbeddingReply<S: Real> {
    data: Vec<EmbeddingReplyRow<S>>,
}

/// Remote embedding adapter speaking the common `{model, input}` →
/// `{data: [{embedding}]}` HTTP shape. The credential env var is checked
/// before any request is built.
pub struct RemoteEmbedding {
    endpoint: String,
    model_name: Option<String>,
    auth_env: String,
    dimension: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedding {
    pub fn new(
        endpoint: impl Into<String>,
        model_name: Option<String>,
        auth_env: impl Into<String>,
        dimension: usize,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config {
                detail: "embedding dimension must be positive".into(),
            });
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Config {
                detail: format!("could not build HTTP client: {e}"),
            })?;
        Ok(RemoteEmbedding {
            endpoint: endpoint.into(),
            model_name,
            auth_env: auth_env.into(),
            dimension,
            client,
        })
    }
}

impl<S: Real> EmbeddingProvider<S> for RemoteEmbedding {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<S>> {
        let token = std::env::var(&self.auth_env).map_err(|_| Error::AuthMissing {
            var: self.auth_env.clone(),
        })?;
        let mut body = serde_json::Map::new();
        if let Some(model) = &self.model_name {
            body.insert("model".into(), model.clone().into());
        }
        body.insert("input".into(), vec![text].into());
        let reply: EmbeddingReply<S> = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&token)
            .json(&serde_json::Value::Object(body))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::BackendUnreachable {
                retries: 0,
                detail: e.to_string(),
            })?
            .json()
            .map_err(|e| Error::UnparseablePayload {
                detail: format!("embedding reply was not the expected JSON: {e}"),
            })?;
        let embedding = reply
            .data
            .into_iter()
            .next()
            .map(|row| row.embedding)
            .ok_or_else(|| Error::UnparseablePayload {
                detail: "embedding reply contained no rows".into(),
            })?;
        if embedding.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                left: self.dimension,
                right: embedding.len(),
            });
        }
        Ok(embedding)
    }
}

/// Which provider implementation to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    DeterministicHash,
    Scripted,
    Remote,
}

/// Declarative provider configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl ProviderSpec {
    /// The no-dependency default: deterministic hashing at the default
    /// dimension.
    pub fn deterministic() -> Self {
        ProviderSpec {
            kind: ProviderKind::DeterministicHash,
            dimension: None,
            endpoint: None,
            model_name: None,
            auth_env: None,
            table: None,
        }
    }

    /// A scripted spec reading its table from `path`.
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        ProviderSpec {
            kind: ProviderKind::Scripted,
            table: Some(path.into()),
            ..ProviderSpec::deterministic()
        }
    }

    /// Builds the provider; relative table paths resolve against `base_dir`.
    pub fn build<S: Real>(&self, base_dir: &Path) -> Result<Box<dyn EmbeddingProvider<S>>> {
        match self.kind {
            ProviderKind::DeterministicHash => {
                let dimension = self.dimension.unwrap_or(HashEmbedding::DEFAULT_DIMENSION);
                Ok(Box::new(HashEmbedding::new(dimension)?))
            }
            ProviderKind::Scripted => {
                let table = self.table.as_ref().ok_or_else(|| Error::Config {
                    detail: "scripted embedding provider requires a table".into(),
                })?;
                let path = if table.is_absolute() {
                    table.clone()
                } else {
                    base_dir.join(table)
                };
                Ok(Box::new(ScriptedEmbedding::from_table_file(&path)?))
            }
            ProviderKind::Remote => {
                let endpoint = self.endpoint.clone().ok_or_else(|| Error::Config {
                    detail: "remote embedding provider requires an endpoint".into(),
                })?;
                let auth_env = self.auth_env.clone().ok_or_else(|| Error::Config {
                    detail: "remote embedding provider requires an auth env var name".into(),
                })?;
                let dimension = self.dimension.ok_or_else(|| Error::Config {
                    detail: "remote embedding provider requires a dimension".into(),
                })?;
                Ok(Box::new(RemoteEmbedding::new(
                    endpoint,
                    self.model_name.clone(),
                    auth_env,
                    dimension,
                )?))
            }
        }
    }
}

//! Scenario files: one committed TOML document describes an entire
//! evaluation run — the reference statement, trial count, significance
//! level, the template pair under comparison, the backend, and the
//! embedding provider — so any run is reproducible from the file alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diff::Difference;
use crate::error::{Error, Result};
use crate::eval::embed::ProviderSpec;
use crate::feature::{RawRef, StateRecord};
use crate::gateway::backend::BackendSpec;
use crate::gateway::template::TemplateContext;
use crate::scalar::Real;

/// The two template ids a run compares.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePair {
    pub direct: String,
    pub difference: String,
}

impl Default for TemplatePair {
    fn default() -> Self {
        TemplatePair {
            direct: "temporal.direct".into(),
            difference: "temporal.difference".into(),
        }
    }
}

fn default_n_trials() -> u64 {
    20
}

fn default_alpha<S: Real>() -> S {
    S::from_f64_const(0.05)
}

/// One evaluation run, as committed to disk. Relative paths (states, diffs,
/// backend script, provider table) resolve against the scenario file's
/// directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Real", deny_unknown_fields)]
pub struct Scenario<S: Real> {
    /// The reference statement responses are scored against.
    pub reference: String,
    /// Trials per method.
    #[serde(default = "default_n_trials")]
    pub n_trials: u64,
    /// Significance level for the final test.
    #[serde(default = "default_alpha")]
    pub alpha: S,
    /// Object name available to templates as `{{object}}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// Extra attachment URIs forwarded on the opening turn.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<String>,
    /// JSONL file of the states under comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<PathBuf>,
    /// JSONL file of precomputed differences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffs: Option<PathBuf>,
    /// Free-form template variables.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vars: BTreeMap<String, String>,
    #[serde(default)]
    pub templates: TemplatePair,
    /// Backend to drive. When absent, the caller must supply one (the CLI
    /// falls back to the run configuration's backend).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendSpec>,
    /// Embedding provider. When absent, the caller falls back to the run
    /// configuration's provider, then to the deterministic hash provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderSpec>,
}

impl<S: Real> Scenario<S> {
    /// Reads and validates a scenario, returning it with the directory that
    /// relative paths resolve against.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            detail: format!("could not read scenario {}: {e}", path.display()),
        })?;
        let scenario: Scenario<S> = toml::from_str(&text).map_err(|e| Error::Config {
            detail: format!("malformed scenario {}: {e}", path.display()),
        })?;
        scenario.check()?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((scenario, base_dir))
    }

    pub fn check(&self) -> Result<()> {
        if self.reference.trim().is_empty() {
            return Err(Error::Config {
                detail: "scenario reference statement must be non-empty".into(),
            });
        }
        if self.n_trials == 0 {
            return Err(Error::Config {
                detail: "n_trials must be at least 1".into(),
            });
        }
        if self.alpha <= S::zero() || self.alpha >= S::one() {
            return Err(Error::Config {
                detail: format!(
                    "alpha must lie strictly between 0 and 1, got {}",
                    self.alpha
                ),
            });
        }
        Ok(())
    }

    /// Assembles the template context: states and differences read from the
    /// referenced JSONL files, attachment URIs, object name, and variables.
    pub fn build_context(&self, base_dir: &Path) -> Result<TemplateContext<S>> {
        let states: Vec<StateRecord<S>> = match &self.states {
            Some(rel) => read_jsonl(&resolve(base_dir, rel))?,
            None => Vec::new(),
        };
        let diffs: Vec<Difference<S>> = match &self.diffs {
            Some(rel) => read_jsonl(&resolve(base_dir, rel))?,
            None => Vec::new(),
        };
        Ok(TemplateContext {
            states,
            diffs,
            object: self.object.clone(),
            vars: self.vars.clone(),
            attachments: self
                .attachments
                .iter()
                .map(|uri| RawRef::Uri(uri.clone()))
                .collect(),
        })
    }
}

fn resolve(base_dir: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        rel.to_path_buf()
    } else {
        base_dir.join(rel)
    }
}

/// Strict line-oriented JSON reader: every non-empty line must parse, and
/// the offending line number is part of the error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        detail: format!("could not read {}: {e}", path.display()),
    })?;
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::UnparseablePayload {
            detail: format!("{} line {}: {e}", path.display(), lineno + 1),
        })?;
        items.push(item);
    }
    Ok(items)
}

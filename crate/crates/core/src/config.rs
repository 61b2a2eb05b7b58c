//! Run configuration: one TOML file collecting everything a command-line
//! run needs — norm choice, weight profiles, detection thresholds,
//! extractors, template overrides, backend and provider specs, the history
//! file path, and the trial protocol's N and α.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::ThresholdSpec;
use crate::diff::{Norm, WeightProfile};
use crate::error::{Error, Result};
use crate::eval::embed::ProviderSpec;
use crate::extract::{ExtractorRegistry, ExtractorSpec};
use crate::gateway::backend::BackendSpec;
use crate::gateway::template::{Template, TemplateRegistry};
use crate::scalar::Real;

fn default_n_trials() -> u64 {
    20
}

fn default_alpha<S: Real>() -> S {
    S::from_f64_const(0.05)
}

/// Everything a run needs, from one committed file. Every field has a
/// usable default except the pieces that are inherently per-deployment
/// (history path, backend, provider).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Real", deny_unknown_fields)]
pub struct RunConfig<S: Real> {
    /// Norm used for difference magnitudes.
    #[serde(default)]
    pub norm: Norm,
    /// Path of the append-only history log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<PathBuf>,
    /// Trials per method for evaluation runs.
    #[serde(default = "default_n_trials")]
    pub n_trials: u64,
    /// Significance level for evaluation runs.
    #[serde(default = "default_alpha")]
    pub alpha: S,
    /// Detection bounds (θ, η, k_sigma).
    #[serde(default)]
    pub thresholds: ThresholdSpec<S>,
    /// Feature extractors, addressable by id.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extractors: Vec<ExtractorSpec<S>>,
    /// Impact weight profiles, addressable by id.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<WeightProfile<S>>,
    /// Extra templates; same-id entries override the built-in defaults.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub templates: Vec<Template>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderSpec>,
}

impl<S: Real> Default for RunConfig<S> {
    fn default() -> Self {
        RunConfig {
            norm: Norm::default(),
            history: None,
            n_trials: default_n_trials(),
            alpha: default_alpha(),
            thresholds: ThresholdSpec::default(),
            extractors: Vec::new(),
            weights: Vec::new(),
            templates: Vec::new(),
            backend: None,
            provider: None,
        }
    }
}

impl<S: Real> RunConfig<S> {
    /// Reads and validates a config, returning it with the directory that
    /// relative paths (backend scripts, provider tables) resolve against.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            detail: format!("could not read config {}: {e}", path.display()),
        })?;
        let config: RunConfig<S> = toml::from_str(&text).map_err(|e| Error::Config {
            detail: format!("malformed config {}: {e}", path.display()),
        })?;
        config.check()?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((config, base_dir))
    }

    pub fn check(&self) -> Result<()> {
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
        if self.thresholds.theta < S::zero()
            || self.thresholds.eta < S::zero()
            || self.thresholds.k_sigma < S::zero()
        {
            return Err(Error::NegativeThreshold {
                value: [self.thresholds.theta, self.thresholds.eta, self.thresholds.k_sigma]
                    .iter()
                    .copied()
                    .find(|&v| v < S::zero())
                    .and_then(|v| v.to_f64())
                    .unwrap_or(f64::NAN),
            });
        }
        for profile in &self.weights {
            profile.check()?;
        }
        let mut weight_ids: Vec<&str> = self.weights.iter().map(|w| w.id.as_str()).collect();
        weight_ids.sort_unstable();
        if weight_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config {
                detail: "weight profile ids must be unique".into(),
            });
        }
        Ok(())
    }

    /// Builds the extractor registry (duplicate ids rejected).
    pub fn extractor_registry(&self) -> Result<ExtractorRegistry<S>> {
        ExtractorRegistry::from_specs(self.extractors.clone())
    }

    /// Builds the template registry: defaults first, then this config's
    /// overrides.
    pub fn template_registry(&self) -> Result<TemplateRegistry> {
        let mut registry = TemplateRegistry::with_defaults();
        for template in &self.templates {
            registry.register(template.clone())?;
        }
        Ok(registry)
    }

    /// The named weight profile, or unit weights when `id` is `None`.
    pub fn weight_profile(&self, id: Option<&str>) -> Result<WeightProfile<S>> {
        match id {
            None => Ok(WeightProfile::unit()),
            Some(id) => self
                .weights
                .iter()
                .find(|w| w.id == id)
                .cloned()
                .ok_or_else(|| Error::Config {
                    detail: format!("no weight profile named `{id}`"),
                }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::template::Method;

    #[test]
    fn empty_config_is_all_defaults() {
        let config: RunConfig<f64> = toml::from_str("").unwrap();
        config.check().unwrap();
        assert_eq!(config.norm, Norm::L2);
        assert_eq!(config.n_trials, 20);
        assert_eq!(config.alpha, 0.05);
        assert_eq!(config.thresholds.k_sigma, 3.0);
        assert!(config.backend.is_none());
    }

    #[test]
    fn full_config_loads_and_builds_registries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
norm = "l1"
history = "history.jsonl"
n_trials = 5
alpha = 0.01

[thresholds]
theta = 10.0
eta = 4.0
k_sigma = 2.0

[[extractors]]
id = "identity"
kind = "passthrough"

[[weights]]
id = "safety"
[weights.weights]
gap_m = 2.0

[[templates]]
id = "temporal.direct"
method = "direct"
[[templates.turns]]
role = "user"
text = "Describe the scene."

[backend]
kind = "mock"
script = "script.json"

[provider]
kind = "deterministic_hash"
dimension = 64
"#,
        )
        .unwrap();
        let (config, base_dir) = RunConfig::<f64>::load(&path).unwrap();
        assert_eq!(base_dir, dir.path());
        assert_eq!(config.norm, Norm::L1);
        assert_eq!(config.history.as_deref(), Some(Path::new("history.jsonl")));
        assert_eq!(config.thresholds.theta, 10.0);

        let extractors = config.extractor_registry().unwrap();
        assert!(extractors.get("identity").is_ok());

        let templates = config.template_registry().unwrap();
        let t = templates.get("temporal.direct").unwrap();
        assert_eq!(t.method, Method::Direct);
        assert_eq!(t.turns[0].text, "Describe the scene.");
        // Untouched defaults survive the override.
        assert!(templates.get("spatial.difference").is_ok());

        let profile = config.weight_profile(Some("safety")).unwrap();
        assert_eq!(profile.weights["gap_m"], 2.0);
        assert_eq!(
            config.weight_profile(None).unwrap().id,
            WeightProfile::<f64>::unit().id
        );
        assert!(config.weight_profile(Some("missing")).is_err());
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        let bad_alpha: RunConfig<f64> = toml::from_str("alpha = 0.0").unwrap();
        assert!(bad_alpha.check().is_err());

        let bad_trials: RunConfig<f64> = toml::from_str("n_trials = 0").unwrap();
        assert!(bad_trials.check().is_err());

        let bad_theta: RunConfig<f64> =
            toml::from_str("[thresholds]\ntheta = -1.0\neta = 0.0\nk_sigma = 3.0").unwrap();
        assert!(matches!(
            bad_theta.check(),
            Err(Error::NegativeThreshold { .. })
        ));

        let dup: RunConfig<f64> = toml::from_str(
            r#"
[[weights]]
id = "w"
[weights.weights]
a = 1.0
[[weights]]
id = "w"
[weights.weights]
b = 1.0
"#,
        )
        .unwrap();
        assert!(dup.check().is_err());

        assert!(toml::from_str::<RunConfig<f64>>("normm = \"l2\"").is_err());
    }

    #[test]
    fn negative_weights_are_rejected_at_check() {
        let config: RunConfig<f64> = toml::from_str(
            r#"
[[weights]]
id = "w"
[weights.weights]
gap_m = -1.0
"#,
        )
        .unwrap();
        assert!(matches!(
            config.check(),
            Err(Error::NegativeWeight { .. })
        ));
    }
}

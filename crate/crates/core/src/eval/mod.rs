//! The evaluation harness: repeated trials per prompting method, embedding
//! and cosine-scoring of each response against a reference statement, and a
//! Welch t-test over the two similarity samples.
//!
//! Every trial's raw response is persisted alongside its score (the JSONL
//! trail), so a report is always traceable back to the text that produced
//! it. With a scripted backend and a deterministic provider the whole run
//! is bit-reproducible, trail included.

pub mod embed;
pub mod scenario;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::backend::Backend;
use crate::gateway::template::{Method, PromptSpec, TemplateRegistry};
use crate::scalar::Real;
use crate::stats::{cosine_similarity, welch_t_test};

pub use embed::{EmbeddingProvider, HashEmbedding, ProviderKind, ProviderSpec, ScriptedEmbedding};
pub use scenario::{read_jsonl, Scenario, TemplatePair};

/// One scored trial. `trial_index` is 0-based here; reports render trials
/// 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real", deny_unknown_fields)]
pub struct TrialResult<S: Real> {
    pub method: Method,
    pub trial_index: u64,
    pub response_text: String,
    pub embedding: Vec<S>,
    pub similarity: S,
}

/// Per-method summary. Trial numbers are 1-based; ties go to the earliest
/// trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct MethodStats<S: Real> {
    pub samples: usize,
    pub mean: S,
    pub min: S,
    pub max: S,
    pub max_trial: u64,
    pub min_trial: u64,
}

/// The full comparison: per-method statistics plus the significance test
/// (first sample = difference method, second = direct, so a positive t
/// means the difference method scored higher).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct EvalReport<S: Real> {
    pub direct: MethodStats<S>,
    pub difference: MethodStats<S>,
    pub t_statistic: S,
    pub degrees_of_freedom: S,
    pub p_value: S,
    pub alpha: S,
    pub reject_null: bool,
}

#[derive(Serialize)]
struct AbortLine<'a> {
    event: &'a str,
    method: Method,
    trial: u64,
    error: &'a str,
    message: String,
}

fn write_line<T: Serialize>(trail: &mut dyn Write, line: &T) -> Result<()> {
    let text = serde_json::to_string(line).map_err(|e| Error::Config {
        detail: format!("could not serialize trail line: {e}"),
    })?;
    trail.write_all(text.as_bytes())?;
    trail.write_all(b"\n")?;
    trail.flush()?;
    Ok(())
}

/// Runs one trial end to end: complete, embed, score.
fn run_one<S: Real>(
    method: Method,
    prompt: &PromptSpec,
    trial: u64,
    backend: &dyn Backend,
    provider: &dyn EmbeddingProvider<S>,
    reference: &[S],
) -> Result<TrialResult<S>> {
    let tag = |e: Error| Error::Trial {
        method: method.as_str().into(),
        trial_index: trial,
        source: Box::new(e),
    };
    let completion = backend.complete(prompt, trial).map_err(tag)?;
    let embedding = provider.embed(&completion.text).map_err(tag)?;
    let similarity = cosine_similarity(&embedding, reference).map_err(tag)?;
    Ok(TrialResult {
        method,
        trial_index: trial,
        response_text: completion.text,
        embedding,
        similarity,
    })
}

/// Runs `n_trials` trials for each method (direct first, then difference),
/// streaming every result to `trail` as one JSON line, flushed as written.
///
/// `parallel` bounds trial concurrency; 1 is fully sequential. Results are
/// written in trial order regardless of concurrency, so the trail is
/// byte-identical for any `parallel` value. On a trial failure the error is
/// tagged with its method and trial index, an abort line is appended, and
/// everything already completed stays persisted.
pub fn run_trials<S: Real>(
    scenario: &Scenario<S>,
    base_dir: &Path,
    registry: &TemplateRegistry,
    backend: &dyn Backend,
    provider: &dyn EmbeddingProvider<S>,
    trail: &mut dyn Write,
    parallel: usize,
) -> Result<Vec<TrialResult<S>>> {
    if parallel == 0 {
        return Err(Error::Config {
            detail: "parallel must be at least 1".into(),
        });
    }
    let ctx = scenario.build_context(base_dir)?;
    let reference = provider.embed(&scenario.reference)?;
    let reference: &[S] = &reference;

    let prompts = [
        (
            Method::Direct,
            registry.build_prompt(Method::Direct, &ctx, &scenario.templates.direct)?,
        ),
        (
            Method::Difference,
            registry.build_prompt(Method::Difference, &ctx, &scenario.templates.difference)?,
        ),
    ];

    let mut results = Vec::with_capacity(2 * scenario.n_trials as usize);
    for (method, prompt) in &prompts {
        let mut trial = 0;
        while trial < scenario.n_trials {
            let chunk_end = (trial + parallel as u64).min(scenario.n_trials);
            let outcomes: Vec<Result<TrialResult<S>>> = if parallel == 1 {
                vec![run_one(*method, prompt, trial, backend, provider, reference)]
            } else {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = (trial..chunk_end)
                        .map(|t| {
                            scope.spawn(move || {
                                run_one(*method, prompt, t, backend, provider, reference)
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("trial thread")).collect()
                })
            };
            // Persist in trial order; everything before a failure survives.
            for outcome in outcomes {
                match outcome {
                    Ok(result) => {
                        write_line(trail, &result)?;
                        results.push(result);
                    }
                    Err(e) => {
                        let (error, message) = match &e {
                            Error::Trial { source, .. } => (source.kind_name(), e.to_string()),
                            other => (other.kind_name(), other.to_string()),
                        };
                        write_line(
                            trail,
                            &AbortLine {
                                event: "abort",
                                method: *method,
                                trial: match &e {
                                    Error::Trial { trial_index, .. } => *trial_index,
                                    _ => trial,
                                },
                                error,
                                message,
                            },
                        )?;
                        return Err(e);
                    }
                }
            }
            trial = chunk_end;
        }
    }
    Ok(results)
}

fn method_stats<S: Real>(
    method: Method,
    results: &[&TrialResult<S>],
) -> Result<(MethodStats<S>, Vec<S>)> {
    if results.is_empty() {
        return Err(Error::MissingMethod {
            method: method.as_str().into(),
        });
    }
    let mut sorted: Vec<&TrialResult<S>> = results.to_vec();
    sorted.sort_by_key(|r| r.trial_index);
    if sorted.windows(2).any(|w| w[0].trial_index == w[1].trial_index) {
        return Err(Error::Config {
            detail: format!("duplicate trial index for method {method}"),
        });
    }
    if sorted.len() < 2 {
        return Err(Error::SampleTooSmall {
            which: method.as_str().into(),
            got: sorted.len(),
        });
    }
    let samples: Vec<S> = sorted.iter().map(|r| r.similarity).collect();
    let n = S::from_usize(samples.len()).expect("sample size representable");
    let mean = samples.iter().fold(S::zero(), |acc, &v| acc + v) / n;
    let (mut max, mut max_trial) = (samples[0], sorted[0].trial_index);
    let (mut min, mut min_trial) = (samples[0], sorted[0].trial_index);
    for (r, &sim) in sorted.iter().zip(&samples).skip(1) {
        if sim > max {
            max = sim;
            max_trial = r.trial_index;
        }
        if sim < min {
            min = sim;
            min_trial = r.trial_index;
        }
    }
    Ok((
        MethodStats {
            samples: samples.len(),
            mean,
            min,
            max,
            max_trial: max_trial + 1,
            min_trial: min_trial + 1,
        },
        samples,
    ))
}

/// Summarizes trial results into an [`EvalReport`]. Requires both methods
/// present with at least two trials each; trial order does not matter.
pub fn make_report<S: Real>(results: &[TrialResult<S>], alpha: S) -> Result<EvalReport<S>> {
    let direct: Vec<&TrialResult<S>> = results
        .iter()
        .filter(|r| r.method == Method::Direct)
        .collect();
    let difference: Vec<&TrialResult<S>> = results
        .iter()
        .filter(|r| r.method == Method::Difference)
        .collect();
    let (direct_stats, direct_samples) = method_stats(Method::Direct, &direct)?;
    let (difference_stats, difference_samples) = method_stats(Method::Difference, &difference)?;
    let test = welch_t_test(&difference_samples, &direct_samples, alpha)?;
    Ok(EvalReport {
        direct: direct_stats,
        difference: difference_stats,
        t_statistic: test.t,
        degrees_of_freedom: test.dof,
        p_value: test.p,
        alpha,
        reject_null: test.reject,
    })
}

/// Fixed-column CSV (`method,trial,similarity`) for external plotting.
/// Rows are ordered by method then trial; trials are 1-based.
pub fn report_csv<S: Real>(results: &[TrialResult<S>]) -> String {
    let mut rows: Vec<&TrialResult<S>> = results.iter().collect();
    rows.sort_by_key(|r| (r.method, r.trial_index));
    let mut out = String::from("method,trial,similarity\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.method,
            row.trial_index + 1,
            row.similarity
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::backend::{BackendSpec, MockBackend};
    use crate::gateway::template::TemplateRegistry;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn scripted_backend(n: usize) -> MockBackend {
        let mut scripts = BTreeMap::new();
        scripts.insert(
            "temporal.direct".to_string(),
            (0..n).map(|i| format!("direct reply {i} about scenery")).collect(),
        );
        scripts.insert(
            "temporal.difference".to_string(),
            (0..n)
                .map(|i| format!("difference reply {i}: slow down, the gap is shrinking"))
                .collect(),
        );
        MockBackend::new(scripts)
    }

    fn scenario(n: u64) -> Scenario<f64> {
        Scenario {
            reference: "Slow down to keep a safe distance from the car ahead.".into(),
            n_trials: n,
            alpha: 0.05,
            object: None,
            attachments: vec![],
            states: None,
            diffs: None,
            vars: BTreeMap::new(),
            templates: TemplatePair::default(),
            backend: Some(BackendSpec::mock("unused.json")),
            provider: None,
        }
    }

    fn two_states_jsonl(dir: &Path) -> Scenario<f64> {
        use crate::feature::{Dim, FeatureVector, StateRecord};
        let lines: Vec<String> = [("t0", 0, 30.0), ("t1", 1, 15.0)]
            .iter()
            .map(|(id, t, gap)| {
                let s = StateRecord::temporal(
                    *id,
                    *t,
                    "identity",
                    None,
                    FeatureVector::new(vec![Dim::new("gap_m", *gap)]).unwrap(),
                );
                serde_json::to_string(&s).unwrap()
            })
            .collect();
        std::fs::write(dir.join("states.jsonl"), lines.join("\n") + "\n").unwrap();
        Scenario {
            states: Some("states.jsonl".into()),
            ..scenario(3)
        }
    }

    fn run(
        scenario: &Scenario<f64>,
        dir: &Path,
        backend: &MockBackend,
        parallel: usize,
    ) -> (Result<Vec<TrialResult<f64>>>, Vec<u8>) {
        let registry = TemplateRegistry::with_defaults();
        let provider = HashEmbedding::default();
        let mut trail = Vec::new();
        let results = run_trials(
            scenario, dir, &registry, backend, &provider, &mut trail, parallel,
        );
        (results, trail)
    }

    #[test]
    fn produces_n_results_per_method_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = two_states_jsonl(dir.path());
        let backend = scripted_backend(3);
        let (results, trail) = run(&scenario, dir.path(), &backend, 1);
        let results = results.unwrap();
        assert_eq!(results.len(), 6);
        let keys: Vec<(Method, u64)> = results.iter().map(|r| (r.method, r.trial_index)).collect();
        assert_eq!(
            keys,
            vec![
                (Method::Direct, 0),
                (Method::Direct, 1),
                (Method::Direct, 2),
                (Method::Difference, 0),
                (Method::Difference, 1),
                (Method::Difference, 2),
            ]
        );
        // The trail carries one line per trial, raw response included.
        let trail = String::from_utf8(trail).unwrap();
        assert_eq!(trail.lines().count(), 6);
        assert!(trail.contains("direct reply 0 about scenery"));
    }

    #[test]
    fn deterministic_components_make_bit_identical_runs() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = two_states_jsonl(dir.path());
        let backend = scripted_backend(3);
        let (a, trail_a) = run(&scenario, dir.path(), &backend, 1);
        let (b, trail_b) = run(&scenario, dir.path(), &backend, 1);
        assert_eq!(
            serde_json::to_string(&a.unwrap()).unwrap(),
            serde_json::to_string(&b.unwrap()).unwrap()
        );
        assert_eq!(trail_a, trail_b);
    }

    #[test]
    fn parallel_runs_match_sequential_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = two_states_jsonl(dir.path());
        let backend = scripted_backend(3);
        let (seq, trail_seq) = run(&scenario, dir.path(), &backend, 1);
        for parallel in [2, 3, 8] {
            let (par, trail_par) = run(&scenario, dir.path(), &backend, parallel);
            assert_eq!(
                serde_json::to_string(&seq.as_ref().unwrap()).unwrap(),
                serde_json::to_string(&par.unwrap()).unwrap()
            );
            assert_eq!(trail_seq, trail_par, "parallel={parallel}");
        }
    }

    #[test]
    fn failures_are_tagged_and_prefix_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = two_states_jsonl(dir.path());
        // Only one scripted direct reply but three trials wanted.
        let mut scripts = BTreeMap::new();
        scripts.insert(
            "temporal.direct".to_string(),
            vec!["direct reply 0 about scenery".to_string()],
        );
        let backend = MockBackend::new(scripts);
        let (results, trail) = run(&scenario, dir.path(), &backend, 1);
        let err = results.unwrap_err();
        match err {
            Error::Trial {
                ref method,
                trial_index,
                ref source,
            } => {
                assert_eq!(method, "direct");
                assert_eq!(trial_index, 1);
                assert!(matches!(**source, Error::ScriptMiss { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
        let trail = String::from_utf8(trail).unwrap();
        let lines: Vec<&str> = trail.lines().collect();
        assert_eq!(lines.len(), 2); // trial 0 result + abort line
        assert!(lines[0].contains("direct reply 0"));
        assert!(lines[1].starts_with(r#"{"event":"abort","method":"direct","trial":1"#));
        assert!(lines[1].contains("ScriptMiss"));
    }

    #[test]
    fn parallel_failure_keeps_the_sequential_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = two_states_jsonl(dir.path());
        let mut scripts = BTreeMap::new();
        scripts.insert(
            "temporal.direct".to_string(),
            vec![
                "direct reply 0 about scenery".to_string(),
                "direct reply 1 about scenery".to_string(),
            ],
        );
        let backend = MockBackend::new(scripts);
        let (seq, trail_seq) = run(&scenario, dir.path(), &backend, 1);
        let (par, trail_par) = run(&scenario, dir.path(), &backend, 3);
        assert!(seq.is_err() && par.is_err());
        assert_eq!(trail_seq, trail_par);
    }

    fn result(method: Method, trial_index: u64, similarity: f64) -> TrialResult<f64> {
        TrialResult {
            method,
            trial_index,
            response_text: format!("{method} reply {trial_index}"),
            embedding: vec![similarity, (1.0 - similarity * similarity).sqrt()],
            similarity,
        }
    }

    #[test]
    fn report_computes_means_extrema_and_test() {
        let results = vec![
            result(Method::Direct, 0, 0.40),
            result(Method::Direct, 1, 0.50),
            result(Method::Difference, 0, 0.80),
            result(Method::Difference, 1, 0.90),
        ];
        let report = make_report(&results, 0.05).unwrap();
        assert_relative_eq!(report.direct.mean, 0.45, epsilon = 1e-15);
        assert_relative_eq!(report.difference.mean, 0.85, epsilon = 1e-15);
        assert_eq!(report.direct.max_trial, 2);
        assert_eq!(report.difference.min_trial, 1);
        // Positive t: the difference method scored higher.
        assert!(report.t_statistic > 0.0);
        assert_relative_eq!(report.degrees_of_freedom, 2.0, epsilon = 1e-12);
        assert!(report.reject_null);
        assert!(report.p_value < 0.05);
    }

    #[test]
    fn report_is_permutation_invariant_and_renders_trials_one_based() {
        let mut results: Vec<TrialResult<f64>> = (0..10)
            .map(|i| result(Method::Direct, i, 0.4 + 0.01 * i as f64))
            .chain((0..10).map(|i| {
                let sim = if i == 8 { 0.95 } else { 0.7 };
                result(Method::Difference, i, sim)
            }))
            .collect();
        let forward = make_report(&results, 0.05).unwrap();
        results.reverse();
        let backward = make_report(&results, 0.05).unwrap();
        assert_eq!(
            serde_json::to_string(&forward).unwrap(),
            serde_json::to_string(&backward).unwrap()
        );
        assert_eq!(forward.difference.max_trial, 9); // 0-based index 8
        assert_eq!(forward.direct.max_trial, 10);
    }

    #[test]
    fn ties_go_to_the_earliest_trial() {
        let results = vec![
            result(Method::Direct, 0, 0.5),
            result(Method::Direct, 1, 0.5),
            result(Method::Difference, 0, 0.7),
            result(Method::Difference, 1, 0.6),
        ];
        let report = make_report(&results, 0.05).unwrap();
        assert_eq!(report.direct.max_trial, 1);
        assert_eq!(report.direct.min_trial, 1);
    }

    #[test]
    fn report_error_contracts() {
        let only_direct = vec![
            result(Method::Direct, 0, 0.4),
            result(Method::Direct, 1, 0.5),
        ];
        assert!(matches!(
            make_report(&only_direct, 0.05),
            Err(Error::MissingMethod { ref method }) if method == "difference"
        ));

        let short = vec![
            result(Method::Direct, 0, 0.4),
            result(Method::Direct, 1, 0.5),
            result(Method::Difference, 0, 0.7),
        ];
        assert!(matches!(
            make_report(&short, 0.05),
            Err(Error::SampleTooSmall { ref which, got: 1 }) if which == "difference"
        ));

        let duplicated = vec![
            result(Method::Direct, 0, 0.4),
            result(Method::Direct, 0, 0.5),
            result(Method::Difference, 0, 0.7),
            result(Method::Difference, 1, 0.8),
        ];
        assert!(make_report(&duplicated, 0.05).is_err());
    }

    #[test]
    fn csv_is_fixed_column_and_one_based() {
        let results = vec![
            result(Method::Difference, 1, 0.75),
            result(Method::Direct, 0, 0.5),
            result(Method::Difference, 0, 0.25),
            result(Method::Direct, 1, 0.625),
        ];
        assert_eq!(
            report_csv(&results),
            "method,trial,similarity\n\
             direct,1,0.5\n\
             direct,2,0.625\n\
             difference,1,0.25\n\
             difference,2,0.75\n"
        );
    }

    #[test]
    fn report_serializes_to_one_canonical_line() {
        let results = vec![
            result(Method::Direct, 0, 0.40),
            result(Method::Direct, 1, 0.50),
            result(Method::Difference, 0, 0.80),
            result(Method::Difference, 1, 0.90),
        ];
        let report = make_report(&results, 0.05).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.starts_with(r#"{"direct":{"samples":2,"mean":0.45"#));
        assert!(!json.contains('\n'));
        let back: EvalReport<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn zero_parallel_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = two_states_jsonl(dir.path());
        let backend = scripted_backend(3);
        let (results, _) = run(&scenario, dir.path(), &backend, 0);
        assert!(matches!(results, Err(Error::Config { .. })));
    }
}

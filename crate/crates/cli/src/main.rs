//! `diffguide` — the command-line face of the difference-reasoning toolkit.
//!
//! Every subcommand is a thin delegation to one library operation: inputs
//! are JSON lines (standard input by default, `--in FILE` otherwise),
//! outputs are the serialized module results, one JSON value per line,
//! byte-for-byte. Errors leave as one JSON object on standard error
//! (`{"error": <kind>, "message": <detail>}`) with exit code 1; usage
//! mistakes exit 2 via clap.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use diffguide_core::anomaly::{detect_history, detect_threshold, estimate_threshold};
use diffguide_core::config::RunConfig;
use diffguide_core::diff::{
    select_main_differences, spatial_variability, DiffSession, Difference, Norm,
};
use diffguide_core::error::{Error, Result};
use diffguide_core::eval::{make_report, report_csv, run_trials, Scenario};
use diffguide_core::feature::{EvidenceRecord, StateRecord};
use diffguide_core::fusion::{external_difference, fuse};
use diffguide_core::gateway::{Backend, BackendKind, TracedBackend};
use diffguide_core::history::{HistoryStore, Label, ReferenceStrategy};

/// The CLI works in `f64` throughout; the generic core is instantiated once.
type State = StateRecord<f64>;
type Diff = Difference<f64>;

#[derive(Parser)]
#[command(
    name = "diffguide",
    version,
    about = "Difference-guided reasoning over object states",
    long_about = "Computes, ranks, and classifies differences between object states across time \
                  and space, fuses external evidence, and evaluates difference-oriented prompting \
                  against direct prompting.\n\nInputs and outputs are line-oriented JSON: states, \
                  differences, and verdicts each occupy one line, so subcommands compose in \
                  pipelines."
)]
struct Cli {
    /// Run configuration file (norm, thresholds, weights, templates,
    /// backend, provider, history path). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute differences between object states
    #[command(subcommand)]
    Diff(DiffCommand),
    /// Select the n differences with the highest weighted impact
    Topn(TopnArgs),
    /// Classify differences or states as normal or abnormal
    Detect(DetectArgs),
    /// Manage the append-only history of labelled states
    #[command(subcommand)]
    History(HistoryCommand),
    /// Fuse external evidence records into a state
    Fuse(FuseArgs),
    /// Evaluate difference prompting against direct prompting
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum DiffCommand {
    /// Consecutive deltas along a time-ordered stream (later minus earlier)
    Temporal(TemporalArgs),
    /// Pairwise differences across the sub-objects of a partitioned object
    Spatial(SpatialArgs),
    /// The single difference of the last two states of a stream
    Latest(LatestArgs),
    /// Alias of the top-level `topn` command
    Topn(TopnArgs),
    /// Difference over evidence-fused states (current minus previous)
    External(ExternalArgs),
}

#[derive(Args)]
struct TemporalArgs {
    /// State JSON lines (defaults to standard input)
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// Emit only the difference of the last two states
    #[arg(long)]
    latest: bool,
    /// Magnitude norm: l1, l2, or linf (default: the configured norm)
    #[arg(long, value_name = "NORM", value_parser = Norm::from_str)]
    norm: Option<Norm>,
}

#[derive(Args)]
struct SpatialArgs {
    /// Sub-object state JSON lines (defaults to standard input)
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// Emit the scalar spatial variability instead of the pairwise differences
    #[arg(long)]
    variability: bool,
    /// Magnitude norm: l1, l2, or linf (default: the configured norm)
    #[arg(long, value_name = "NORM", value_parser = Norm::from_str)]
    norm: Option<Norm>,
}

#[derive(Args)]
struct LatestArgs {
    /// State JSON lines (defaults to standard input)
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// Magnitude norm: l1, l2, or linf (default: the configured norm)
    #[arg(long, value_name = "NORM", value_parser = Norm::from_str)]
    norm: Option<Norm>,
}

#[derive(Args)]
struct TopnArgs {
    /// How many differences to keep
    #[arg(long, value_name = "N")]
    n: usize,
    /// Weight profile id from the config (default: unit weights)
    #[arg(long, value_name = "ID")]
    weights: Option<String>,
    /// Difference JSON lines (defaults to standard input)
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ExternalArgs {
    /// Current state (one JSON line)
    #[arg(long, value_name = "FILE")]
    state: PathBuf,
    /// Evidence JSON lines observed with the current state
    #[arg(long, value_name = "FILE")]
    evidence: Option<PathBuf>,
    /// Previous state (one JSON line)
    #[arg(long, value_name = "FILE")]
    prev: PathBuf,
    /// Evidence JSON lines observed with the previous state
    #[arg(long = "prev-evidence", value_name = "FILE")]
    prev_evidence: Option<PathBuf>,
    /// Magnitude norm: l1, l2, or linf (default: the configured norm)
    #[arg(long, value_name = "NORM", value_parser = Norm::from_str)]
    norm: Option<Norm>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum DetectMode {
    /// Flag differences whose magnitude strictly exceeds θ
    Threshold,
    /// Flag states whose nearest normal-history distance strictly exceeds η
    History,
    /// Estimate θ as mean + k·std over normal-labelled magnitudes
    Estimate,
}

#[derive(Args)]
struct DetectArgs {
    /// Detection mode
    #[arg(long, value_enum, value_name = "MODE")]
    mode: DetectMode,
    /// Magnitude bound θ for threshold mode (default: the configured value)
    #[arg(long, value_name = "X")]
    theta: Option<f64>,
    /// Distance bound η for history mode (default: the configured value)
    #[arg(long, value_name = "X")]
    eta: Option<f64>,
    /// Multiplier k for estimate mode (default: the configured value)
    #[arg(long = "k-sigma", value_name = "X")]
    k_sigma: Option<f64>,
    /// Distance metric for history mode: l1, l2, or linf (default: the
    /// configured norm)
    #[arg(long, value_name = "NORM", value_parser = Norm::from_str)]
    metric: Option<Norm>,
    /// History store for history mode (default: the configured path)
    #[arg(long, value_name = "FILE")]
    store: Option<PathBuf>,
    /// Input JSON lines: differences for threshold mode, states for history
    /// mode, {"magnitude", "label"} records for estimate mode (defaults to
    /// standard input)
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum HistoryCommand {
    /// Append states to the store, each under one label
    Add {
        /// Label for every appended state
        #[arg(long, value_name = "LABEL", default_value = "unlabeled", value_parser = Label::from_str)]
        label: Label,
        /// State JSON lines (defaults to standard input)
        #[arg(long = "in", value_name = "FILE")]
        input: Option<PathBuf>,
        /// History store path (default: the configured path)
        #[arg(long, value_name = "FILE")]
        store: Option<PathBuf>,
    },
    /// Give an unlabeled stored state its normal/abnormal label
    Relabel {
        /// Id of the stored state
        #[arg(long, value_name = "ID")]
        id: String,
        /// The label to set
        #[arg(long, value_name = "LABEL", value_parser = Label::from_str)]
        label: Label,
        /// History store path (default: the configured path)
        #[arg(long, value_name = "FILE")]
        store: Option<PathBuf>,
    },
    /// Print stored records, latest per state id
    List {
        /// Include superseded records instead of only the effective ones
        #[arg(long)]
        all: bool,
        /// History store path (default: the configured path)
        #[arg(long, value_name = "FILE")]
        store: Option<PathBuf>,
    },
    /// Print the reference state a strategy selects
    Ref {
        /// Reference strategy: latest, mean, or medoid
        #[arg(long, value_name = "STRATEGY", default_value = "latest", value_parser = ReferenceStrategy::from_str)]
        strategy: ReferenceStrategy,
        /// History store path (default: the configured path)
        #[arg(long, value_name = "FILE")]
        store: Option<PathBuf>,
    },
    /// Print the stored raw payload locator for a state id
    Raw {
        /// Id of the stored state
        #[arg(long, value_name = "ID")]
        id: String,
        /// History store path (default: the configured path)
        #[arg(long, value_name = "FILE")]
        store: Option<PathBuf>,
    },
    /// Difference a current state against the history reference
    Compare {
        /// Reference strategy: latest, mean, or medoid
        #[arg(long, value_name = "STRATEGY", default_value = "latest", value_parser = ReferenceStrategy::from_str)]
        strategy: ReferenceStrategy,
        /// The current state, one JSON line (defaults to standard input)
        #[arg(long = "in", value_name = "FILE")]
        input: Option<PathBuf>,
        /// Magnitude norm: l1, l2, or linf (default: the configured norm)
        #[arg(long, value_name = "NORM", value_parser = Norm::from_str)]
        norm: Option<Norm>,
        /// History store path (default: the configured path)
        #[arg(long, value_name = "FILE")]
        store: Option<PathBuf>,
    },
}

#[derive(Args)]
struct FuseArgs {
    /// The state, one JSON line (defaults to standard input)
    #[arg(long, value_name = "FILE")]
    state: Option<PathBuf>,
    /// Evidence JSON lines to fuse in (default: none)
    #[arg(long, value_name = "FILE")]
    evidence: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Run the trial protocol of a scenario and print the report
    Run(EvalRunArgs),
}

#[derive(Args)]
struct EvalRunArgs {
    /// Scenario file describing the run
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Override the backend kind: mock or remote
    #[arg(long, value_name = "KIND", value_parser = parse_backend_kind)]
    backend: Option<BackendKind>,
    /// Trial concurrency bound (1 = fully sequential)
    #[arg(long, value_name = "K", default_value_t = 1)]
    parallel: usize,
    /// Also write per-trial similarities as CSV to this file
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Where to write the per-trial JSON trail (default:
    /// `<scenario stem>.trail.jsonl` in the working directory)
    #[arg(long, value_name = "FILE")]
    trail: Option<PathBuf>,
    /// Log backend request/response bodies as JSON lines to this file
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

fn parse_backend_kind(s: &str) -> Result<BackendKind> {
    match s {
        "mock" => Ok(BackendKind::Mock),
        "remote" => Ok(BackendKind::Remote),
        other => Err(Error::Config {
            detail: format!("unknown backend kind `{other}` (expected `mock` or `remote`)"),
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let outcome = run(cli, &mut out).and_then(|()| Ok(out.flush()?));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (e.g. `diffguide ... | head`) is not an
        // error of ours.
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({"error": e.kind_name(), "message": e.to_string()});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    let (config, config_dir) = match &cli.config {
        Some(path) => RunConfig::<f64>::load(path)?,
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    match cli.command {
        Command::Diff(cmd) => match cmd {
            DiffCommand::Temporal(args) => diff_temporal(args, &config, out),
            DiffCommand::Spatial(args) => diff_spatial(args, &config, out),
            DiffCommand::Latest(args) => diff_latest(args, &config, out),
            DiffCommand::Topn(args) => topn(args, &config, out),
            DiffCommand::External(args) => diff_external(args, &config, out),
        },
        Command::Topn(args) => topn(args, &config, out),
        Command::Detect(args) => detect(args, &config, &config_dir, out),
        Command::History(cmd) => history(cmd, &config, &config_dir, out),
        Command::Fuse(args) => fuse_cmd(args, out),
        Command::Eval(EvalCommand::Run(args)) => eval_run(args, &config, &config_dir, out),
    }
}

// ---------------------------------------------------------------------------
// Input/output plumbing
// ---------------------------------------------------------------------------

/// Serializes one module result as one output line — the output *is* the
/// serialized result, nothing added.
fn emit<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::Config {
        detail: format!("could not serialize output: {e}"),
    })?;
    writeln!(out, "{line}")?;
    Ok(())
}

/// Parses JSON lines from the given file, or from standard input when no
/// file was named.
fn read_lines<T: DeserializeOwned>(input: Option<&Path>) -> Result<Vec<T>> {
    match input {
        Some(path) => diffguide_core::eval::read_jsonl(path),
        None => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            let mut items = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let item =
                    serde_json::from_str(line).map_err(|e| Error::UnparseablePayload {
                        detail: format!("standard input line {}: {e}", lineno + 1),
                    })?;
                items.push(item);
            }
            Ok(items)
        }
    }
}

/// For inputs that are one record by contract (a single state, not a stream).
fn exactly_one<T>(mut items: Vec<T>, what: &str) -> Result<T> {
    if items.len() == 1 {
        Ok(items.pop().expect("len checked"))
    } else {
        Err(Error::Config {
            detail: format!("expected exactly one {what} line, got {}", items.len()),
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

/// The history store path: the flag wins, then the config (relative to the
/// config file), and with neither the command cannot proceed.
fn resolve_store(
    flag: Option<PathBuf>,
    config: &RunConfig<f64>,
    config_dir: &Path,
) -> Result<PathBuf> {
    if let Some(path) = flag {
        return Ok(path);
    }
    match &config.history {
        Some(rel) => Ok(resolve(config_dir, rel)),
        None => Err(Error::Config {
            detail: "no history store configured; pass --store or set `history` in the config"
                .into(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Subcommand handlers — each delegates to exactly one library operation
// ---------------------------------------------------------------------------

fn diff_temporal(args: TemporalArgs, config: &RunConfig<f64>, out: &mut impl Write) -> Result<()> {
    let states: Vec<State> = read_lines(args.input.as_deref())?;
    let mut session = DiffSession::new(args.norm.unwrap_or(config.norm));
    if args.latest {
        return emit(out, &session.latest_difference(&states)?);
    }
    if states.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            got: states.len(),
        });
    }
    for pair in states.windows(2) {
        emit(out, &session.temporal_delta(&pair[0], &pair[1])?)?;
    }
    Ok(())
}

fn diff_spatial(args: SpatialArgs, config: &RunConfig<f64>, out: &mut impl Write) -> Result<()> {
    let states: Vec<State> = read_lines(args.input.as_deref())?;
    let norm = args.norm.unwrap_or(config.norm);
    if args.variability {
        return emit(out, &spatial_variability(&states, norm)?);
    }
    let mut session = DiffSession::new(norm);
    for diff in session.pairwise_spatial_differences(&states)? {
        emit(out, &diff)?;
    }
    Ok(())
}

fn diff_latest(args: LatestArgs, config: &RunConfig<f64>, out: &mut impl Write) -> Result<()> {
    let states: Vec<State> = read_lines(args.input.as_deref())?;
    let mut session = DiffSession::new(args.norm.unwrap_or(config.norm));
    emit(out, &session.latest_difference(&states)?)
}

fn topn(args: TopnArgs, config: &RunConfig<f64>, out: &mut impl Write) -> Result<()> {
    let diffs: Vec<Diff> = read_lines(args.input.as_deref())?;
    let profile = config.weight_profile(args.weights.as_deref())?;
    for diff in select_main_differences(&diffs, args.n, &profile)? {
        emit(out, &diff)?;
    }
    Ok(())
}

fn diff_external(args: ExternalArgs, config: &RunConfig<f64>, out: &mut impl Write) -> Result<()> {
    let current: State = exactly_one(read_lines(Some(&args.state))?, "state")?;
    let previous: State = exactly_one(read_lines(Some(&args.prev))?, "state")?;
    let evidence: Vec<EvidenceRecord<f64>> = match &args.evidence {
        Some(path) => read_lines(Some(path))?,
        None => Vec::new(),
    };
    let prev_evidence: Vec<EvidenceRecord<f64>> = match &args.prev_evidence {
        Some(path) => read_lines(Some(path))?,
        None => Vec::new(),
    };
    let mut session = DiffSession::new(args.norm.unwrap_or(config.norm));
    emit(
        out,
        &external_difference(&current, &evidence, &previous, &prev_evidence, &mut session)?,
    )
}

fn detect(
    args: DetectArgs,
    config: &RunConfig<f64>,
    config_dir: &Path,
    out: &mut impl Write,
) -> Result<()> {
    match args.mode {
        DetectMode::Threshold => {
            let theta = args.theta.unwrap_or(config.thresholds.theta);
            let diffs: Vec<Diff> = read_lines(args.input.as_deref())?;
            for diff in &diffs {
                emit(out, &detect_threshold(diff, theta)?)?;
            }
            Ok(())
        }
        DetectMode::History => {
            let eta = args.eta.unwrap_or(config.thresholds.eta);
            let metric = args.metric.unwrap_or(config.norm);
            let store_path = resolve_store(args.store, config, config_dir)?;
            let store = HistoryStore::<f64>::open_read_only(&store_path)?;
            let states: Vec<State> = read_lines(args.input.as_deref())?;
            for state in &states {
                emit(out, &detect_history(state, &store, eta, metric)?)?;
            }
            Ok(())
        }
        DetectMode::Estimate => {
            let k_sigma = args.k_sigma.unwrap_or(config.thresholds.k_sigma);
            let lines: Vec<MagnitudeLine> = read_lines(args.input.as_deref())?;
            let magnitudes: Vec<(f64, Label)> =
                lines.into_iter().map(|l| (l.magnitude, l.label)).collect();
            emit(out, &estimate_threshold(&magnitudes, k_sigma)?)
        }
    }
}

/// One labelled magnitude, as read by `detect --mode estimate`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MagnitudeLine {
    magnitude: f64,
    label: Label,
}

fn history(
    cmd: HistoryCommand,
    config: &RunConfig<f64>,
    config_dir: &Path,
    out: &mut impl Write,
) -> Result<()> {
    match cmd {
        HistoryCommand::Add {
            label,
            input,
            store,
        } => {
            let states: Vec<State> = read_lines(input.as_deref())?;
            let path = resolve_store(store, config, config_dir)?;
            let mut store = HistoryStore::open(&path)?;
            for state in states {
                emit(out, &store.append(state, label)?)?;
            }
            Ok(())
        }
        HistoryCommand::Relabel { id, label, store } => {
            let path = resolve_store(store, config, config_dir)?;
            let mut store = HistoryStore::<f64>::open(&path)?;
            emit(out, &store.relabel(&id, label)?)
        }
        HistoryCommand::List { all, store } => {
            let path = resolve_store(store, config, config_dir)?;
            let store = HistoryStore::<f64>::open_read_only(&path)?;
            if all {
                for record in store.records() {
                    emit(out, record)?;
                }
            } else {
                for record in store.effective() {
                    emit(out, record)?;
                }
            }
            Ok(())
        }
        HistoryCommand::Ref { strategy, store } => {
            let path = resolve_store(store, config, config_dir)?;
            let store = HistoryStore::<f64>::open_read_only(&path)?;
            emit(out, &store.select_reference(strategy)?)
        }
        HistoryCommand::Raw { id, store } => {
            let path = resolve_store(store, config, config_dir)?;
            let store = HistoryStore::<f64>::open_read_only(&path)?;
            emit(out, &store.raw_lookup(&id)?)
        }
        HistoryCommand::Compare {
            strategy,
            input,
            norm,
            store,
        } => {
            let current: State = exactly_one(read_lines(input.as_deref())?, "state")?;
            let path = resolve_store(store, config, config_dir)?;
            let store = HistoryStore::<f64>::open_read_only(&path)?;
            let mut session = DiffSession::new(norm.unwrap_or(config.norm));
            emit(out, &store.compare_with_history(&current, strategy, &mut session)?)
        }
    }
}

fn fuse_cmd(args: FuseArgs, out: &mut impl Write) -> Result<()> {
    let state: State = exactly_one(read_lines(args.state.as_deref())?, "state")?;
    let evidence: Vec<EvidenceRecord<f64>> = match &args.evidence {
        Some(path) => read_lines(Some(path))?,
        None => Vec::new(),
    };
    emit(out, &fuse(&state, &evidence)?)
}

fn eval_run(
    args: EvalRunArgs,
    config: &RunConfig<f64>,
    config_dir: &Path,
    out: &mut impl Write,
) -> Result<()> {
    let (scenario, scenario_dir) = Scenario::<f64>::load(&args.scenario)?;
    let registry = config.template_registry()?;

    // Backend: scenario first, then config; someone must name one. Relative
    // script paths resolve against whichever file supplied the spec.
    let (mut backend_spec, backend_dir) = match (&scenario.backend, &config.backend) {
        (Some(spec), _) => (spec.clone(), scenario_dir.clone()),
        (None, Some(spec)) => (spec.clone(), config_dir.to_path_buf()),
        (None, None) => {
            return Err(Error::Config {
                detail: "no backend configured: add a [backend] table to the scenario or config"
                    .into(),
            })
        }
    };
    if let Some(kind) = args.backend {
        backend_spec.kind = kind;
    }
    let (provider_spec, provider_dir) = match (&scenario.provider, &config.provider) {
        (Some(spec), _) => (spec.clone(), scenario_dir.clone()),
        (None, Some(spec)) => (spec.clone(), config_dir.to_path_buf()),
        (None, None) => (
            diffguide_core::eval::ProviderSpec::deterministic(),
            scenario_dir.clone(),
        ),
    };

    let backend = backend_spec.build(&backend_dir)?;
    let backend: Box<dyn Backend> = match &args.trace {
        Some(path) => Box::new(TracedBackend::new(backend, Box::new(File::create(path)?))),
        None => backend,
    };
    let provider = provider_spec.build::<f64>(&provider_dir)?;

    let trail_path = args.trail.clone().unwrap_or_else(|| {
        let stem = args
            .scenario
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "eval".into());
        PathBuf::from(format!("{stem}.trail.jsonl"))
    });
    let mut trail = File::create(&trail_path)?;

    let results = run_trials(
        &scenario,
        &scenario_dir,
        &registry,
        backend.as_ref(),
        provider.as_ref(),
        &mut trail,
        args.parallel,
    )?;
    let report = make_report(&results, scenario.alpha)?;
    if let Some(csv_path) = &args.csv {
        std::fs::write(csv_path, report_csv(&results))?;
    }
    emit(out, &report)
}

//! Operator CLI: generate tasks, train, evaluate, predict, and inspect
//! programs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lsp::backend::{build_backend, Backend, BackendConfig, BackendKind, LoggingBackend, Role};
use lsp::eval::{evaluate, export_costs, export_trace};
use lsp::learner::{fit, Ranking, Scoring, SearchConfig};
use lsp::program::Program;
use lsp::tasks::{
    gen_dt_task, load_jsonl, oracle_to_program, save_jsonl, save_labels, DtPreset, DtTaskConfig,
};

#[derive(Parser)]
#[command(name = "lsp", version, about = "Learn and run tree-structured LLM classifier programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic decision-tree task (train/test JSONL + oracle)
    GenTask(GenTaskArgs),
    /// Learn a program from a JSONL training set
    Train(TrainArgs),
    /// Evaluate a program on a JSONL dataset
    Eval(EvalArgs),
    /// Classify one input and print the traversal
    Predict(PredictArgs),
    /// Render a program as text or DOT
    Show(ShowArgs),
    /// Print program statistics
    Stats(StatsArgs),
}

#[derive(Args)]
struct GenTaskArgs {
    /// Named preset: dt-easy, dt-medium, dt-hard
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    num_features: Option<usize>,
    /// Comma-separated value counts per feature, e.g. 3,2,2
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    num_labels: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 256)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct BackendFlags {
    /// Backend kind for both roles: mock_rule, http_chat, replay
    #[arg(long, value_enum)]
    backend: Option<KindFlag>,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Mock only: deterministic i-th-best proposals
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindFlag {
    MockRule,
    HttpChat,
    Replay,
}

impl From<KindFlag> for BackendKind {
    fn from(k: KindFlag) -> Self {
        match k {
            KindFlag::MockRule => BackendKind::MockRule,
            KindFlag::HttpChat => BackendKind::HttpChat,
            KindFlag::Replay => BackendKind::Replay,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    /// TOML config file; command-line flags win
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    expand_ratio: Option<usize>,
    #[arg(long)]
    proposal_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    demo_sample_size: Option<usize>,
    #[arg(long, value_enum)]
    scoring: Option<ScoringFlag>,
    /// exact or ucb
    #[arg(long)]
    ranking: Option<String>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[command(flatten)]
    backend: BackendFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoringFlag {
    ErrorCount,
    Accuracy,
    Random,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    input: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendFlags,
}

#[derive(Args)]
struct ShowArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    program: PathBuf,
}

/// Merged view of config file, flags (flags win), and env vars.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    search: SearchConfig,
    learner_backend: BackendConfig,
    inference_backend: BackendConfig,
    paths: Paths,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Paths {
    out_dir: Option<PathBuf>,
}

enum CliError {
    Runtime(String),
    Usage(String),
    Config(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Runtime(m) | CliError::Usage(m) | CliError::Config(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenTask(args) => cmd_gen_task(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Show(args) => cmd_show(args),
        Command::Stats(args) => cmd_stats(args),
    }
}

fn cmd_gen_task(args: GenTaskArgs) -> Result<(), CliError> {
    let cfg = match &args.preset {
        Some(name) => {
            let preset = DtPreset::parse(name).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown preset {name:?}; expected dt-easy, dt-medium, or dt-hard"
                ))
            })?;
            DtTaskConfig {
                n_train: args.n_train,
                n_test: args.n_test,
                ..preset.config(args.seed)
            }
        }
        None => {
            let values: Vec<usize> = args
                .values
                .as_deref()
                .ok_or_else(|| CliError::Usage("--values is required without --preset".into()))?
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("bad --values: {e}")))?;
            DtTaskConfig {
                num_features: args.num_features.ok_or_else(|| {
                    CliError::Usage("--num-features is required without --preset".into())
                })?,
                values_per_feature: values,
                num_labels: args.num_labels.ok_or_else(|| {
                    CliError::Usage("--num-labels is required without --preset".into())
                })?,
                depth: args
                    .depth
                    .ok_or_else(|| CliError::Usage("--depth is required without --preset".into()))?,
                n_train: args.n_train,
                n_test: args.n_test,
                seed: args.seed,
                root_feature: None,
            }
        }
    };
    let (train, test, oracle) =
        gen_dt_task(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    let write = |r: Result<(), lsp::tasks::TaskError>| r.map_err(|e| CliError::Runtime(e.to_string()));
    write(save_jsonl(&train, &args.out_dir.join("train.jsonl")))?;
    write(save_jsonl(&test, &args.out_dir.join("test.jsonl")))?;
    write(save_labels(&train, &args.out_dir.join("labels.json")))?;
    let oracle_program = oracle_to_program(&oracle, "oracle")
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(args.out_dir.join("oracle.json"), oracle_program.to_json())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote train.jsonl ({}), test.jsonl ({}), labels.json, oracle.json to {}",
        train.len(),
        test.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }
}

fn apply_backend_flags(cfg: &mut BackendConfig, flags: &BackendFlags) {
    if let Some(kind) = flags.backend {
        cfg.kind = kind.into();
    }
    if let Some(model) = &flags.model_id {
        cfg.model_id = model.clone();
    }
    if let Some(t) = flags.temperature {
        cfg.temperature = t;
    }
    if let Some(cache) = &flags.cache {
        cfg.cache_path = Some(cache.clone());
    }
    if flags.exhaustive {
        cfg.exhaustive = true;
    }
}

/// Credential check up front: an http backend without its key must fail
/// before any artifact is written.
fn check_credentials(cfg: &BackendConfig) -> Result<(), CliError> {
    if cfg.kind == BackendKind::HttpChat && std::env::var(&cfg.api_key_env).is_err() {
        return Err(CliError::Config(format!(
            "backend kind http_chat requires an API key: set {} (or switch to --backend mock-rule)",
            cfg.api_key_env
        )));
    }
    Ok(())
}

fn build(cfg: &BackendConfig) -> Result<Box<dyn Backend>, CliError> {
    check_credentials(cfg)?;
    build_backend(cfg).map_err(|e| CliError::Config(e.to_string()))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut run_cfg = load_run_config(args.config.as_deref())?;
    apply_backend_flags(&mut run_cfg.learner_backend, &args.backend);
    apply_backend_flags(&mut run_cfg.inference_backend, &args.backend);
    let search = &mut run_cfg.search;
    if let Some(v) = args.seed {
        search.seed = v;
    }
    if let Some(v) = args.beam_size {
        search.beam_size = v;
    }
    if let Some(v) = args.iterations {
        search.iterations = v;
    }
    if let Some(v) = args.expand_ratio {
        search.expand_ratio = v;
    }
    if let Some(v) = args.proposal_size {
        search.proposal_size = v;
    }
    if let Some(v) = args.batch_size {
        search.batch_size = v;
    }
    if let Some(v) = args.demo_sample_size {
        search.demo_sample_size = v;
    }
    if let Some(v) = args.scoring {
        search.scoring = match v {
            ScoringFlag::ErrorCount => Scoring::ErrorCount,
            ScoringFlag::Accuracy => Scoring::Accuracy,
            ScoringFlag::Random => Scoring::Random,
        };
    }
    if let Some(r) = &args.ranking {
        search.ranking = match r.as_str() {
            "exact" => Ranking::Exact,
            "ucb" => Ranking::default_ucb(),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown ranking {other:?}; expected exact or ucb"
                )))
            }
        };
    }
    if let Some(v) = args.max_depth {
        search.max_depth = Some(v);
    }

    let train = load_jsonl(&args.train).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(e.to_string()))?;

    let learner = build(&run_cfg.learner_backend)?;
    let inference = build(&run_cfg.inference_backend)?;
    let call_log = args.out.join("calls.jsonl");
    let learner = LoggingBackend::new(learner, Role::Learner, &call_log)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let inference = LoggingBackend::new(inference, Role::Inference, &call_log)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let report = fit(&train, &run_cfg.search, &learner, &inference)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    // report.json embeds the fully resolved run configuration
    let mut report_value: serde_json::Value =
        serde_json::from_str(&report.to_json()).expect("report is valid JSON");
    report_value["run_config"] = serde_json::to_value(&run_cfg).unwrap();
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report_value).unwrap(),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    if report.failed {
        return Err(CliError::Runtime(format!(
            "training aborted: {}",
            report.error.as_deref().unwrap_or("backend failure")
        )));
    }

    std::fs::write(args.out.join("program.json"), report.best_program.to_json())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    export_trace(&report, &args.out.join("trace.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    export_costs(&report, &args.out.join("costs.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "train accuracy {:.4}; {} nodes, depth {}; wrote artifacts to {}",
        report.best_train_accuracy,
        report.best_program.node_count(),
        report.best_program.depth(),
        args.out.display()
    );
    Ok(())
}

fn load_program(path: &Path) -> Result<Program, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Program::from_json(&text).map_err(|e| CliError::Runtime(e.to_string()))
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let mut run_cfg = load_run_config(args.config.as_deref())?;
    apply_backend_flags(&mut run_cfg.inference_backend, &args.backend);
    let program = load_program(&args.program)?;
    let dataset = load_jsonl(&args.data).map_err(|e| CliError::Runtime(e.to_string()))?;
    let backend = build(&run_cfg.inference_backend)?;
    let report =
        evaluate(&program, &dataset, backend.as_ref()).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{}", report.to_json());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let mut run_cfg = load_run_config(args.config.as_deref())?;
    apply_backend_flags(&mut run_cfg.inference_backend, &args.backend);
    let program = load_program(&args.program)?;
    let backend = build(&run_cfg.inference_backend)?;
    let (outcome, trace) = program
        .predict(&args.input, backend.as_ref())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{outcome}");
    for (node, predicted) in &trace.steps {
        eprintln!("  node {node} -> {predicted}");
    }
    Ok(())
}

fn cmd_show(args: ShowArgs) -> Result<(), CliError> {
    let program = load_program(&args.program)?;
    match args.format.as_str() {
        "text" => println!("{}", program.render_text()),
        "dot" => print!("{}", program.render_dot()),
        other => {
            return Err(CliError::Usage(format!(
                "unknown format {other:?}; expected text or dot"
            )))
        }
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let program = load_program(&args.program)?;
    println!("{}", serde_json::to_string_pretty(&program.stats()).unwrap());
    Ok(())
}

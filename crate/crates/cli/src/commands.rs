//! Subcommand definitions and their implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use curvegcn::data::{gen_synthetic, load_all, DatasetManifest};
use curvegcn::gradcheck::run_suite;
use curvegcn::model::CurveGcn;
use curvegcn::trainer::{
    evaluate, prepare_all, train_interactive, train_phase, train_val_split, EvalMode, Phase, TrainConfig,
};

/// Environment variable naming the training config when `--config` is absent.
pub const CONFIG_ENV: &str = "CURVEGCN_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flag combinations detected after parsing.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] curvegcn::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Failed(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "curvegcn", version, about = "Contour prediction with graph convolutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic blob dataset.
    GenData(GenDataArgs),
    /// Run one training phase.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write a JSON report.
    Eval(EvalArgs),
    /// Predict contours for every sample of a dataset and write them as JSON.
    Annotate(AnnotateArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck(GradcheckArgs),
    /// Serve the annotation API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image side in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value = "train")]
    pub split: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PhaseArg {
    Matching,
    Diffacc,
    Interactive,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config (falls back to $CURVEGCN_CONFIG, then defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PhaseArg::Matching)]
    pub phase: PhaseArg,
    /// Dataset directory holding a manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to start from (required by diffacc and interactive).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Where to write the resulting checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-epoch history as JSON.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "automatic", value_parser = ["automatic", "interactive"])]
    pub mode: String,
    /// Comma separated IoU thresholds (interactive mode only).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub max_clicks: usize,
    /// Report path; the summary table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Annotate(a) => annotate(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Serve(a) => serve(a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| curvegcn::Error::io(path, e))?;
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let m = gen_synthetic(&a.out, a.count, a.seed, a.size, &a.split)?;
    println!("wrote {} samples to {}", m.len(), a.out.display());
    Ok(())
}

/// `--config`, else `$CURVEGCN_CONFIG`, else the defaults.
pub fn resolve_config(flag: Option<&Path>) -> Result<TrainConfig, CliError> {
    let path = flag.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => Ok(TrainConfig::load(&p)?),
        None => Ok(TrainConfig::default()),
    }
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_config(a.config.as_deref())?;
    let init = match (&a.init, a.phase) {
        (Some(p), _) => Some(CurveGcn::load(p)?),
        (None, PhaseArg::Matching) => None,
        (None, _) => return Err(CliError::Usage("--init is required for this phase".into())),
    };
    // a checkpoint carries its own architecture
    let model_cfg = init.as_ref().map(|m| m.config().clone()).unwrap_or_else(|| cfg.model.clone());
    let cfg = TrainConfig { model: model_cfg, ..cfg };
    let manifest = DatasetManifest::load(&a.data)?;
    let samples = prepare_all(&load_all(&manifest)?, &cfg.model)?;
    let outcome = match a.phase {
        PhaseArg::Interactive => {
            let base = init.expect("checked above");
            train_interactive(&cfg, &base, &samples)?
        }
        PhaseArg::Matching | PhaseArg::Diffacc => {
            let phase = if a.phase == PhaseArg::Matching { Phase::Matching } else { Phase::Diffacc };
            let (train, val) = train_val_split(samples, &cfg);
            log::info!("{} training / {} validation samples", train.len(), val.len());
            train_phase(&cfg, phase, init.as_ref(), &train, &val)?
        }
    };
    std::fs::write(&a.out, &outcome.checkpoint).map_err(|e| curvegcn::Error::io(&a.out, e))?;
    if let Some(h) = &a.history {
        write_json(h, &outcome.history)?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mode = EvalMode::parse(&a.mode, &a.thresholds, a.max_clicks).map_err(|e| CliError::Usage(e.to_string()))?;
    let model = CurveGcn::load(&a.checkpoint)?;
    let manifest = DatasetManifest::load(&a.data)?;
    let samples = prepare_all(&load_all(&manifest)?, model.config())?;
    let report = evaluate(&model, &samples, &mode)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    print!("{}", report.summary());
    Ok(())
}

#[derive(Serialize)]
struct Annotated {
    id: String,
    curve_kind: &'static str,
    /// Control points in normalized coordinates.
    curve: Vec<[f64; 2]>,
    /// The same points in pixels of the source image.
    curve_px: Vec<[f64; 2]>,
}

fn annotate(a: AnnotateArgs) -> Result<(), CliError> {
    let model = CurveGcn::load(&a.checkpoint)?;
    let manifest = DatasetManifest::load(&a.data)?;
    let mut out = Vec::with_capacity(manifest.len());
    for sample in load_all(&manifest)? {
        let (_, h, w) = sample.image.dims3()?;
        let input = curvegcn::trainer::network_input(&sample.image, model.config().input_size)?;
        let pred = model.predict(&input)?;
        let curve = pred.last();
        out.push(Annotated {
            id: sample.id,
            curve_kind: curve.kind().as_str(),
            curve: curve.points().iter().map(|p| [p.x, p.y]).collect(),
            curve_px: curve.points().iter().map(|p| [p.x * w as f64, p.y * h as f64]).collect(),
        });
    }
    write_json(&a.out, &out)?;
    println!("annotated {} samples", out.len());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let results = run_suite(a.cases, a.seed)?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<18} cases {:>4}  max rel err {:.3e}  (< {:.0e})  {status}", r.name, r.cases, r.max_rel_err, r.tolerance);
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("gradient check failed: {}", failed.join(", "))))
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&a.checkpoint).map_err(|e| curvegcn::Error::io(&a.checkpoint, e))?;
    let loaded = crate::server::LoadedModel::from_checkpoint(&bytes)?;
    if loaded.interactive.is_none() {
        log::warn!("checkpoint has no interactive weights; corrections move only the dragged node");
    }
    let app = crate::server::router(crate::server::AppState::new(Some(loaded)));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(format!("runtime: {e}")))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener =
            tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Failed(format!("bind {addr}: {e}")))?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, app).await.map_err(|e| CliError::Failed(format!("server: {e}")))
    })
}

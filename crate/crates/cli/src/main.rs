mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use handpass::dataset::DatasetError;
use handpass::gatekeeper::GateError;
use handpass::learners::{Averaging, LearnError};
use handpass::synth::SynthError;
use handpass::{CodecError, ModelKind, ScalerKind, SliceName};
use serde::Serialize;

/// Wi-Fi CSI palm authentication toolkit.
#[derive(Debug, Parser, Serialize)]
#[command(name = "handpass", version)]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "HANDPASS_SEED", default_value_t = 42)]
    seed: u64,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Write seeded synthetic captures and a manifest.
    Synth(SynthArgs),
    /// Summarise one capture file.
    Inspect(InspectArgs),
    /// Turn a capture directory into a feature CSV for one slice.
    Dataset(DatasetArgs),
    /// Stratified k-fold evaluation of one or more models.
    Crossval(CrossvalArgs),
    /// Fit a model on a feature CSV and save it.
    Train(TrainArgs),
    /// Rank subcarriers by tree importance.
    Select(SelectArgs),
    /// Build an enrollment store from captures.
    Enroll(EnrollArgs),
    /// Remove users from a store's roster.
    Revoke(RevokeArgs),
    /// Decide on one capture against a store.
    Auth(AuthArgs),
    /// Run the JSON-lines authentication service.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Start from the reduced-size preset instead of the full protocol.
    #[arg(long)]
    scaled: bool,
    #[arg(long)]
    users: Option<u32>,
    #[arg(long)]
    captures: Option<u8>,
    #[arg(long)]
    frames: Option<usize>,
    /// Packets per second.
    #[arg(long)]
    rate: Option<f64>,
    /// Per-subcarrier noise sigma.
    #[arg(long)]
    noise: Option<f64>,
    /// Probability that a frame lands inside an interference burst.
    #[arg(long)]
    burst_probability: Option<f64>,
    #[arg(long)]
    burst_power: Option<f64>,
    /// Also write left-hand captures.
    #[arg(long)]
    left_hand: bool,
}

#[derive(Debug, Args, Serialize)]
struct InspectArgs {
    capture: PathBuf,
    /// Fail on the first malformed record instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScalerArg {
    Minmax,
    Zscore,
    Robust,
    None,
}

impl ScalerArg {
    fn kind(self) -> Option<ScalerKind> {
        match self {
            ScalerArg::Minmax => Some(ScalerKind::MinMax),
            ScalerArg::Zscore => Some(ScalerKind::ZScore),
            ScalerArg::Robust => Some(ScalerKind::Robust),
            ScalerArg::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AveragingArg {
    Macro,
    Weighted,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Weighted => Averaging::Weighted,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct PipelineArgs {
    /// Keep null and pilot subcarriers.
    #[arg(long)]
    no_prune: bool,
    /// Skip amplitude normalisation.
    #[arg(long)]
    no_normalize: bool,
    /// Skip phase sanitisation.
    #[arg(long)]
    no_sanitize: bool,
    /// Ridge penalty of the phase detrend.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
}

#[derive(Debug, Args, Serialize)]
struct DatasetArgs {
    /// Directory holding manifest.json and the captures.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = parse_slice)]
    slice: SliceName,
    /// Scaler fitted on the whole slice.
    #[arg(long, value_enum, default_value_t = ScalerArg::Minmax)]
    scaler: ScalerArg,
    /// Include left-hand captures.
    #[arg(long)]
    both_hands: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 5)]
    knn_k: usize,
    #[arg(long)]
    max_depth: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct CrossvalArgs {
    /// Feature CSV; repeat to evaluate several slices.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Models to evaluate (rf, dt, knn, nb, svm).
    #[arg(long, value_delimiter = ',', default_value = "rf", value_parser = parse_model)]
    model: Vec<ModelKind>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = AveragingArg::Macro)]
    averaging: AveragingArg,
    /// Refit this scaler inside every training fold.
    #[arg(long, value_enum)]
    per_fold_scaler: Option<ScalerArg>,
    /// Keep every capture session inside a single fold.
    #[arg(long)]
    group_by_capture: bool,
    #[command(flatten)]
    params: ModelArgs,
    /// Metrics table per dataset and model.
    #[arg(long)]
    report: Option<PathBuf>,
    /// F1 per dataset, one column per model.
    #[arg(long)]
    slice_report: Option<PathBuf>,
    /// Full reports including folds and confusion matrices.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "rf", value_parser = parse_model)]
    model: ModelKind,
    #[command(flatten)]
    params: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Tree learner providing importances (rf or dt).
    #[arg(long, default_value = "dt", value_parser = parse_model)]
    model: ModelKind,
    #[command(flatten)]
    params: ModelArgs,
    /// Also write every feature importance as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EnrollArgs {
    /// Directory holding manifest.json and the captures.
    #[arg(long = "in", required_unless_present = "pcap")]
    input: Option<PathBuf>,
    /// Capture session used for enrollment.
    #[arg(long, default_value_t = 1)]
    capture: u8,
    /// Restrict to these users.
    #[arg(long, value_delimiter = ',')]
    users: Vec<u32>,
    /// Explicit USER=PATH capture; repeatable, replaces --in.
    #[arg(long, value_parser = parse_user_path, conflicts_with = "input")]
    pcap: Vec<(u32, PathBuf)>,
    /// Packets per second, required with --pcap.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value = "rf", value_parser = parse_model)]
    model: ModelKind,
    #[arg(long, value_enum, default_value_t = ScalerArg::Minmax)]
    scaler: ScalerArg,
    #[command(flatten)]
    params: ModelArgs,
    /// Permission granted to every enrolled user; repeatable.
    #[arg(long, default_value = "door")]
    permission: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct RevokeArgs {
    #[arg(long, env = "HANDPASS_STORE")]
    store: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    user: Vec<u32>,
}

#[derive(Debug, Args, Serialize)]
struct AuthArgs {
    #[arg(long, env = "HANDPASS_STORE")]
    store: PathBuf,
    #[arg(long)]
    capture: PathBuf,
    /// Window length in seconds.
    #[arg(long, default_value_t = 1.0)]
    window: f64,
    /// Minimum vote share for a grant.
    #[arg(long, default_value_t = 0.6)]
    threshold: f64,
    #[arg(long)]
    permission: Option<String>,
    /// Append the decision to this JSON-lines log.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ServeArgs {
    /// Store loaded at start; without it the service waits for a load request.
    #[arg(long, env = "HANDPASS_STORE")]
    store: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    #[arg(long)]
    audit: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_slice(s: &str) -> Result<SliceName, String> {
    s.parse()
}

fn parse_user_path(s: &str) -> Result<(u32, PathBuf), String> {
    let (user, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected USER=PATH, got '{s}'"))?;
    let user = user.parse().map_err(|_| format!("bad user id '{user}'"))?;
    Ok((user, PathBuf::from(path)))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Dsp(#[from] handpass::dsp::DspError),
    #[error("{0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match serde_json::to_string(&cli) {
        Ok(config) => eprintln!("config: {config}"),
        Err(e) => log::warn!("cannot print configuration: {e}"),
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

//! `srcondense`: train, evaluate and run the super-resolution network.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 numeric failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(srcondense::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(srcondense::Error::NonFiniteLoss { .. }) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<srcondense::Error> for CliError {
    fn from(e: srcondense::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Parser)]
#[command(name = "srcondense", version, about = "Single-image super-resolution with learned group convolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Start from the fixture-scale preset: a one-block model and the bundled images
    #[arg(long)]
    toy: bool,
    /// Upscaling factor (2, 3 or 4)
    #[arg(long)]
    scale: Option<usize>,
    /// Override a configuration key; may be repeated
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, extra: Vec<String>) -> Result<RunConfig, CliError> {
        let mut rc = RunConfig::defaults(self.toy);
        if let Some(path) = &self.config {
            rc.apply_file(path)?;
        }
        let mut pairs: Vec<String> = self.scale.map(|s| format!("scale={s}")).into_iter().collect();
        pairs.extend(extra);
        pairs.extend(self.set.iter().cloned());
        rc.apply_overrides(&pairs)?;
        rc.validate()?;
        Ok(rc)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, writing per-epoch checkpoints and a metrics log
    #[command(after_help = config::keys_help())]
    Train(TrainArgs),
    /// Score a checkpoint on a directory of images against bicubic upscaling
    Eval(EvalArgs),
    /// Super-resolve one image
    Sr(SrArgs),
    /// Print the multiply-accumulate count of a configuration or checkpoint
    #[command(after_help = config::keys_help())]
    Flops(FlopsArgs),
    /// Print per-layer connection retention
    #[command(after_help = config::keys_help())]
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory for checkpoints and logs
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial learning rate
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Group-lasso weight during condensing stages
    #[arg(long)]
    lasso_weight: Option<f64>,
    /// Global gradient-norm ceiling
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Training image directory; may be repeated
    #[arg(long, value_name = "DIR")]
    train_dir: Vec<PathBuf>,
    /// Validation image directory, scored after every epoch
    #[arg(long, value_name = "DIR")]
    val_dir: Option<PathBuf>,
    /// Scalar type: f32 or f64
    #[arg(long)]
    precision: Option<String>,
    /// Continue from a checkpoint
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
    /// Print the resolved configuration and schedule, then exit
    #[arg(long)]
    dry_run: bool,
}

impl TrainArgs {
    fn overrides(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut push = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push(format!("{k}={val}"));
            }
        };
        push("epochs", self.epochs.map(|x| x.to_string()));
        push("lr", self.lr.map(|x| x.to_string()));
        push("batch_size", self.batch_size.map(|x| x.to_string()));
        push("seed", self.seed.map(|x| x.to_string()));
        push("lasso_weight", self.lasso_weight.map(|x| x.to_string()));
        push("clip_norm", self.clip_norm.map(|x| x.to_string()));
        push("val_dir", self.val_dir.as_ref().map(|d| d.display().to_string()));
        push("precision", self.precision.clone());
        for d in &self.train_dir {
            v.push(format!("train_dir={}", d.display()));
        }
        v
    }
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// High-resolution images; low-resolution inputs are derived by bicubic downscaling
    #[arg(long, value_name = "DIR", required_unless_present = "toy")]
    data: Option<PathBuf>,
    /// Paired low-resolution images with the same file names as in --data
    #[arg(long, value_name = "DIR")]
    lr_dir: Option<PathBuf>,
    /// Score the bundled held-out fixtures
    #[arg(long, conflicts_with = "data")]
    toy: bool,
    /// Output directory for the CSV and summary
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Worker threads; results are reported in file order regardless
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
pub struct SrArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output PNG
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args)]
pub struct FlopsArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Count the layers of a checkpoint at their current condensing stage
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Low-resolution input height
    #[arg(long, default_value_t = 32)]
    height: usize,
    /// Low-resolution input width
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// Learned group conv state for a configuration: `final`, `dense` or a stage number
    #[arg(long, default_value = "final")]
    state: String,
}

#[derive(Args)]
pub struct InspectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => {
            let rc = a.cfg.resolve(a.overrides())?;
            commands::train(&rc, &a)
        }
        Command::Eval(a) => commands::eval(&a),
        Command::Sr(a) => commands::sr(&a),
        Command::Flops(a) => {
            let rc = a.cfg.resolve(Vec::new())?;
            commands::flops(&rc, &a)
        }
        Command::Inspect(a) => {
            let rc = a.cfg.resolve(Vec::new())?;
            commands::inspect(&rc, &a)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

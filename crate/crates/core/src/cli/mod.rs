//! Command-line front end. [`run`] parses arguments, dispatches, and maps
//! errors to exit codes: 0 success, 1 usage, 2 data or parse error,
//! 3 numeric failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_eval, cmd_gen_masks, cmd_stylize, cmd_synth, cmd_train, EvalReport, TrainSummary};
pub use config::RunConfig;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vidstyle", version, about = "Temporally coherent video style transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clip with exact flows and occlusion masks.
    Synth(SynthArgs),
    /// Build a ground-truth mask from forward and backward flows.
    GenMasks(GenMasksArgs),
    /// Train the flow and mask networks.
    Train(TrainArgs),
    /// Stylize a directory of frames.
    Stylize(StylizeArgs),
    /// Temporal stability of stylized frame directories.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Frame size as HxW; both sides must be multiples of 8.
    #[arg(long, default_value = "48x48", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum number of moving objects.
    #[arg(long, default_value_t = 2)]
    pub objects: usize,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Odd frames are brightened by this fraction.
    #[arg(long, default_value_t = 0.0)]
    pub brightness_jitter: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GenMasksArgs {
    /// Forward flow (frame t-1 to t).
    #[arg(long)]
    pub fwd: PathBuf,
    /// Backward flow (frame t to t-1).
    #[arg(long)]
    pub bwd: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub cross_check_coeff: f64,
    #[arg(long, default_value_t = 0.5)]
    pub cross_check_bias: f64,
    #[arg(long, default_value_t = 0.01)]
    pub boundary_coeff: f64,
    #[arg(long, default_value_t = 0.002)]
    pub boundary_bias: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Clip directories written by `synth`.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// key=value run configuration; defaults apply to absent keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Coherent,
    Baseline,
}

#[derive(Debug, Clone, Args)]
pub struct StylizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of PPM frames, processed in file-name order.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Coherent)]
    pub mode: Mode,
    /// Also write predicted flows and masks under OUT/debug.
    #[arg(long)]
    pub debug: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Stylized frames to score.
    #[arg(long)]
    pub a: PathBuf,
    /// Optional second arm scored on the same flows and masks.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Directory of backward .flo files, one per frame pair.
    #[arg(long)]
    pub flows: PathBuf,
    /// Directory of PGM masks, one per frame pair.
    #[arg(long)]
    pub masks: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(h)?, p(w)?))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::GenMasks(a) => cmd_gen_masks(a, out),
        Command::Train(a) => cmd_train(a, out).map(|_| ()),
        Command::Stylize(a) => cmd_stylize(a, out),
        Command::Eval(a) => cmd_eval(a, out).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

//! Command-line front end: training, inference, evaluation and the two
//! single-image analyses.
//!
//! Every command resolves its settings as flag, then `--config` file, then
//! default, and writes the resolved values as a key = value record that can
//! be passed back through `--config` to repeat the run.

use std::fmt;
use std::path::Path;

mod analysis;
mod args;
mod infer;
pub mod pad;
mod settings;
mod train;

pub use analysis::{cmd_analyze_scales, cmd_freq_swap, SWAP_FILES};
pub use args::{AnalyzeArgs, Cli, Command, DenoiseArgs, EvalArgs, FreqSwapArgs, GlobalArgs, Preset, TrainArgs};
pub use infer::{cmd_denoise, cmd_eval, denoise_image, DenoiseOutcome, EvalRow, EvalTable, DEFAULT_EVAL_SIGMAS};
pub use settings::Settings;
pub use train::{checkpoint_name, cmd_train, TrainOutcome};

/// File name of the resolved-config record inside output directories.
pub const RESOLVED_CONFIG: &str = "resolved_config.txt";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing inputs or an inconsistent configuration; exit 2.
    Usage(String),
    /// Failure while the command was running; exit 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(e: impl fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Runs one command and prints its summary to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Train(a) => {
            cmd_train(g, a)?;
        }
        Command::Denoise(a) => {
            if let Some((p, s)) = cmd_denoise(g, a)?.metrics {
                println!("PSNR {p:.4} dB  SSIM {s:.6}");
            }
        }
        Command::Eval(a) => print!("{}", cmd_eval(g, a)?.table()),
        Command::AnalyzeScales(a) => print!("{}", cmd_analyze_scales(g, a)?.table()),
        Command::FreqSwap(a) => print!("{}", cmd_freq_swap(g, a)?.report()),
    }
    Ok(())
}

/// Loads the config layer, records the command name and sizes the worker pool.
fn begin(command: &str, g: &GlobalArgs) -> Result<Settings, CliError> {
    let mut s = Settings::load(g.config.as_deref())?;
    s.record.set("command", command);
    if let Some(n) = s.pick_opt::<usize>("threads", g.threads)? {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a second command in the same process keeps the first pool
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("worker pool already initialized; --threads {n} ignored");
        }
    }
    Ok(s)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(madnet::Error::io(dir, e)))
}

fn require_file(path: &Path, flag: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} {}: no such file", path.display())))
    }
}

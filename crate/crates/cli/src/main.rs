//! `innmf` — transforms, factorization, separation and evaluation from the
//! command line.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! failures while computing (divergence, numeric trouble).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "innmf", version, about = "NMF on arbitrary time-frequency points")]
pub struct Cli {
    /// Seed for every random choice (initialization, shuffling).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Flat `key = value` file with defaults for training options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `sgd`, `momentum` or `adam`.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Momentum coefficient for `--optimizer momentum`.
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub kl_floor: Option<f64>,
    /// `functions` (any time sampling) or `table` (one value per distinct time).
    #[arg(long)]
    pub activations: Option<String>,
    /// Number of Fourier encoding frequencies for spectral functions.
    #[arg(long)]
    pub spectral_freqs: Option<usize>,
    /// Number of Fourier encoding frequencies for activation functions.
    #[arg(long)]
    pub activation_freqs: Option<usize>,
    /// Hidden layer widths, e.g. `64,64`.
    #[arg(long)]
    pub hidden: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyse a WAV file into a `t_sec,f_hz,mag` point CSV.
    Transform {
        #[arg(long)]
        input: PathBuf,
        /// `stft:N,hop`, `cqt:fmin,fmax,bpo[,q]`, `sin:N,hop,thresh_db`, or
        /// segments such as `stft:256,64@0-0.5;cqt:55,3520,12@0.5-1`.
        #[arg(long)]
        spec: String,
        #[arg(long, default_value = "points.csv")]
        output: String,
    },
    /// Learn spectral and activation functions from points.
    Fit {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        k: usize,
        /// Frequency that maps to 1 in normalized coordinates (defaults to
        /// the largest frequency in the points).
        #[arg(long)]
        nyquist: Option<f64>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Learn new activations for a saved model's frozen spectral functions.
    Refit {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Required: only activations can be refit.
        #[arg(long)]
        freeze_spectral: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Matrix NMF with multiplicative updates on a magnitude spectrogram.
    Baseline {
        /// WAV file (analysed with `--window`/`--hop`) or a point CSV on a
        /// complete regular grid.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        hop: Option<usize>,
    },
    /// Separate a two-source mixture with two saved dictionaries.
    Separate {
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long)]
        dict1: PathBuf,
        #[arg(long)]
        dict2: PathBuf,
        #[arg(long)]
        window: usize,
        /// Defaults to a quarter window.
        #[arg(long)]
        hop: Option<usize>,
        /// Clean source 1, for metrics.
        #[arg(long, requires = "ref2")]
        ref1: Option<PathBuf>,
        /// Clean source 2, for metrics.
        #[arg(long, requires = "ref1")]
        ref2: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// SDR/SIR/SAR of an estimate against clean references.
    Eval {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        interference: PathBuf,
    },
    /// Rasterize a model or a point set onto a regular grid as `t,f,value`.
    Render {
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// `start,end` in seconds.
        #[arg(long)]
        t_range: String,
        /// `start,end` in Hz.
        #[arg(long)]
        f_range: String,
        /// `TxF` cells, e.g. `200x128`.
        #[arg(long)]
        resolution: String,
        #[arg(long, default_value = "render.csv")]
        output: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

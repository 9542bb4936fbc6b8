use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eobkit::EobError;

mod commands;
mod io;

/// Optimization-bias calculators, generators, transforms, diagnostics and
/// desk experiments for time-series losses.
///
/// Every random draw derives from `--seed` (default 0). Set EOBKIT_LOG to
/// error, warn, info or debug for log output on stderr.
#[derive(Debug, Parser)]
#[command(name = "eobkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a series from a process spec and write it as CSV.
    Generate(GenerateArgs),
    /// Compute the expected optimization bias of an AR process.
    Eob(EobArgs),
    /// Apply the DFT, DWT or identity transform to a CSV column.
    Transform(TransformArgs),
    /// Orthogonality diagnostics of sliding windows of a series.
    Diagnose(DiagnoseArgs),
    /// Evaluate every loss on a target/prediction pair and check each
    /// gradient against central finite differences.
    LossCheck(LossCheckArgs),
    /// Train over an SSNR x horizon grid and write the error surface.
    Simulate(SimulateArgs),
    /// Pure-sinusoid comparison of temporal MSE and the harmonized loss.
    Insight(InsightArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Process spec JSON (`{"ar": ..., "det": ..., "length": N}`).
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the spec's length.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EobArgs {
    /// AR spec JSON (`{"c":..,"phi":[..],"innovation":{..},"sigma_eps2":..}`).
    #[arg(long, conflicts_with_all = ["phi", "estimate"])]
    spec: Option<PathBuf>,
    /// AR coefficients, comma separated or repeated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    phi: Vec<f64>,
    /// Innovation variance used with `--phi`.
    #[arg(long = "sigma-eps2", default_value_t = 1.0)]
    sigma_eps2: f64,
    /// Sequence length.
    #[arg(long = "T", short = 'T')]
    t: usize,
    /// Report in bits instead of nats.
    #[arg(long)]
    bits: bool,
    /// Use the determinant of the correlation matrix instead of the
    /// closed form.
    #[arg(long)]
    determinant: bool,
    /// Fit an AR model to `--input` and report its bias.
    #[arg(long, requires = "input", conflicts_with = "phi")]
    estimate: bool,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    column: Option<String>,
    /// AR order for `--estimate`.
    #[arg(long, default_value_t = 1)]
    order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Dft,
    Dwt,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WaveletArg {
    Haar,
    Db2,
}

impl From<WaveletArg> for eobkit::transforms::Wavelet {
    fn from(w: WaveletArg) -> Self {
        match w {
            WaveletArg::Haar => Self::Haar,
            WaveletArg::Db2 => Self::Db2,
        }
    }
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    /// Header name or zero-based index of the input column.
    #[arg(long)]
    column: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Dft)]
    kind: KindArg,
    #[arg(long, value_enum, default_value_t = WaveletArg::Haar)]
    wavelet: WaveletArg,
    /// DWT depth; defaults to min(trailing zeros of the length, 4).
    #[arg(long)]
    levels: Option<usize>,
    /// Pad a DWT input to the next power of two by repeating the last
    /// value; the original length goes to `<out>.meta.json`.
    #[arg(long)]
    pad: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BasisArg {
    None,
    Dft,
    Dwt,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    column: Option<String>,
    /// Window length L.
    #[arg(long, default_value_t = 16)]
    window: usize,
    #[arg(long, value_enum, default_value_t = BasisArg::None)]
    transform: BasisArg,
    #[arg(long, value_enum, default_value_t = WaveletArg::Haar)]
    wavelet: WaveletArg,
    /// Order of the AR model fitted for the SSNR estimate.
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LossCheckArgs {
    /// Target CSV; a random pair of `--length` points is drawn when omitted.
    #[arg(long, requires = "prediction")]
    target: Option<PathBuf>,
    #[arg(long, requires = "target")]
    prediction: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Grid JSON: a bare grid spec, or an experiment config with `grid`,
    /// `model` and `train` sections.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; all logical cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the seeds in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct InsightArgs {
    /// Experiment config with an `insight` section; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// First of the consecutive run seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input or usage; exit code 1.
    Validation(String),
    /// Failure while running; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Validation(msg)
        } else {
            CliError::Runtime(msg)
        }
    }
}

impl From<EobError> for CliError {
    fn from(e: EobError) -> Self {
        match e {
            EobError::Diverged { .. } | EobError::Singular => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EOBKIT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Eob(a) => commands::eob(a),
        Command::Transform(a) => commands::transform(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::LossCheck(a) => commands::loss_check(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Insight(a) => commands::insight(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

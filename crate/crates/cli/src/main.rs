//! `floquet-om`: spectra, thermometry, fits and oracle checks from a TOML config.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 solver error,
//! 4 unphysical sideband asymmetry, 5 non-convergence, 6 oracle mismatch.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(floquet_om::Error),
    NotConverged(String),
    Mismatch(String),
}

impl From<floquet_om::Error> for CliError {
    fn from(e: floquet_om::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use floquet_om::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::NotConverged(_) => 5,
            CliError::Mismatch(_) => 6,
            CliError::Core(e) => match e {
                E::Config(_) | E::InvalidParams(_) | E::CalibrationRequired(_) | E::GridMismatch(_) => 2,
                E::UnphysicalAsymmetry { .. } => 4,
                E::Convergence { .. } => 5,
                _ => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::NotConverged(m) | CliError::Mismatch(m) => m.clone(),
            CliError::Core(e @ floquet_om::Error::UnphysicalAsymmetry { .. }) => format!(
                "{e}; the anti-Stokes sideband is at least as strong as the Stokes sideband, \
                 which a thermal state cannot produce"
            ),
            CliError::Core(e) => e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "floquet-om", version, about = "Heterodyne spectra of multi-tone optomechanics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the shot-noise-normalized heterodyne spectrum as CSV.
    Spectrum {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Engine::Floquet)]
        engine: Engine,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit sidebands and report occupancies from sideband asymmetry.
    Asymmetry {
        config: PathBuf,
        /// Measured spectrum with columns frequency_hz,s_het[,sigma].
        #[arg(long, conflicts_with = "synthesize", required_unless_present = "synthesize")]
        spectrum: Option<PathBuf>,
        /// Generate the spectrum from the config instead.
        #[arg(long)]
        synthesize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter fits.
    Fit {
        #[command(subcommand)]
        kind: FitKind,
    },
    /// Compare the lattice spectrum against the time-domain oracle.
    Check {
        config: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        rel_tol: f64,
        /// Flip the sign of the conjugate modulation coupling (fault injection).
        #[arg(long, hide = true)]
        debug_flip_conjugate: bool,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Floquet,
    ThreeMode,
    Ideal,
    Oracle,
}

#[derive(Args, Debug)]
pub struct FitOutput {
    /// Parameter report (name,value,sigma).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Data, model and residual per sample.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum FitKind {
    /// Columns omega_mod_hz,ratio[,sigma].
    KerrRatio {
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Photons per tone.
        #[arg(long)]
        n_c: f64,
        #[command(flatten)]
        output: FitOutput,
    },
    /// Pairs of --config/--data; the first config's [kerr] is the start point.
    KerrSpectra {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[command(flatten)]
        output: FitOutput,
    },
    /// Columns n_c,n_bar[,sigma].
    Cooling {
        data: PathBuf,
        #[arg(long, required_unless_present = "c0")]
        config: Option<PathBuf>,
        /// Single-photon cooperativity; overrides the config.
        #[arg(long)]
        c0: Option<f64>,
        #[command(flatten)]
        output: FitOutput,
    },
    /// Columns frequency_hz,magnitude or frequency_hz,re,im.
    Response {
        data: PathBuf,
        #[command(flatten)]
        output: FitOutput,
    },
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("FLOQUET_OM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("FLOQUET_OM_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Spectrum { config, engine, out } => commands::spectrum(&config, engine, out.as_deref()),
        Command::Asymmetry {
            config,
            spectrum,
            synthesize: _,
            out,
        } => commands::asymmetry(&config, spectrum.as_deref(), out.as_deref()),
        Command::Check {
            config,
            rel_tol,
            debug_flip_conjugate,
        } => commands::check(&config, rel_tol, debug_flip_conjugate),
        Command::Fit { kind } => match kind {
            FitKind::KerrRatio {
                data,
                config,
                n_c,
                output,
            } => commands::fit_kerr_ratio(&data, &config, n_c, &output),
            FitKind::KerrSpectra { configs, data, output } => {
                commands::fit_kerr_spectra(&configs, &data, &output)
            }
            FitKind::Cooling {
                data,
                config,
                c0,
                output,
            } => commands::fit_cooling(&data, config.as_deref(), c0, &output),
            FitKind::Response { data, output } => commands::fit_response(&data, &output),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

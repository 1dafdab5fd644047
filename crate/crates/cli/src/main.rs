use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod svg;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Domain verdict: non-Hermitian operator or a failed statistical test.
    Verdict(String),
    /// Bad invocation or unparsable input.
    Usage(String),
    /// The numerics refused or failed.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verdict(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Verdict(m) | CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<guidance_core::Error> for CliError {
    fn from(e: guidance_core::Error) -> Self {
        use guidance_core::Error;
        match &e {
            _ if e.is_input_error() => CliError::Usage(e.to_string()),
            Error::Io(_) | Error::Json(_) => CliError::Usage(e.to_string()),
            Error::NotHermitian { .. } => CliError::Verdict(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "guidance", version, about = "Probability currents and guidance equations for differential-operator Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report whether the Hamiltonian is Hermitian; exit 1 if it is not.
    Check {
        hamiltonian: PathBuf,
    },
    /// Derive the current table.
    Derive {
        hamiltonian: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Replace H by (H + H†)/2 first.
        #[arg(long)]
        hermitize: bool,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve a state, write snapshots, currents, trajectories and plots.
    Simulate {
        hamiltonian: PathBuf,
        state: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Number of guided trajectories to integrate.
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare current constructions on the initial state.
    Compare {
        hamiltonian: PathBuf,
        state: PathBuf,
        /// Comma-separated: canonical, direct, epstein, born-jordan, second-order.
        #[arg(long, default_value = "canonical,epstein,born-jordan,second-order")]
        methods: String,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Sample |ψ|², guide the ensemble, and compare with |ψ(T)|² by KS distance.
    Equivariance {
        hamiltonian: PathBuf,
        state: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        particles: Option<usize>,
        /// Final time; overrides --steps.
        #[arg(long)]
        time: Option<f64>,
        /// Exit 1 if the KS distance exceeds this.
        #[arg(long)]
        max_ks: Option<f64>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
}

#[derive(Args, Clone, Default)]
pub struct GridFlags {
    /// Points per axis: `N` or `N1,N2,..`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Box per axis: `a:b` or `a:b,c:d,..`.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
}

#[derive(Args, Clone, Default)]
pub struct RunFlags {
    #[command(flatten)]
    pub grid: GridFlags,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Keep every `stride`-th step.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// RK4 substeps per snapshot interval for trajectories.
    #[arg(long)]
    pub substeps: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Latex,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { hamiltonian } => commands::check(&hamiltonian),
        Command::Derive { hamiltonian, format, hermitize, out } => {
            commands::derive(&hamiltonian, format, hermitize, out.as_deref())
        }
        Command::Simulate { hamiltonian, state, run, trajectories, out } => {
            commands::simulate(&hamiltonian, &state, &run, trajectories, &out)
        }
        Command::Compare { hamiltonian, state, methods, format, grid } => {
            commands::compare(&hamiltonian, &state, &methods, format, &grid)
        }
        Command::Equivariance { hamiltonian, state, run, particles, time, max_ks, format } => {
            commands::equivariance(&hamiltonian, &state, &run, particles, time, max_ks, format)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

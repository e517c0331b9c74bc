//! `hypnf`: command-line front end for Birkhoff normal forms at hyperbolic
//! fixed points.
//!
//! Every run writes a JSON [`report::RunReport`], to `--out DIR/report.json`
//! or to stdout. Exit codes: 1 output failure, 2 bad input or usage,
//! 3 spectrum, 4 resonance, 5 flow, 6 homological equation, 7 deformation.

mod chart;
mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use hypnf::deformation::DeformationError;
use hypnf::flow::FlowError;
use hypnf::homological::HomologicalError;
use hypnf::io::IoError;
use hypnf::jet::JetError;
use hypnf::symplectic::SymplecticError;

use report::RunReport;

#[derive(Debug, Parser)]
#[command(name = "hypnf", version, about = "Birkhoff normal forms near hyperbolic fixed points")]
pub struct Cli {
    /// Hamiltonian JSON file.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Directory for report.json and CSV files; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Main tolerance of the command (ODE, quadrature or generator).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Also write CSV tables (needs --out).
    #[arg(long, global = true)]
    pub csv: bool,
    /// Truncation order for bnf; defaults to the N of the input.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Symplectic frame of the quadratic part.
    Williamson,
    /// Order-by-order Birkhoff normalization.
    Bnf {
        /// Exact rational arithmetic; the input must already be in Williamson form.
        #[arg(long)]
        exact: bool,
    },
    /// Integrate the Hamiltonian flow from one point.
    Flow {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        rho: Point,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        time: f64,
        /// Integrate dκ_t alongside.
        #[arg(long)]
        variational: bool,
    },
    /// Hitting times of the outgoing and incoming regions.
    Hit {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        rho: Point,
    },
    /// Empirical growth exponents and slack in the outgoing region.
    Gronwall {
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Halve δ up to this many times until the samples are monotone.
        #[arg(long)]
        certify: Option<usize>,
    },
    /// Solve H_p f = g, g being the flat remainder of the input.
    Homological {
        #[command(flatten)]
        points: PointSet,
        /// Also check H_p f − g by differencing along the flow.
        #[arg(long)]
        residual: bool,
        #[arg(long, default_value_t = 3)]
        cutoff_order: usize,
    },
    /// Remove the flat remainder by the homotopy q_s = q₀ + s·r.
    Deform {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        steps: StepArgs,
    },
    /// Conjugacy residual |p∘κ − q₀| of a map on a grid.
    Verify {
        #[arg(long, value_enum, default_value_t = KappaChoice::Identity)]
        kappa: KappaChoice,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        steps: StepArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Williamson => "williamson",
            Command::Bnf { .. } => "bnf",
            Command::Flow { .. } => "flow",
            Command::Hit { .. } => "hit",
            Command::Gronwall { .. } => "gronwall",
            Command::Homological { .. } => "homological",
            Command::Deform { .. } => "deform",
            Command::Verify { .. } => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Point)
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Grid points per side in the (x₁, ξ₁) plane.
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
    /// Half width of the grid; defaults to 2δ/3.
    #[arg(long)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    #[arg(long, default_value_t = 8)]
    pub s_steps: usize,
    /// Error tolerance of the s-integration.
    #[arg(long)]
    pub ode_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PointSet {
    /// Evaluation point in the input coordinates; repeatable.
    #[arg(long = "rho", value_parser = parse_point, allow_hyphen_values = true)]
    pub rho: Vec<Point>,
    /// Grid points per side in the (x₁, ξ₁) plane of the chart.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Half width of the grid; defaults to δ/2.
    #[arg(long)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KappaChoice {
    Identity,
    Deformed,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("input: {0}")]
    Input(#[from] IoError),
    #[error(transparent)]
    Spectrum(#[from] SymplecticError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Homological(#[from] HomologicalError),
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Write { .. } => 1,
            CliError::Usage(_) | CliError::Read { .. } | CliError::Input(_) => 2,
            CliError::Spectrum(_) => 3,
            CliError::Jet(JetError::ResonanceObstruction { .. }) => 4,
            CliError::Jet(JetError::NotWilliamson { .. }) => 3,
            CliError::Jet(_) => 2,
            CliError::Flow(_) => 5,
            CliError::Homological(_) => 6,
            CliError::Deformation(_) => 7,
        }
    }
}

/// Files produced besides the report.
#[derive(Default)]
pub struct Outputs {
    pub csv: Vec<(String, String)>,
}

fn configure_threads() {
    if let Some(n) = std::env::var("HYPNF_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn write_file(path: PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(&path, text).map_err(|source| CliError::Write { path, source })
}

fn emit(cli: &Cli, report: &RunReport, outputs: &Outputs) -> Result<(), CliError> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
                path: dir.clone(),
                source,
            })?;
            write_file(dir.join("report.json"), &report.to_json())?;
            if cli.csv {
                for (name, text) in &outputs.csv {
                    write_file(dir.join(name), text)?;
                }
            }
        }
        None => print!("{}", report.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let mut report = RunReport::new(cli.command.name());
    let mut outputs = Outputs::default();
    let result = if cli.csv && cli.out.is_none() {
        Err(CliError::Usage("--csv needs --out DIR".into()))
    } else {
        commands::run(&cli, &mut report, &mut outputs)
    };
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            commands::record_error(&mut report, e);
            eprintln!("hypnf {}: {}", cli.command.name(), commands::describe(e));
            e.exit_code()
        }
    };
    report.exit_status.code = i32::from(code);
    if let Err(e) = emit(&cli, &report, &outputs) {
        eprintln!("hypnf: {e}");
        return ExitCode::from(e.exit_code());
    }
    ExitCode::from(code)
}

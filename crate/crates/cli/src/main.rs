//! `moser`: norms, log-variation, Moser flows and isotopy verification from
//! the command line.
//!
//! Exit codes: 0 pass, 1 a checked property failed, 2 user error, 3 numerical
//! error.

mod commands;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use moser_core::gallery::CaseParams;
use moser_core::moser::IntegratorSpec;
use moser_core::norms::{Chart, Norm, NormKind, DEFAULT_SAMPLE_COUNT, DEFAULT_SEED};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] moser_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_user_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "moser", version, about = "Numerical symplectic and contact stability checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sampled sup norms of a form (or its inverse) on spheres.
    Norms(commands::NormsArgs),
    /// Log-variation of a form against a perturbation, or total log-variation of a family.
    Logvar(commands::LogvarArgs),
    /// Integrate Moser flow lines of a family.
    Flow(commands::FlowArgs),
    /// Verify φ_t*ω_t = ω_0 along Moser flows.
    Verify(commands::VerifyArgs),
    /// Verify a Gray isotopy of contact forms.
    ContactVerify(commands::ContactArgs),
    /// Run the check suite of a gallery case and write a report bundle.
    Example(commands::ExampleArgs),
}

/// `min:max:count`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected min:max:count, got `{s}`"));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    let count = parts[2].trim().parse::<usize>().map_err(|e| format!("`{}`: {e}", parts[2]))?;
    Ok(GridSpec { min: num(parts[0])?, max: num(parts[1])?, count })
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"))).collect()
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    match parse_list(&s.replace(':', ","))?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected inner:outer, got `{s}`")),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args)]
pub struct SamplingArgs {
    /// Seed of the sphere sampler.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Sphere samples per radius.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormChoice {
    L1,
    Frobenius,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ChartChoice {
    Euclidean,
    Cylindrical,
}

#[derive(Args)]
pub struct NormArgs {
    #[arg(long, value_enum, default_value = "l1")]
    pub norm: NormChoice,
    /// Radial coordinate; defaults to the gallery case's chart, else euclidean.
    #[arg(long, value_enum)]
    pub chart: Option<ChartChoice>,
}

impl NormArgs {
    pub fn resolve(&self, case_chart: Option<Chart>) -> Norm {
        let kind = match self.norm {
            NormChoice::L1 => NormKind::L1Operator,
            NormChoice::Frobenius => NormKind::L2Frobenius,
        };
        let chart = match self.chart {
            Some(ChartChoice::Euclidean) => Chart::Euclidean,
            Some(ChartChoice::Cylindrical) => Chart::Cylindrical,
            None => case_chart.unwrap_or_default(),
        };
        Norm { kind, chart }
    }
}

/// Overrides for gallery references.
#[derive(Args)]
pub struct CaseArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated coefficients of the product family.
    #[arg(long, value_parser = parse_list)]
    pub a: Option<Vec<f64>>,
    /// Profile expression of the product family.
    #[arg(long)]
    pub profile: Option<String>,
}

impl CaseArgs {
    pub fn params(&self) -> CaseParams {
        CaseParams { p: self.p, c: self.c, n: self.n, a: self.a.clone(), profile: self.profile.clone() }
    }
}

#[derive(Args)]
pub struct IntegratorArgs {
    #[arg(long, default_value_t = IntegratorSpec::default().rel_tol)]
    pub rtol: f64,
    #[arg(long, default_value_t = IntegratorSpec::default().abs_tol)]
    pub atol: f64,
    #[arg(long, default_value_t = IntegratorSpec::default().max_steps)]
    pub max_steps: usize,
    #[arg(long, default_value_t = IntegratorSpec::default().escape_radius)]
    pub escape_radius: f64,
    #[arg(long, default_value_t = IntegratorSpec::default().min_step)]
    pub min_step: f64,
}

impl IntegratorArgs {
    pub fn spec(&self) -> IntegratorSpec {
        IntegratorSpec {
            rel_tol: self.rtol,
            abs_tol: self.atol,
            max_steps: self.max_steps,
            escape_radius: self.escape_radius,
            min_step: self.min_step,
        }
    }
}

#[derive(Args)]
pub struct PointArgs {
    /// Explicit start point, comma-separated; repeatable.
    #[arg(long = "from", value_parser = parse_list)]
    pub from: Vec<Vec<f64>>,
    /// Number of sampled start points.
    #[arg(long)]
    pub points: Option<usize>,
    /// Sample in the ball of this radius.
    #[arg(long, conflicts_with = "annulus")]
    pub radius: Option<f64>,
    /// Sample in the annulus inner:outer.
    #[arg(long, value_parser = parse_range)]
    pub annulus: Option<(f64, f64)>,
    #[arg(long, default_value_t = 7)]
    pub point_seed: u64,
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("MOSER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("MOSER_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<bool> {
    init_threads()?;
    match cli.command {
        Command::Norms(a) => commands::norms(a),
        Command::Logvar(a) => commands::logvar(a),
        Command::Flow(a) => commands::flow(a),
        Command::Verify(a) => commands::verify(a),
        Command::ContactVerify(a) => commands::contact_verify(a),
        Command::Example(a) => commands::example(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("moser: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_and_lists() {
        assert_eq!(parse_grid("1:8:4").unwrap(), GridSpec { min: 1.0, max: 8.0, count: 4 });
        assert!(parse_grid("1:8").is_err());
        assert!(parse_grid("1:x:4").is_err());
        assert_eq!(parse_list("1, 2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(parse_range("1:4").unwrap(), (1.0, 4.0));
    }

    #[test]
    fn exit_codes_are_disjoint() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(moser_core::Error::Schema("x".into())).exit_code(), 2);
        let num = moser_core::Error::SingularForm { point: vec![], t: None, sigma_min: 0.0 };
        assert_eq!(CliError::Core(num).exit_code(), 3);
    }
}

//! Command-line front end. Every command writes one JSON report (plus CSV
//! tables for the reproduction commands) and maps failures onto exit codes:
//! 0 pass, 1 identity failure, 2 configuration error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use homlie_core::linalg::C64;
use homlie_core::report::{to_json_string, write_atomic, JsonComplex, TOOL_VERSION};
use homlie_core::HomLieError;
use serde::Serialize;

mod commands;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_IDENTITY_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "HOMLIE_SEED";

#[derive(Parser, Debug)]
#[command(name = "homlie", version, about = "Twisted-bracket identities and Bohr spectra of twisted derivation flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sampled identity suite for one twist.
    CheckIdentities(CheckArgs),
    /// Bohr spectrum of a scenario's initial element.
    Spectrum(SpectrumArgs),
    /// Exact and averaged decompositions, ergodic split and reorder check.
    Decompose(DecomposeArgs),
    /// Conjugation-twisted shift experiment with signal, error and scaling tables.
    #[command(name = "reproduce-sec8")]
    ReproduceSec8(ReproduceArgs),
    /// Mode counts and reconstruction errors of the Hermitian lattice over N.
    Scaling(ScalingArgs),
    /// Spectral enrichment of the truncated Weyl algebra under shear.
    Weyl(WeylArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Prefactor {
    #[value(name = "i")]
    #[serde(rename = "i")]
    I,
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
}

impl Prefactor {
    pub fn value(self) -> C64 {
        match self {
            Prefactor::I => C64::new(0.0, 1.0),
            Prefactor::One => C64::new(1.0, 0.0),
        }
    }
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct Common {
    /// Matrix size N (qubit sites for the uhf scenario).
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Lattice spacing ω (shift parameter θ for weighted-shift).
    #[arg(long, default_value_t = 0.14142135623730951)]
    pub omega: f64,
    /// Overrides the scenario prefactor.
    #[arg(long, value_enum)]
    pub prefactor: Option<Prefactor>,
    /// Half-width of the averaging window.
    #[arg(long = "R", default_value_t = 200.0)]
    pub r: f64,
    /// Trapezoid nodes on [-R, R].
    #[arg(long, default_value_t = 4001)]
    pub steps: usize,
    /// Pass tolerance (identity checks) or real-part tolerance (spectra).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Report file, or output directory for multi-file commands.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// hermitian, sec8, uhf, weighted-shift or weyl.
    #[arg(long, default_value = "hermitian")]
    pub scenario: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwistChoice {
    Identity,
    Unitary,
    TraceShift,
    Transpose,
}

#[derive(Args, Debug, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "unitary")]
    pub twist: TwistChoice,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct ScenarioArgs {
    /// Shear of the weyl scenario.
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    /// Fock levels of the weyl scenario.
    #[arg(long, default_value_t = 12)]
    pub nmax: usize,
    #[arg(long, default_value_t = 1.0)]
    pub omega1: f64,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub omega2: f64,
    /// uhf: X acts on the first site only.
    #[arg(long)]
    pub x_local: bool,
    /// weighted-shift: X = diag(e^{iθn}) with prefactor 1.
    #[arg(long)]
    pub unitary_x: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Eig,
    Average,
}

#[derive(Args, Debug, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "eig")]
    pub method: Method,
    /// Detection threshold relative to |a0| (average method).
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// Also write the exact coefficients as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ReproduceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Comma-separated ascending sizes.
    #[arg(long, default_value = "8,16,32,64")]
    pub dims: String,
    #[arg(long = "K", default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ScalingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, default_value = "8,16,32,64")]
    pub dims: String,
    #[arg(long = "K", default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct WeylArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 12)]
    pub nmax: usize,
    #[arg(long, default_value_t = 1.0)]
    pub omega1: f64,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub omega2: f64,
    /// Comma-separated shears.
    #[arg(long, default_value = "0.0,0.3")]
    pub eps: String,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<HomLieError> for CliError {
    fn from(e: HomLieError) -> Self {
        let code = match e {
            HomLieError::FlowOverflow { .. }
            | HomLieError::ExpmOverflow { .. }
            | HomLieError::NonFinite { .. }
            | HomLieError::EigNoConvergence { .. }
            | HomLieError::Defective { .. } => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        };
        CliError { code, message: e.to_string() }
    }
}

pub fn config_error(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_CONFIG, message: message.into() }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Report wrapper carrying the configuration echo and provenance fields.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config: &'a serde_json::Value,
    pub seed: u64,
    pub prefactor: JsonComplex,
    #[serde(flatten)]
    pub body: T,
}

/// Resolved run context shared by all commands.
pub struct Context {
    pub command: &'static str,
    pub config: serde_json::Value,
    pub seed: u64,
}

impl Context {
    fn new<A: Serialize>(command: &'static str, args: &A, cli_seed: u64) -> CliResult<Self> {
        let seed = match std::env::var(SEED_ENV) {
            Ok(s) => s.trim().parse::<u64>().map_err(|_| config_error(format!("{SEED_ENV}={s:?} is not a u64")))?,
            Err(_) => cli_seed,
        };
        let mut config = serde_json::to_value(args).map_err(|e| config_error(e.to_string()))?;
        config["seed"] = seed.into();
        Ok(Context { command, config, seed })
    }

    pub fn render<T: Serialize>(&self, prefactor: C64, body: T) -> CliResult<Vec<u8>> {
        let env = Envelope {
            tool_version: TOOL_VERSION,
            command: self.command,
            config: &self.config,
            seed: self.seed,
            prefactor: prefactor.into(),
            body,
        };
        Ok(to_json_string(&env)?.into_bytes())
    }
}

/// Writes to `path` atomically, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => Ok(write_atomic(p, bytes)?),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::from(HomLieError::from(e)))
        }
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T: std::str::FromStr>(name: &str, s: &str) -> CliResult<Vec<T>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    if items.is_empty() {
        return Err(config_error(format!("--{name} must not be empty")));
    }
    items
        .into_iter()
        .map(|x| x.parse::<T>().map_err(|_| config_error(format!("--{name}: cannot parse {x:?}"))))
        .collect()
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let result = match &cli.command {
        Command::CheckIdentities(a) => {
            Context::new("check-identities", a, a.common.seed).and_then(|ctx| commands::check_identities(&ctx, a))
        }
        Command::Spectrum(a) => Context::new("spectrum", a, a.common.seed).and_then(|ctx| commands::spectrum(&ctx, a)),
        Command::Decompose(a) => Context::new("decompose", a, a.common.seed).and_then(|ctx| commands::decompose(&ctx, a)),
        Command::ReproduceSec8(a) => {
            Context::new("reproduce-sec8", a, a.common.seed).and_then(|ctx| commands::reproduce_sec8(&ctx, a))
        }
        Command::Scaling(a) => Context::new("scaling", a, a.common.seed).and_then(|ctx| commands::scaling(&ctx, a)),
        Command::Weyl(a) => Context::new("weyl", a, a.common.seed).and_then(|ctx| commands::weyl(&ctx, a)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("homlie: {}", e.message);
            e.code
        }
    }
}

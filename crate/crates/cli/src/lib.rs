//! `oia` command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use oia_core::analytic::{
    self, AnalyticError, Provenance, SuccessTable, TableKind, ThroughputRecord,
};
use oia_core::channel::make_interference_spaces;
use oia_core::harness::{
    self, check_writable, estimate_mpr_dim_table, estimate_mpr_total_table, estimate_success_tables, records_to_csv,
    run_sweep, write_atomic, ExperimentPlan, HarnessError, Preset, Series, TablePlan,
};
use oia_core::protocols::{warm_up, ProtocolError, Receiver};
use oia_core::rng::{derive_seed, StreamSource};
use oia_core::{ConfigError, NetworkConfig, ProtocolKind};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "oia",
    version,
    about = "Throughput of overlapped slotted-ALOHA networks with multi-antenna interference management",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one protocol at one transmit probability
    Simulate(SimulateArgs),
    /// Sweep protocols over a grid of transmit probabilities
    Sweep(SweepArgs),
    /// Evaluate a closed-form throughput from success tables
    Analytic(AnalyticArgs),
    /// Estimate a success-probability table by conditioned simulation
    EstimateTables(EstimateArgs),
    /// Collect leakage samples and write the shared CDF estimator
    WarmupCdf(WarmupArgs),
    /// Run a named figure recipe (fig4, fig5, fig6, fig7)
    Preset(PresetArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Mpr,
    In,
    Oia,
    OiaNoTxbf,
    OiaNoOra,
}

impl From<ProtocolArg> for ProtocolKind {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Mpr => ProtocolKind::Mpr,
            ProtocolArg::In => ProtocolKind::In,
            ProtocolArg::Oia => ProtocolKind::Oia,
            ProtocolArg::OiaNoTxbf => ProtocolKind::OiaNoTxbf,
            ProtocolArg::OiaNoOra => ProtocolKind::OiaNoOra,
        }
    }
}

fn parse_prob(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn parse_positive_step(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1]"))
    }
}

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not finite"))
    }
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (m, j) = s.split_once(':').ok_or_else(|| format!("'{s}' is not m:j"))?;
    Ok((
        m.trim().parse().map_err(|_| format!("bad m in '{s}'"))?,
        j.trim().parse().map_err(|_| format!("bad j in '{s}'"))?,
    ))
}

/// Network geometry and link budget shared by every physics subcommand.
#[derive(Debug, Clone, Args)]
pub struct NetworkArgs {
    /// Overlapped networks K [1, 63]
    #[arg(long = "K", value_parser = clap::value_parser!(u64).range(1..=63))]
    pub k: u64,
    /// Users per network N [1, 4095]
    #[arg(long = "N", value_parser = clap::value_parser!(u64).range(1..=4095))]
    pub n: u64,
    /// AP antennas M [1, 64]
    #[arg(long = "M", value_parser = clap::value_parser!(u64).range(1..=64))]
    pub m: u64,
    /// User antennas L [1, 64]
    #[arg(long = "L", value_parser = clap::value_parser!(u64).range(1..=64))]
    pub l: u64,
    /// Signal-space dimension S [1, M]
    #[arg(long = "S", value_parser = clap::value_parser!(u64).range(1..=64))]
    pub s: u64,
    /// Received SNR per antenna in dB [finite]
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite)]
    pub snr_db: f64,
    /// Decoding SINR threshold in dB [finite]
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite)]
    pub sinr_threshold_db: f64,
    /// Use one interference space at every AP
    #[arg(long)]
    pub shared_interference_space: bool,
    /// Master seed [0, 2^64)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File of `key = value` lines using these flag names; flags win
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

impl NetworkArgs {
    fn to_config(&self, p: f64) -> Result<NetworkConfig, ConfigError> {
        let cfg = NetworkConfig {
            k: self.k as usize,
            n: self.n as usize,
            m: self.m as usize,
            l: self.l as usize,
            s: self.s as usize,
            p,
            snr_db: self.snr_db,
            sinr_threshold_db: self.sinr_threshold_db,
            shared_interference_space: self.shared_interference_space,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Monte-Carlo budget.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Measurement slots per point and replication [1, 2^64)
    #[arg(long, default_value_t = ExperimentPlan::DEFAULT_SLOTS, value_parser = clap::value_parser!(u64).range(1..))]
    pub slots: u64,
    /// Independent replications [1, 2^64)
    #[arg(long, default_value_t = ExperimentPlan::DEFAULT_REPLICATIONS, value_parser = clap::value_parser!(u64).range(1..))]
    pub replications: u64,
    /// Leakage samples per user collected before measuring (opportunistic protocols) [1, 2^32)
    #[arg(long, default_value_t = ExperimentPlan::DEFAULT_WARMUP as u64, value_parser = clap::value_parser!(u64).range(1..=u32::MAX as u64))]
    pub warmup: u64,
    /// One leakage CDF per user instead of one shared CDF
    #[arg(long)]
    pub per_user_cdf: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Protocol to run
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Transmit probability p [0, 1]
    #[arg(long, value_parser = parse_prob)]
    pub p: f64,
    #[command(flatten)]
    pub net: NetworkArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Protocols to run, comma separated
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub protocol: Vec<ProtocolArg>,
    #[command(flatten)]
    pub net: NetworkArgs,
    /// First transmit probability [0, 1]
    #[arg(long, value_parser = parse_prob, default_value_t = 0.01)]
    pub p_start: f64,
    /// Last transmit probability [0, 1]
    #[arg(long, value_parser = parse_prob, default_value_t = 0.30)]
    pub p_end: f64,
    /// Grid step (0, 1]
    #[arg(long, value_parser = parse_positive_step, default_value_t = 0.01)]
    pub p_step: f64,
    /// Explicit transmit probabilities, comma separated [0, 1]; replaces the grid
    #[arg(long, value_delimiter = ',', value_parser = parse_prob)]
    pub p_values: Vec<f64>,
    /// Signal-space dimensions to sweep, comma separated [1, M]; default is --S
    #[arg(long = "S-values", value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..=64))]
    pub s_values: Vec<u64>,
    /// Network counts to sweep, comma separated [1, 63]; default is --K
    #[arg(long = "K-values", value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..=63))]
    pub k_values: Vec<u64>,
    /// Set M = L = S = K at every K point
    #[arg(long)]
    pub antennas_follow_k: bool,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output CSV (stdout when absent); metadata goes to <FILE>.meta.json
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyticProtocol {
    Mpr,
    In,
    Oia,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyticArgs {
    /// Closed form to evaluate
    #[arg(long, value_enum)]
    pub protocol: AnalyticProtocol,
    /// Transmit probability p [0, 1]
    #[arg(long, value_parser = parse_prob)]
    pub p: f64,
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Success tables: mpr takes one (by total), in takes two (dim S, then
    /// dim M), oia takes one or two (full-array cells, then signal-space cells)
    #[arg(long, value_delimiter = ',', value_name = "FILE", required_unless_present = "ones")]
    pub tables: Vec<PathBuf>,
    /// Use hypothetical all-ones tables instead of files
    #[arg(long, conflicts_with = "tables")]
    pub ones: bool,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    /// P_{m,j} keyed by the split between the tagged and the other networks
    Split,
    /// P_{m,M} keyed by total load
    MprTotal,
    /// P_{m,dim} for isotropic streams in a dim-dimensional space
    MprDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReceiverArg {
    /// Joint ZF while all streams fit the array, signal-space ZF otherwise
    Adaptive,
    /// Always signal-space ZF, other networks' streams as interference
    SignalSpace,
}

impl From<ReceiverArg> for Receiver {
    fn from(r: ReceiverArg) -> Self {
        match r {
            ReceiverArg::Adaptive => Receiver::Adaptive,
            ReceiverArg::SignalSpace => Receiver::SignalSpace,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Table to estimate
    #[arg(long, value_enum, default_value = "split")]
    pub kind: TableArg,
    /// Protocol whose decoding is measured (split tables)
    #[arg(long, value_enum, default_value = "oia")]
    pub protocol: ProtocolArg,
    /// Transmit probability p [0, 1]; sets the transmit rule of opportunistic protocols
    #[arg(long, value_parser = parse_prob)]
    pub p: f64,
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Receiver at the tagged AP (split tables)
    #[arg(long, value_enum, default_value = "adaptive")]
    pub receiver: ReceiverArg,
    /// Cells as m:j, comma separated; default is every cell the closed form reads
    #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
    pub cells: Vec<(usize, usize)>,
    /// Dimension of mpr-dim tables [1, 64]; default is --S
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=64))]
    pub dim: Option<u64>,
    /// Largest stream count of mpr-dim tables [1, 64]; default is the dimension
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=64))]
    pub max_m: Option<u64>,
    /// Conditioned trials per cell [100, 2^64)
    #[arg(long, default_value_t = 2_000, value_parser = clap::value_parser!(u64).range(100..))]
    pub samples: u64,
    /// Leakage samples per user collected before measuring (opportunistic protocols) [1, 2^32)
    #[arg(long, default_value_t = ExperimentPlan::DEFAULT_WARMUP as u64, value_parser = clap::value_parser!(u64).range(1..=u32::MAX as u64))]
    pub warmup: u64,
    /// One leakage CDF per user instead of one shared CDF
    #[arg(long)]
    pub per_user_cdf: bool,
    /// Output table file (stdout when absent)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WarmupArgs {
    /// Protocol whose beams produce the leakage samples
    #[arg(long, value_enum, default_value = "oia")]
    pub protocol: ProtocolArg,
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Leakage samples [1, 2^32)
    #[arg(long, default_value_t = ExperimentPlan::DEFAULT_WARMUP as u64, value_parser = clap::value_parser!(u64).range(1..=u32::MAX as u64))]
    pub warmup: u64,
    /// Output CDF file (stdout when absent)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

#[derive(Debug, Clone, Args)]
pub struct PresetArgs {
    /// Recipe to run
    #[arg(value_enum)]
    pub name: PresetName,
    /// Master seed [0, 2^64)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override measurement slots per point [1, 2^64)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub slots: Option<u64>,
    /// Override replications [1, 2^64)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub replications: Option<u64>,
    /// Override warm-up samples [1, 2^32)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=u32::MAX as u64))]
    pub warmup: Option<u64>,
    /// Override conditioned trials per cell (fig4) [100, 2^64)
    #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
    pub samples: Option<u64>,
    /// Output file (stdout when absent)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit 2.
    Usage(String),
    /// Failure while working: exit 1.
    Runtime { category: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Runtime { .. } => EXIT_RUNTIME,
        }
    }

    fn runtime(category: &'static str, message: impl ToString) -> Self {
        Self::Runtime { category, message: message.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "error: {m}"),
            Self::Runtime { category, message } => write!(f, "error [{category}]: {message}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Plan(m) => Self::Usage(m),
            HarnessError::Point { source: ProtocolError::Config(c), point } => Self::Usage(format!("{point}: {c}")),
            HarnessError::Io { .. } => Self::runtime("io", e),
            other => Self::runtime("simulation", other),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(c) => c.into(),
            other => Self::runtime("simulation", other),
        }
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        match e {
            AnalyticError::Config(c) => c.into(),
            other => Self::runtime("table", other),
        }
    }
}

/// Splices `--config FILE` contents into the argument list right after the
/// subcommand, so explicit flags (which come later) override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(sub_pos) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|i| i + 1) else {
        return Ok(args);
    };
    let mut path = None;
    for (i, a) in args.iter().enumerate().skip(sub_pos + 1) {
        let a = a.to_string_lossy();
        if a == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let sub_name = args[sub_pos].to_string_lossy().to_string();
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(&sub_name)
        .ok_or_else(|| CliError::Usage(format!("unrecognized subcommand '{sub_name}'")))?;
    let explicit: Vec<String> = args[sub_pos + 1..]
        .iter()
        .filter_map(|a| a.to_str()?.strip_prefix("--").map(|k| k.split('=').next().unwrap_or(k).to_string()))
        .collect();
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected `key = value`", path.display(), n + 1)))?;
        if key == "config" {
            return Err(CliError::Usage(format!("{}:{}: config files cannot nest", path.display(), n + 1)));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key))
            .ok_or_else(|| CliError::Usage(format!("{}:{}: unknown key '{key}'", path.display(), n + 1)))?;
        if explicit.iter().any(|k| k == key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}")));
            injected.push(OsString::from(value));
        } else {
            match value {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => {
                    return Err(CliError::Usage(format!(
                        "{}:{}: '{key}' takes true or false",
                        path.display(),
                        n + 1
                    )))
                }
            }
        }
    }
    let mut out = args[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub_pos + 1..]);
    Ok(out)
}

/// Parses, validates and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

enum Output {
    Stdout,
    File(PathBuf),
}

impl Output {
    fn new(out: Option<PathBuf>) -> Result<Self, CliError> {
        match out {
            None => Ok(Self::Stdout),
            Some(p) => {
                check_writable(&p).map_err(|e| CliError::runtime("io", e))?;
                Ok(Self::File(p))
            }
        }
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        match self {
            Self::Stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::runtime("io", e))
            }
            Self::File(p) => write_atomic(p, text.as_bytes()).map_err(|e| CliError::runtime("io", e)),
        }
    }

    fn path(&self) -> Option<&Path> {
        match self {
            Self::Stdout => None,
            Self::File(p) => Some(p),
        }
    }
}

fn emit_sweep(result: &harness::SweepResult, out: &Output) -> Result<(), CliError> {
    match out.path() {
        Some(p) => result.write(p).map_err(|e| CliError::runtime("io", e)),
        None => out.emit(&result.to_csv()),
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Analytic(a) => analytic_cmd(a),
        Command::EstimateTables(a) => estimate(a),
        Command::WarmupCdf(a) => warmup_cdf(a),
        Command::Preset(a) => preset_cmd(a),
    }
}

fn apply_run(plan: &mut ExperimentPlan, run: &RunArgs) {
    plan.slots = run.slots;
    plan.replications = run.replications;
    plan.warmup_samples = run.warmup as usize;
    plan.shared_cdf = !run.per_user_cdf;
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let cfg = a.net.to_config(a.p)?;
    let protocol: ProtocolKind = a.protocol.into();
    protocol.validate(&cfg)?;
    let mut plan = ExperimentPlan::new(cfg, vec![Series { protocol, s: None }], vec![a.p]);
    apply_run(&mut plan, &a.run);
    plan.validate()?;
    let out = Output::new(a.out)?;
    emit_sweep(&run_sweep(&plan)?, &out)
}

/// Builds and fully validates a sweep plan.
pub fn sweep_plan(a: &SweepArgs) -> Result<ExperimentPlan, CliError> {
    let p_values = if a.p_values.is_empty() {
        ExperimentPlan::p_grid(a.p_start, a.p_end, a.p_step)?
    } else {
        a.p_values.clone()
    };
    let cfg = a.net.to_config(p_values[0])?;
    let protocols: Vec<ProtocolKind> = a.protocol.iter().map(|&p| p.into()).collect();
    let s_values: Vec<usize> = a.s_values.iter().map(|&s| s as usize).collect();
    let series = if s_values.is_empty() {
        protocols.iter().map(|&protocol| Series { protocol, s: None }).collect()
    } else {
        ExperimentPlan::cross_series(&protocols, &s_values)
    };
    let mut plan = ExperimentPlan::new(cfg, series, p_values);
    plan.k_values = a.k_values.iter().map(|&k| k as usize).collect();
    plan.antennas_follow_k = a.antennas_follow_k;
    apply_run(&mut plan, &a.run);
    plan.validate()?;
    Ok(plan)
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let plan = sweep_plan(&a)?;
    let out = Output::new(a.out)?;
    emit_sweep(&run_sweep(&plan)?, &out)
}

fn read_table(path: &Path) -> Result<SuccessTable, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime("io", format!("cannot read {}: {e}", path.display())))?;
    SuccessTable::from_text(&text).map_err(|e| CliError::runtime("table", format!("{}: {e}", path.display())))
}

fn analytic_cmd(a: AnalyticArgs) -> Result<(), CliError> {
    let cfg = a.net.to_config(a.p)?;
    let want = |n: &[usize]| -> Result<Vec<SuccessTable>, CliError> {
        if !n.contains(&a.tables.len()) {
            return Err(CliError::Usage(format!(
                "--tables: {:?} expects {} file(s), got {}",
                a.protocol,
                n.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" or "),
                a.tables.len()
            )));
        }
        a.tables.iter().map(|p| read_table(p)).collect()
    };
    let (protocol, value) = match a.protocol {
        AnalyticProtocol::Mpr => {
            let t = if a.ones {
                SuccessTable::constant(TableKind::MprByTotal, &analytic::mpr_cells(&cfg), 1.0)
            } else {
                want(&[1])?.remove(0)
            };
            (ProtocolKind::Mpr, analytic::throughput_mpr(&cfg, &t)?)
        }
        AnalyticProtocol::In => {
            cfg.require_nulling_feasible()?;
            let (ts, tm) = if a.ones {
                (
                    SuccessTable::constant(TableKind::MprByDim(cfg.s), &analytic::in_dim_s_cells(&cfg), 1.0),
                    SuccessTable::constant(TableKind::MprByTotal, &analytic::in_dim_m_cells(&cfg), 1.0),
                )
            } else {
                let mut t = want(&[2])?;
                let tm = t.pop().unwrap();
                (t.pop().unwrap(), tm)
            };
            (ProtocolKind::In, analytic::throughput_in(&cfg, &ts, &tm)?)
        }
        AnalyticProtocol::Oia => {
            let (first, second) = if a.ones {
                (
                    SuccessTable::constant(TableKind::Oia, &analytic::oia_first_cells(&cfg), 1.0),
                    SuccessTable::constant(TableKind::Oia, &analytic::oia_second_cells(&cfg), 1.0),
                )
            } else {
                let mut t = want(&[1, 2])?;
                if t.len() == 1 {
                    (t[0].clone(), t.remove(0))
                } else {
                    let second = t.pop().unwrap();
                    (t.pop().unwrap(), second)
                }
            };
            (ProtocolKind::Oia, analytic::throughput_oia(&cfg, &first, &second)?)
        }
    };
    let out = Output::new(a.out)?;
    let record = ThroughputRecord::analytic(protocol, &cfg, value);
    out.emit(&records_to_csv(&[record]))
}

fn estimate(a: EstimateArgs) -> Result<(), CliError> {
    let cfg = a.net.to_config(a.p)?;
    let protocol: ProtocolKind = a.protocol.into();
    let out = Output::new(a.out.clone())?;
    let table = match a.kind {
        TableArg::MprTotal => estimate_mpr_total_table(&cfg, a.samples)?,
        TableArg::MprDim => {
            let dim = a.dim.unwrap_or(a.net.s) as usize;
            let max_m = a.max_m.map(|m| m as usize).unwrap_or(dim);
            estimate_mpr_dim_table(&cfg, dim, max_m, a.samples)?
        }
        TableArg::Split => {
            protocol.validate(&cfg)?;
            if protocol.is_opportunistic() && cfg.p == 0.0 {
                return Err(CliError::Usage("--p must be positive for opportunistic protocols".into()));
            }
            let cells = if a.cells.is_empty() {
                let mut c = analytic::oia_first_cells(&cfg);
                c.extend(analytic::oia_second_cells(&cfg));
                c
            } else {
                a.cells.clone()
            };
            estimate_success_tables(&TablePlan {
                protocol,
                cfg,
                cells,
                samples_per_cell: a.samples,
                warmup_samples: a.warmup as usize,
                shared_cdf: !a.per_user_cdf,
                receiver: a.receiver.into(),
            })?
        }
    };
    debug_assert_eq!(table.provenance, Provenance::Measured);
    out.emit(&table.to_text())
}

fn warmup_cdf(a: WarmupArgs) -> Result<(), CliError> {
    let cfg = a.net.to_config(0.0)?;
    let protocol: ProtocolKind = a.protocol.into();
    protocol.validate(&cfg)?;
    let out = Output::new(a.out)?;
    let streams = StreamSource::new(derive_seed(cfg.seed, &[0xCDF]));
    let spaces = make_interference_spaces(&cfg, &streams).map_err(|e| CliError::runtime("linalg", e))?;
    let bank = warm_up(protocol, &cfg, &spaces, &streams, a.warmup as usize, true)?;
    out.emit(&bank.get(0, 0).to_text())
}

fn preset_cmd(a: PresetArgs) -> Result<(), CliError> {
    let name = match a.name {
        PresetName::Fig4 => "fig4",
        PresetName::Fig5 => "fig5",
        PresetName::Fig6 => "fig6",
        PresetName::Fig7 => "fig7",
    };
    let preset = harness::preset(name, a.seed).expect("every listed preset exists");
    let out = Output::new(a.out)?;
    match preset {
        Preset::Sweep(mut plan) => {
            if let Some(s) = a.slots {
                plan.slots = s;
            }
            if let Some(r) = a.replications {
                plan.replications = r;
            }
            if let Some(w) = a.warmup {
                plan.warmup_samples = w as usize;
            }
            plan.validate()?;
            emit_sweep(&run_sweep(&plan)?, &out)
        }
        Preset::Table(mut plan) => {
            if let Some(s) = a.samples {
                plan.samples_per_cell = s;
            }
            if let Some(w) = a.warmup {
                plan.warmup_samples = w as usize;
            }
            out.emit(&estimate_success_tables(&plan)?.to_text())
        }
    }
}

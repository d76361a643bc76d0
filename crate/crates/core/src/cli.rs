//! The `plnc` command line: throughput curves and Monte-Carlo runs as CSV.
//!
//! Every subcommand accepts `--config <file>` with one `key=value` per line
//! (`#` starts a comment). Keys are long flag names without the dashes;
//! command-line flags override the file.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analytics::{
    evaluate_all, plnc_throughput, AnalyticsError, SystemParams, ThroughputReport, DEFAULT_BLOCKS,
    DEFAULT_BLOCK_LEN, DEFAULT_FIELD_ORDER,
};
use crate::field::PrimeField;
use crate::monte_carlo::{MonteCarloError, Payload, Runner, SweepRow, DEFAULT_TRIALS};
use crate::protocol::{ProtocolConfig, ProtocolError};

pub const EVAL_HEADER: &str = "a,K,P,aloha,mpr,mpr_kstar,ignore_csi,plnc,upper";
pub const RANK_PROB_HEADER: &str = "ratio_scale,Lb,N,trials,successes,success_rate,empirical_throughput";
pub const SIMULATE_HEADER: &str = "K,a,P,q,B,N,ratio_scale,Lb,Lc,realized_ratio,trials,successes,success_rate,empirical_throughput,analytic_plnc";

const DEFAULT_SCALES: &str = "0.5,0.9,1.1,1.5";
const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Params(#[from] AnalyticsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => e.exit_code(),
            CliError::Usage(_) | CliError::Config { .. } | CliError::Params(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "plnc", version, about = "Random-access throughput curves and network-coding simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Throughput of every strategy at one point.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Throughput versus access probability.
    #[command(args_override_self = true)]
    SweepA(SweepAArgs),
    /// Throughput versus number of users.
    #[command(args_override_self = true)]
    SweepK(SweepKArgs),
    /// Decoding success rate around the full-rank threshold.
    #[command(args_override_self = true)]
    RankProb(RankProbArgs),
    /// End-to-end simulation of one configuration.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// key=value defaults; command-line flags take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write CSV here instead of standard output
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Number of users K [default: 2]
    #[arg(long)]
    users: Option<usize>,
    /// Access probability a [default: 0.5]
    #[arg(long)]
    access_prob: Option<f64>,
    /// Average power P [default: 100]
    #[arg(long)]
    power: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SweepAArgs {
    /// Number of users K [default: 2]
    #[arg(long)]
    users: Option<usize>,
    /// Average power P [default: 100]
    #[arg(long)]
    power: Option<f64>,
    /// First access probability [default: 0.01]
    #[arg(long)]
    a_start: Option<f64>,
    /// Last access probability [default: 1]
    #[arg(long)]
    a_stop: Option<f64>,
    /// Grid step [default: 0.01]
    #[arg(long)]
    a_step: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SweepKArgs {
    /// Access probability a [default: 0.2]
    #[arg(long)]
    access_prob: Option<f64>,
    /// Average power P [default: 100]
    #[arg(long)]
    power: Option<f64>,
    /// Largest user count [default: 30]
    #[arg(long)]
    max_users: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PayloadArg {
    Unit,
    Full,
}

impl From<PayloadArg> for Payload {
    fn from(p: PayloadArg) -> Self {
        match p {
            PayloadArg::Unit => Payload::Unit,
            PayloadArg::Full => Payload::Full,
        }
    }
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Number of users K [default: 2]
    #[arg(long)]
    users: Option<usize>,
    /// Access probability a [default: 0.5]
    #[arg(long)]
    access_prob: Option<f64>,
    /// Average power P [default: 100]
    #[arg(long)]
    power: Option<f64>,
    /// Prime field size q [default: 257]
    #[arg(long)]
    field: Option<u64>,
    /// Channel uses per block B [default: 100]
    #[arg(long)]
    block_len: Option<usize>,
    /// Number of blocks N [default: 400]
    #[arg(long)]
    blocks: Option<usize>,
    /// Monte-Carlo trials [default: 200]
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads [default: available cores]
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct RankProbArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Comma-separated multipliers of the full-rank threshold [default: 0.5,0.9,1.1,1.5]
    #[arg(long)]
    ratio_scales: Option<String>,
    /// Simulated symbols per substring [default: unit]
    #[arg(long, value_enum)]
    payload: Option<PayloadArg>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Multiplier of the full-rank threshold [default: 0.9]
    #[arg(long)]
    ratio_scale: Option<f64>,
    /// Simulated symbols per substring [default: full]
    #[arg(long, value_enum)]
    payload: Option<PayloadArg>,
    #[command(flatten)]
    common: Common,
}

/// A rectangular CSV table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(header: &str) -> Self {
        Self { header: header.split(',').map(str::to_owned).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

impl fmt::Display for CsvTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Result of one invocation.
#[derive(Debug, Clone)]
pub struct CliOutput {
    pub table: CsvTable,
    /// Human-readable notes for the error stream.
    pub summary: Option<String>,
    pub output: Option<PathBuf>,
}

impl CliOutput {
    pub fn csv(&self) -> String {
        self.table.to_string()
    }

    /// Writes the CSV to `--output` or returns it for standard output.
    pub fn emit(&self) -> Result<Option<String>, CliError> {
        let csv = self.csv();
        match &self.output {
            Some(path) => {
                fs::write(path, csv).map_err(|source| CliError::Io { path: path.clone(), source })?;
                Ok(None)
            }
            None => Ok(Some(csv)),
        }
    }
}

/// `%.9g`-style formatting.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses `args` (program name first), merges any `--config` file, and runs
/// the selected command.
pub fn run<I, T>(args: I) -> Result<CliOutput, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = merge_config(args)?;
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::SweepA(a) => cmd_sweep_a(a),
        Command::SweepK(a) => cmd_sweep_k(a),
        Command::RankProb(a) => cmd_rank_prob(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// Splices `--key=value` pairs from the config file directly after the
/// subcommand name, so that later command-line flags override them.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(args);
    };
    let sub = sub + 1;
    let mut path = None;
    let mut iter = args[sub + 1..].iter();
    while let Some(arg) = iter.next() {
        let arg = arg.to_string_lossy();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            path = iter.next().map(PathBuf::from);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let injected = parse_config_file(&path)?;
    let mut merged = args[..=sub].to_vec();
    merged.extend(injected.into_iter().map(OsString::from));
    merged.extend_from_slice(&args[sub + 1..]);
    Ok(merged)
}

fn parse_config_file(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    parse_config(&text).map_err(|message| CliError::Config { path: path.to_owned(), message })
}

fn parse_config(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value", lineno + 1));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') || key == "config" {
            return Err(format!("line {}: invalid key '{key}'", lineno + 1));
        }
        out.push(format!("--{key}={value}"));
    }
    Ok(out)
}

fn validated(users: usize, access_prob: f64, power: f64) -> Result<SystemParams, CliError> {
    Ok(SystemParams::new(users, access_prob, power)?)
}

fn report_row(r: &ThroughputReport) -> Vec<String> {
    vec![
        format_number(r.access_prob),
        r.users.to_string(),
        format_number(r.power),
        format_number(r.aloha),
        format_number(r.mpr),
        r.mpr_kstar.to_string(),
        format_number(r.ignore_csi),
        format_number(r.plnc),
        format_number(r.upper),
    ]
}

fn cmd_eval(args: EvalArgs) -> Result<CliOutput, CliError> {
    let p = validated(
        args.users.unwrap_or(2),
        args.access_prob.unwrap_or(0.5),
        args.power.unwrap_or(100.0),
    )?;
    let mut table = CsvTable::new(EVAL_HEADER);
    table.push(report_row(&evaluate_all(&p)));
    Ok(CliOutput { table, summary: None, output: args.common.output })
}

/// Grid points `start, start + step, ...` up to `stop`, rounded to 12
/// decimals so that `0.01 * 30` prints and evaluates as `0.3`.
fn access_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&stop) || start > stop {
        return Err(CliError::Usage(format!("need 0 <= a-start <= a-stop <= 1, got {start}..{stop}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(CliError::Usage(format!("a-step must be positive, got {step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let a = start + i as f64 * step;
            ((a * 1e12).round() / 1e12).min(stop)
        })
        .collect())
}

fn cmd_sweep_a(args: SweepAArgs) -> Result<CliOutput, CliError> {
    let users = args.users.unwrap_or(2);
    let power = args.power.unwrap_or(100.0);
    validated(users, 0.5, power)?;
    let grid = access_grid(
        args.a_start.unwrap_or(0.01),
        args.a_stop.unwrap_or(1.0),
        args.a_step.unwrap_or(0.01),
    )?;
    let mut table = CsvTable::new(EVAL_HEADER);
    for a in grid {
        table.push(report_row(&evaluate_all(&validated(users, a, power)?)));
    }
    Ok(CliOutput { table, summary: None, output: args.common.output })
}

fn cmd_sweep_k(args: SweepKArgs) -> Result<CliOutput, CliError> {
    let a = args.access_prob.unwrap_or(0.2);
    let power = args.power.unwrap_or(100.0);
    let max_users = args.max_users.unwrap_or(30);
    if max_users == 0 {
        return Err(CliError::Usage("max-users must be at least 1".into()));
    }
    let mut table = CsvTable::new(EVAL_HEADER);
    for k in 1..=max_users {
        table.push(report_row(&evaluate_all(&validated(k, a, power)?)));
    }
    Ok(CliOutput { table, summary: None, output: args.common.output })
}

struct ProtocolSetup {
    params: SystemParams,
    trials: usize,
    seed: u64,
    runner: Runner,
}

fn protocol_setup(args: &ProtocolArgs) -> Result<ProtocolSetup, CliError> {
    let field = args.field.unwrap_or(DEFAULT_FIELD_ORDER);
    PrimeField::new(field).map_err(|e| CliError::Usage(format!("--field: {e}")))?;
    let params = validated(
        args.users.unwrap_or(2),
        args.access_prob.unwrap_or(0.5),
        args.power.unwrap_or(100.0),
    )?
    .with_field_order(field)
    .with_block_len(args.block_len.unwrap_or(DEFAULT_BLOCK_LEN))
    .with_blocks(args.blocks.unwrap_or(DEFAULT_BLOCKS));
    params.validate()?;
    let trials = args.trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let runner = match args.workers {
        Some(0) => return Err(CliError::Usage("workers must be at least 1".into())),
        Some(w) => Runner::new(w),
        None => Runner::default(),
    };
    Ok(ProtocolSetup { params, trials, seed: args.seed.unwrap_or(1), runner })
}

fn parse_scales(s: &str) -> Result<Vec<f64>, CliError> {
    let scales = s
        .split(',')
        .map(|x| {
            let v: f64 = x
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid ratio scale '{}'", x.trim())))?;
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(CliError::Usage(format!("ratio scale {v} must be positive")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(scales)
}

fn cmd_rank_prob(args: RankProbArgs) -> Result<CliOutput, CliError> {
    let setup = protocol_setup(&args.protocol)?;
    let scales = parse_scales(args.ratio_scales.as_deref().unwrap_or(DEFAULT_SCALES))?;
    let payload = args.payload.unwrap_or(PayloadArg::Unit).into();
    let sweep = setup.runner.threshold_sweep(&setup.params, &scales, setup.trials, setup.seed, payload)?;

    let mut table = CsvTable::new(RANK_PROB_HEADER);
    let mut notes = Vec::new();
    for row in &sweep.rows {
        let scale = format_number(row.ratio_scale());
        match row {
            SweepRow::Completed { estimate: e, .. } => table.push(vec![
                scale,
                e.substrings.to_string(),
                e.blocks.to_string(),
                e.trials.to_string(),
                e.successes.to_string(),
                format_number(e.success_rate),
                format_number(e.empirical_throughput),
            ]),
            SweepRow::Skipped { reason, .. } => {
                notes.push(format!("ratio_scale {scale} skipped: {reason}"));
                table.push(vec![
                    scale,
                    "NA".into(),
                    sweep.blocks.to_string(),
                    sweep.trials.to_string(),
                    "NA".into(),
                    "NA".into(),
                    "NA".into(),
                ]);
            }
        }
    }
    Ok(CliOutput {
        table,
        summary: (!notes.is_empty()).then(|| notes.join("\n")),
        output: args.common.output,
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<CliOutput, CliError> {
    let setup = protocol_setup(&args.protocol)?;
    let ratio_scale = args.ratio_scale.unwrap_or(0.9);
    if !(ratio_scale.is_finite() && ratio_scale > 0.0) {
        return Err(CliError::Usage(format!("ratio scale {ratio_scale} must be positive")));
    }
    let p = setup.params;
    let mut config = ProtocolConfig::derive(p, ratio_scale)?;
    if args.payload == Some(PayloadArg::Unit) {
        config = config.with_payload_width(1)?;
    }
    let est = setup.runner.estimate_success(&config, setup.trials, setup.seed)?;
    let analytic = plnc_throughput(&p);

    let mut table = CsvTable::new(SIMULATE_HEADER);
    table.push(vec![
        p.users.to_string(),
        format_number(p.access_prob),
        format_number(p.power),
        p.field_order.to_string(),
        p.block_len.to_string(),
        p.blocks.to_string(),
        format_number(ratio_scale),
        config.substrings.to_string(),
        config.symbols.to_string(),
        format_number(config.ratio),
        est.trials.to_string(),
        est.successes.to_string(),
        format_number(est.success_rate),
        format_number(est.empirical_throughput),
        format_number(analytic),
    ]);
    let summary = format!(
        "K={} a={} P={} q={} B={} N={}\n\
         L_b={} (L_b/N={}), L_c={} (code rate {} bits/use)\n\
         decoded {}/{} trials (success rate {} +/- {})\n\
         throughput: empirical {} vs analytic {} bits/use",
        p.users,
        format_number(p.access_prob),
        format_number(p.power),
        p.field_order,
        p.block_len,
        p.blocks,
        config.substrings,
        format_number(config.ratio),
        config.symbols,
        format_number(config.code_rate()),
        est.successes,
        est.trials,
        format_number(est.success_rate),
        format_number(est.std_error()),
        format_number(est.empirical_throughput),
        format_number(analytic),
    );
    Ok(CliOutput { table, summary: Some(summary), output: args.common.output })
}

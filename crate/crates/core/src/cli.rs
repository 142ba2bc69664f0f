//! Command-line front end: argument parsing, study orchestration and file
//! output.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::{load_feeder, FeederError, ModeKind};
use crate::flex::{
    run_iterative, worst_case_limits, Direction, FlexConfig, FlexContext, FlexError, FlexibilityResult, WorstCaseTable,
};
use crate::oracle::{setpoints_in_box, verify_setpoints_nonlinear, OracleError};

pub const WORST_CASE_SCHEMA: &str = "flexgrid.worst-case.v1";
pub const ENV_WORKERS: &str = "FLEXGRID_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_ANCHOR: i32 = 3;
pub const EXIT_ITERATION_CAP: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "flexgrid", version, about = "Secure aggregate flexibility of unbalanced distribution feeders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-node limits with worst-case inverter setpoints.
    WorstCase(StudyArgs),
    /// Flexibility range and inverter setpoints by the iterative algorithm.
    Solve(StudyArgs),
    /// Nonlinear re-check of a solve result.
    Verify(VerifyArgs),
    /// CSV tables from a solve result.
    Plotdata(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long, default_value = "constant-pf")]
    pub mode: ModeKind,
    #[arg(long, default_value_t = 0.9)]
    pub vmin: f64,
    #[arg(long, default_value_t = 1.1)]
    pub vmax: f64,
    #[arg(long, default_value = "both")]
    pub direction: Direction,
    #[arg(long, env = ENV_WORKERS)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "flexgrid-out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub bisect_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub feas_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub bnb_eps: f64,
    #[arg(long, default_value_t = 400)]
    pub node_limit: usize,
    #[arg(long, default_value_t = 1e3)]
    pub dual_box: f64,
    #[arg(long, default_value_t = 3)]
    pub dual_escalations: usize,
    /// Defaults to four times the node count.
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

impl StudyArgs {
    pub fn config(&self) -> FlexConfig {
        FlexConfig {
            v_min: self.vmin,
            v_max: self.vmax,
            direction: self.direction,
            bisect_tol: self.bisect_tol,
            feas_tol: self.feas_tol,
            bnb_eps: self.bnb_eps,
            node_limit: self.node_limit,
            dual_box: self.dual_box,
            dual_escalations: self.dual_escalations,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// `result.json` written by `solve`.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value_t = 11)]
    pub grid_points: usize,
    /// Allowed voltage violation and linearization error, p.u.
    #[arg(long, default_value_t = 0.01)]
    pub tolerance: f64,
    #[arg(long, env = ENV_WORKERS)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "flexgrid-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value = "flexgrid-out")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Anchor(FlexError),
    #[error("{0}")]
    Failed(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Anchor(_) => EXIT_ANCHOR,
            CliError::Failed(_) | CliError::Io { .. } => 1,
        }
    }
}

impl From<FeederError> for CliError {
    fn from(e: FeederError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FlexError> for CliError {
    fn from(e: FlexError) -> Self {
        match e {
            FlexError::AnchorViolation { .. } => CliError::Anchor(e),
            FlexError::Feeder(_) | FlexError::InvalidConfig(_) | FlexError::InvalidDecision(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Flex(f) => f.into(),
            OracleError::GridTooCoarse(_) => CliError::Validation(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub schema: String,
    pub mode: ModeKind,
    pub v_min: f64,
    pub v_max: f64,
    pub direction: Direction,
    pub available_kw: (f64, f64),
    pub table: WorstCaseTable,
}

#[derive(Debug, Serialize)]
struct LimitRow<'a> {
    node: usize,
    label: &'a str,
    upper_kw: f64,
    lower_kw: f64,
}

#[derive(Debug, Serialize)]
struct SetpointRow<'a> {
    inverter: usize,
    label: &'a str,
    value: f64,
    lower: f64,
    upper: f64,
    unit: &'a str,
}

#[derive(Debug, Serialize)]
struct MagnitudeRow<'a> {
    scenario: String,
    node: usize,
    label: &'a str,
    linear: f64,
    nonlinear: Option<f64>,
    error: Option<f64>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_csv<T: Serialize>(path: &Path, headers: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Failed(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(headers).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    write_file(path, &bytes)
}

pub const LIMIT_HEADERS: [&str; 4] = ["node", "label", "upper_kw", "lower_kw"];
pub const SETPOINT_HEADERS: [&str; 6] = ["inverter", "label", "value", "lower", "upper", "unit"];
pub const MAGNITUDE_HEADERS: [&str; 6] = ["scenario", "node", "label", "linear", "nonlinear", "error"];

fn write_limits(dir: &Path, table: &WorstCaseTable) -> Result<(), CliError> {
    let rows = table.nodes.iter().map(|n| LimitRow { node: n.node, label: &n.label, upper_kw: n.upper_kw, lower_kw: n.lower_kw });
    write_csv(&dir.join("limits_per_node.csv"), &LIMIT_HEADERS, rows)
}

fn context(args: &StudyArgs) -> Result<FlexContext, CliError> {
    let cfg = args.config();
    cfg.validate()?;
    let model = load_feeder(&args.feeder)?;
    Ok(FlexContext::new(&model, args.mode, cfg)?)
}

fn with_workers<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match workers {
        Some(0) => Err(CliError::Validation("--workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Failed(e.to_string())),
        None => Ok(f()),
    }
}

pub fn cmd_worst_case(args: &StudyArgs) -> Result<i32, CliError> {
    let ctx = context(args)?;
    let table = with_workers(args.workers, || worst_case_limits(&ctx))??;
    ensure_dir(&args.out)?;
    write_limits(&args.out, &table)?;
    let base = ctx.base();
    let report = WorstCaseReport {
        schema: WORST_CASE_SCHEMA.into(),
        mode: ctx.mode,
        v_min: ctx.config.v_min,
        v_max: ctx.config.v_max,
        direction: ctx.config.direction,
        available_kw: (ctx.available.0 * base, ctx.available.1 * base),
        table,
    };
    write_json(&args.out.join("worst_case.json"), &report)?;
    let (lo, hi) = report.table.range_kw;
    println!("worst-case range [{:.3}, {:.3}] MW ({})", lo / 1000.0, hi / 1000.0, ctx.mode);
    for s in &report.table.seeds {
        println!("binding {} at {}", s, ctx.model.index().label(s.node));
    }
    Ok(EXIT_OK)
}

pub fn cmd_solve(args: &StudyArgs) -> Result<i32, CliError> {
    let ctx = context(args)?;
    let result = with_workers(args.workers, || run_iterative(&ctx))??;
    ensure_dir(&args.out)?;
    write_json(&args.out.join("result.json"), &result)?;
    println!(
        "range [{:.4}, {:.4}] MW in {} iteration(s) ({}), worst case [{:.4}, {:.4}] MW",
        result.dp_minus_mw, result.dp_plus_mw, result.iterations, ctx.mode, result.worst_case_mw.0, result.worst_case_mw.1
    );
    if result.fallback {
        eprintln!("iteration cap reached; reporting the worst-case range");
        return Ok(EXIT_ITERATION_CAP);
    }
    Ok(EXIT_OK)
}

pub fn read_result(path: &Path) -> Result<FlexibilityResult, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let r: FlexibilityResult =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if r.schema != crate::flex::RESULT_SCHEMA {
        return Err(CliError::Validation(format!("unsupported result schema `{}`", r.schema)));
    }
    Ok(r)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    if !(args.tolerance > 0.0) {
        return Err(CliError::Validation("--tolerance must be positive".into()));
    }
    let result = read_result(&args.result)?;
    let model = load_feeder(&args.feeder)?;
    let cfg = FlexConfig { v_min: result.v_min, v_max: result.v_max, direction: result.direction, ..Default::default() };
    cfg.validate()?;
    let ctx = FlexContext::new(&model, result.mode, cfg)?;
    if result.decision.mode != result.mode || !setpoints_in_box(&ctx.model, &result.decision) {
        return Err(CliError::Validation("result setpoints fall outside their mode boxes".into()));
    }
    let report = with_workers(args.workers, || verify_setpoints_nonlinear(&ctx, &result.decision, args.grid_points, args.tolerance))??;
    ensure_dir(&args.out)?;
    write_json(&args.out.join("oracle_report.json"), &report)?;
    println!(
        "max violation {:.6} p.u., max linearization error {:.6} p.u. ({})",
        report.max_violation, report.max_linearization_error, report.method
    );
    if report.pass {
        return Ok(EXIT_OK);
    }
    for n in report.nodes.iter().filter(|n| n.violation > report.tolerance) {
        eprintln!("violation at node {} ({}): {:.6} p.u.", n.label, n.scenario, n.oracle_magnitude);
    }
    if !report.error_pass {
        eprintln!("linearization error above {} p.u.", report.tolerance);
    }
    Ok(EXIT_VERIFY_FAILED)
}

pub fn cmd_plotdata(args: &PlotArgs) -> Result<i32, CliError> {
    let result = read_result(&args.result)?;
    ensure_dir(&args.out)?;
    write_limits(&args.out, &result.worst_case)?;
    let sp = result.setpoints.iter().map(|s| SetpointRow {
        inverter: s.inverter,
        label: &s.label,
        value: s.value,
        lower: s.lower,
        upper: s.upper,
        unit: &s.unit,
    });
    write_csv(&args.out.join("setpoints.csv"), &SETPOINT_HEADERS, sp)?;
    let mags = result.magnitudes.iter().map(|m| MagnitudeRow {
        scenario: m.scenario.to_string(),
        node: m.scenario.node,
        label: &m.label,
        linear: m.linear,
        nonlinear: m.nonlinear,
        error: m.nonlinear.map(|v| (v - m.linear).abs()),
    });
    write_csv(&args.out.join("magnitudes.csv"), &MAGNITUDE_HEADERS, mags)?;
    Ok(EXIT_OK)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let out = match &cli.command {
        Command::WorstCase(a) => cmd_worst_case(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Plotdata(a) => cmd_plotdata(a),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

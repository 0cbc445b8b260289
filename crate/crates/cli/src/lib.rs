//! `mnsurv` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input or a refused
//! computation (cost guards, I/O), 3 when `check` finds a failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use mnsurv::checks::{run_suite, SuiteConfig};
use mnsurv::report;
use mnsurv::{
    build_instance, evaluate_routes, MonteCarloSpec, QuadratureSpec, RouteReport,
    RouteSelection, SurvivalInstance,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mnsurv",
    version,
    about = "Joint survival probabilities of cumulated multinomial counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate selected routes on one instance (or a batch from --input).
    Eval(EvalArgs),
    /// Run every route and report their discrepancies.
    Compare(CompareArgs),
    /// Evaluate a grid over n and k.
    Sweep(SweepArgs),
    /// Run the identity and route-agreement suite.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Route {
    Exact,
    Dirichlet,
    Gaussian,
    Mc,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Gauss-Legendre nodes per axis.
    #[arg(long, default_value_t = 48)]
    nodes: usize,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 100_000)]
    reps: u64,
    /// Monte Carlo seed; Monte Carlo runs only when this is given.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance recorded in the report parameters.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InstanceArgs {
    /// Sample size n.
    #[arg(long, required_unless_present = "input", allow_hyphen_values = true)]
    n: Option<String>,
    /// Comma-separated weights p_1..p_d.
    #[arg(long, required_unless_present = "input", allow_hyphen_values = true)]
    p: Option<String>,
    /// Comma-separated thresholds k_1..k_d.
    #[arg(long, required_unless_present = "input", allow_hyphen_values = true)]
    k: Option<String>,
    /// JSON file with a list of {"n", "p", "k"} objects.
    #[arg(long, conflicts_with_all = ["n", "p", "k"])]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Routes to run; defaults to every deterministic route plus mc when --seed is set.
    #[arg(long, value_enum, value_delimiter = ',')]
    routes: Option<Vec<Route>>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Sample sizes: `start:end:step`, `start:end`, or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    n: String,
    #[arg(long, allow_hyphen_values = true)]
    p: String,
    /// Fixed thresholds for every n.
    #[arg(long, conflicts_with = "k_all", required_unless_present = "k_all", allow_hyphen_values = true)]
    k: Option<String>,
    /// Every threshold vector with k_1 + ... + k_d <= n.
    #[arg(long)]
    k_all: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Seed for the randomized panels.
    #[arg(long)]
    seed: u64,
    /// Relative tolerance on route agreement.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Absolute tolerance on pointwise identities.
    #[arg(long, default_value_t = 1e-10)]
    pointwise_tol: f64,
    #[arg(long, default_value_t = 48)]
    nodes: usize,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Invalid(String),
}

impl From<mnsurv::Error> for CliError {
    fn from(e: mnsurv::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Deserialize)]
struct InputInstance {
    n: serde_json::Value,
    p: Vec<f64>,
    k: Vec<serde_json::Value>,
}

fn parse_count(text: &str, what: &str) -> CliResult<u64> {
    let t = text.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    match t.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 => Ok(x as u64),
        Ok(x) => Err(CliError::Invalid(format!(
            "{what} must be a nonnegative integer, got {x}"
        ))),
        Err(_) => Err(CliError::Invalid(format!("{what}: cannot parse `{t}`"))),
    }
}

fn parse_weights(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Invalid(format!("p: cannot parse `{}`", s.trim())))
        })
        .collect()
}

fn parse_thresholds(text: &str) -> CliResult<Vec<u64>> {
    text.split(',').map(|s| parse_count(s, "k")).collect()
}

fn json_count(v: &serde_json::Value, what: &str) -> CliResult<u64> {
    match v {
        serde_json::Value::Number(num) => parse_count(&num.to_string(), what),
        other => Err(CliError::Invalid(format!("{what}: expected a number, got {other}"))),
    }
}

fn load_instances(args: &InstanceArgs) -> CliResult<Vec<SurvivalInstance>> {
    if let Some(path) = &args.input {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let items: Vec<InputInstance> = serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        return items
            .iter()
            .map(|it| {
                let n = json_count(&it.n, "n")?;
                let k = it
                    .k
                    .iter()
                    .map(|v| json_count(v, "k"))
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(build_instance(n, &it.p, &k)?)
            })
            .collect();
    }
    // clap guarantees all three are present without --input
    let n = parse_count(args.n.as_deref().unwrap_or_default(), "n")?;
    let p = parse_weights(args.p.as_deref().unwrap_or_default())?;
    let k = parse_thresholds(args.k.as_deref().unwrap_or_default())?;
    Ok(vec![build_instance(n, &p, &k)?])
}

fn mc_spec(common: &CommonArgs, wanted: bool) -> CliResult<Option<MonteCarloSpec>> {
    match (wanted, common.seed) {
        (false, _) => Ok(None),
        (true, None) => Err(CliError::Usage(
            "Monte Carlo requires --seed (there is no default seed)".into(),
        )),
        (true, Some(seed)) => Ok(Some(MonteCarloSpec::new(common.reps, seed)?)),
    }
}

fn quad_spec(common: &CommonArgs) -> CliResult<QuadratureSpec> {
    if common.tol.is_nan() || common.tol <= 0.0 {
        return Err(CliError::Invalid("--tol must be positive".into()));
    }
    Ok(QuadratureSpec::new(common.nodes)?)
}

fn run_batch(
    instances: &[SurvivalInstance],
    routes: RouteSelection,
    common: &CommonArgs,
) -> CliResult<Vec<RouteReport>> {
    let spec = quad_spec(common)?;
    let reports: Vec<mnsurv::Result<RouteReport>> = instances
        .par_iter()
        .map(|inst| {
            evaluate_routes(inst, routes, spec).map(|mut r| {
                r.tolerance = Some(common.tol);
                r
            })
        })
        .collect();
    Ok(reports.into_iter().collect::<mnsurv::Result<Vec<_>>>()?)
}

fn render_reports(reports: &[RouteReport], format: Format, single: bool) -> CliResult<String> {
    Ok(match format {
        Format::Json if single && reports.len() == 1 => report::to_json(&reports[0]) + "\n",
        Format::Json => report::to_json_array(reports) + "\n",
        Format::Csv => report::to_csv(reports)?,
    })
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Invalid(format!("stdout: {e}"))),
    }
}

fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let wanted = args.routes.clone().unwrap_or_else(|| {
        let mut r = vec![Route::Exact, Route::Dirichlet, Route::Gaussian];
        if args.common.seed.is_some() {
            r.push(Route::Mc);
        }
        r
    });
    let routes = RouteSelection {
        exact: wanted.contains(&Route::Exact),
        dirichlet: wanted.contains(&Route::Dirichlet),
        gaussian: wanted.contains(&Route::Gaussian),
        mc: mc_spec(&args.common, wanted.contains(&Route::Mc))?,
    };
    let instances = load_instances(&args.instance)?;
    let reports = run_batch(&instances, routes, &args.common)?;
    let text = render_reports(&reports, args.common.format, args.instance.input.is_none())?;
    emit(&args.common.out, &text, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_compare(args: &CompareArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let mc = mc_spec(&args.common, args.common.seed.is_some())?;
    let instances = load_instances(&args.instance)?;
    let reports = run_batch(&instances, RouteSelection::all(mc), &args.common)?;
    let text = render_reports(&reports, args.common.format, args.instance.input.is_none())?;
    emit(&args.common.out, &text, stdout)?;
    Ok(EXIT_OK)
}

/// `a:b:step`, `a:b` (step 1), a comma list, or a single value.
fn parse_n_grid(text: &str) -> CliResult<Vec<u64>> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() > 3 {
            return Err(CliError::Usage(format!("--n: bad range `{text}`")));
        }
        let start = parse_count(parts[0], "n")?;
        let end = parse_count(parts[1], "n")?;
        let step = match parts.get(2) {
            Some(s) => parse_count(s, "n step")?,
            None => 1,
        };
        if step == 0 {
            return Err(CliError::Invalid("--n: step must be positive".into()));
        }
        Ok((start..=end).step_by(step as usize).collect())
    } else {
        text.split(',').map(|s| parse_count(s, "n")).collect()
    }
}

/// Every `k` in `N_0^d` with `k_1 + ... + k_d <= n`, lexicographic.
fn all_thresholds(n: u64, d: usize) -> Vec<Vec<u64>> {
    fn go(n: u64, d: usize, prefix: &mut Vec<u64>, used: u64, out: &mut Vec<Vec<u64>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for x in 0..=(n - used) {
            prefix.push(x);
            go(n, d, prefix, used + x, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(n, d, &mut Vec::with_capacity(d), 0, &mut out);
    out
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let ns = parse_n_grid(&args.n)?;
    let p = parse_weights(&args.p)?;
    let fixed_k = args.k.as_deref().map(parse_thresholds).transpose()?;
    let mut instances = Vec::new();
    for &n in &ns {
        match &fixed_k {
            Some(k) => instances.push(build_instance(n, &p, k)?),
            None => {
                for k in all_thresholds(n, p.len()) {
                    instances.push(build_instance(n, &p, &k)?);
                }
            }
        }
    }
    let mc = mc_spec(&args.common, args.common.seed.is_some())?;
    let reports = run_batch(&instances, RouteSelection::all(mc), &args.common)?;
    let text = render_reports(&reports, args.common.format, false)?;
    emit(&args.common.out, &text, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_check(args: &CheckArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    if [args.tol, args.pointwise_tol].iter().any(|t| t.is_nan() || *t <= 0.0) {
        return Err(CliError::Invalid("tolerances must be positive".into()));
    }
    let config = SuiteConfig {
        seed: args.seed,
        route_tol: args.tol,
        pointwise_tol: args.pointwise_tol,
        nodes: args.nodes,
    };
    let results = run_suite(config)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    let text = match args.format {
        Some(Format::Json) => {
            let items: Vec<serde_json::Value> = results
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "name": r.name,
                        "residual": r.residual,
                        "threshold": r.threshold,
                        "passed": r.passed,
                    })
                })
                .collect();
            serde_json::to_string_pretty(&items).expect("serializable") + "\n"
        }
        Some(Format::Csv) => {
            let mut s = String::from("name,residual,threshold,passed\n");
            for r in &results {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    r.name,
                    report::format_number(r.residual),
                    report::format_number(r.threshold),
                    r.passed
                ));
            }
            s
        }
        None => {
            let mut s = String::new();
            for r in &results {
                s.push_str(&format!(
                    "{} {:<36} residual={:.3e} threshold={:.1e}\n",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.residual,
                    r.threshold
                ));
            }
            s.push_str(&format!("{} checks, {} failed\n", results.len(), failed));
            s
        }
    };
    emit(&args.out, &text, stdout)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let _ = stderr.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Compare(a) => cmd_compare(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Check(a) => cmd_check(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Invalid(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INVALID
        }
    }
}

//! Batch front end: one subcommand per computation, JSON or CSV output.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure.

use clap::{Arg, ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use ehrenfest::asymptotics::{convergence_study, LawFamily, LawKind};
use ehrenfest::laplace::{
    hitting_lt_detailed, mean_hitting_time, mean_hitting_time_log, mean_hitting_time_richardson,
    resolvent_oracle_with_cap, LaplaceQuery, DEFAULT_ORACLE_CAP,
};
use ehrenfest::model::{classify_regime_with_band, DEFAULT_CRITICAL_BAND};
use ehrenfest::sim::{empirical_lt, simulate_paths, SimConfig, SimulationOutput, StopRule, DEFAULT_MAX_EVENTS};
use ehrenfest::verify::{run_suites, SUITES};
use ehrenfest::{Error, ModelParams, ProcessKind};
use serde_json::{json, Value};
use std::ffi::OsString;
use std::path::PathBuf;

pub const SCHEMA_VERSION: u32 = 1;

/// Relative gap above which `laplace --check` reports a failure.
pub const CHECK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "ehrenfest", about = "Hitting times of the Ehrenfest and Engset processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Laplace transform E_from[exp(-alpha T_to)].
    Laplace(LaplaceArgs),
    /// Mean hitting time E_from[T_to].
    Mean(MeanArgs),
    /// Exact path simulation.
    Simulate(SimulateArgs),
    /// Regime classification of (N, C, nu).
    Regime(RegimeArgs),
    /// Exact scaled transforms against a limit law over a list of N.
    LimitCheck(LimitCheckArgs),
    /// Run the invariant suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProcessArg {
    Ehrenfest,
    Engset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Defaults to engset when C < N, ehrenfest otherwise.
    #[arg(long, value_enum)]
    process: Option<ProcessArg>,
    #[arg(long)]
    n: usize,
    /// Capacity C; defaults to N.
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    nu: f64,
    /// Defaults to 1 - nu.
    #[arg(long)]
    mu: Option<f64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ModelParams, Error> {
        let c = self.c.unwrap_or(self.n);
        let kind = match self.process {
            Some(ProcessArg::Ehrenfest) => ProcessKind::Ehrenfest,
            Some(ProcessArg::Engset) => ProcessKind::Engset,
            None if c < self.n => ProcessKind::Engset,
            None => ProcessKind::Ehrenfest,
        };
        let mu = match self.mu {
            Some(mu) => mu,
            None if self.nu > 0.0 && self.nu < 1.0 => 1.0 - self.nu,
            None => {
                return Err(Error::InvalidParams(format!(
                    "--nu {} needs an explicit --mu (mu = 1 - nu is only implied for 0 < nu < 1)",
                    self.nu
                )))
            }
        };
        ModelParams::new(kind, self.n, c, self.nu, mu)
    }

    fn echo(&self, p: &ModelParams) -> Value {
        json!({
            "process": p.kind(),
            "n": p.n(),
            "c": p.capacity(),
            "nu": p.nu(),
            "mu": p.mu(),
            "nu_input": self.nu,
            "mu_input": self.mu.unwrap_or(1.0 - self.nu),
            "time_scale": p.time_scale(),
        })
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the document here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LaplaceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    #[arg(long)]
    alpha: f64,
    /// Compare with the resolvent oracle.
    #[arg(long)]
    check: bool,
    /// Largest C for which the oracle runs.
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    oracle_cap: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct MeanArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    /// Also estimate the mean from transform slopes.
    #[arg(long)]
    richardson: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    from: usize,
    /// Stop at the first visit of this state.
    #[arg(long, conflicts_with = "t_max")]
    hit: Option<usize>,
    /// Censor hitting paths still running at this time.
    #[arg(long, requires = "hit")]
    horizon: Option<f64>,
    /// Record states on a grid up to this time.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value_t = 100, requires = "t_max")]
    grid_points: usize,
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_EVENTS)]
    max_events: u64,
    /// Empirical Laplace transforms at these alphas (hitting runs only).
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Worker threads; defaults to the machine parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct RegimeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Starting fraction x0 = X(0)/N.
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Half-width K of the critical band |C - nu N| <= K sqrt(N).
    #[arg(long, default_value_t = DEFAULT_CRITICAL_BAND)]
    band: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct LimitCheckArgs {
    /// One of supercritical, subcritical-full, subcritical-entropy,
    /// subcritical-empty, critical-saturation, critical-empty.
    #[arg(long)]
    law: String,
    #[arg(long)]
    nu: f64,
    /// C = round(eta N) for the non-critical laws.
    #[arg(long)]
    eta: Option<f64>,
    /// C = round(nu N + delta sqrt(N)) for the critical laws.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    alphas: Vec<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Suites to run; all when omitted.
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl Outcome {
    fn ok(doc: Vec<u8>) -> Self {
        Outcome { code: 0, stdout: doc, stderr: String::new() }
    }
}

fn command() -> clap::Command {
    Cli::command()
        .disable_help_flag(true)
        .disable_version_flag(true)
        .disable_help_subcommand(true)
        .arg(Arg::new("help").long("help").action(ArgAction::Help).global(true).help("Print help"))
        .mut_subcommands(|s| s.disable_help_flag(true))
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = command()
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    Outcome::ok(rendered.into_bytes())
                }
                _ => Outcome { code: 1, stdout: Vec::new(), stderr: rendered },
            };
        }
    };
    let name = command_name(&cli.command);
    match dispatch(cli.command) {
        Ok(out) => out,
        Err(failure) => failure.into_outcome(name),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Laplace(_) => "laplace",
        Command::Mean(_) => "mean",
        Command::Simulate(_) => "simulate",
        Command::Regime(_) => "regime",
        Command::LimitCheck(_) => "limit-check",
        Command::Verify(_) => "verify",
    }
}

/// A failed run: the library error plus whatever was resolved before it.
struct Failure {
    error: Error,
    resolved: Value,
}

impl Failure {
    fn into_outcome(self, command: &str) -> Outcome {
        let code = if self.error.is_numerical() { 2 } else { 1 };
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "resolved_params": self.resolved,
            "results": Value::Null,
            "diagnostics": {
                "error": { "code": self.error.code(), "message": self.error.to_string() },
                "numerical_failure_detail": numerical_detail(&self.error),
            },
        });
        Outcome {
            code,
            stdout: pretty(&doc),
            stderr: format!("error[{}]: {}\n", self.error.code(), self.error),
        }
    }
}

fn numerical_detail(e: &Error) -> Value {
    match e {
        Error::QuadratureFailure { best_log_value, best_sign, log_error, nodes } => json!({
            "best_log_value": best_log_value,
            "best_sign": best_sign,
            "log_error": log_error,
            "nodes": nodes,
        }),
        Error::Censored { count, total } => json!({ "censored": count, "total": total }),
        Error::SingularSystem { row } => json!({ "row": row }),
        _ => Value::Null,
    }
}

trait Context<T> {
    fn with(self, resolved: &Value) -> Result<T, Failure>;
}

impl<T> Context<T> for Result<T, Error> {
    fn with(self, resolved: &Value) -> Result<T, Failure> {
        self.map_err(|error| Failure { error, resolved: resolved.clone() })
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn envelope(command: &str, resolved: Value, results: Value, diagnostics: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "resolved_params": resolved,
        "results": results,
        "diagnostics": diagnostics,
    })
}

fn emit(doc: Vec<u8>, output: &Option<PathBuf>, resolved: &Value) -> Result<Outcome, Failure> {
    match output {
        None => Ok(Outcome::ok(doc)),
        Some(path) => {
            std::fs::write(path, &doc)
                .map_err(|e| Error::InvalidParams(format!("cannot write {}: {e}", path.display())))
                .with(resolved)?;
            Ok(Outcome::ok(Vec::new()))
        }
    }
}

fn json_only(out: &OutputArgs, resolved: &Value) -> Result<(), Failure> {
    if out.format == Format::Csv {
        return Err(Error::InvalidParams("csv output is available for simulate and limit-check".into())).with(resolved);
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<Outcome, Failure> {
    match command {
        Command::Laplace(a) => laplace(a),
        Command::Mean(a) => mean(a),
        Command::Simulate(a) => simulate(a),
        Command::Regime(a) => regime(a),
        Command::LimitCheck(a) => limit_check(a),
        Command::Verify(a) => verify(a),
    }
}

fn resolve_model(m: &ModelArgs) -> Result<(ModelParams, Value), Failure> {
    let p = m.resolve().with(&Value::Null)?;
    let echo = m.echo(&p);
    Ok((p, echo))
}

fn laplace(a: LaplaceArgs) -> Result<Outcome, Failure> {
    let (p, mut resolved) = resolve_model(&a.model)?;
    resolved["from"] = json!(a.from);
    resolved["to"] = json!(a.to);
    resolved["alpha"] = json!(a.alpha);
    resolved["check"] = json!(a.check);
    resolved["oracle_cap"] = json!(a.oracle_cap);
    json_only(&a.out, &resolved)?;
    let q = LaplaceQuery::new(p, a.from, a.to, a.alpha).with(&resolved)?;
    let ev = hitting_lt_detailed(&q).with(&resolved)?;
    let mut results = json!({
        "lt": ev.lt,
        "log_lt": ev.log_lt,
        "formula": format!("{:?}", ev.formula),
        "quadrature_relative_error": ev.relative_error(),
    });
    let mut diagnostics = json!({});
    let mut code = 0;
    if a.check {
        if p.capacity() <= a.oracle_cap {
            let oracle = resolvent_oracle_with_cap(&q, a.oracle_cap).with(&resolved)?;
            let gap = if oracle == ev.lt { 0.0 } else { (ev.lt - oracle).abs() / oracle };
            results["oracle_lt"] = json!(oracle);
            results["relative_gap"] = json!(gap);
            results["check_passed"] = json!(gap <= CHECK_TOLERANCE);
            if !(gap <= CHECK_TOLERANCE) {
                code = 2;
                diagnostics["check"] = json!(format!("relative gap {gap:e} exceeds {CHECK_TOLERANCE:e}"));
            }
        } else {
            diagnostics["check"] = json!(format!("oracle skipped: C = {} exceeds the cap {}", p.capacity(), a.oracle_cap));
        }
    }
    let doc = pretty(&envelope("laplace", resolved.clone(), results, diagnostics));
    let mut out = emit(doc, &a.out.output, &resolved)?;
    out.code = code;
    Ok(out)
}

fn mean(a: MeanArgs) -> Result<Outcome, Failure> {
    let (p, mut resolved) = resolve_model(&a.model)?;
    resolved["from"] = json!(a.from);
    resolved["to"] = json!(a.to);
    json_only(&a.out, &resolved)?;
    let log_mean = mean_hitting_time_log(&p, a.from, a.to).with(&resolved)?;
    let m = mean_hitting_time(&p, a.from, a.to).with(&resolved)?;
    let mut results = json!({
        "mean": m,
        "log_mean": log_mean,
        "mean_input_units": m / p.time_scale(),
    });
    if a.richardson {
        let r = mean_hitting_time_richardson(&p, a.from, a.to).with(&resolved)?;
        results["richardson_mean"] = json!(r);
        results["richardson_relative_gap"] = json!(if m == 0.0 { (r - m).abs() } else { (r - m).abs() / m });
    }
    let doc = pretty(&envelope("mean", resolved.clone(), results, json!({})));
    emit(doc, &a.out.output, &resolved)
}

fn simulate(a: SimulateArgs) -> Result<Outcome, Failure> {
    let (p, mut resolved) = resolve_model(&a.model)?;
    let stop = match (a.hit, a.t_max) {
        (Some(target), None) => StopRule::HitState { target, horizon: a.horizon },
        (None, Some(t_max)) => StopRule::TimeHorizon { t_max, grid_points: a.grid_points },
        _ => {
            return Err(Error::InvalidParams("simulate needs exactly one of --hit or --t-max".into())).with(&resolved)
        }
    };
    if a.threads == Some(0) {
        return Err(Error::out_of_range("threads", 0, "threads >= 1")).with(&resolved);
    }
    let config = SimConfig::new(p, a.from, stop, a.paths, a.seed)
        .and_then(|c| c.with_max_events(a.max_events))
        .with(&resolved)?;
    resolved["from"] = json!(a.from);
    resolved["stop_rule"] = json!(stop);
    resolved["paths"] = json!(a.paths);
    resolved["seed"] = json!(a.seed);
    resolved["max_events"] = json!(a.max_events);
    resolved["config_digest"] = json!(config.digest());
    let output = simulate_paths(&config, a.threads).with(&resolved)?;
    let censored_by_events = match &output {
        SimulationOutput::Hitting(s) => s.censored_by_events,
        SimulationOutput::Horizon(s) => s.censored_by_events,
    };
    let doc = match a.out.format {
        Format::Csv => {
            if !a.alpha.is_empty() {
                return Err(Error::InvalidParams("--alpha is reported in json output only".into())).with(&resolved);
            }
            output.to_csv_string().with(&resolved)?.into_bytes()
        }
        Format::Json => {
            let mut results = output.to_json();
            if !a.alpha.is_empty() {
                let SimulationOutput::Hitting(s) = &output else {
                    return Err(Error::InvalidParams("--alpha needs a hitting run (--hit)".into())).with(&resolved);
                };
                let lts = a
                    .alpha
                    .iter()
                    .map(|&alpha| empirical_lt(s, alpha))
                    .collect::<Result<Vec<_>, _>>()
                    .with(&resolved)?;
                results["empirical_lt"] = json!(lts);
            }
            let diagnostics = json!({ "censored_by_events": censored_by_events });
            pretty(&envelope("simulate", resolved.clone(), results, diagnostics))
        }
    };
    let mut out = emit(doc, &a.out.output, &resolved)?;
    if censored_by_events > 0 {
        out.code = 2;
        out.stderr = format!(
            "error[censored]: {censored_by_events} of {} paths reached the event cap {}\n",
            a.paths, a.max_events
        );
    }
    Ok(out)
}

fn regime(a: RegimeArgs) -> Result<Outcome, Failure> {
    let (p, mut resolved) = resolve_model(&a.model)?;
    resolved["x0"] = json!(a.x0);
    resolved["band"] = json!(a.band);
    json_only(&a.out, &resolved)?;
    let report = classify_regime_with_band(&p, a.x0, a.band).with(&resolved)?;
    let doc = pretty(&envelope("regime", resolved.clone(), json!(report), json!({})));
    emit(doc, &a.out.output, &resolved)
}

fn limit_check(a: LimitCheckArgs) -> Result<Outcome, Failure> {
    let mut resolved = json!({
        "law": a.law,
        "nu": a.nu,
        "eta": a.eta,
        "delta": a.delta,
        "ns": a.ns,
        "alphas": a.alphas,
    });
    let kind = LawKind::from_name(&a.law)
        .ok_or_else(|| {
            let names: Vec<_> = LawKind::ALL.iter().map(|k| k.name()).collect();
            Error::InvalidParams(format!("unknown law {:?}; expected one of {}", a.law, names.join(", ")))
        })
        .with(&resolved)?;
    let family = match kind {
        LawKind::CriticalSaturation | LawKind::CriticalEmptyExp => LawFamily::critical(kind, a.nu, a.delta),
        LawKind::SubCritFullExp => LawFamily::new(kind, a.nu, 1.0),
        _ => {
            let eta = a
                .eta
                .ok_or_else(|| Error::InvalidParams(format!("--law {} needs --eta", a.law)))
                .with(&resolved)?;
            LawFamily::new(kind, a.nu, eta)
        }
    };
    resolved["eta"] = json!(family.eta);
    if a.threads == Some(0) {
        return Err(Error::out_of_range("threads", 0, "threads >= 1")).with(&resolved);
    }
    let table = convergence_study(&family, &a.ns, &a.alphas, a.threads).with(&resolved)?;
    let doc = match a.out.format {
        Format::Csv => table.to_csv_string().with(&resolved)?.into_bytes(),
        Format::Json => {
            let trend: Vec<Value> = a
                .alphas
                .iter()
                .map(|&alpha| json!({ "alpha": alpha, "gaps_strictly_decrease": table.gaps_strictly_decrease(alpha) }))
                .collect();
            let results = json!({ "rows": table.rows, "trend": trend });
            pretty(&envelope("limit-check", resolved.clone(), results, json!({})))
        }
    };
    emit(doc, &a.out.output, &resolved)
}

fn verify(a: VerifyArgs) -> Result<Outcome, Failure> {
    let names: Vec<&str> = if a.suite.is_empty() { SUITES.to_vec() } else { a.suite.iter().map(String::as_str).collect() };
    let resolved = json!({ "suites": names });
    if a.threads == Some(0) {
        return Err(Error::out_of_range("threads", 0, "threads >= 1")).with(&resolved);
    }
    let report = run_suites(&names, a.threads).with(&resolved)?;
    let timings: Vec<Value> = report
        .suites
        .iter()
        .map(|s| json!({ "suite": s.name, "elapsed_secs": s.elapsed_secs }))
        .collect();
    let results = json!({
        "checks": report.checks,
        "failed": report.failed,
        "passed": report.checks - report.failed,
        "suites": report.suites.iter().map(|s| json!({
            "name": s.name,
            "checks": s.checks(),
            "failed": s.failed(),
            "parts": s.parts,
        })).collect::<Vec<_>>(),
    });
    let doc = pretty(&envelope("verify", resolved.clone(), results, json!({ "timings": timings })));
    let mut out = emit(doc, &a.output, &resolved)?;
    if !report.passed() {
        out.code = 2;
        out.stderr = format!("{} of {} checks failed\n", report.failed, report.checks);
    }
    Ok(out)
}

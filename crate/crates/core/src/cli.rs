//! Command-line front end.
//!
//! Exit codes: 0 success, 1 numeric failure (or failed oracle), 2 invalid
//! scenario, 64 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use nalgebra::DVector;

use crate::control::{ControlSolution, RateVariant};
use crate::domain::SpectralSolution;
use crate::oracles::{self, SuiteInputs, Tolerances};
use crate::report::{self, Json};
use crate::risk::{self, BarycenterOptions, PriorContext};
use crate::scenario::{parse_scenario, Scenario, ScenarioError, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "robust-harvest", version, about = "Closed-form optimal harvesting with Wasserstein-robust risk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lowest eigenpair of the drift operator.
    Spectral(RunArgs),
    /// Closed-form control: theta, Lambda(alpha), closed-loop matrix, psi0 samples.
    Solve(RunArgs),
    /// Closed-loop stock and harvest paths (CSV).
    Simulate(RunArgs),
    /// Total Wasserstein-barycentric risk.
    Risk(RunArgs),
    /// Per-region risk allocation.
    Allocate(RunArgs),
    /// Robust model and its mean harvest policy (CSV).
    Robust(RunArgs),
    /// Barycenter of the prior set and its Frechet variance.
    Barycenter(RunArgs),
    /// Runs every numerical oracle.
    Verify(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides one tolerance, e.g. `--tolerance hjb=1e-7`.
    #[arg(long = "tolerance", value_name = "KEY=VALUE", value_parser = parse_tolerance)]
    pub tolerances: Vec<(String, f64)>,
    #[arg(long, value_name = "paper|foc")]
    pub variant: Option<RateVariant>,
    #[arg(long)]
    pub no_aversion: bool,
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    let value: f64 = value.parse().map_err(|e| format!("bad number `{value}`: {e}"))?;
    Tolerances::default().set(key, value)?;
    Ok((key.to_string(), value))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Numeric(String),
    #[error("cannot write report: {0}")]
    Output(#[from] std::io::Error),
    #[error("{failed} oracle report(s) failed")]
    OracleFailure { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => EXIT_VALIDATION,
            _ => EXIT_NUMERIC,
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Parses arguments, runs, prints diagnostics to stderr and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let mut scenario = parse_scenario(&args.scenario)?;
    for (key, value) in &args.tolerances {
        scenario
            .tolerances
            .set(key, *value)
            .expect("validated by the argument parser");
    }
    scenario.file.tolerances = Some(scenario.tolerances);
    if let Some(v) = args.variant {
        scenario.set_variant(v);
    }
    if args.no_aversion {
        scenario.set_no_aversion();
    }
    info!("scenario {} ({} regions)", scenario.hash, scenario.n_regions());
    let out = args.out.as_path();
    match command {
        Command::Spectral(_) => spectral(&scenario, out),
        Command::Solve(_) => solve(&scenario, out),
        Command::Simulate(_) => simulate(&scenario, out),
        Command::Risk(_) => risk_cmd(&scenario, out),
        Command::Allocate(_) => allocate(&scenario, out),
        Command::Robust(_) => robust(&scenario, out),
        Command::Barycenter(_) => barycenter(&scenario, out),
        Command::Verify(_) => verify(&scenario, out),
    }
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Spectral(a)
            | Command::Solve(a)
            | Command::Simulate(a)
            | Command::Risk(a)
            | Command::Allocate(a)
            | Command::Robust(a)
            | Command::Barycenter(a)
            | Command::Verify(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectral(_) => "spectral",
            Command::Solve(_) => "solve",
            Command::Simulate(_) => "simulate",
            Command::Risk(_) => "risk",
            Command::Allocate(_) => "allocate",
            Command::Robust(_) => "robust",
            Command::Barycenter(_) => "barycenter",
            Command::Verify(_) => "verify",
        }
    }
}

/// Echo of everything needed to reproduce a report.
pub fn provenance(s: &Scenario) -> Json {
    let echo = serde_json::to_value(&s.file).expect("scenario echo");
    Json::obj()
        .with("tool_version", env!("CARGO_PKG_VERSION"))
        .with("schema_version", SCHEMA_VERSION)
        .with("scenario_sha256", s.hash.as_str())
        .with("seed", s.seed)
        .with("samples", s.samples)
        .with("rate_variant", s.rate_variant.as_str())
        .with("no_aversion", !s.prefs.is_averse())
        .with("scenario", Json::Value(echo))
}

fn write_json(out: &Path, name: &str, body: Json, s: &Scenario) -> Result<(), CliError> {
    let doc = body.with("provenance", provenance(s));
    report::write_file(out, name, &doc.to_pretty())?;
    debug!("wrote {}", out.join(name).display());
    Ok(())
}

fn solution(s: &Scenario) -> Result<ControlSolution, CliError> {
    ControlSolution::solve(&s.domain, s.params, s.rate_variant).map_err(numeric)
}

fn prior_context(s: &Scenario) -> Result<PriorContext, CliError> {
    PriorContext::new(s.priors.clone(), BarycenterOptions::default()).map_err(numeric)
}

fn initial_state(s: &Scenario) -> DVector<f64> {
    s.initial_state
        .clone()
        .unwrap_or_else(|| s.priors.mean_location())
}

fn spectral(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let sp = SpectralSolution::from_domain(&s.domain).map_err(numeric)?;
    let body = Json::obj()
        .with("lambda_min", sp.lambda_min)
        .with("alpha", &sp.alpha)
        .with("spectral_gap", sp.gap)
        .with("eigen_residual", sp.residual())
        .with("drift", &sp.drift);
    write_json(out, "spectral.json", body, s)
}

fn solve(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let sol = solution(s)?;
    let mut samples = Vec::with_capacity(s.times.len());
    for &t in &s.times {
        samples.push(
            Json::obj()
                .with("t", t)
                .with("psi0", sol.psi0(t).map_err(numeric)?)
                .with("bracket", sol.bracket(t).map_err(numeric)?)
                .with("phi", sol.phi_factor(t).ok()),
        );
    }
    let body = Json::obj()
        .with("lambda_min", sol.spectral.lambda_min)
        .with("alpha", sol.alpha())
        .with("theta", sol.theta)
        .with("lambda_alpha", sol.lambda_alpha)
        .with("kappa0", sol.params.kappa0)
        .with("closed_loop", &sol.closed_loop)
        .with("harvest_map", sol.harvest_map().ok().as_ref())
        .with("samples", samples);
    write_json(out, "solve.json", body, s)
}

fn simulate(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let sol = solution(s)?;
    let k0 = initial_state(s);
    let states = sol.state_trajectory(&k0, &s.times).map_err(numeric)?;
    let rates = sol.harvest_trajectory(&k0, &s.times).map_err(numeric)?;
    report::write_file(out, "trajectory.csv", &report::trajectory_csv(&s.times, &states, &rates))?;
    let last = s.times.len() - 1;
    let body = Json::obj()
        .with("initial_state", &k0)
        .with("times", s.times.as_slice())
        .with("final_state", &states.row(last).transpose())
        .with("final_harvest_rate", &rates.row(last).transpose())
        .with("trajectory_csv", "trajectory.csv");
    write_json(out, "simulate.json", body, s)
}

fn coefficients_json(c: &risk::RiskCoefficients) -> Json {
    Json::obj()
        .with("tilde_alpha", &c.tilde_alpha)
        .with("g_region", &c.g_region)
        .with("g_total", c.g_total)
}

fn model_json(m: &risk::LocationScatterModel) -> Json {
    Json::obj()
        .with("family", m.family_tag.as_str())
        .with("mean", &m.mean)
        .with("scatter", &m.scatter)
}

fn allocation_residual(
    sol: &ControlSolution,
    c: &risk::RiskCoefficients,
    ctx: &PriorContext,
    s: &Scenario,
) -> (f64, DVector<f64>, f64) {
    let total = risk::total_risk(c, &ctx.priors, &s.prefs);
    let allocs = risk::allocations(c, &ctx.priors, &s.prefs);
    let residual = sol.domain().pi_weights().dot(&allocs) - total - c.aggregation_gap(&s.prefs);
    (total, allocs, residual)
}

fn risk_cmd(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let sol = solution(s)?;
    let c = risk::risk_coefficients(&sol).map_err(numeric)?;
    let ctx = prior_context(s)?;
    let (total, _, residual) = allocation_residual(&sol, &c, &ctx, s);
    let body = Json::obj()
        .with("total_risk", total)
        .with("expected_loss_at_barycenter", c.loss(&ctx.barycenter.model.mean))
        .with("aversion_term", c.aggregation_gap(&s.prefs))
        .with("coefficients", coefficients_json(&c))
        .with("barycenter", model_json(&ctx.barycenter.model))
        .with("frechet_variance", ctx.variance)
        .with("allocation_identity_residual", residual);
    write_json(out, "risk.json", body, s)
}

fn allocate(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let sol = solution(s)?;
    let c = risk::risk_coefficients(&sol).map_err(numeric)?;
    let ctx = prior_context(s)?;
    let (total, allocs, residual) = allocation_residual(&sol, &c, &ctx, s);
    let body = Json::obj()
        .with("allocations", &allocs)
        .with("pi_weights", sol.domain().pi_weights())
        .with("total_risk", total)
        .with("aversion_term", c.aggregation_gap(&s.prefs))
        .with("allocation_identity_residual", residual)
        .with("coefficients", coefficients_json(&c));
    write_json(out, "allocate.json", body, s)
}

fn robust(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let seed = s.require_seed()?;
    let sol = solution(s)?;
    let c = risk::risk_coefficients(&sol).map_err(numeric)?;
    let ctx = prior_context(s)?;
    let star = risk::robust_model(&c, &ctx.barycenter.model, &s.prefs);
    let policy = risk::robust_policy(&sol, &star, &s.times, seed).map_err(numeric)?;
    report::write_file(
        out,
        "robust_policy.csv",
        &report::trajectory_csv(&policy.times, &policy.mean_states, &policy.mean_rates),
    )?;
    let (mean, se) = policy.sampler.mean_and_std_error(s.samples);
    let worst = (&mean - &policy.mean_rates)
        .zip_map(&se, |d, e| if d == 0.0 { 0.0 } else { d.abs() / e })
        .max();
    let loss = risk::loss_distribution(&star, &c).map_err(numeric)?;
    let body = Json::obj()
        .with("robust_model", model_json(&star))
        .with("barycenter", model_json(&ctx.barycenter.model))
        .with("total_risk", risk::total_risk(&c, &ctx.priors, &s.prefs))
        .with("loss_under_robust_model", model_json(&loss))
        .with("policy_csv", "robust_policy.csv")
        .with("sample_mean_max_standard_errors", worst)
        .with("samples", s.samples);
    write_json(out, "robust.json", body, s)
}

fn barycenter(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let ctx = prior_context(s)?;
    let b = &ctx.barycenter;
    let body = Json::obj()
        .with("barycenter", model_json(&b.model))
        .with("iterations", b.iterations)
        .with("fixed_point_residual", b.residual)
        .with("regularized", b.regularized)
        .with("frechet_variance", ctx.variance)
        .with("prior_weights", s.priors.weights());
    write_json(out, "barycenter.json", body, s)
}

fn verify(s: &Scenario, out: &Path) -> Result<(), CliError> {
    let seed = s.require_seed()?;
    let sol = solution(s)?;
    let ctx = prior_context(s)?;
    let k0 = initial_state(s);
    let reports = oracles::run_suite(&SuiteInputs {
        solution: &sol,
        ctx: &ctx,
        prefs: &s.prefs,
        initial_state: &k0,
        times: &s.times,
        seed,
        samples: s.samples,
        tolerances: s.tolerances,
    })
    .map_err(numeric)?;
    let array = Json::Arr(reports.iter().map(oracle_json).collect());
    report::write_file(out, "verify.json", &array.to_pretty())?;
    report::write_file(out, "provenance.json", &provenance(s).to_pretty())?;
    for r in &reports {
        let status = match (r.passed, r.diagnostic_only) {
            (true, _) => "pass",
            (false, true) => "diagnostic",
            (false, false) => "FAIL",
        };
        info!("{status:>10}  {}  err={:e} tol={:e}", r.name, r.max_abs_error, r.tolerance);
    }
    let failed = reports.iter().filter(|r| !r.acceptable()).count();
    if failed > 0 {
        return Err(CliError::OracleFailure { failed });
    }
    Ok(())
}

fn oracle_json(r: &oracles::OracleReport) -> Json {
    let diagnostics = Json::Obj(
        r.diagnostics
            .iter()
            .map(|(k, v)| (k.clone(), Json::Str(v.clone())))
            .collect(),
    );
    Json::obj()
        .with("name", r.name.as_str())
        .with("max_abs_error", r.max_abs_error)
        .with("tolerance", r.tolerance)
        .with("passed", r.passed)
        .with("diagnostic_only", r.diagnostic_only)
        .with("diagnostics", diagnostics)
}

//! Independent numerical checks for the closed forms.
//!
//! Each oracle re-derives a quantity by a route that does not share the
//! closed-form code path: explicit Runge-Kutta instead of the matrix
//! exponential, Simpson quadrature instead of the integral adjoint, finite
//! differences in time for the HJB equation, Monte Carlo for expectations and
//! a grid search for the risk maximizer. Tolerances are always passed in.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{ControlError, ControlSolution, RateVariant};
use crate::risk::{
    self, GaussianSampler, LocationScatterModel, PriorContext, RiskCoefficients, RiskError,
    RiskPreferences,
};

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    /// `max_abs_error <= tolerance`, except for diagnostic-only reports,
    /// which never pass.
    pub passed: bool,
    pub diagnostic_only: bool,
    pub diagnostics: BTreeMap<String, String>,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, max_abs_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_abs_error,
            tolerance,
            passed: max_abs_error <= tolerance,
            diagnostic_only: false,
            diagnostics: BTreeMap::new(),
        }
    }

    /// Report-only result for a regime where no ground truth is asserted.
    pub fn diagnostic(
        name: impl Into<String>,
        max_abs_error: f64,
        tolerance: f64,
        flag: &str,
    ) -> Self {
        let mut r = Self::new(name, max_abs_error, tolerance);
        r.passed = false;
        r.diagnostic_only = true;
        r.diagnostics.insert("flag".into(), flag.into());
        r
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.diagnostics.insert(key.into(), value.to_string());
        self
    }

    /// Passed, or diagnostic-only (which asserts nothing).
    pub fn acceptable(&self) -> bool {
        self.passed || self.diagnostic_only
    }
}

/// Tolerances used by the oracle suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Sup-norm gap between `e^{tM}k₀` and the RK4 path.
    pub rk4: f64,
    /// RK4 step (absolute time units).
    pub rk4_dt: f64,
    /// Gap between `G⟨α̃,k₀⟩` and the quadrature loss.
    pub quadrature: f64,
    /// Simpson step as a fraction of the horizon.
    pub quadrature_dt: f64,
    pub hjb: f64,
    /// Relative error on the terminal slice.
    pub terminal: f64,
    pub foc: f64,
    pub sup: f64,
    /// Monte Carlo acceptance band in standard errors.
    pub mc_sigmas: f64,
    /// Relative tolerance on the Euler aggregation identity.
    pub allocation_identity: f64,
    pub barycenter: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rk4: 1e-6,
            rk4_dt: 1e-3,
            quadrature: 1e-6,
            quadrature_dt: 1e-3,
            hjb: 1e-6,
            terminal: 1e-12,
            foc: 1e-10,
            sup: 1e-8,
            mc_sigmas: 3.0,
            allocation_identity: 1e-10,
            barycenter: 1e-10,
        }
    }
}

impl Tolerances {
    /// Overrides one field by name, as used by `--tolerance key=value`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), String> {
        let slot = match key {
            "rk4" => &mut self.rk4,
            "rk4_dt" => &mut self.rk4_dt,
            "quadrature" => &mut self.quadrature,
            "quadrature_dt" => &mut self.quadrature_dt,
            "hjb" => &mut self.hjb,
            "terminal" => &mut self.terminal,
            "foc" => &mut self.foc,
            "sup" => &mut self.sup,
            "mc_sigmas" => &mut self.mc_sigmas,
            "allocation_identity" => &mut self.allocation_identity,
            "barycenter" => &mut self.barycenter,
            other => return Err(format!("unknown tolerance `{other}`")),
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(format!("tolerance `{key}` must be a positive number"));
        }
        *slot = value;
        Ok(())
    }
}

/// Time grid and states, one row per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
}

/// Classical fourth-order Runge-Kutta for `k' = M k` on `[0, T]`.
///
/// The last step is shortened so that the grid ends exactly at `T`.
pub fn rk4_trajectory(k0: &DVector<f64>, m: &DMatrix<f64>, dt: f64, horizon: f64) -> Trajectory {
    assert!(dt > 0.0, "rk4 step must be positive");
    let steps = ((horizon / dt) - 1e-9).ceil().max(0.0) as usize;
    let n = k0.len();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut k = k0.clone();
    times.push(0.0);
    states.row_mut(0).copy_from(&k.transpose());
    for step in 1..=steps {
        let t_prev = times[step - 1];
        let t = (step as f64 * dt).min(horizon);
        let h = t - t_prev;
        let k1 = m * &k;
        let k2 = m * (&k + &k1 * (h / 2.0));
        let k3 = m * (&k + &k2 * (h / 2.0));
        let k4 = m * (&k + &k3 * h);
        k += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        times.push(t);
        states.row_mut(step).copy_from(&k.transpose());
    }
    Trajectory { times, states }
}

/// `L = −(1/T) Σᵢ πᵢ ∫₀ᵀ cᵢ(t; k₀) dt` by composite Simpson quadrature of the
/// long-horizon harvest path, with step at most `dt_fraction · T`.
pub fn quadrature_loss(
    k0: &DVector<f64>,
    solution: &ControlSolution,
    dt_fraction: f64,
) -> Result<f64, ControlError> {
    let horizon = solution.params.horizon;
    let mut panels = (1.0 / dt_fraction).ceil() as usize;
    if panels % 2 == 1 {
        panels += 1;
    }
    let h = horizon / panels as f64;
    let times: Vec<f64> = (0..=panels).map(|i| i as f64 * h).collect();
    let rates = solution.harvest_trajectory(k0, &times)?;
    let weighted = rates * solution.domain().pi_weights();
    let mut sum = weighted[0] + weighted[panels];
    for i in 1..panels {
        sum += weighted[i] * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok(-(sum * h / 3.0) / horizon)
}

/// Whether the closed-form value function can solve the HJB equation with
/// the first-order-condition controls: `(bᵢ/dᵢ)αᵢ` constant and `Σ dᵢ = 1`.
pub fn regime_reasons(solution: &ControlSolution) -> Vec<&'static str> {
    let d = solution.domain();
    let ratios = d.b_diag().component_div(d.d_weights()).component_mul(solution.alpha());
    let mut reasons = Vec::new();
    if (ratios.max() - ratios.min()) > 1e-9 * ratios.max().abs() {
        reasons.push("asymmetric-marginal-cost");
    }
    if (d.d_weights().sum() - 1.0).abs() > 1e-9 {
        reasons.push("manager-weights-not-normalized");
    }
    reasons
}

/// HJB residual at one point, with `∂v/∂t` from central differences.
pub fn hjb_point_residual(
    solution: &ControlSolution,
    variant: RateVariant,
    t: f64,
    k: &DVector<f64>,
    dt: f64,
) -> Result<f64, ControlError> {
    let p = &solution.params;
    let dv_dt = (solution.value_function(t + dt, k)? - solution.value_function(t - dt, k)?)
        / (2.0 * dt);
    let grad = solution.value_gradient(t, k)?;
    let c = solution.harvest_rate_with(variant, t, k)?;
    let drift = (&solution.spectral.drift * k).dot(&grad);
    let cost: f64 = (0..k.len())
        .map(|i| solution.domain().b_diag()[i] * c[i] * grad[i])
        .sum();
    let aggregate = solution.domain().d_weights().dot(&c);
    let utility = (-p.r * t).exp() * aggregate.powf(1.0 - p.beta) / (1.0 - p.beta);
    Ok(-dv_dt - (drift - cost + utility))
}

/// Maximum HJB residual over `times × states`.
///
/// Outside the consistent regime (see [`regime_reasons`]) the report is
/// diagnostic-only and flagged `inconsistent-regime`.
pub fn hjb_residual(
    solution: &ControlSolution,
    states: &[DVector<f64>],
    times: &[f64],
    variant: RateVariant,
    tolerance: f64,
) -> OracleReport {
    let horizon = solution.params.horizon;
    let dt = 1e-5 * horizon;
    let mut worst = 0.0_f64;
    let mut failure = None;
    'grid: for &t in times {
        if t - dt < 0.0 || t + dt > horizon {
            failure = Some(format!("time {t} is not interior"));
            break;
        }
        for k in states {
            match hjb_point_residual(solution, variant, t, k, dt) {
                Ok(r) => worst = worst.max(r.abs()),
                Err(e) => {
                    failure = Some(e.to_string());
                    break 'grid;
                }
            }
        }
    }
    let name = format!("hjb_residual[{}]", variant.as_str());
    if let Some(msg) = failure {
        return OracleReport::new(name, f64::INFINITY, tolerance).note("error", msg);
    }
    let reasons = regime_reasons(solution);
    let report = if reasons.is_empty() {
        OracleReport::new(name, worst, tolerance).note("regime", "consistent")
    } else {
        OracleReport::diagnostic(name, worst, tolerance, "inconsistent-regime")
            .note("regime", reasons.join(","))
    };
    report
        .note("grid", format!("{}x{}", times.len(), states.len()))
        .note("time_step", dt)
}

/// Terminal slice: `v(T, k)` against `e^{−rT}⟨E, k⟩^{1−β}/(1−β)` with
/// `E = κ₀^{β/(1−β)} α`, as a relative error.
pub fn terminal_residual(
    solution: &ControlSolution,
    states: &[DVector<f64>],
    tolerance: f64,
) -> OracleReport {
    let p = &solution.params;
    let e = solution.alpha() * p.kappa0.powf(p.beta / (1.0 - p.beta));
    let mut worst = 0.0_f64;
    for k in states {
        let payoff = (-p.r * p.horizon).exp() * e.dot(k).powf(1.0 - p.beta) / (1.0 - p.beta);
        match solution.value_function(p.horizon, k) {
            Ok(v) => worst = worst.max((v - payoff).abs() / payoff.abs().max(f64::MIN_POSITIVE)),
            Err(err) => {
                return OracleReport::new("hjb_terminal", f64::INFINITY, tolerance)
                    .note("error", err)
            }
        }
    }
    OracleReport::new("hjb_terminal", worst, tolerance).note("metric", "relative")
}

/// Stationarity residual `e^{−rt} dᵢ ⟨d, c⟩^{−β} − bᵢ (∇v)ᵢ` per region.
pub fn foc_residual(
    t: f64,
    k: &DVector<f64>,
    solution: &ControlSolution,
    variant: RateVariant,
) -> Result<DVector<f64>, ControlError> {
    let p = &solution.params;
    let c = solution.harvest_rate_with(variant, t, k)?;
    let grad = solution.value_gradient(t, k)?;
    let d = solution.domain().d_weights();
    let marginal = (-p.r * t).exp() * d.dot(&c).powf(-p.beta);
    Ok(d * marginal - solution.domain().b_diag().component_mul(&grad))
}

/// [`foc_residual`] over a grid, reported like [`hjb_residual`].
pub fn foc_report(
    solution: &ControlSolution,
    states: &[DVector<f64>],
    times: &[f64],
    variant: RateVariant,
    tolerance: f64,
) -> OracleReport {
    let name = format!("foc_residual[{}]", variant.as_str());
    let mut worst = 0.0_f64;
    for &t in times {
        for k in states {
            match foc_residual(t, k, solution, variant) {
                Ok(r) => worst = worst.max(r.amax()),
                Err(e) => return OracleReport::new(name, f64::INFINITY, tolerance).note("error", e),
            }
        }
    }
    let reasons = regime_reasons(solution);
    if reasons.is_empty() {
        OracleReport::new(name, worst, tolerance).note("regime", "consistent")
    } else {
        OracleReport::diagnostic(name, worst, tolerance, "inconsistent-regime")
            .note("regime", reasons.join(","))
    }
}

/// Monte Carlo estimate of `E_Q[G⟨α̃, k₀⟩]` and its standard error.
///
/// Uses a running (Welford) mean, so a degenerate model returns the exact
/// loss at its location with zero standard error.
pub fn mc_expected_loss(
    q: &LocationScatterModel,
    coeffs: &RiskCoefficients,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(samples >= 1, "at least one sample is required");
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut count = 0.0;
    GaussianSampler::new(q, seed).for_each(samples, |k0| {
        count += 1.0;
        let x = coeffs.loss(k0);
        let delta = x - mean;
        mean += delta / count;
        m2 += delta * (x - mean);
    });
    let se = if samples > 1 {
        (m2 / (count - 1.0) / count).sqrt()
    } else {
        0.0
    };
    (mean, se)
}

/// `E_Q[L] − F(Q)/(2γ)` with `F` the barycentric penalty.
///
/// In the no-aversion limit the penalty is infinite away from the
/// barycenter and the objective is `−∞` there.
pub fn risk_objective(
    q: &LocationScatterModel,
    coeffs: &RiskCoefficients,
    ctx: &PriorContext,
    prefs: &RiskPreferences,
) -> Result<f64, RiskError> {
    let expected = coeffs.loss(&q.mean);
    let penalty = ctx.penalty(q)?;
    Ok(match prefs {
        RiskPreferences::Averse { gamma } => expected - penalty / (2.0 * gamma),
        RiskPreferences::NoAversion if penalty <= 1e-9 => expected,
        RiskPreferences::NoAversion => f64::NEG_INFINITY,
    })
}

/// Checks that the robust model maximizes [`risk_objective`] over a grid of
/// location offsets (scatter held at the barycenter) and that its objective
/// equals the closed-form total risk.
///
/// Offsets are applied along every coordinate axis and along `α̃`.
pub fn sup_check(
    coeffs: &RiskCoefficients,
    ctx: &PriorContext,
    prefs: &RiskPreferences,
    offsets: &[f64],
    tolerance: f64,
) -> Result<OracleReport, RiskError> {
    let star = risk::robust_model(coeffs, &ctx.barycenter.model, prefs);
    let closed = risk::total_risk(coeffs, &ctx.priors, prefs);
    let center = risk_objective(&star, coeffs, ctx, prefs)?;
    let n = star.dim();
    let mut directions: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    if n > 1 && coeffs.tilde_alpha.norm() > 0.0 {
        directions.push(coeffs.tilde_alpha.normalize());
    }
    let mut min_margin = f64::INFINITY;
    let mut margins = Vec::new();
    for dir in &directions {
        for &delta in offsets {
            let q = star.with_mean(&star.mean + dir * delta);
            let margin = center - risk_objective(&q, coeffs, ctx, prefs)?;
            min_margin = min_margin.min(margin);
            margins.push(format!("{margin:.6e}"));
        }
    }
    let gap = (center - closed).abs();
    let err = gap.max(-min_margin).max(0.0);
    Ok(OracleReport::new("risk_sup_check", err, tolerance)
        .note("objective_at_robust_model", format!("{center:.17e}"))
        .note("closed_form_total_risk", format!("{closed:.17e}"))
        .note("min_margin", format!("{min_margin:.6e}"))
        .note("margins", margins.join(",")))
}

/// Inputs shared by the oracle suite.
#[derive(Debug, Clone)]
pub struct SuiteInputs<'a> {
    pub solution: &'a ControlSolution,
    pub ctx: &'a PriorContext,
    pub prefs: &'a RiskPreferences,
    pub initial_state: &'a DVector<f64>,
    pub times: &'a [f64],
    pub seed: u64,
    pub samples: usize,
    pub tolerances: Tolerances,
}

/// Positive test states `kⱼ,ᵢ = j (1 + 0.1 i)`.
pub fn default_state_grid(n: usize, count: usize) -> Vec<DVector<f64>> {
    (1..=count)
        .map(|j| DVector::from_fn(n, |i, _| j as f64 * (1.0 + 0.1 * i as f64)))
        .collect()
}

/// Interior times `T·i/(count+1)`.
pub fn interior_times(horizon: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|i| horizon * i as f64 / (count + 1) as f64)
        .collect()
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        diff.abs() / se
    }
}

/// Runs every oracle against one configured problem.
pub fn run_suite(inputs: &SuiteInputs<'_>) -> Result<Vec<OracleReport>, RiskError> {
    let tol = &inputs.tolerances;
    let sol = inputs.solution;
    let horizon = sol.params.horizon;
    let mut out = Vec::new();

    let rk = rk4_trajectory(inputs.initial_state, &sol.closed_loop, tol.rk4_dt, horizon);
    let exact = sol.state_trajectory(inputs.initial_state, &rk.times)?;
    out.push(
        OracleReport::new("state_trajectory_vs_rk4", (&exact - &rk.states).amax(), tol.rk4)
            .note("dt", tol.rk4_dt)
            .note("steps", rk.times.len() - 1),
    );

    let coeffs = risk::risk_coefficients(sol)?;
    let quad = quadrature_loss(inputs.initial_state, sol, tol.quadrature_dt)?;
    let closed = coeffs.loss(inputs.initial_state);
    out.push(
        OracleReport::new("closed_form_vs_quadrature_loss", (quad - closed).abs(), tol.quadrature)
            .note("closed_form", format!("{closed:.17e}"))
            .note("quadrature", format!("{quad:.17e}")),
    );

    let states = default_state_grid(sol.n_regions(), 5);
    let times = interior_times(horizon, 5);
    out.push(hjb_residual(sol, &states, &times, sol.rate_variant, tol.hjb));
    out.push(terminal_residual(sol, &states, tol.terminal));
    out.push(foc_report(sol, &states, &times, sol.rate_variant, tol.foc));

    let star = risk::robust_model(&coeffs, &inputs.ctx.barycenter.model, inputs.prefs);
    let (est, se) = mc_expected_loss(&star, &coeffs, inputs.samples, inputs.seed);
    let target = coeffs.loss(&star.mean);
    out.push(
        OracleReport::new("mc_expected_loss_robust", z_score(est - target, se), tol.mc_sigmas)
            .note("estimate", format!("{est:.17e}"))
            .note("standard_error", format!("{se:.17e}"))
            .note("closed_form", format!("{target:.17e}"))
            .note("samples", inputs.samples)
            .note("seed", inputs.seed)
            .note("metric", "standard-errors"),
    );

    out.push(sup_check(
        &coeffs,
        inputs.ctx,
        inputs.prefs,
        &[0.1, -0.1, 0.01, -0.01, 0.001, -0.001],
        tol.sup,
    )?);

    let total = risk::total_risk(&coeffs, &inputs.ctx.priors, inputs.prefs);
    let allocs = risk::allocations(&coeffs, &inputs.ctx.priors, inputs.prefs);
    let identity = sol.domain().pi_weights().dot(&allocs) - total - coeffs.aggregation_gap(inputs.prefs);
    out.push(
        OracleReport::new(
            "allocation_identity",
            identity.abs() / total.abs().max(1.0),
            tol.allocation_identity,
        )
        .note("metric", "relative"),
    );

    out.push(
        OracleReport::new(
            "barycenter_fixed_point",
            risk::barycenter_residual(&inputs.ctx.barycenter.model.scatter, &inputs.ctx.priors),
            tol.barycenter,
        )
        .note("iterations", inputs.ctx.barycenter.iterations)
        .note("regularized", inputs.ctx.barycenter.regularized),
    );

    let policy = risk::robust_policy(sol, &star, inputs.times, inputs.seed)?;
    let (mean, se) = policy.sampler.mean_and_std_error(inputs.samples);
    let worst = mean
        .iter()
        .zip(policy.mean_rates.iter())
        .zip(se.iter())
        .map(|((m, want), s)| z_score(m - want, *s))
        .fold(0.0, f64::max);
    out.push(
        OracleReport::new("robust_policy_sample_mean", worst, tol.mc_sigmas)
            .note("samples", inputs.samples)
            .note("seed", inputs.seed)
            .note("metric", "standard-errors"),
    );
    Ok(out)
}

//! Closed-form optimal harvesting control.
//!
//! With CRRA utility of elasticity `β`, discount rate `r`, horizon `T` and
//! lowest drift eigenpair `(λ, α)`, the value function and harvest rates are
//! driven by the scalars
//!
//! ```text
//! θ    = (r − λ(1−β)) / β
//! Λ(α) = Σᵢ bᵢ (bᵢ/dᵢ)^{−1/β} αᵢ^{(β−1)/β}
//! X(t) = (κ₀ − Λ/θ) e^{−θ(T−t)} + Λ/θ
//! ```
//!
//! where `κ₀` is the scalar terminal level. `X` is monotone in `t` and equals
//! `κ₀ > 0` at `T`, so its sign on `[0, T]` is settled by `X(0)`.
//!
//! For long horizons (`θ > 0`) the feedback law becomes linear in the state
//! and the closed-loop dynamics are `k' = M k` with
//! `M = (L_G + A_D) − (θ/Λ) u αᵀ`, `uᵢ = bᵢ (bᵢ/dᵢ)^{−1/β} αᵢ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, SpatialDomain, SpectralSolution};
use crate::linalg;

/// `|θ|` below this is treated as zero.
pub const THETA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid economic parameter {field}: {reason}")]
    InvalidParameter {
        field: &'static str,
        reason: String,
    },
    #[error("theta = {0:e} is numerically zero")]
    DegenerateTheta(f64),
    #[error("bracket X(t) = {value:e} at t = {t} is not positive")]
    NegativeBracket { t: f64, value: f64 },
    #[error("<alpha, k> = {0:e} is not positive")]
    NonPositiveState(f64),
    #[error("long-horizon harvest law needs theta > 0 (theta = {0})")]
    AsymptoticsInvalid(f64),
    #[error("time {t} lies outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("time grid is not sorted and non-negative at index {0}")]
    BadTimeGrid(usize),
    #[error("Phi(t) is singular at t = {0}")]
    PhiSingular(f64),
    #[error("state has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Discounting, preference and horizon parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    pub r: f64,
    pub beta: f64,
    pub horizon: f64,
    /// Scalar terminal level inside `X(t)`.
    pub kappa0: f64,
}

impl EconomicParams {
    pub fn new(r: f64, beta: f64, horizon: f64, kappa0: f64) -> Result<Self, ControlError> {
        let bad = |field, reason: &str| ControlError::InvalidParameter {
            field,
            reason: reason.to_string(),
        };
        if !(r.is_finite() && r > 0.0) {
            return Err(bad("r", "must be a positive number"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(bad("beta", "must lie in (0, 1)"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(bad("horizon", "must be a positive number"));
        }
        if !(kappa0.is_finite() && kappa0 > 0.0) {
            return Err(bad("kappa0", "must be a positive number"));
        }
        Ok(Self {
            r,
            beta,
            horizon,
            kappa0,
        })
    }
}

/// Which per-region harvest formula [`ControlSolution::harvest_rate`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RateVariant {
    /// `cᵢ = αᵢ (bᵢ/dᵢ)^{−1/β} X(t)^{−1} ⟨α, k⟩`.
    #[default]
    #[serde(rename = "paper")]
    PaperEqOhr,
    /// First-order condition in the value gradient:
    /// `cᵢ = e^{−rt/β} ((bᵢ/dᵢ)(∇v)ᵢ)^{−1/β}`.
    #[serde(rename = "foc")]
    FocDerived,
}

impl RateVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            RateVariant::PaperEqOhr => "paper",
            RateVariant::FocDerived => "foc",
        }
    }
}

impl std::str::FromStr for RateVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(RateVariant::PaperEqOhr),
            "foc" => Ok(RateVariant::FocDerived),
            other => Err(format!("unknown rate variant `{other}` (expected paper|foc)")),
        }
    }
}

/// `θ = (r − λ(1−β))/β`.
pub fn compute_theta(params: &EconomicParams, lambda_min: f64) -> Result<f64, ControlError> {
    let theta = (params.r - lambda_min * (1.0 - params.beta)) / params.beta;
    if theta.abs() < THETA_TOL {
        return Err(ControlError::DegenerateTheta(theta));
    }
    Ok(theta)
}

/// `(bᵢ/dᵢ)^{−1/β}` for every region.
pub fn efficiency_factors(domain: &SpatialDomain, beta: f64) -> DVector<f64> {
    domain
        .b_diag()
        .zip_map(domain.d_weights(), |b, d| (b / d).powf(-1.0 / beta))
}

/// `Λ(α) = Σᵢ bᵢ (bᵢ/dᵢ)^{−1/β} αᵢ^{(β−1)/β}`.
pub fn compute_lambda_alpha(
    domain: &SpatialDomain,
    alpha: &DVector<f64>,
    beta: f64,
) -> Result<f64, ControlError> {
    if let Some(index) = alpha.iter().position(|&a| !(a > 0.0)) {
        return Err(DomainError::NonPositiveEigenvector {
            index,
            value: alpha[index],
        }
        .into());
    }
    let factors = efficiency_factors(domain, beta);
    let exponent = (beta - 1.0) / beta;
    Ok((0..alpha.len())
        .map(|i| domain.b_diag()[i] * factors[i] * alpha[i].powf(exponent))
        .sum())
}

fn bracket_value(t: f64, theta: f64, lambda_alpha: f64, params: &EconomicParams) -> f64 {
    let ratio = lambda_alpha / theta;
    (params.kappa0 - ratio) * (-theta * (params.horizon - t)).exp() + ratio
}

/// `ψ₀(t) = e^{−rt/(1−β)} X(t)^{β/(1−β)}`.
pub fn psi0(
    t: f64,
    theta: f64,
    lambda_alpha: f64,
    params: &EconomicParams,
) -> Result<f64, ControlError> {
    let x = bracket_value(t, theta, lambda_alpha, params);
    if !(x > 0.0) {
        return Err(ControlError::NegativeBracket { t, value: x });
    }
    let b = params.beta;
    Ok((-params.r * t / (1.0 - b)).exp() * x.powf(b / (1.0 - b)))
}

/// Closed-form solution of the control problem on a fixed domain.
#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub spectral: SpectralSolution,
    pub params: EconomicParams,
    pub theta: f64,
    pub lambda_alpha: f64,
    pub closed_loop: DMatrix<f64>,
    pub rate_variant: RateVariant,
    domain: SpatialDomain,
    factors: DVector<f64>,
}

impl ControlSolution {
    /// Solves the spectral problem and evaluates the closed-form scalars.
    pub fn solve(
        domain: &SpatialDomain,
        params: EconomicParams,
        rate_variant: RateVariant,
    ) -> Result<Self, ControlError> {
        let spectral = SpectralSolution::from_domain(domain)?;
        Self::from_spectral(domain, spectral, params, rate_variant)
    }

    pub fn from_spectral(
        domain: &SpatialDomain,
        spectral: SpectralSolution,
        params: EconomicParams,
        rate_variant: RateVariant,
    ) -> Result<Self, ControlError> {
        let theta = compute_theta(&params, spectral.lambda_min)?;
        let lambda_alpha = compute_lambda_alpha(domain, &spectral.alpha, params.beta)?;
        let x0 = bracket_value(0.0, theta, lambda_alpha, &params);
        if !(x0 > 0.0) {
            return Err(ControlError::NegativeBracket { t: 0.0, value: x0 });
        }
        let factors = efficiency_factors(domain, params.beta);
        let closed_loop = rank_one_closed_loop(domain, &spectral, &factors, theta, lambda_alpha);
        Ok(Self {
            spectral,
            params,
            theta,
            lambda_alpha,
            closed_loop,
            rate_variant,
            domain: domain.clone(),
            factors,
        })
    }

    pub fn with_variant(&self, rate_variant: RateVariant) -> Self {
        Self {
            rate_variant,
            ..self.clone()
        }
    }

    pub fn domain(&self) -> &SpatialDomain {
        &self.domain
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.spectral.alpha
    }

    pub fn n_regions(&self) -> usize {
        self.domain.n_regions()
    }

    /// `(bᵢ/dᵢ)^{−1/β}`.
    pub fn efficiency_factors(&self) -> &DVector<f64> {
        &self.factors
    }

    fn check_time(&self, t: f64) -> Result<(), ControlError> {
        if !(0.0..=self.params.horizon).contains(&t) {
            return Err(ControlError::TimeOutOfRange {
                t,
                horizon: self.params.horizon,
            });
        }
        Ok(())
    }

    fn check_dim(&self, k: &DVector<f64>) -> Result<(), ControlError> {
        if k.len() != self.n_regions() {
            return Err(ControlError::DimensionMismatch {
                got: k.len(),
                expected: self.n_regions(),
            });
        }
        Ok(())
    }

    fn positive_projection(&self, k: &DVector<f64>) -> Result<f64, ControlError> {
        self.check_dim(k)?;
        let s = self.alpha().dot(k);
        if !(s > 0.0) {
            return Err(ControlError::NonPositiveState(s));
        }
        Ok(s)
    }

    /// `X(t)`.
    pub fn bracket(&self, t: f64) -> Result<f64, ControlError> {
        self.check_time(t)?;
        let x = bracket_value(t, self.theta, self.lambda_alpha, &self.params);
        if !(x > 0.0) {
            return Err(ControlError::NegativeBracket { t, value: x });
        }
        Ok(x)
    }

    pub fn psi0(&self, t: f64) -> Result<f64, ControlError> {
        self.check_time(t)?;
        psi0(t, self.theta, self.lambda_alpha, &self.params)
    }

    /// `v(t, k) = e^{−rt}/(1−β) · X(t)^β · ⟨α, k⟩^{1−β}`.
    pub fn value_function(&self, t: f64, k: &DVector<f64>) -> Result<f64, ControlError> {
        let x = self.bracket(t)?;
        let s = self.positive_projection(k)?;
        let b = self.params.beta;
        Ok((-self.params.r * t).exp() / (1.0 - b) * x.powf(b) * s.powf(1.0 - b))
    }

    /// Analytic gradient `∇ₖv = e^{−rt} X(t)^β ⟨α, k⟩^{−β} α`.
    pub fn value_gradient(&self, t: f64, k: &DVector<f64>) -> Result<DVector<f64>, ControlError> {
        let x = self.bracket(t)?;
        let s = self.positive_projection(k)?;
        let b = self.params.beta;
        let scale = (-self.params.r * t).exp() * x.powf(b) * s.powf(-b);
        Ok(self.alpha() * scale)
    }

    /// Optimal harvest rates under the solution's rate variant.
    pub fn harvest_rate(&self, t: f64, k: &DVector<f64>) -> Result<DVector<f64>, ControlError> {
        self.harvest_rate_with(self.rate_variant, t, k)
    }

    pub fn harvest_rate_with(
        &self,
        variant: RateVariant,
        t: f64,
        k: &DVector<f64>,
    ) -> Result<DVector<f64>, ControlError> {
        match variant {
            RateVariant::PaperEqOhr => {
                let x = self.bracket(t)?;
                let s = self.positive_projection(k)?;
                Ok(self.alpha().component_mul(&self.factors) * (s / x))
            }
            RateVariant::FocDerived => {
                let grad = self.value_gradient(t, k)?;
                let b = self.params.beta;
                let discount = (-self.params.r * t / b).exp();
                let ratio = self.domain.b_diag().component_div(self.domain.d_weights());
                Ok(ratio
                    .component_mul(&grad)
                    .map(|y| discount * y.powf(-1.0 / b)))
            }
        }
    }

    /// `Φ(t) = [1 + (θκ₀/Λ − 1) e^{−θ(T−t)}]^{−1}`.
    pub fn phi_factor(&self, t: f64) -> Result<f64, ControlError> {
        self.check_time(t)?;
        let p = &self.params;
        let denom = 1.0
            + (self.theta * p.kappa0 / self.lambda_alpha - 1.0)
                * (-self.theta * (p.horizon - t)).exp();
        if denom == 0.0 || !denom.is_finite() {
            return Err(ControlError::PhiSingular(t));
        }
        Ok(1.0 / denom)
    }

    fn require_long_horizon(&self) -> Result<(), ControlError> {
        if self.theta > 0.0 {
            Ok(())
        } else {
            Err(ControlError::AsymptoticsInvalid(self.theta))
        }
    }

    /// Long-horizon feedback matrix `H = (θ/Λ) B̃ A Ã`, so that `c = H k`.
    pub fn harvest_map(&self) -> Result<DMatrix<f64>, ControlError> {
        self.require_long_horizon()?;
        let v = self.alpha().component_mul(&self.factors);
        Ok(&v * self.alpha().transpose() * (self.theta / self.lambda_alpha))
    }

    /// `cᵢ ≈ (αᵢ θ/Λ) (bᵢ/dᵢ)^{−1/β} ⟨α, k⟩`.
    pub fn asymptotic_harvest_rate(&self, k: &DVector<f64>) -> Result<DVector<f64>, ControlError> {
        self.require_long_horizon()?;
        self.check_dim(k)?;
        let s = self.alpha().dot(k);
        Ok(self.alpha().component_mul(&self.factors) * (self.theta / self.lambda_alpha * s))
    }

    /// `k(t) = e^{tM} k₀` on the grid.
    pub fn state_trajectory(
        &self,
        k0: &DVector<f64>,
        times: &[f64],
    ) -> Result<DMatrix<f64>, ControlError> {
        self.check_dim(k0)?;
        state_trajectory(k0, times, &self.closed_loop)
    }

    /// `c(t) = H e^{tM} k₀` on the grid, one row per time.
    pub fn harvest_trajectory(
        &self,
        k0: &DVector<f64>,
        times: &[f64],
    ) -> Result<DMatrix<f64>, ControlError> {
        let h = self.harvest_map()?;
        let states = self.state_trajectory(k0, times)?;
        Ok(states * h.transpose())
    }
}

fn rank_one_closed_loop(
    domain: &SpatialDomain,
    spectral: &SpectralSolution,
    factors: &DVector<f64>,
    theta: f64,
    lambda_alpha: f64,
) -> DMatrix<f64> {
    let u = domain
        .b_diag()
        .component_mul(factors)
        .component_mul(&spectral.alpha);
    &spectral.drift - &u * spectral.alpha.transpose() * (theta / lambda_alpha)
}

/// Closed-loop matrix `M = (L_G + A_D) − (θ/Λ) B_D B̃ A Ã`.
pub fn closed_loop_matrix(
    domain: &SpatialDomain,
    spectral: &SpectralSolution,
    params: &EconomicParams,
) -> Result<DMatrix<f64>, ControlError> {
    let theta = compute_theta(params, spectral.lambda_min)?;
    if theta <= 0.0 {
        return Err(ControlError::AsymptoticsInvalid(theta));
    }
    let lambda_alpha = compute_lambda_alpha(domain, &spectral.alpha, params.beta)?;
    let factors = efficiency_factors(domain, params.beta);
    Ok(rank_one_closed_loop(domain, spectral, &factors, theta, lambda_alpha))
}

/// `k(tⱼ) = e^{tⱼ M} k₀` for each grid time, one row per time.
///
/// Every grid point gets its own exponential, so errors do not accumulate
/// along the grid.
pub fn state_trajectory(
    k0: &DVector<f64>,
    times: &[f64],
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ControlError> {
    check_grid(times)?;
    let n = k0.len();
    if m.nrows() != n {
        return Err(ControlError::DimensionMismatch {
            got: n,
            expected: m.nrows(),
        });
    }
    let mut out = DMatrix::zeros(times.len(), n);
    for (row, &t) in times.iter().enumerate() {
        let k = if t == 0.0 {
            k0.clone()
        } else {
            linalg::expm(&(m * t)) * k0
        };
        out.row_mut(row).copy_from(&k.transpose());
    }
    Ok(out)
}

pub(crate) fn check_grid(times: &[f64]) -> Result<(), ControlError> {
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if !(t.is_finite() && t >= prev) {
            return Err(ControlError::BadTimeGrid(i));
        }
        prev = t;
    }
    Ok(())
}

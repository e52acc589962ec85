//! Harvest risk under the Wasserstein-barycentric risk measure.
//!
//! The averaged harvest loss `L = −(1/T) Σᵢ πᵢ ∫₀ᵀ cᵢ(t; k₀) dt` is affine in
//! the initial state: `L = G ⟨α̃, k₀⟩` with
//!
//! ```text
//! α̃  = −J(T)ᵀ α,   J(T) = ∫₀ᵀ e^{tM} dt
//! Gᵢ = αᵢ θ / (T Λ) · (bᵢ/dᵢ)^{−1/β},   G = Σⱼ πⱼ Gⱼ
//! ```
//!
//! For an affine loss `⟨β, k₀⟩` and a Location-Scatter prior set the risk
//! measure and its maximizer are explicit:
//!
//! ```text
//! ρ(L)   = ⟨β, m_B⟩ + (γ/2) ‖β‖²
//! Q*     = LS(m_B + γ β, S_B)
//! ```
//!
//! and the Euler allocation to region `j` is the directional derivative of
//! `ρ` along `Lⱼ = Gⱼ ⟨α̃, k₀⟩`.

use nalgebra::{DMatrix, DVector};

use super::model::{LocationScatterModel, PriorContext, PriorSet};
use super::sampler::GaussianSampler;
use super::RiskError;
use crate::control::{ControlError, ControlSolution};
use crate::linalg;

/// Model-ambiguity aversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskPreferences {
    /// Aversion `γ > 0`.
    Averse { gamma: f64 },
    /// The `γ → 0` limit: no deviation from the barycenter is entertained.
    NoAversion,
}

impl RiskPreferences {
    pub fn averse(gamma: f64) -> Result<Self, RiskError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(RiskError::InvalidGamma(gamma));
        }
        Ok(RiskPreferences::Averse { gamma })
    }

    /// `γ`, or 0 in the no-aversion limit.
    pub fn gamma(&self) -> f64 {
        match *self {
            RiskPreferences::Averse { gamma } => gamma,
            RiskPreferences::NoAversion => 0.0,
        }
    }

    pub fn is_averse(&self) -> bool {
        matches!(self, RiskPreferences::Averse { .. })
    }
}

/// How `J(T) = ∫₀ᵀ e^{tM} dt` was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralRoute {
    /// `(e^{TM} − I) M⁻¹`.
    Inverse,
    /// Upper-right block of `exp([[M, I], [0, 0]] T)`.
    AugmentedBlock,
}

/// The inverse route is used only above this reciprocal condition number
/// and when `T·σ_min(M)` is large enough to avoid cancellation in `e^{TM} − I`.
const INVERSE_ROUTE_RCOND: f64 = 1e-8;
const INVERSE_ROUTE_MIN_SCALE: f64 = 1e-2;

/// `α̃ = −J(T)ᵀ α`, together with the route used for `J(T)`.
pub fn integral_adjoint_with_route(
    m: &DMatrix<f64>,
    horizon: f64,
    alpha: &DVector<f64>,
) -> Result<(DVector<f64>, IntegralRoute), RiskError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(RiskError::InvalidHorizon(horizon));
    }
    if horizon == 0.0 {
        return Ok((DVector::zeros(alpha.len()), IntegralRoute::AugmentedBlock));
    }
    let sv = m.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    let well_conditioned =
        smax > 0.0 && smin / smax > INVERSE_ROUTE_RCOND && horizon * smin > INVERSE_ROUTE_MIN_SCALE;
    if well_conditioned {
        if let Some(inv) = m.clone().try_inverse() {
            let n = m.nrows();
            let j = (linalg::expm(&(m * horizon)) - DMatrix::identity(n, n)) * inv;
            return Ok((-(j.transpose() * alpha), IntegralRoute::Inverse));
        }
    }
    let j = linalg::exp_integral_block(m, horizon);
    Ok((-(j.transpose() * alpha), IntegralRoute::AugmentedBlock))
}

/// `α̃ = −((e^{TM} − I) M⁻¹)ᵀ α`, i.e. `−J(T)ᵀ α`.
pub fn integral_adjoint(
    m: &DMatrix<f64>,
    horizon: f64,
    alpha: &DVector<f64>,
) -> Result<DVector<f64>, RiskError> {
    integral_adjoint_with_route(m, horizon, alpha).map(|(v, _)| v)
}

/// Coefficients of the affine loss `L = G ⟨α̃, k₀⟩`, `Lⱼ = Gⱼ ⟨α̃, k₀⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCoefficients {
    pub tilde_alpha: DVector<f64>,
    pub g_region: DVector<f64>,
    pub g_total: f64,
}

impl RiskCoefficients {
    /// Loss vector `β = G α̃`.
    pub fn loss_direction(&self) -> DVector<f64> {
        &self.tilde_alpha * self.g_total
    }

    /// `L(k₀) = G ⟨α̃, k₀⟩`.
    pub fn loss(&self, k0: &DVector<f64>) -> f64 {
        self.g_total * self.tilde_alpha.dot(k0)
    }

    /// `(γ/2) G² ‖α̃‖²`, the gap in the Euler aggregation identity.
    pub fn aggregation_gap(&self, prefs: &RiskPreferences) -> f64 {
        0.5 * prefs.gamma() * self.g_total.powi(2) * self.tilde_alpha.norm_squared()
    }
}

pub fn risk_coefficients(solution: &ControlSolution) -> Result<RiskCoefficients, RiskError> {
    if solution.theta <= 0.0 {
        return Err(ControlError::AsymptoticsInvalid(solution.theta).into());
    }
    let horizon = solution.params.horizon;
    let tilde_alpha = integral_adjoint(&solution.closed_loop, horizon, solution.alpha())?;
    let scale = solution.theta / (horizon * solution.lambda_alpha);
    let g_region = solution
        .alpha()
        .component_mul(solution.efficiency_factors())
        * scale;
    let g_total = solution.domain().pi_weights().dot(&g_region);
    Ok(RiskCoefficients {
        tilde_alpha,
        g_region,
        g_total,
    })
}

/// `ρ(L) = G ⟨α̃, m_B⟩ + (γ/2) G² ‖α̃‖²`.
///
/// Depends on the priors only through the barycentric location.
pub fn total_risk(coeffs: &RiskCoefficients, priors: &PriorSet, prefs: &RiskPreferences) -> f64 {
    let expected = coeffs.loss(&priors.mean_location());
    match prefs {
        RiskPreferences::NoAversion => expected,
        RiskPreferences::Averse { .. } => expected + coeffs.aggregation_gap(prefs),
    }
}

/// Euler allocation `ρ(Lⱼ | L) = Gⱼ ⟨α̃, m_B⟩ + γ G Gⱼ ‖α̃‖²`.
pub fn allocate_risk(
    coeffs: &RiskCoefficients,
    priors: &PriorSet,
    prefs: &RiskPreferences,
    region: usize,
) -> Result<f64, RiskError> {
    let n = coeffs.g_region.len();
    if region >= n {
        return Err(RiskError::RegionOutOfRange { region, n });
    }
    let gj = coeffs.g_region[region];
    let expected = gj * coeffs.tilde_alpha.dot(&priors.mean_location());
    Ok(match prefs {
        RiskPreferences::NoAversion => expected,
        RiskPreferences::Averse { gamma } => {
            expected + gamma * coeffs.g_total * gj * coeffs.tilde_alpha.norm_squared()
        }
    })
}

/// Allocations for every region.
pub fn allocations(
    coeffs: &RiskCoefficients,
    priors: &PriorSet,
    prefs: &RiskPreferences,
) -> DVector<f64> {
    DVector::from_iterator(
        coeffs.g_region.len(),
        (0..coeffs.g_region.len())
            .map(|j| allocate_risk(coeffs, priors, prefs, j).expect("index in range")),
    )
}

/// Maximizing model `Q* = LS(m_B + γ G α̃, S_B)`.
pub fn robust_model(
    coeffs: &RiskCoefficients,
    barycenter: &LocationScatterModel,
    prefs: &RiskPreferences,
) -> LocationScatterModel {
    match prefs {
        RiskPreferences::NoAversion => barycenter.clone(),
        RiskPreferences::Averse { gamma } => {
            let shift = &coeffs.tilde_alpha * (gamma * coeffs.g_total);
            barycenter.with_mean(&barycenter.mean + shift)
        }
    }
}

/// Law of `L = ⟨β, k₀⟩` with `β = G α̃` when `k₀ ~ LS(m, S)`:
/// `LS(βᵀm, βᵀSβ)`.
pub fn loss_distribution(
    q: &LocationScatterModel,
    coeffs: &RiskCoefficients,
) -> Result<LocationScatterModel, RiskError> {
    if q.dim() != coeffs.tilde_alpha.len() {
        return Err(RiskError::DimensionMismatch {
            expected: coeffs.tilde_alpha.len(),
            got: q.dim(),
        });
    }
    let beta = coeffs.loss_direction();
    let location = beta.dot(&q.mean);
    let scale = (&q.scatter * &beta).dot(&beta).max(0.0);
    Ok(LocationScatterModel {
        mean: DVector::from_element(1, location),
        scatter: DMatrix::from_element(1, 1, scale),
        family_tag: q.family_tag.clone(),
    })
}

/// Robust harvest policy: the long-horizon feedback law driven by `k₀ ~ Q*`.
#[derive(Debug, Clone)]
pub struct RobustPolicy {
    pub times: Vec<f64>,
    /// `e^{tM} m*`, one row per time.
    pub mean_states: DMatrix<f64>,
    /// `H e^{tM} m*`, one row per time.
    pub mean_rates: DMatrix<f64>,
    pub sampler: PolicySampler,
}

/// Draws whole harvest paths `H e^{tM} k₀` with `k₀` from the robust model.
#[derive(Debug, Clone)]
pub struct PolicySampler {
    initial: GaussianSampler,
    /// `H e^{tⱼ M}` for each grid time.
    maps: Vec<DMatrix<f64>>,
}

impl PolicySampler {
    pub fn seed(&self) -> u64 {
        self.initial.seed()
    }

    /// `count` sampled paths, each with one row per grid time.
    pub fn paths(&self, count: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(count);
        self.initial.for_each(count, |k0| out.push(self.path(k0)));
        out
    }

    fn path(&self, k0: &DVector<f64>) -> DMatrix<f64> {
        let n = k0.len();
        let mut p = DMatrix::zeros(self.maps.len(), n);
        for (row, map) in self.maps.iter().enumerate() {
            p.row_mut(row).copy_from(&(map * k0).transpose());
        }
        p
    }

    /// Componentwise sample mean and standard error of `count` paths.
    pub fn mean_and_std_error(&self, count: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows = self.maps.len();
        let cols = self.maps.first().map_or(0, |m| m.nrows());
        let mut mean = DMatrix::zeros(rows, cols);
        let mut m2 = DMatrix::zeros(rows, cols);
        let mut seen = 0.0;
        self.initial.for_each(count, |k0| {
            seen += 1.0;
            let p = self.path(k0);
            let delta = &p - &mean;
            mean += &delta / seen;
            m2 += delta.component_mul(&(&p - &mean));
        });
        let se = if count > 1 {
            m2.map(|v| (v / (seen - 1.0) / seen).sqrt())
        } else {
            DMatrix::zeros(rows, cols)
        };
        (mean, se)
    }
}

pub fn robust_policy(
    solution: &ControlSolution,
    robust: &LocationScatterModel,
    times: &[f64],
    seed: u64,
) -> Result<RobustPolicy, RiskError> {
    let h = solution.harvest_map()?;
    let mean_states = solution.state_trajectory(&robust.mean, times)?;
    let mean_rates = &mean_states * h.transpose();
    let maps = times
        .iter()
        .map(|&t| &h * linalg::expm(&(&solution.closed_loop * t)))
        .collect();
    Ok(RobustPolicy {
        times: times.to_vec(),
        mean_states,
        mean_rates,
        sampler: PolicySampler {
            initial: GaussianSampler::new(robust, seed),
            maps,
        },
    })
}

/// Everything the risk layer reports for one scenario.
#[derive(Debug, Clone)]
pub struct RiskReport {
    pub coefficients: RiskCoefficients,
    pub total_risk: f64,
    pub allocations: DVector<f64>,
    pub barycenter: LocationScatterModel,
    pub robust_model: LocationScatterModel,
    pub frechet_variance: f64,
    /// `Σⱼ πⱼ ρ(Lⱼ|L) − ρ(L) − (γ/2) G² ‖α̃‖²`, zero up to rounding.
    pub allocation_identity_residual: f64,
    pub robust_mean_policy: RobustPolicy,
}

pub fn assess(
    solution: &ControlSolution,
    ctx: &PriorContext,
    prefs: &RiskPreferences,
    times: &[f64],
    seed: u64,
) -> Result<RiskReport, RiskError> {
    let coefficients = risk_coefficients(solution)?;
    let total = total_risk(&coefficients, &ctx.priors, prefs);
    let allocs = allocations(&coefficients, &ctx.priors, prefs);
    let weighted = solution.domain().pi_weights().dot(&allocs);
    let residual = weighted - total - coefficients.aggregation_gap(prefs);
    let robust = robust_model(&coefficients, &ctx.barycenter.model, prefs);
    let policy = robust_policy(solution, &robust, times, seed)?;
    Ok(RiskReport {
        total_risk: total,
        allocations: allocs,
        barycenter: ctx.barycenter.model.clone(),
        robust_model: robust,
        frechet_variance: ctx.variance,
        allocation_identity_residual: residual,
        robust_mean_policy: policy,
        coefficients,
    })
}

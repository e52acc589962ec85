//! Location-Scatter models, the quadratic Wasserstein distance between them,
//! and Wasserstein barycenters of weighted prior sets.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::RiskError;
use crate::linalg::{self, PSD_CLIP};

/// Tolerance on the prior-weight simplex constraint.
pub const WEIGHT_TOL: f64 = 1e-12;

/// A member `LS(m, S)` of a Location-Scatter family.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationScatterModel {
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
    /// Family member used when drawing samples.
    pub family_tag: String,
}

impl LocationScatterModel {
    /// Gaussian-tagged model. The scatter must be symmetric to `1e-12` and
    /// have no eigenvalue below `-1e-12`; small negative eigenvalues are
    /// clipped to zero.
    pub fn new(mean: DVector<f64>, scatter: DMatrix<f64>) -> Result<Self, RiskError> {
        let n = mean.len();
        if scatter.nrows() != n || scatter.ncols() != n {
            return Err(RiskError::DimensionMismatch {
                expected: n,
                got: scatter.nrows().max(scatter.ncols()),
            });
        }
        if mean.iter().chain(scatter.iter()).any(|x| !x.is_finite()) {
            return Err(RiskError::NonFinite);
        }
        let asym = linalg::asymmetry(&scatter);
        if asym > PSD_CLIP {
            return Err(RiskError::NotSymmetric(asym));
        }
        let mut scatter = linalg::symmetrize(&scatter);
        if n > 0 {
            let eig = SymmetricEigen::new(scatter.clone());
            let min = eig.eigenvalues.min();
            if min < -PSD_CLIP {
                return Err(RiskError::NonPsd(min));
            }
            if min < 0.0 {
                let v = &eig.eigenvectors;
                let clipped = eig.eigenvalues.map(|x| x.max(0.0));
                scatter = linalg::symmetrize(&(v * DMatrix::from_diagonal(&clipped) * v.transpose()));
            }
        }
        Ok(Self {
            mean,
            scatter,
            family_tag: "gaussian".to_string(),
        })
    }

    /// Point mass at `mean`.
    pub fn point(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            scatter: DMatrix::zeros(n, n),
            family_tag: "gaussian".to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_mean(&self, mean: DVector<f64>) -> Self {
        Self {
            mean,
            ..self.clone()
        }
    }
}

/// Weighted set of prior models `{(Qᵢ, wᵢ)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    models: Vec<LocationScatterModel>,
    weights: DVector<f64>,
}

impl PriorSet {
    pub fn new(models: Vec<LocationScatterModel>, weights: Vec<f64>) -> Result<Self, RiskError> {
        if models.is_empty() {
            return Err(RiskError::EmptyPriorSet);
        }
        if weights.len() != models.len() {
            return Err(RiskError::BadWeights(format!(
                "{} weights for {} models",
                weights.len(),
                models.len()
            )));
        }
        let dim = models[0].dim();
        if let Some(bad) = models.iter().find(|m| m.dim() != dim) {
            return Err(RiskError::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(RiskError::BadWeights(format!(
                "weight {i} = {} is negative",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(RiskError::BadWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            models,
            weights: DVector::from_vec(weights),
        })
    }

    pub fn singleton(model: LocationScatterModel) -> Self {
        Self {
            models: vec![model],
            weights: DVector::from_element(1, 1.0),
        }
    }

    pub fn models(&self) -> &[LocationScatterModel] {
        &self.models
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Barycentric location `m_B = Σ wᵢ mᵢ`.
    pub fn mean_location(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (model, &w) in self.models.iter().zip(self.weights.iter()) {
            m.axpy(w, &model.mean, 1.0);
        }
        m
    }

    /// The same prior set with every model's scatter replaced.
    pub fn with_scatters(&self, scatters: Vec<DMatrix<f64>>) -> Result<Self, RiskError> {
        let models = self
            .models
            .iter()
            .zip(scatters)
            .map(|(m, s)| LocationScatterModel::new(m.mean.clone(), s))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(models, self.weights.iter().copied().collect())
    }
}

fn lexicographic(a: &LocationScatterModel, b: &LocationScatterModel) -> Ordering {
    a.mean
        .iter()
        .chain(a.scatter.iter())
        .zip(b.mean.iter().chain(b.scatter.iter()))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Squared Bures term `tr(S₁ + S₂ − 2 (S₁^{1/2} S₂ S₁^{1/2})^{1/2})`.
fn bures_squared(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
    let r1 = linalg::sqrtm_psd(s1);
    let inner = linalg::symmetrize(&(&r1 * s2 * &r1));
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .sum();
    s1.trace() + s2.trace() - 2.0 * cross
}

/// Squared quadratic Wasserstein distance between two Location-Scatter
/// models: `‖m₁ − m₂‖² + tr(S₁ + S₂ − 2(S₁^{1/2} S₂ S₁^{1/2})^{1/2})`.
///
/// Arguments are put in a canonical order first, so the result is bitwise
/// symmetric. Equal models give exactly zero.
pub fn wasserstein2_distance(
    q1: &LocationScatterModel,
    q2: &LocationScatterModel,
) -> Result<f64, RiskError> {
    if q1.dim() != q2.dim() {
        return Err(RiskError::DimensionMismatch {
            expected: q1.dim(),
            got: q2.dim(),
        });
    }
    let (a, b) = match lexicographic(q1, q2) {
        Ordering::Equal => return Ok(0.0),
        Ordering::Less => (q1, q2),
        Ordering::Greater => (q2, q1),
    };
    let location = (&a.mean - &b.mean).norm_squared();
    Ok((location + bures_squared(&a.scatter, &b.scatter)).max(0.0))
}

/// Settings for the barycenter fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycenterOptions {
    /// Frobenius residual `‖S − Σ wᵢ (S^{1/2} Sᵢ S^{1/2})^{1/2}‖_F` to reach.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 500,
        }
    }
}

/// Result of [`barycenter`].
#[derive(Debug, Clone, PartialEq)]
pub struct Barycenter {
    pub model: LocationScatterModel,
    pub iterations: usize,
    pub residual: f64,
    /// Set when some iterate lost rank and was shifted by `1e-12·I`.
    pub regularized: bool,
}

/// `Σ wᵢ (R Sᵢ R)^{1/2}` with `R = S^{1/2}`.
fn fixed_point_map(root: &DMatrix<f64>, priors: &PriorSet) -> DMatrix<f64> {
    let n = priors.dim();
    let mut acc = DMatrix::zeros(n, n);
    for (model, &w) in priors.models.iter().zip(priors.weights.iter()) {
        if w == 0.0 {
            continue;
        }
        let inner = linalg::symmetrize(&(root * &model.scatter * root));
        acc += linalg::sqrtm_psd(&inner) * w;
    }
    acc
}

/// Fixed-point residual of a candidate barycenter scatter.
pub fn barycenter_residual(scatter: &DMatrix<f64>, priors: &PriorSet) -> f64 {
    let root = linalg::sqrtm_psd(scatter);
    (scatter - fixed_point_map(&root, priors)).norm()
}

/// Wasserstein barycenter of a Location-Scatter prior set.
///
/// The location is `Σ wᵢ mᵢ`. The scatter solves
/// `S = Σ wᵢ (S^{1/2} Sᵢ S^{1/2})^{1/2}` and is found by iterating
/// `S ← S^{−1/2} (Σ wᵢ (S^{1/2} Sᵢ S^{1/2})^{1/2})² S^{−1/2}`
/// from `S₀ = Σ wᵢ Sᵢ`.
pub fn barycenter(priors: &PriorSet, opts: BarycenterOptions) -> Result<Barycenter, RiskError> {
    let n = priors.dim();
    let mean = priors.mean_location();
    let mut scatter = DMatrix::zeros(n, n);
    for (model, &w) in priors.models.iter().zip(priors.weights.iter()) {
        scatter += &model.scatter * w;
    }
    let mut regularized = false;
    let mut residual = f64::INFINITY;
    for iteration in 0..=opts.max_iterations {
        let (root, inv_root) = match linalg::sqrt_and_inv_sqrt(&scatter, PSD_CLIP) {
            Some(pair) => pair,
            None => {
                regularized = true;
                scatter += DMatrix::identity(n, n) * PSD_CLIP;
                match linalg::sqrt_and_inv_sqrt(&scatter, 0.0) {
                    Some(pair) => pair,
                    None => return Err(RiskError::SingularIterate { iteration }),
                }
            }
        };
        let mapped = fixed_point_map(&root, priors);
        residual = (&scatter - &mapped).norm();
        if !residual.is_finite() {
            return Err(RiskError::SingularIterate { iteration });
        }
        if residual <= opts.tolerance {
            if regularized {
                log::warn!("barycenter iterate lost rank and was regularized by 1e-12·I");
            }
            return Ok(Barycenter {
                model: LocationScatterModel {
                    mean,
                    scatter,
                    family_tag: priors.models[0].family_tag.clone(),
                },
                iterations: iteration,
                residual,
                regularized,
            });
        }
        scatter = linalg::symmetrize(&(&inv_root * &mapped * &mapped * &inv_root));
    }
    Err(RiskError::NoConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Fréchet function `Σ wᵢ W₂²(Q, Qᵢ)`.
pub fn frechet_function(q: &LocationScatterModel, priors: &PriorSet) -> Result<f64, RiskError> {
    let mut total = 0.0;
    for (model, &w) in priors.models.iter().zip(priors.weights.iter()) {
        total += w * wasserstein2_distance(q, model)?;
    }
    Ok(total)
}

/// Fréchet variance: the Fréchet function at the barycenter.
pub fn frechet_variance(priors: &PriorSet) -> Result<f64, RiskError> {
    let bary = barycenter(priors, BarycenterOptions::default())?;
    frechet_function(&bary.model, priors)
}

/// Prior set together with its barycenter and Fréchet variance, computed once.
#[derive(Debug, Clone)]
pub struct PriorContext {
    pub priors: PriorSet,
    pub barycenter: Barycenter,
    pub variance: f64,
}

impl PriorContext {
    pub fn new(priors: PriorSet, opts: BarycenterOptions) -> Result<Self, RiskError> {
        let barycenter = barycenter(&priors, opts)?;
        let variance = frechet_function(&barycenter.model, &priors)?;
        Ok(Self {
            priors,
            barycenter,
            variance,
        })
    }

    /// Penalty `F(Q) = Σ wᵢ W₂²(Q, Qᵢ) − V`.
    pub fn penalty(&self, q: &LocationScatterModel) -> Result<f64, RiskError> {
        Ok(frechet_function(q, &self.priors)? - self.variance)
    }
}

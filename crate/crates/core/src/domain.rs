//! Graph-discretized spatial domain and its spectral data.
//!
//! The domain is split into `N` sub-regions connected by undirected weighted
//! edges. Region `i` carries a growth coefficient `a_i`, a harvest efficiency
//! `b_i > 0`, a manager weight `d_i > 0` and an importance `π_i` (a point of
//! the simplex). The natural-capital drift is `L_G + diag(a)`, where `L_G` is
//! the weighted graph Laplacian.
//!
//! The edge list is the canonical input. Adjacency, degree and Laplacian
//! matrices are always derived from it.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Tolerance on the `π` simplex constraint.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Eigenvector entries at or below this are rejected.
pub const POSITIVITY_TOL: f64 = 1e-12;
/// Minimum gap between the two lowest eigenvalues.
pub const EIGEN_GAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("domain needs at least one region")]
    Empty,
    #[error("{field} has length {got}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{field}[{index}] is not finite")]
    NonFinite { field: &'static str, index: usize },
    #[error("edge ({i}, {j}) references a region outside 0..{n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("self-loop on region {0}")]
    SelfLoop(usize),
    #[error("edge ({i}, {j}) has negative weight {weight}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },
    #[error("edge ({i}, {j}) has weight {forward} but ({j}, {i}) has weight {backward}")]
    AsymmetricWeights {
        i: usize,
        j: usize,
        forward: f64,
        backward: f64,
    },
    #[error("graph is disconnected: region {unreachable} is not reachable from region 0")]
    DisconnectedGraph { unreachable: usize },
    #[error("{field}[{index}] = {value} must be strictly positive")]
    NonPositiveOperator {
        field: &'static str,
        index: usize,
        value: f64,
    },
    #[error("pi_weights must lie in the simplex: {reason}")]
    BadSimplex { reason: String },
    #[error("drift matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("lowest eigenvalue is degenerate (gap {gap:e} to the next eigenvalue)")]
    DegenerateEigenvalue { gap: f64 },
    #[error("eigenvector entry {index} = {value:e} is not strictly positive")]
    NonPositiveEigenvector { index: usize, value: f64 },
}

impl DomainError {
    /// Scenario field the error refers to, relative to the domain section.
    pub fn field(&self) -> &'static str {
        match self {
            DomainError::Empty => "nodes",
            DomainError::LengthMismatch { field, .. }
            | DomainError::NonFinite { field, .. }
            | DomainError::NonPositiveOperator { field, .. } => field,
            DomainError::BadSimplex { .. } => "pi_weights",
            _ => "edges",
        }
    }
}

/// Unvalidated domain description, as read from a scenario file.
///
/// Edges are `(i, j, w)` triples with zero-based region indices. An edge may
/// be listed once or in both directions; both directions must agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub nodes: usize,
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
    pub a_diag: Vec<f64>,
    pub b_diag: Vec<f64>,
    pub d_weights: Vec<f64>,
    pub pi_weights: Vec<f64>,
}

/// Undirected edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// A validated spatial domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDomain {
    n_regions: usize,
    edges: Vec<Edge>,
    a_diag: DVector<f64>,
    b_diag: DVector<f64>,
    d_weights: DVector<f64>,
    pi_weights: DVector<f64>,
}

impl SpatialDomain {
    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn a_diag(&self) -> &DVector<f64> {
        &self.a_diag
    }

    pub fn b_diag(&self) -> &DVector<f64> {
        &self.b_diag
    }

    pub fn d_weights(&self) -> &DVector<f64> {
        &self.d_weights
    }

    pub fn pi_weights(&self) -> &DVector<f64> {
        &self.pi_weights
    }

    /// Weighted adjacency matrix.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_regions, self.n_regions);
        for e in &self.edges {
            a[(e.i, e.j)] = e.weight;
            a[(e.j, e.i)] = e.weight;
        }
        a
    }

    /// Diagonal matrix of weighted degrees.
    pub fn degree(&self) -> DMatrix<f64> {
        let mut deg = DVector::zeros(self.n_regions);
        for e in &self.edges {
            deg[e.i] += e.weight;
            deg[e.j] += e.weight;
        }
        DMatrix::from_diagonal(&deg)
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        build_laplacian(self)
    }

    pub fn drift(&self) -> DMatrix<f64> {
        drift_matrix(self)
    }

    /// The same domain with a different importance vector.
    pub fn with_pi_weights(&self, pi: Vec<f64>) -> Result<Self, DomainError> {
        let mut spec = self.to_spec();
        spec.pi_weights = pi;
        validate_domain(spec)
    }

    pub fn to_spec(&self) -> DomainSpec {
        DomainSpec {
            nodes: self.n_regions,
            edges: self.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
            a_diag: self.a_diag.iter().copied().collect(),
            b_diag: self.b_diag.iter().copied().collect(),
            d_weights: self.d_weights.iter().copied().collect(),
            pi_weights: self.pi_weights.iter().copied().collect(),
        }
    }
}

impl TryFrom<DomainSpec> for SpatialDomain {
    type Error = DomainError;

    fn try_from(spec: DomainSpec) -> Result<Self, Self::Error> {
        validate_domain(spec)
    }
}

fn check_vector(
    field: &'static str,
    v: &[f64],
    n: usize,
) -> Result<DVector<f64>, DomainError> {
    if v.len() != n {
        return Err(DomainError::LengthMismatch {
            field,
            got: v.len(),
            expected: n,
        });
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(DomainError::NonFinite { field, index });
    }
    Ok(DVector::from_column_slice(v))
}

fn check_positive(field: &'static str, v: &DVector<f64>) -> Result<(), DomainError> {
    match v.iter().position(|&x| x <= 0.0) {
        Some(index) => Err(DomainError::NonPositiveOperator {
            field,
            index,
            value: v[index],
        }),
        None => Ok(()),
    }
}

/// Validates a raw domain description.
pub fn validate_domain(spec: DomainSpec) -> Result<SpatialDomain, DomainError> {
    let n = spec.nodes;
    if n == 0 {
        return Err(DomainError::Empty);
    }
    let a_diag = check_vector("a_diag", &spec.a_diag, n)?;
    let b_diag = check_vector("b_diag", &spec.b_diag, n)?;
    let d_weights = check_vector("d_weights", &spec.d_weights, n)?;
    let pi_weights = check_vector("pi_weights", &spec.pi_weights, n)?;

    // Directed view first so that (i, j) and (j, i) can be compared.
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(i, j, w) in &spec.edges {
        if i >= n || j >= n {
            return Err(DomainError::IndexOutOfRange { i, j, n });
        }
        if i == j {
            return Err(DomainError::SelfLoop(i));
        }
        if !w.is_finite() {
            return Err(DomainError::NonFinite {
                field: "edges",
                index: i,
            });
        }
        if w < 0.0 {
            return Err(DomainError::NegativeWeight { i, j, weight: w });
        }
        if let Some(&prev) = directed.get(&(i, j)) {
            if prev != w {
                return Err(DomainError::AsymmetricWeights {
                    i,
                    j,
                    forward: prev,
                    backward: w,
                });
            }
        }
        directed.insert((i, j), w);
    }
    let mut edges = Vec::new();
    for (&(i, j), &w) in &directed {
        match directed.get(&(j, i)) {
            Some(&back) if back != w => {
                return Err(DomainError::AsymmetricWeights {
                    i,
                    j,
                    forward: w,
                    backward: back,
                });
            }
            Some(_) if i > j => {}
            _ => edges.push(Edge {
                i: i.min(j),
                j: i.max(j),
                weight: w,
            }),
        }
    }
    edges.sort_by_key(|e| (e.i, e.j));

    if let Some(unreachable) = first_unreachable(n, &edges) {
        return Err(DomainError::DisconnectedGraph { unreachable });
    }
    check_positive("b_diag", &b_diag)?;
    check_positive("d_weights", &d_weights)?;

    if let Some(i) = pi_weights.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(DomainError::BadSimplex {
            reason: format!("pi_weights[{i}] = {} is outside [0, 1]", pi_weights[i]),
        });
    }
    let total: f64 = pi_weights.sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(DomainError::BadSimplex {
            reason: format!("entries sum to {total}, not 1"),
        });
    }

    Ok(SpatialDomain {
        n_regions: n,
        edges,
        a_diag,
        b_diag,
        d_weights,
        pi_weights,
    })
}

/// Breadth-first search over positive-weight edges from region 0.
fn first_unreachable(n: usize, edges: &[Edge]) -> Option<usize> {
    let mut neighbours = vec![Vec::new(); n];
    for e in edges.iter().filter(|e| e.weight > 0.0) {
        neighbours[e.i].push(e.j);
        neighbours[e.j].push(e.i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &neighbours[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.iter().position(|&s| !s)
}

/// Weighted graph Laplacian: `-w_ij` off the diagonal, weighted degree on it.
pub fn build_laplacian(domain: &SpatialDomain) -> DMatrix<f64> {
    let n = domain.n_regions;
    let mut l = DMatrix::zeros(n, n);
    for e in &domain.edges {
        l[(e.i, e.j)] -= e.weight;
        l[(e.j, e.i)] -= e.weight;
        l[(e.i, e.i)] += e.weight;
        l[(e.j, e.j)] += e.weight;
    }
    l
}

/// Drift operator `L_G + diag(a)`.
pub fn drift_matrix(domain: &SpatialDomain) -> DMatrix<f64> {
    let mut m = build_laplacian(domain);
    for i in 0..domain.n_regions {
        m[(i, i)] += domain.a_diag[i];
    }
    m
}

/// Lowest eigenpair of the drift matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    pub lambda_min: f64,
    /// Unit-norm, strictly positive eigenvector.
    pub alpha: DVector<f64>,
    pub drift: DMatrix<f64>,
    /// Distance to the next eigenvalue (`+∞` for a single region).
    pub gap: f64,
}

impl SpectralSolution {
    pub fn from_domain(domain: &SpatialDomain) -> Result<Self, DomainError> {
        lowest_eigenpair(&drift_matrix(domain))
    }

    /// `‖drift·α − λ·α‖₂`.
    pub fn residual(&self) -> f64 {
        (&self.drift * &self.alpha - &self.alpha * self.lambda_min).norm()
    }
}

/// Lowest eigenvalue of a symmetric matrix and its eigenvector, oriented so
/// that its entries sum to a positive number.
///
/// Errors when the lowest eigenvalue is repeated (the direction is then not
/// well defined) or when the oriented eigenvector has a non-positive entry.
pub fn lowest_eigenpair(drift: &DMatrix<f64>) -> Result<SpectralSolution, DomainError> {
    let scale = drift.amax().max(1.0);
    let asym = linalg::asymmetry(drift);
    if asym > 1e-12 * scale {
        return Err(DomainError::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(linalg::symmetrize(drift));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lowest = order[0];
    let lambda_min = eig.eigenvalues[lowest];
    let gap = order
        .get(1)
        .map(|&k| eig.eigenvalues[k] - lambda_min)
        .unwrap_or(f64::INFINITY);
    if gap < EIGEN_GAP_TOL {
        return Err(DomainError::DegenerateEigenvalue { gap });
    }
    let mut alpha = eig.eigenvectors.column(lowest).into_owned();
    alpha /= alpha.norm();
    if alpha.sum() < 0.0 {
        alpha.neg_mut();
    }
    if let Some(index) = alpha.iter().position(|&x| x <= POSITIVITY_TOL) {
        return Err(DomainError::NonPositiveEigenvector {
            index,
            value: alpha[index],
        });
    }
    Ok(SpectralSolution {
        lambda_min,
        alpha,
        drift: drift.clone(),
        gap,
    })
}

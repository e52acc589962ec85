#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use robust_harvest::control::{ControlSolution, EconomicParams, RateVariant};
use robust_harvest::domain::{validate_domain, DomainSpec, SpatialDomain};
use robust_harvest::linalg;
use robust_harvest::risk::{LocationScatterModel, PriorSet};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn simplex(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Connected graph: random spanning tree plus extra edges.
pub fn random_domain_spec(rng: &mut ChaCha20Rng, n: usize) -> DomainSpec {
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.push((j, i, rng.random_range(0.05..0.5)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.iter().any(|&(a, b, _)| a == i && b == j) && rng.random_bool(0.25) {
                edges.push((i, j, rng.random_range(0.05..0.5)));
            }
        }
    }
    DomainSpec {
        nodes: n,
        edges,
        a_diag: (0..n).map(|_| rng.random_range(0.0..0.1)).collect(),
        b_diag: (0..n).map(|_| rng.random_range(0.5..1.5)).collect(),
        d_weights: (0..n).map(|_| rng.random_range(0.2..1.0)).collect(),
        pi_weights: simplex(rng, n),
    }
}

pub struct Instance {
    pub domain: SpatialDomain,
    pub solution: ControlSolution,
    pub k0: DVector<f64>,
}

/// Random instance with `θ > 0` and `‖e^{TM}‖ ≤ growth_cap`, so that absolute
/// trajectory tolerances stay meaningful.
pub fn random_instance(rng: &mut ChaCha20Rng, max_n: usize, max_t: f64, growth_cap: f64) -> Instance {
    loop {
        let n = rng.random_range(1..=max_n);
        let spec = random_domain_spec(rng, n);
        let Ok(domain) = validate_domain(spec) else { continue };
        let params = EconomicParams::new(
            rng.random_range(0.03..0.2),
            rng.random_range(0.2..0.8),
            rng.random_range(0.5..max_t),
            rng.random_range(0.5..2.0),
        )
        .unwrap();
        let Ok(solution) = ControlSolution::solve(&domain, params, RateVariant::PaperEqOhr) else {
            continue;
        };
        if solution.theta <= 0.01 {
            continue;
        }
        let growth = linalg::expm(&(&solution.closed_loop * params.horizon)).norm();
        if !(growth <= growth_cap) {
            continue;
        }
        let k0 = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));
        return Instance { domain, solution, k0 };
    }
}

pub fn random_spd(rng: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn random_model(rng: &mut ChaCha20Rng, n: usize) -> LocationScatterModel {
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    LocationScatterModel::new(mean, random_spd(rng, n)).unwrap()
}

pub fn random_priors(rng: &mut ChaCha20Rng, n: usize, count: usize) -> PriorSet {
    let models = (0..count).map(|_| random_model(rng, n)).collect();
    PriorSet::new(models, simplex(rng, count)).unwrap()
}

pub fn scalar_domain() -> SpatialDomain {
    validate_domain(DomainSpec {
        nodes: 1,
        edges: vec![],
        a_diag: vec![0.05],
        b_diag: vec![1.0],
        d_weights: vec![1.0],
        pi_weights: vec![1.0],
    })
    .unwrap()
}

pub fn scalar_solution(variant: RateVariant) -> ControlSolution {
    let params = EconomicParams::new(0.1, 0.5, 10.0, 1.0).unwrap();
    ControlSolution::solve(&scalar_domain(), params, variant).unwrap()
}

/// Two regions, unit edge, equal parameters and `d = (½, ½)`.
pub fn symmetric_pair_solution(variant: RateVariant) -> ControlSolution {
    let d = validate_domain(DomainSpec {
        nodes: 2,
        edges: vec![(0, 1, 1.0)],
        a_diag: vec![0.05, 0.05],
        b_diag: vec![1.0, 1.0],
        d_weights: vec![0.5, 0.5],
        pi_weights: vec![0.5, 0.5],
    })
    .unwrap();
    let params = EconomicParams::new(0.1, 0.5, 10.0, 1.0).unwrap();
    ControlSolution::solve(&d, params, variant).unwrap()
}

pub fn asymmetric_solution(variant: RateVariant) -> ControlSolution {
    let d = validate_domain(DomainSpec {
        nodes: 3,
        edges: vec![(0, 1, 0.2), (1, 2, 0.15)],
        a_diag: vec![0.03, 0.05, 0.04],
        b_diag: vec![1.0, 1.2, 0.9],
        d_weights: vec![0.3, 0.3, 0.4],
        pi_weights: vec![0.25, 0.35, 0.4],
    })
    .unwrap();
    let params = EconomicParams::new(0.08, 0.4, 8.0, 1.0).unwrap();
    ControlSolution::solve(&d, params, variant).unwrap()
}

pub fn unit_gaussian() -> LocationScatterModel {
    LocationScatterModel::new(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap()
}

pub fn scenario_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

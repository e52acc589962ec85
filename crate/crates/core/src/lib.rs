//! Closed-form optimal harvesting on a graph of regions, with
//! Wasserstein-barycentric risk for an uncertain initial stock.
//!
//! The pipeline runs [`domain`] (graph, drift, lowest eigenpair), then
//! [`control`] (value function, harvest rates, closed loop), then [`risk`]
//! (priors, barycenter, risk, allocation, robust model). [`oracles`] holds
//! the independent numerical checks. [`scenario`], [`report`] and [`cli`]
//! back the `robust-harvest` binary.

pub mod cli;
pub mod control;
pub mod domain;
pub mod linalg;
pub mod oracles;
pub mod report;
pub mod risk;
pub mod scenario;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/domain.md")]
    mod domain {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/risk.md")]
    mod risk {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}

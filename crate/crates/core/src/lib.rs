//! D^ell sampling (k-means++ and its generalizations) with oversampling,
//! exact small-instance oracles, closed-form approximation bounds and a
//! laboratory for the coefficient recursion behind them.
//!
//! Core types are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice. Exact harmonic numbers are available as
//! rationals through [`bounds::harmonic_exact`].
//!
//! ```
//! use dlsample::{Dataset64, MetricSpec64, SamplerConfig};
//!
//! let ds = Dataset64::from_scalars(&[0.0, 1.0, 10.0, 11.0]).unwrap();
//! let trace = dlsample::d_ell_sample(&ds, &SamplerConfig::new(2, 42, MetricSpec64::kmeans())).unwrap();
//! assert_eq!(trace.chosen.len(), 2);
//! assert!(trace.final_phi() <= trace.phi_after[0]);
//! ```

// negated comparisons reject NaN inputs on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod coeff;
pub mod error;
pub mod harness;
pub mod io;
pub mod metric;
pub mod oracle;
pub mod sampler;
pub mod scalar;
pub mod svg;

pub use bounds::{
    c_constant, corollary_bound, critical_beta, critical_beta_sweep, harmonic, markov_tail, oversampled_centers,
    single_cluster_ratios, theorem1_bound, BoundInputs, BoundReport,
};
pub use coeff::{
    closed_cu, closed_cv, closed_grid, recursion_grid, verify_appendix_identities, verify_sufficient_conditions,
    CoeffGrid, CoeffParams, CoeffTable,
};
pub use error::{Error, Result};
pub use metric::{assign, distance, potential, Assignment, CenterSet, Dataset, MetricKind, MetricSpec};
pub use oracle::{exhaustive_expected_phi, exhaustive_ratio, optimal_k_clustering, verify_lemma4, CenterMode};
pub use sampler::{d_ell_sample, lloyd_refine, SamplerConfig, SamplingTrace};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type CenterSet64 = CenterSet<f64>;
pub type CenterSet32 = CenterSet<f32>;
pub type MetricSpec64 = MetricSpec<f64>;
pub type MetricSpec32 = MetricSpec<f32>;
pub type SamplingTrace64 = SamplingTrace<f64>;
pub type CoeffGrid64 = CoeffGrid<f64>;
pub type CoeffParams64 = CoeffParams<f64>;
pub type BoundReport64 = BoundReport<f64>;
pub type OptimalClustering64 = oracle::OptimalClustering<f64>;

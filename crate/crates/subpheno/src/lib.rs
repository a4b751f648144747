//! Sub-phenotype discovery and partitioned prediction for heterogeneous
//! tabular cohorts.
//!
//! The library covers a two-stage workflow:
//!
//! 1. **Latent-class analysis.** Continuous features are power-transformed
//!    toward normality ([`dataio::transform`]), mean-imputed, and modeled
//!    with parameterized Gaussian finite mixtures fitted by EM
//!    ([`mixture`]). Candidate models across component counts and the ten
//!    covariance parameterizations (spherical through fully ellipsoidal)
//!    are scored by BIC, and the winner assigns each row a sub-phenotype.
//! 2. **Partitioned prediction.** Gradient-boosted trees and random
//!    forests ([`learners`]) are trained per sub-phenotype against a
//!    shared contrast group — with stratified splits, SMOTE oversampling
//!    and cross-validated tuning ([`resample`]) — and compared against a
//!    pooled model via bootstrap confidence intervals and DeLong AUC
//!    tests ([`metrics`]).
//!
//! The [`pipeline`] module wires the stages into reproducible runs driven
//! by a single TOML config; the `subpheno` binary exposes them as
//! subcommands (`synth`, `cohort`, `lca`, `train`, `evaluate`, `report`).
//! Each major capability also has a runnable example under `examples/`.

pub mod dataio;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod mixture;
pub mod pipeline;
pub mod resample;
pub mod seed;

pub use error::{Error, Result};

//! Tail asymptotics for weighted sums of heavy-tailed random variables.
//!
//! The crate provides, in dependency order:
//!
//! - [`distributions`]: exact parametric marginals (tail, quantile,
//!   inverse-CDF sampling) with declared heavy-tail class memberships;
//! - [`tail_classes`]: numerical diagnostics for the defining limits of the
//!   classes L, D, C, S and for h-insensitivity of a tail;
//! - [`h_construct`]: the constructive insensitivity function h built from a
//!   breakpoint sequence, with shape verification and weight bands;
//! - [`dependence`]: joint samplers (independent, Gaussian and FGM copulas)
//!   plus the pairwise quasi-asymptotic-independence diagnostic;
//! - [`convolution`]: a deterministic convolution oracle with a rigorous
//!   truncation-plus-discretization error certificate;
//! - [`weighted_sums`]: the equivalence engine comparing the tails of the
//!   sum, the partial-sum maximum, the positive-part sum, and the
//!   single-big-jump approximation;
//! - [`ruin`]: the discrete-time insurance risk model built on top.
//!
//! Everything that samples goes through [`stream`], which splits a master
//! seed into per-block substreams so results are bit-identical for any
//! worker count.

pub mod convolution;
pub mod dependence;
pub mod distributions;
pub mod h_construct;
pub mod report;
pub mod ruin;
pub mod special;
pub mod stream;
pub mod tail_classes;
pub mod weighted_sums;

pub use distributions::{ClassSet, DistError, Distribution, TailProb, WeightedMarginal};
pub use h_construct::{Breakpoints, InsensitivityFunction, WeightBand};
pub use weighted_sums::{TailEstimate, WeightedSumProblem};

/// Version string embedded in every artifact for reproducibility headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Feature-level conformal uncertainty quantification for two-modality fusion.
//!
//! The crate builds up from a small dense-numerics layer to a full
//! uncertainty-aware fusion pipeline:
//!
//! - [`numerics`]: vectors/matrices, an MLP with analytic backprop, first- and
//!   second-moment optimizers, and a finite-difference gradient checker.
//! - [`geometry`]: geometric medians via Weiszfeld's fixed-point iteration and
//!   the optimality residual `‖Σ (x_i − y)/‖x_i − y‖‖`.
//! - [`aligner`]: feature impressions (learnable per-class surrogate ground
//!   truths) and the feature aligner, trained jointly under a three-term
//!   objective that pins each impression to the geometric median of its
//!   class's aligned features.
//! - [`conformal`]: nonconformity scores, calibration pools, conformal
//!   p-values and quantiles, cross-layer stability scores, and the
//!   p-value/stability fusion weights with clipping.
//! - [`baselines`]: split-conformal regression baselines (residual intervals,
//!   feature-space surrogate intervals) plus the impression-based regression
//!   interval used for coverage validation.
//! - [`coverage`]: the regression coverage harness — synthetic datasets,
//!   exchangeable splits, per-seed trials, and aggregate reports.
//! - [`sim`]: a synthetic two-modality fusion simulator with feature-space
//!   corruptions, the full adaptive pipeline, and fixed-weight sweeps.
//! - [`artifact`]: versioned persistence for the trained aligner, feature
//!   impressions, and calibration pools.
//!
//! All randomness is derived from a single master seed through named streams
//! (see [`rng`]), so every experiment is reproducible bit-for-bit.

pub mod aligner;
pub mod artifact;
pub mod baselines;
pub mod conformal;
pub mod coverage;
pub mod geometry;
pub mod numerics;
pub mod rng;
pub mod sim;

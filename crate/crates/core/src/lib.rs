//! Joint models of longitudinal risk factors and a time-to-event outcome,
//! with spike-and-slab selection of trajectory features and estimation of
//! covariate-personalized thresholds.
//!
//! The crate is organized around the fit workflow:
//!
//! - [`spline`], [`features`], [`quad`]: numeric kernels (B-spline log
//!   baseline hazard, threshold-dependent trajectory features, Gauss-Legendre
//!   quadrature). These are generic over the scalar type; the rest of the
//!   crate uses the [`Real`] alias.
//! - [`data`], [`state`]: the dataset model and one complete posterior point.
//! - [`likelihood`], [`priors`]: the joint log-posterior kernel.
//! - [`sampler`]: Metropolis-within-Gibbs over the full posterior, including
//!   transdimensional moves for the selection indicators and NA thresholds.
//! - [`simulator`], [`geweke`]: synthetic data generation from known truth
//!   and the sampler-correctness harness.
//! - [`summaries`], [`diagnostics`]: posterior reporting and convergence
//!   checks.
//! - [`io`]: the CSV dataset schema, truth files, and sample stores.

pub mod data;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod features;
pub mod geweke;
pub mod io;
pub mod likelihood;
pub mod priors;
pub mod quad;
pub mod sampler;
pub mod simulator;
pub mod spline;
pub mod state;
pub mod summaries;

/// Scalar type used by the modeling stack.
pub type Real = f64;

pub use error::Error;

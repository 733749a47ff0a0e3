//! Binomial option pricing with natural-world upturn probabilities,
//! path-dependent (Cherny–Shiryaev–Yor) stock dynamics and informed-trader
//! pricing, together with the estimation and calibration routines around
//! them.
//!
//! Module map:
//! - [`market_data`]: price, rate and option-chain files; log-returns,
//!   rolling upturn probabilities, sign tests.
//! - [`lattice`] and [`bsm`]: trees, risk-neutral probabilities, deltas,
//!   backward induction, closed-form references.
//! - [`convergence`]: tree-to-lognormal convergence experiments.
//! - [`csy`]: index intensities, path accumulators, path-dependent
//!   volatility, stock paths, continuum simulation, CSY pricing.
//! - [`factors`]: ARMA–GJR-GARCH residuals, Jensen and three-factor alphas.
//! - [`calibration`]: CSY regression fit and implied q / DEV / λ surfaces.
//! - [`informed`]: informed-trader forward strategy and pricing.
//! - [`runner`]: the command layer used by the `csylattice` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsm;
pub mod calibration;
pub mod convergence;
pub mod csy;
pub mod error;
pub mod factors;
pub mod informed;
pub mod io;
pub mod lattice;
pub mod market_data;
pub mod optim;
pub mod runner;
pub mod stats;

pub use error::{Error, Result};

//! Simulation and verification toolkit for the well process of a random
//! environment, its large-deviation rate functional, Brownian confinement
//! probabilities, vessel path constructions, and rescaled nearest-neighbor
//! walks in random environments.
//!
//! The crate is organized around a small number of exactly-checkable objects:
//!
//! * [`env`] — environments: two-sided Brownian grid paths and step
//!   potentials built from site probabilities.
//! * [`wells`] — the well (valley) decomposition of a path and the
//!   left-continuous well process `h -> x(h)`, with a brute-force oracle.
//! * [`occupation`] — graph occupation measures of step functions, their
//!   monotone envelopes, rescalings, neighborhoods, and a tightness test.
//! * [`rate`] — the rate functional on step specs and envelope pairs,
//!   scaling identities, and step approximation via lower Stieltjes sums.
//! * [`confinement`] — exact eigenfunction-series kernels for Brownian
//!   motion confined to an interval, and Monte Carlo decay-rate fits.
//! * [`vessel`] — restriction sets of environment paths that force the well
//!   process to track a prescribed step function.
//! * [`walk`] — nearest-neighbor walks in a step potential, exponential-time
//!   rescaling, localization statistics, and the variational problem behind
//!   weighted path integrals.
//!
//! Every Monte Carlo estimate is reproducible: randomness is drawn from
//! counter-based streams addressed by `(master seed, label, index)`, so
//! results are bit-identical across worker counts.

pub mod cli;
pub mod confinement;
pub mod env;
pub mod lp;
pub mod occupation;
pub mod rate;
pub mod report;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod vessel;
pub mod walk;
pub mod wells;

/// pi^2/2, the two-sided confinement decay rate for a unit interval.
pub const PI2_OVER_2: f64 = std::f64::consts::PI * std::f64::consts::PI / 2.0;
/// pi^2/8, the one-sided (reflected) confinement decay rate for a unit interval.
pub const PI2_OVER_8: f64 = std::f64::consts::PI * std::f64::consts::PI / 8.0;

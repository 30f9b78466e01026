//! Ergodic sum-rate analysis of semi-orthogonal user selection in a
//! two-antenna heterogeneous broadcast channel.
//!
//! Three schedulers (random, max-gain and CDF-based selection) are paired
//! with maximum-ratio or zero-forcing beams. The [`analytic`] module gives
//! exact ergodic rates, [`montecarlo`] simulates the same systems and
//! [`alpha_opt`] searches the orthogonality threshold that maximizes the
//! sum-rate.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Quadrature nodes are tabulated to more digits than f64 holds.
#![allow(clippy::excessive_precision)]

pub mod alpha_opt;
pub mod analytic;
pub mod beamforming;
pub mod channel;
pub mod cli;
pub mod combinatorics;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod schedulers;
pub mod stream;

pub use analytic::{ergodic_sum_rate, RateBreakdown};
pub use beamforming::BeamformerId;
pub use channel::{ChannelRealization, UserPopulation};
pub use error::{Error, Result};
pub use numerics::QuadratureSpec;
pub use schedulers::{Schedule, SchemeId};

//! Finite-key key rates for decoy-state BB84 with McDiarmid deviation bounds.
//!
//! The pipeline for one parameter point is
//!
//! 1. [`decoy::DecoyCoefficients`]: linear combinations of the per-intensity
//!    gains that bound the vacuum yield, the single-photon yield and the
//!    single-photon error.
//! 2. [`channel::ChannelParams::observe`]: gains and error rates of a fiber
//!    link (or [`channel::ChannelParams::sample_finite`] for simulated counts).
//! 3. [`bounds`]: one-sided McDiarmid deviations for every observed
//!    combination plus the hypergeometric phase-error correction.
//! 4. [`rate::key_rate`] and [`rate::solve_security_fixed_point`]: the final
//!    rate, optionally with `eps_sec = kappa * l_final` resolved.
//! 5. [`optimize::optimize`]: multi-start Nelder-Mead over `p_X`, the
//!    intensities and their probabilities.
//!
//! [`oracles`] holds brute-force and Monte Carlo checks of the bounds, and
//! [`cli`] the batch front end used by the `finite-decoy` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod decoy;
pub mod error;
pub mod optimize;
pub mod oracles;
pub mod rate;

pub use bounds::{SampleSizes, SecurityBudget, ZBasisEstimates, CHI};
pub use channel::{ChannelParams, ObservedStats};
pub use decoy::{DecoyCoefficients, IntensityProfile};
pub use error::{Error, Result};
pub use optimize::{optimize, OptimizationConfig, OptimizationResult};
pub use rate::{key_rate, solve_security_fixed_point, KeyRateReport};

//! Alternating-rate continuous-time Markov chains on the integers.
//!
//! The chain jumps up or down by one. Even states use the rate pair
//! `(alpha1, alpha2)` and odd states use `(beta1, beta2)`. Besides the plain
//! chain, two randomly time-changed versions are covered: one driven by an
//! inverse stable subordinator (the time-fractional chain) and one driven by a
//! tempered stable subordinator.
//!
//! Modules:
//!
//! - [`model`]: rate parameters, eigenvalues and the limiting cumulant.
//! - [`specfun`]: log-gamma, Mittag-Leffler and Fox-Wright functions.
//! - [`pgf`]: generating functions and moments.
//! - [`pmf`]: exact state probabilities.
//! - [`ldp`]: large and moderate deviation rate functions.
//! - [`sim`]: Monte Carlo simulation.
//! - [`clock`]: densities of the random clocks.
//! - [`oracle`]: uniformization reference solver.
//! - [`cli`]: the `altchain` command-line tool.

pub mod cli;
pub mod clock;
pub mod error;
pub mod ldp;
pub mod model;
pub mod oracle;
pub mod pgf;
pub mod pmf;
pub mod sim;
pub mod specfun;

pub use error::{Error, Result};
pub use model::{Parity, RateQuad};
pub use specfun::TruncationPolicy;

//! Pilot-wave coin-toss laboratory.
//!
//! Deterministic Bohmian dynamics ([`wavefield`], [`pilot`]) turn initial
//! positions supplied by a [`sampling`] oracle into coin-toss outcomes
//! ([`cointoss`]). The resulting bit sequences are examined by refutation-only
//! randomness tests ([`randomness`]). [`equilibrium`] checks the conditional
//! wave function identities on small product states and [`classicalflip`] is
//! the classical coin for contrast.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classicalflip;
pub mod cointoss;
pub mod equilibrium;
pub mod pilot;
pub mod randomness;
pub mod sampling;
pub mod wavefield;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

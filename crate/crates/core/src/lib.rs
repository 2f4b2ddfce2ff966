//! Deterministic identification with feedback over additive noise channels
//! whose noise is not purely discrete.
//!
//! The code in [`idcode`] first spends a few channel uses extracting common
//! randomness from the noise seen through feedback ([`common_randomness`]),
//! then sends a color of the agreed outcome ([`coloring`]) with a
//! repetition code ([`transmission`]). [`harness`] estimates the two error
//! probabilities and drives the `idfc` binary.

pub mod channel;
pub mod coloring;
pub mod common_randomness;
pub mod idcode;
pub mod noise;
pub mod stats;
pub mod transmission;
pub mod harness;

//! Finite-key security engine and simulator for three-state prepare-and-measure
//! QKD analysed with mismatched-basis statistics.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure algorithms:
//!
//! * [`geometry`]: reduce ambient-space source states to two-dimensional span
//!   coordinates and derive the constants the security calculus consumes.
//! * [`finite_key`]: evaluate the finite-key bound and optimise the free
//!   parameter `ν`.
//! * [`channel`]: channel/attack models and Bob's generalised measurements.
//! * [`protocol`]: round-by-round execution of the prepare-and-measure protocol
//!   and of its entanglement-based counterpart, plus error correction and
//!   privacy amplification.
//! * [`bounds`]: enumeration and Monte Carlo checks of every probabilistic
//!   lemma the bound rests on.
//! * [`audit`]: feasibility audit of four-state sources.
//!
//! File formats, reports and the command-line front end live in the companion
//! `tristate` crate.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod audit;
pub mod bounds;
pub mod channel;
pub mod finite_key;
pub mod geometry;
pub mod linalg;
pub mod protocol;
pub mod rng;

pub use linalg::{C64, Mat2, Qubit};

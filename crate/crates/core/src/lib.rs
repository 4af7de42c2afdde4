//! Simulation core for ledger-coordinated federated learning with
//! homomorphic aggregation, a cosine poisoning gate, similarity clustering
//! and ensemble distillation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! wall clocks or process arguments lives in the `ledgerfl` companion crate.

#![no_std]
// `!(x > 0.0)` style checks are how NaN gets rejected here
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod attacks;
pub mod chain;
pub mod codec;
pub mod compress;
pub mod crypto;
pub mod data;
pub mod defense;
mod error;
pub mod harness;
pub mod linalg;
pub(crate) mod math;
pub mod numerics;
pub mod rng;
pub mod wgan;

pub use error::{Error, Result};

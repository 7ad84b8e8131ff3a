//! Channel estimation laboratory.
//!
//! Classical estimators (LS, LMMSE, OMP), a small reverse-mode neural
//! engine, deep-learning estimators built on it, a meta-learned GAN for
//! data augmentation, and the experiment harness that ties them together.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod channel;
pub mod classical;
pub mod dl;
pub mod dataset;
pub mod gan;
pub mod harness;
pub mod linalg;
pub mod nn;
pub mod random;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};

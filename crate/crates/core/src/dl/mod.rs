//! Deep-learning channel estimators built on [`crate::nn`].

mod aoa;
mod csi;
mod labeled;
mod param;
mod taps;

pub use aoa::*;
pub use csi::*;
pub use labeled::*;
pub use param::*;
pub use taps::*;

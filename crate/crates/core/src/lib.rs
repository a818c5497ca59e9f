//! Transform calculus for distributions valued in B = M_d(C): Cauchy, F, R and
//! Voiculescu transforms, moment/cumulant conversion, positivity certificates,
//! free additive convolution and infinite-divisibility tests.

pub mod algebra;
pub mod distribution;
pub mod divisibility;
pub mod error;
pub mod gram;
pub mod inversion;
pub mod ncseries;
pub mod partitions;
pub mod repro;
pub mod sampling;
pub mod transforms;

pub use error::{Error, Result};

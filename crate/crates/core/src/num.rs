//! Scalar abstraction for the numeric kernels.
//!
//! Everything that is "just math" — BM25 term scores, rank metrics,
//! divergences, dot products — is written against [`Real`] so it can be
//! instantiated at `f32` or `f64` (or any other float-like type that
//! implements the `num_traits` float interface). The pipeline proper uses
//! the crate-level [`crate::Score`] alias.

use num_traits::{Float, FromPrimitive};

/// Blanket trait for scalars accepted by the numeric kernels.
///
/// `FromPrimitive` is required because the kernels mix counts (`usize`)
/// into floating-point formulas; `Debug` keeps assertion messages useful.
pub trait Real: Float + FromPrimitive + std::fmt::Debug {
    /// Lossy conversion from a count. Counts in this crate (document
    /// frequencies, lengths, cutoffs) are far below 2^52, so the conversion
    /// is exact for `f64` and only rounds for narrower types.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as scalar")
    }
}

impl<T: Float + FromPrimitive + std::fmt::Debug> Real for T {}

/// Natural logarithm of `1 + x`, spelled out so kernels read like the
/// formulas they implement.
pub fn ln_1p<F: Real>(x: F) -> F {
    x.ln_1p()
}

//! Scalar abstraction for the numeric parts of the crate.
//!
//! Everything that touches feature values — differencing, norms, impact
//! scores, thresholds, the t-test kernels — is generic over [`Real`] so the
//! same code runs on `f32` and `f64`. The trait is a thin bundle of
//! [`num_traits`] capabilities plus the serde bounds needed to move vectors
//! through JSON records.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// A real scalar: floating-point arithmetic plus conversions and serde.
///
/// Implemented for `f32` and `f64`. The blanket implementation picks up any
/// type satisfying the bounds, so a custom float type works as well.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` constant.
    ///
    /// Panics if the value is not representable, which cannot happen for the
    /// finite literals this crate feeds it.
    fn from_f64_const(value: f64) -> Self {
        Self::from_f64(value).expect("constant not representable in scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

//! Scalar abstraction for the numeric kernels.

use std::fmt::Debug;

/// Floating-point scalar: f32 or f64.
///
/// The regression, spline and metric kernels are generic over this trait;
/// the measurement pipeline itself is pinned to [`crate::Scalar`].
pub trait Float:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Debug + Send + Sync
{
}

impl Float for f32 {}
impl Float for f64 {}

//! Scalar abstraction shared by the geometric kernels.

use nalgebra as na;
use num_traits as nt;

/// Floating point type the pose kernels are generic over (`f32` or `f64`).
pub trait Real:
    Copy + na::RealField + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + Send + Sync
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Smallest relative spacing of the type, used for rank tests.
    fn machine_epsilon() -> Self;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn machine_epsilon() -> Self {
                <$f>::EPSILON
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

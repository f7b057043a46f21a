use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point field the dense linear algebra is written against.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// `|a|` with the sign of `b`.
    #[inline]
    fn with_sign_of(self, b: Self) -> Self {
        if b >= Self::zero() {
            self.abs()
        } else {
            -self.abs()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

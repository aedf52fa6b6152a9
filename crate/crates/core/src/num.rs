use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

// The distribution math is written against `Real` so the same code runs in
// f32 or f64 (or a future wider float). Exact money stays integer-based in
// `money`; this trait only covers the weighting computations.

pub trait Real:
    'static + Send + Sync + Float + NumAssign + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lift an f64 constant into the working scalar type.
#[inline]
pub fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("constant representable in scalar type")
}

/// Best-effort f64 view of a scalar, for error messages and reports.
#[inline]
pub fn approx_f64<R: Real>(x: R) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

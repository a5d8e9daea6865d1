//! Scalar abstraction for the numeric kernels.
//!
//! All tensor math is generic over [`Scalar`] so the same kernels run at
//! f32 or f64. The shipped pipeline uses f64 (see the aliases at the crate
//! root); f32 exists for memory-constrained experiments.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64; every scalar we support can represent
    /// some rounding of any finite f64.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Scalar")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to any Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("any Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

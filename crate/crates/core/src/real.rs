use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, NumAssign};

/// Floating-point scalar used by the numeric kernels.
///
/// Training runs in `f32`; gradient checks and reference comparisons run the
/// same code in `f64`.
pub trait Real:
    Float + FloatConst + NumAssign + std::iter::Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn cast(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn cast(x: f64) -> Self {
        x as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline(always)]
    fn cast(x: f64) -> Self {
        x
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

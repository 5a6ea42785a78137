use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the numerical core is generic over.
///
/// The thresholds are precision dependent: values tuned for `f64` are far
/// below `f32` round-off, so each implementation carries its own.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Serialize
    + DeserializeOwned
    + fmt::Display
    + fmt::Debug
    + Send
    + Sync
    + 'static
{
    /// Default relative rank cutoff (scaled by `sigma_max * max(rows, cols)`).
    const DEFAULT_REL_TOL: f64;
    /// Absolute pole error accepted after placement, per unit pole magnitude.
    const PLACEMENT_TOL: f64;
    /// Relative residual accepted for data-equation fits.
    const RESIDUAL_TOL: f64;

    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const DEFAULT_REL_TOL: f64 = 1e-10;
    const PLACEMENT_TOL: f64 = 1e-8;
    const RESIDUAL_TOL: f64 = 1e-8;
}

impl Real for f32 {
    const DEFAULT_REL_TOL: f64 = 1e-4;
    const PLACEMENT_TOL: f64 = 2e-3;
    const RESIDUAL_TOL: f64 = 1e-3;
}

/// Modulus of a complex scalar (`Complex::norm` needs `num_traits::Float`).
pub fn modulus<T: Real>(z: &nalgebra::Complex<T>) -> T {
    z.re.hypot(z.im)
}

//! Scalar abstraction used throughout the crate.
//!
//! All numerical code is generic over [`Float`], which bundles the nalgebra
//! [`RealField`](nalgebra::RealField) operations with conversions from
//! primitive literals. Concrete aliases for `f64` live at the crate root.

use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt;

/// Floating-point scalar usable for every computation in this crate.
pub trait Float:
    Copy + Default + fmt::Debug + fmt::Display + FromPrimitive + ToPrimitive + nalgebra::RealField
{
    /// Converts an `f64` constant into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant")
    }

    /// Converts this scalar to `f64`, for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Synchronous speed in electrical radians per second for a 60 Hz system.
pub fn omega_base<T: Float>() -> T {
    T::of(120.0) * T::pi()
}

/// Converts radians to degrees.
pub fn to_degrees<T: Float>(rad: T) -> T {
    rad * T::of(180.0) / T::pi()
}

/// Converts degrees to radians.
pub fn to_radians<T: Float>(deg: T) -> T {
    deg * T::pi() / T::of(180.0)
}

/// Complex number from polar coordinates.
pub fn from_polar<T: Float>(r: T, theta: T) -> Complex<T> {
    Complex::new(r * theta.cos(), r * theta.sin())
}

/// Magnitude of a complex number.
pub fn cnorm<T: Float>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}

/// Principal argument of a complex number.
pub fn carg<T: Float>(z: Complex<T>) -> T {
    z.im.atan2(z.re)
}

/// Principal square root of a complex number.
pub fn csqrt<T: Float>(z: Complex<T>) -> Complex<T> {
    from_polar(cnorm(z).sqrt(), carg(z) * T::of(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn omega_base_is_120_pi() {
        assert_relative_eq!(omega_base::<f64>(), 376.99111843077515, max_relative = 1e-15);
        assert_relative_eq!(omega_base::<f32>(), 376.991_12_f32, max_relative = 1e-6);
    }

    #[test]
    fn degree_round_trip() {
        assert_relative_eq!(to_degrees(to_radians(67.0_f64)), 67.0, max_relative = 1e-14);
    }

    #[test]
    fn of_converts_literals() {
        assert_eq!(f64::of(0.25), 0.25);
        assert_eq!(f32::of(0.25), 0.25_f32);
    }

    #[test]
    fn complex_helpers_match_cartesian_identities() {
        let z = from_polar(2.0_f64, std::f64::consts::FRAC_PI_3);
        assert_relative_eq!(z.re, 1.0, max_relative = 1e-14);
        assert_relative_eq!(z.im, 3.0_f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(cnorm(z), 2.0, max_relative = 1e-14);
        assert_relative_eq!(carg(z), std::f64::consts::FRAC_PI_3, max_relative = 1e-14);
        let r = csqrt(Complex::new(-4.0_f64, 0.0));
        assert_relative_eq!(r.re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.im, 2.0, max_relative = 1e-12);
    }
}

//! Scalar probability helpers used throughout the model.

use statrs::function::erf::erfc;

/// Standard normal cumulative distribution function Φ(z).
///
/// Computed via erfc for accuracy in both tails, and clamped into the open
/// interval (0, 1) so downstream probability contracts hold even for inputs
/// far enough out that erfc underflows.
pub fn std_normal_cdf(z: f64) -> f64 {
    let p = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Standard normal density φ(z) = exp(−z²/2)/√(2π).
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

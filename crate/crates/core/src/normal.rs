//! Standard normal density, distribution function and its logarithm.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x) through erfc, accurate in both tails.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x).
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// ln Φ(x) without cancellation.
///
/// For x ≥ 0 this is `ln_1p(-Q(x))`, which keeps full relative precision when
/// Φ(x) is within an ulp of 1 (that is where N·ln Φ matters for large N).
/// Below −30 erfc approaches the subnormal range and the Mills-ratio series is
/// used instead.
pub fn log_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.0 {
        (-sf(x)).ln_1p()
    } else if x > -30.0 {
        cdf(x).ln()
    } else {
        let z = 1.0 / (x * x);
        let series = 1.0 - z * (1.0 - z * (3.0 - z * (15.0 - z * 105.0)));
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

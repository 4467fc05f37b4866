//! Standard normal density, distribution function and a tail-safe log-CDF.

use std::f64::consts::{PI, SQRT_2};

/// 1/sqrt(2*pi)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// sqrt(2/pi)
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument `ln_norm_cdf` switches to the continued-fraction tail.
const LN_CDF_TAIL: f64 = -8.0;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, computed through `erfc` so the lower tail keeps full
/// relative precision.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

#[inline]
pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Natural log of the standard normal CDF, finite for every finite argument.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x >= LN_CDF_TAIL {
        norm_cdf(x).ln()
    } else {
        ln_norm_pdf(x) + mills_ratio(-x).ln()
    }
}

/// Mills ratio R(t) = (1 - Phi(t)) / phi(t) for t > 0 via the Laplace
/// continued fraction, evaluated bottom-up.
fn mills_ratio(t: f64) -> f64 {
    debug_assert!(t > 0.0);
    let mut frac = 0.0;
    for k in (1..=120).rev() {
        frac = k as f64 / (t + frac);
    }
    1.0 / (t + frac)
}

/// phi(x) / Phi(x) (inverse Mills ratio), stable in the far left tail.
pub fn inv_mills(x: f64) -> f64 {
    if x >= LN_CDF_TAIL {
        norm_pdf(x) / norm_cdf(x)
    } else {
        1.0 / mills_ratio(-x)
    }
}

/// 1 - 2*delta^2/pi: variance of a unit-scale skew-normal with weight delta.
#[inline]
pub fn skew_variance_factor(delta: f64) -> f64 {
    1.0 - 2.0 * delta * delta / PI
}

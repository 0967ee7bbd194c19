//! Scalar special functions, routed through `libm` so the crate stays `no_std`.

use core::f64::consts::FRAC_1_SQRT_2;

/// ln(sqrt(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// Standard normal log-density.
#[inline]
pub fn norm_ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF, `Φ(x) = ½(1 + erf(x/√2))`, evaluated through `erfc`
/// so the lower tail keeps its relative precision.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

// Below this point erfc loses relative accuracy; switch to the asymptotic
// expansion of the Mills ratio.
const TAIL_SWITCH: f64 = -30.0;

// 1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸, the series for Φ(x)·(-x)/φ(x).
fn tail_series(x: f64) -> f64 {
    let r = 1.0 / (x * x);
    1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)))
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > TAIL_SWITCH {
        ln(norm_cdf(x))
    } else {
        norm_ln_pdf(x) - ln(-x) + ln(tail_series(x))
    }
}

/// `φ(x)/Φ(x)`, the derivative of `ln Φ(x)`.
pub fn inverse_mills(x: f64) -> f64 {
    if x > TAIL_SWITCH {
        exp(norm_ln_pdf(x) - ln_norm_cdf(x))
    } else {
        -x / tail_series(x)
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}

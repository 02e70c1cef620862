//! Float helpers routed through `libm` so the crate builds without `std`.

pub(crate) use core::f64::consts::PI;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Wraps an angle into (−π, π].
pub(crate) fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * floor(x / two_pi);
    if y > PI {
        y -= two_pi;
    }
    if y <= -PI {
        y += two_pi;
    }
    y
}

/// `ln C(m, k)`.
pub(crate) fn ln_binomial(m: u32, k: u32) -> f64 {
    ln_gamma(f64::from(m) + 1.0) - ln_gamma(f64::from(k) + 1.0) - ln_gamma(f64::from(m - k) + 1.0)
}

/// Numerically stable `ln Σ exp(xs)`; `-inf` for an empty or all `-inf` input.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + ln(xs.iter().map(|&x| exp(x - max)).sum::<f64>())
}

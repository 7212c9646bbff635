//! Numerical conventions shared by every stage.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// Smallest variance any stage is allowed to emit.
pub const VAR_FLOOR: f64 = 1e-12;

/// Saturation magnitude for log-likelihood ratios.
pub const LLR_CLAMP: f64 = 30.0;

/// Largest variance any stage is allowed to emit; stands in for "no
/// information" where a finite value is needed.
pub const VAR_CEIL: f64 = 1e12;

/// Variance used for symbols that are known exactly (pilots and guard).
pub const PINNED_VAR: f64 = 1e-10;

/// Width parameter of the Gaussian-mixture collapse in the out stage.
pub const MIXTURE_EPS: f64 = 1e-7;

#[inline]
pub fn clamp_var(v: f64) -> f64 {
    if v.is_nan() {
        VAR_FLOOR
    } else {
        v.max(VAR_FLOOR)
    }
}

/// Clamp into `[VAR_FLOOR, VAR_CEIL]`.
#[inline]
pub fn clamp_var_finite(v: f64) -> f64 {
    if v.is_nan() {
        VAR_CEIL
    } else {
        v.clamp(VAR_FLOOR, VAR_CEIL)
    }
}

#[inline]
pub fn clamp_llr(l: f64) -> f64 {
    if l.is_nan() {
        0.0
    } else {
        l.clamp(-LLR_CLAMP, LLR_CLAMP)
    }
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    if p.is_nan() {
        0.5
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// `ln CN(0 | mean, var)`, the log-density of a circular complex Gaussian
/// evaluated at the origin.
#[inline]
pub fn ln_cn_at_zero(mean: C64, var: f64) -> f64 {
    -(PI * var).ln() - mean.norm_sqr() / var
}

/// `1 / (1 + exp(-x))` without overflow.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-sum-exp over a slice; `-inf` for an empty slice.
pub fn ln_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Product of two Gaussian messages `CN(a_mean, a_var) * CN(b_mean, b_var)`.
///
/// Infinite variances are treated as flat messages. Returns `(mean, var)`;
/// both flat yields `(0, inf)`.
pub fn gaussian_product(a_mean: C64, a_var: f64, b_mean: C64, b_var: f64) -> (C64, f64) {
    match (a_var.is_infinite(), b_var.is_infinite()) {
        (true, true) => (C64::new(0.0, 0.0), f64::INFINITY),
        (true, false) => (b_mean, b_var),
        (false, true) => (a_mean, a_var),
        (false, false) => {
            let var = a_var * b_var / (a_var + b_var);
            let mean = (a_mean * b_var + b_mean * a_var) / (a_var + b_var);
            (mean, var)
        }
    }
}

/// Draw from `CN(mean, var)`: real and imaginary parts each get `var / 2`.
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R, mean: C64, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    mean + C64::new(re * s, im * s)
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

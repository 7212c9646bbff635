//! Per-tap message updates: into, channel posterior, out and across.

#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::HyperParams;
use crate::math::{clamp_prob, clamp_var, gaussian_product, ln_cn_at_zero, logistic, MIXTURE_EPS};
use crate::C64;

/// Bernoulli-Gaussian prior on one tap: `(pi, xi, psi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapPrior {
    pub pi: f64,
    pub xi: C64,
    pub psi: f64,
}

/// Combine the two support messages and the two amplitude messages reaching
/// a tap. `kappa = inf` is a flat amplitude message.
pub fn into_tap(lambda_fwd: f64, lambda_bwd: f64, eta_fwd: C64, kappa_fwd: f64, eta_bwd: C64, kappa_bwd: f64) -> TapPrior {
    let on = lambda_fwd * lambda_bwd;
    let off = (1.0 - lambda_fwd) * (1.0 - lambda_bwd);
    let pi = if on + off > 0.0 { on / (on + off) } else { 0.5 };
    let (xi, psi) = gaussian_product(eta_fwd, kappa_fwd, eta_bwd, kappa_bwd);
    TapPrior { pi: clamp_prob(pi), xi, psi }
}

/// Posterior of one tap, `(1 - pi) delta(h) + pi CN(h | gamma, nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapPosterior {
    pub pi: f64,
    pub gamma: C64,
    pub nu: f64,
}

impl TapPosterior {
    pub fn mean(&self) -> C64 {
        self.gamma * self.pi
    }

    pub fn var(&self) -> f64 {
        let second = self.pi * (self.gamma.norm_sqr() + self.nu);
        (second - (self.gamma * self.pi).norm_sqr()).max(0.0)
    }
}

/// Combine the local prior with the extrinsic estimate `CN(q_hat, q_var)`.
pub fn channel_posterior_tap(prior: &TapPrior, q_hat: C64, q_var: f64) -> TapPosterior {
    if prior.pi <= 0.0 {
        return TapPosterior { pi: 0.0, gamma: C64::new(0.0, 0.0), nu: clamp_var(q_var) };
    }
    let (gamma, nu) = gaussian_product(q_hat, q_var, prior.xi, prior.psi);
    if prior.psi.is_infinite() {
        // The active component has no finite density at zero.
        return TapPosterior { pi: 0.0, gamma, nu: clamp_var(nu) };
    }
    // ln of (pi CN(0|xi - q, psi + q_var)) / ((1 - pi) CN(0|q, q_var)).
    let log_on = prior.pi.ln() + ln_cn_at_zero(prior.xi - q_hat, prior.psi + q_var);
    let log_off = if prior.pi >= 1.0 { f64::NEG_INFINITY } else { (1.0 - prior.pi).ln() + ln_cn_at_zero(q_hat, q_var) };
    let pi = if log_off == f64::NEG_INFINITY { 1.0 } else { logistic(log_on - log_off) };
    TapPosterior { pi: clamp_prob(pi), gamma, nu: clamp_var(nu) }
}

/// Out-stage message for one tap: support probability and the single
/// Gaussian that replaces the two-component amplitude message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapOut {
    pub pi: f64,
    pub xi: C64,
    pub psi: f64,
}

impl TapOut {
    pub fn uninformative() -> Self {
        TapOut { pi: 0.5, xi: C64::new(0.0, 0.0), psi: f64::INFINITY }
    }
}

pub fn out_tap(prior: &TapPrior, q_hat: C64, q_var: f64) -> TapOut {
    // Support: CN(0 | q - xi, q_var + psi) against CN(0 | q, q_var).
    let log_off = ln_cn_at_zero(q_hat, q_var);
    let pi = if prior.psi.is_infinite() {
        0.0
    } else {
        logistic(ln_cn_at_zero(q_hat - prior.xi, q_var + prior.psi) - log_off)
    };
    let (xi, psi) = collapse_mixture(prior.pi, q_hat, q_var, MIXTURE_EPS);
    TapOut { pi: clamp_prob(pi), xi, psi: clamp_var(psi) }
}

/// Second-order expansion of
/// `ln[(1 - w) CN(t | q/eps, v/eps^2) + w CN(t | q, v)]` about `t = q`,
/// with `w = eps^2 pi / (1 - pi + eps^2 pi)`.
pub fn collapse_mixture(pi: f64, q_hat: C64, q_var: f64, eps: f64) -> (C64, f64) {
    if pi >= 1.0 {
        return (q_hat, q_var);
    }
    let b = q_hat.norm_sqr() * (1.0 - eps) * (1.0 - eps) / q_var;
    let grad_scale = 2.0 * eps * (1.0 - eps) / q_var;
    let (sr, si) = (grad_scale * q_hat.re, grad_scale * q_hat.im);
    let e2 = eps * eps;
    // r = weight ratio of the wide component to the narrow one at t = q.
    let ln_r = if pi <= 0.0 { f64::INFINITY } else { (1.0 - pi).ln() - pi.ln() - b };
    let (psi, frac) = if ln_r <= 0.0 {
        let r = ln_r.exp();
        let den = e2 * r * r + r * (e2 + 1.0 - 0.5 * q_var * sr * sr) + 1.0;
        (q_var * (1.0 + r) * (1.0 + r) / den, r / (1.0 + r))
    } else {
        let s = (-ln_r).exp();
        let den = e2 + s * (e2 + 1.0 - 0.5 * q_var * sr * sr) + s * s;
        (q_var * (1.0 + s) * (1.0 + s) / den, 1.0 / (1.0 + s))
    };
    let xi = C64::new(q_hat.re + 0.5 * psi * sr * frac, q_hat.im + 0.5 * psi * si * frac);
    (xi, psi)
}

/// Forward message into frame `k + 1` for one tap.
pub fn across_forward_tap(
    lambda_fwd: f64,
    eta_fwd: C64,
    kappa_fwd: f64,
    out: &TapOut,
    hyper: &HyperParams,
) -> (f64, C64, f64) {
    let p10 = hyper.p10();
    let p11 = 1.0 - hyper.p01;
    let on = out.pi * lambda_fwd;
    let off = (1.0 - out.pi) * (1.0 - lambda_fwd);
    let lambda = if on + off > 0.0 { (p11 * on + p10 * off) / (on + off) } else { hyper.lambda };
    let (c, cv) = gaussian_product(eta_fwd, kappa_fwd, out.xi, out.psi);
    let g = 1.0 - hyper.varrho;
    let eta = c * g + hyper.zeta * hyper.varrho;
    let kappa = if cv.is_infinite() && g > 0.0 { f64::INFINITY } else { g * g * cv + hyper.varrho * hyper.varrho * hyper.rho };
    let eta = if kappa.is_infinite() { C64::new(0.0, 0.0) } else { eta };
    (clamp_prob(lambda), eta, kappa)
}

/// Backward message into frame `k` from frame `k + 1` for one tap. The
/// arguments are frame `k + 1`'s backward inputs and out message.
pub fn across_backward_tap(
    lambda_bwd: f64,
    eta_bwd: C64,
    kappa_bwd: f64,
    out: &TapOut,
    hyper: &HyperParams,
) -> (f64, C64, f64) {
    let p10 = hyper.p10();
    let p01 = hyper.p01;
    let b1 = out.pi * lambda_bwd;
    let b0 = (1.0 - out.pi) * (1.0 - lambda_bwd);
    let m1 = (1.0 - p01) * b1 + p01 * b0;
    let m0 = p10 * b1 + (1.0 - p10) * b0;
    let lambda = if m0 + m1 > 0.0 { m1 / (m0 + m1) } else { 0.5 };
    let (c, cv) = gaussian_product(eta_bwd, kappa_bwd, out.xi, out.psi);
    let g = 1.0 - hyper.varrho;
    if cv.is_infinite() || g <= 0.0 {
        return (clamp_prob(lambda), C64::new(0.0, 0.0), f64::INFINITY);
    }
    let eta = (c - hyper.zeta * hyper.varrho) / g;
    let kappa = (cv + hyper.varrho * hyper.varrho * hyper.rho) / (g * g);
    (clamp_prob(lambda), eta, kappa)
}

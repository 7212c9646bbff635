//! EM re-estimation of the channel prior from smoothed posteriors.
//!
//! Each tap's support is a two-state Markov chain observed through the
//! out-stage support messages, and its amplitude a Gauss-Markov chain
//! observed through the out-stage amplitude messages. Both are smoothed
//! exactly (forward-backward and Rauch-Tung-Striebel).

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::HyperParams;
use crate::math::VAR_FLOOR;
use crate::msgcore::TapOut;
use crate::{Error, Result, C64};

const PROB_MIN: f64 = 1e-4;
const VARRHO_MIN: f64 = 1e-4;
const RHO_MIN: f64 = 1e-8;

/// Smoothed moments, frame-major (`[k][i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMoments {
    pub s_marginal: Vec<Vec<f64>>,
    /// `E[s[k-1] s[k]]`, stored at index `k - 1`.
    pub s_pair: Vec<Vec<f64>>,
    pub theta_mean: Vec<Vec<C64>>,
    pub theta_var: Vec<Vec<f64>>,
    /// `E[conj(theta[k]) theta[k-1]]`, stored at index `k - 1`.
    pub theta_cross: Vec<Vec<C64>>,
}

impl SmoothedMoments {
    pub fn n_frames(&self) -> usize {
        self.s_marginal.len()
    }

    pub fn n_taps(&self) -> usize {
        self.s_marginal.first().map_or(0, Vec::len)
    }
}

/// Smooth every tap's support and amplitude chain given the out messages
/// of all `K` frames (`out[k][i]`).
pub fn collect_moments(out: &[Vec<TapOut>], hyper: &HyperParams) -> Result<SmoothedMoments> {
    let k_len = out.len();
    let l = out.first().map(Vec::len).ok_or(Error::MomentsUnavailable("no frames"))?;
    if out.iter().any(|f| f.len() != l) {
        return Err(Error::MomentsUnavailable("frames disagree on the tap count"));
    }
    let mut m = SmoothedMoments {
        s_marginal: vec![vec![0.0; l]; k_len],
        s_pair: vec![vec![0.0; l]; k_len.saturating_sub(1)],
        theta_mean: vec![vec![C64::new(0.0, 0.0); l]; k_len],
        theta_var: vec![vec![0.0; l]; k_len],
        theta_cross: vec![vec![C64::new(0.0, 0.0); l]; k_len.saturating_sub(1)],
    };
    let evidence: Vec<f64> = vec![0.0; k_len];
    let mut ev = evidence;
    for i in 0..l {
        for k in 0..k_len {
            ev[k] = out[k][i].pi;
        }
        let (marg, pair) = smooth_support(&ev, hyper);
        for k in 0..k_len {
            m.s_marginal[k][i] = marg[k];
        }
        for k in 1..k_len {
            m.s_pair[k - 1][i] = pair[k - 1];
        }
        let obs: Vec<(C64, f64)> = (0..k_len).map(|k| (out[k][i].xi, out[k][i].psi)).collect();
        let (mean, var, cross) = smooth_amplitude(&obs, hyper);
        for k in 0..k_len {
            m.theta_mean[k][i] = mean[k];
            m.theta_var[k][i] = var[k];
        }
        for k in 1..k_len {
            m.theta_cross[k - 1][i] = mean[k].conj() * mean[k - 1] + cross[k - 1];
        }
    }
    Ok(m)
}

/// Forward-backward on one support chain; `evidence[k]` is the message
/// weight of `s[k] = 1` (the weight of 0 is its complement).
fn smooth_support(evidence: &[f64], hyper: &HyperParams) -> (Vec<f64>, Vec<f64>) {
    let k_len = evidence.len();
    let p01 = hyper.p01;
    let p10 = hyper.p10();
    // trans[a][b] = p(s[k] = b | s[k-1] = a)
    let trans = [[1.0 - p10, p10], [p01, 1.0 - p01]];
    let e = |k: usize| [1.0 - evidence[k], evidence[k]];
    let norm = |v: [f64; 2]| {
        let s = v[0] + v[1];
        if s > 0.0 {
            [v[0] / s, v[1] / s]
        } else {
            [0.5, 0.5]
        }
    };
    let mut alpha = vec![[0.0; 2]; k_len];
    let e0 = e(0);
    alpha[0] = norm([(1.0 - hyper.lambda) * e0[0], hyper.lambda * e0[1]]);
    for k in 1..k_len {
        let ek = e(k);
        let a = alpha[k - 1];
        alpha[k] = norm([
            (a[0] * trans[0][0] + a[1] * trans[1][0]) * ek[0],
            (a[0] * trans[0][1] + a[1] * trans[1][1]) * ek[1],
        ]);
    }
    let mut beta = vec![[1.0; 2]; k_len];
    for k in (0..k_len.saturating_sub(1)).rev() {
        let ek = e(k + 1);
        let b = beta[k + 1];
        beta[k] = norm([
            trans[0][0] * ek[0] * b[0] + trans[0][1] * ek[1] * b[1],
            trans[1][0] * ek[0] * b[0] + trans[1][1] * ek[1] * b[1],
        ]);
    }
    let marg = (0..k_len).map(|k| norm([alpha[k][0] * beta[k][0], alpha[k][1] * beta[k][1]])[1]).collect();
    let pair = (1..k_len)
        .map(|k| {
            let ek = e(k);
            let mut joint = [[0.0; 2]; 2];
            let mut total = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    joint[a][b] = alpha[k - 1][a] * trans[a][b] * ek[b] * beta[k][b];
                    total += joint[a][b];
                }
            }
            if total > 0.0 {
                joint[1][1] / total
            } else {
                0.0
            }
        })
        .collect();
    (marg, pair)
}

/// Kalman filter plus RTS smoother on one amplitude chain. Returns smoothed
/// means, variances and `Cov(theta[k], theta[k-1])` at index `k - 1`.
fn smooth_amplitude(obs: &[(C64, f64)], hyper: &HyperParams) -> (Vec<C64>, Vec<f64>, Vec<f64>) {
    let k_len = obs.len();
    let g = 1.0 - hyper.varrho;
    let q = hyper.varrho * hyper.varrho * hyper.rho;
    let mut pred_m = vec![C64::new(0.0, 0.0); k_len];
    let mut pred_p = vec![0.0; k_len];
    let mut filt_m = vec![C64::new(0.0, 0.0); k_len];
    let mut filt_p = vec![0.0; k_len];
    for k in 0..k_len {
        let (m, p) = if k == 0 {
            (hyper.zeta, hyper.sigma_sq())
        } else {
            (filt_m[k - 1] * g + hyper.zeta * hyper.varrho, g * g * filt_p[k - 1] + q)
        };
        pred_m[k] = m;
        pred_p[k] = p;
        let (y, r) = obs[k];
        if r.is_finite() {
            let gain = p / (p + r);
            filt_m[k] = m + (y - m) * gain;
            filt_p[k] = (1.0 - gain) * p;
        } else {
            filt_m[k] = m;
            filt_p[k] = p;
        }
    }
    let mut mean = filt_m.clone();
    let mut var = filt_p.clone();
    let mut cross = vec![0.0; k_len.saturating_sub(1)];
    for k in (0..k_len.saturating_sub(1)).rev() {
        let j = filt_p[k] * g / pred_p[k + 1].max(VAR_FLOOR * VAR_FLOOR);
        mean[k] = filt_m[k] + (mean[k + 1] - pred_m[k + 1]) * j;
        var[k] = (filt_p[k] + j * j * (var[k + 1] - pred_p[k + 1])).max(0.0);
        cross[k] = j * var[k + 1];
    }
    (mean, var, cross)
}

/// One M-step over all hyperparameters, projected onto their valid ranges.
pub fn em_update(m: &SmoothedMoments, hyper: &HyperParams) -> HyperParams {
    let k_len = m.n_frames();
    let l = m.n_taps();
    if k_len == 0 || l == 0 {
        return *hyper;
    }
    let lf = l as f64;
    let mut next = *hyper;

    let total: f64 = m.s_marginal.iter().flatten().sum();
    next.lambda = total / (lf * k_len as f64);

    let sigma_sq = hyper.sigma_sq().max(VAR_FLOOR);
    let first_sum: C64 = m.theta_mean[0].iter().sum();
    if k_len > 1 {
        let (mut num, mut den) = (0.0, 0.0);
        for k in 1..k_len {
            for i in 0..l {
                den += m.s_marginal[k - 1][i];
                num += m.s_marginal[k - 1][i] - m.s_pair[k - 1][i];
            }
        }
        if den > 0.0 {
            next.p01 = num / den;
        }

        let n = lf * (k_len - 1) as f64;
        let rho = hyper.rho;
        let varrho = hyper.varrho.max(VARRHO_MIN);
        let mut innov = C64::new(0.0, 0.0);
        for k in 1..k_len {
            for i in 0..l {
                innov += m.theta_mean[k][i] - m.theta_mean[k - 1][i] * (1.0 - varrho);
            }
        }
        next.zeta = (innov / (varrho * rho) + first_sum / sigma_sq) / (lf * ((k_len - 1) as f64 / rho + 1.0 / sigma_sq));

        let zeta = next.zeta;
        let second = |k: usize, i: usize| m.theta_var[k][i] + m.theta_mean[k][i].norm_sqr();
        let (mut b, mut c) = (0.0, 0.0);
        for k in 1..k_len {
            for i in 0..l {
                let cross = m.theta_cross[k - 1][i].re;
                b += cross - ((m.theta_mean[k][i] - m.theta_mean[k - 1][i]).conj() * zeta).re - second(k - 1, i);
                c += second(k, i) + second(k - 1, i) - 2.0 * cross;
            }
        }
        b *= 2.0 / rho;
        c *= 2.0 / rho;
        let disc = b * b + 8.0 * n * c;
        if disc >= 0.0 {
            next.varrho = (b + disc.sqrt()) / (4.0 * n);
        } else {
            log::warn!("negative discriminant in the varrho update; keeping {}", hyper.varrho);
        }
        next.varrho = next.varrho.clamp(VARRHO_MIN, 1.0);

        let g = 1.0 - next.varrho;
        let mut resid = 0.0;
        for k in 1..k_len {
            for i in 0..l {
                let (mk, mp) = (m.theta_mean[k][i], m.theta_mean[k - 1][i]);
                resid += second(k, i) + g * g * second(k - 1, i) + next.varrho * next.varrho * zeta.norm_sqr()
                    - 2.0 * g * m.theta_cross[k - 1][i].re
                    - 2.0 * next.varrho * (mk * zeta.conj()).re
                    + 2.0 * next.varrho * g * (mp * zeta.conj()).re;
            }
        }
        next.rho = resid.max(0.0) / (n * next.varrho * next.varrho);
    } else {
        next.zeta = first_sum / lf;
        let spread: f64 = (0..l).map(|i| m.theta_var[0][i] + (m.theta_mean[0][i] - next.zeta).norm_sqr()).sum::<f64>() / lf;
        next.rho = spread * (2.0 - hyper.varrho) / hyper.varrho.max(VARRHO_MIN);
    }
    project(next)
}

/// Clamp onto the ranges that keep message passing well conditioned.
pub fn project(mut h: HyperParams) -> HyperParams {
    let fix = |x: f64, lo: f64, hi: f64, fallback: f64| if x.is_finite() { x.clamp(lo, hi) } else { fallback };
    h.lambda = fix(h.lambda, PROB_MIN, 1.0 - PROB_MIN, 0.5);
    h.p01 = fix(h.p01, PROB_MIN, 1.0 - PROB_MIN, 0.5);
    // Keep p10 a probability.
    h.p01 = h.p01.min((1.0 - h.lambda) / h.lambda * (1.0 - 1e-12));
    h.varrho = fix(h.varrho, VARRHO_MIN, 1.0, 1.0);
    h.rho = if h.rho.is_finite() { h.rho.max(RHO_MIN) } else { 1.0 };
    if !(h.zeta.re.is_finite() && h.zeta.im.is_finite()) {
        h.zeta = C64::new(0.0, 0.0);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn out(pi: f64, xi: C64, psi: f64) -> TapOut {
        TapOut { pi, xi, psi }
    }

    #[test]
    fn flat_evidence_gives_prior_marginals() {
        let h = HyperParams::synthetic();
        let frames = vec![vec![TapOut::uninformative(); 5]; 4];
        let m = collect_moments(&frames, &h).unwrap();
        for row in &m.s_marginal {
            assert!(row.iter().all(|&s| (s - h.lambda).abs() < 1e-12));
        }
        for row in &m.s_pair {
            assert!(row.iter().all(|&s| (s - h.lambda * (1.0 - h.p01)).abs() < 1e-12));
        }
        let single = collect_moments(&frames[..1], &h).unwrap();
        assert!(single.s_pair.is_empty() && single.theta_cross.is_empty());
        assert!(collect_moments(&[], &h).is_err());
    }

    #[test]
    fn stationary_moments_are_a_fixed_point() {
        let h = HyperParams { p01: 0.07, lambda: 0.3, ..HyperParams::synthetic() };
        let (k, l) = (6, 4);
        let m = SmoothedMoments {
            s_marginal: vec![vec![h.lambda; l]; k],
            s_pair: vec![vec![h.lambda * (1.0 - h.p01); l]; k - 1],
            theta_mean: vec![vec![C64::new(0.0, 0.0); l]; k],
            theta_var: vec![vec![1.0; l]; k],
            theta_cross: vec![vec![C64::new(0.5, 0.0); l]; k - 1],
        };
        let next = em_update(&m, &h);
        assert!((next.p01 - h.p01).abs() < 1e-6);
        assert!((next.lambda - h.lambda).abs() < 1e-6);
    }

    #[test]
    fn degenerate_static_process_floors_rho() {
        let zeta = C64::new(0.3, -0.2);
        let h = HyperParams { zeta, ..HyperParams::synthetic() };
        let (k, l) = (5, 3);
        let m = SmoothedMoments {
            s_marginal: vec![vec![0.2; l]; k],
            s_pair: vec![vec![0.19; l]; k - 1],
            theta_mean: vec![vec![zeta; l]; k],
            theta_var: vec![vec![0.0; l]; k],
            theta_cross: vec![vec![zeta.conj() * zeta; l]; k - 1],
        };
        let next = em_update(&m, &h);
        assert_eq!(next.rho, RHO_MIN);
        assert!((next.zeta - zeta).norm() < 1e-12);
    }

    #[test]
    fn projection_keeps_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let h = HyperParams {
                p01: rng.random_range(-1.0..2.0),
                lambda: rng.random_range(-1.0..2.0),
                zeta: C64::new(rng.random_range(-1.0..1.0), 0.0),
                varrho: rng.random_range(-1.0..2.0),
                rho: rng.random_range(-1.0..2.0),
            };
            assert!(project(h).validate().is_ok());
        }
    }

    /// Exhaustive enumeration over the 2^K support paths and a quantised
    /// grid for the real part of the amplitude (the real and imaginary
    /// chains are independent with half the variance each).
    #[test]
    fn smoother_matches_enumeration() {
        let h = HyperParams { p01: 0.3, lambda: 0.4, zeta: C64::new(0.2, 0.0), varrho: 0.3, rho: 1.0 };
        let frames = vec![
            vec![out(0.8, C64::new(0.5, 0.1), 0.3)],
            vec![out(0.1, C64::new(-0.2, 0.4), 0.6)],
            vec![out(0.65, C64::new(0.7, -0.3), 0.25)],
        ];
        let m = collect_moments(&frames, &h).unwrap();

        let p10 = h.p10();
        let trans = |a: usize, b: usize| match (a, b) {
            (0, 0) => 1.0 - p10,
            (0, _) => p10,
            (_, 0) => h.p01,
            _ => 1.0 - h.p01,
        };
        let (mut z, mut marg, mut pair) = (0.0, [0.0; 3], [0.0; 2]);
        for path in 0..8usize {
            let s = [(path >> 2) & 1, (path >> 1) & 1, path & 1];
            let mut w = if s[0] == 1 { h.lambda } else { 1.0 - h.lambda };
            for k in 0..3 {
                if k > 0 {
                    w *= trans(s[k - 1], s[k]);
                }
                w *= if s[k] == 1 { frames[k][0].pi } else { 1.0 - frames[k][0].pi };
            }
            z += w;
            for k in 0..3 {
                marg[k] += w * s[k] as f64;
            }
            for k in 1..3 {
                pair[k - 1] += w * (s[k - 1] * s[k]) as f64;
            }
        }
        for k in 0..3 {
            assert!((m.s_marginal[k][0] - marg[k] / z).abs() < 1e-6);
        }
        for k in 0..2 {
            assert!((m.s_pair[k][0] - pair[k] / z).abs() < 1e-6);
        }

        // Real parts: each component carries half of every complex variance.
        let g = 1.0 - h.varrho;
        let half_q = 0.5 * h.varrho * h.varrho * h.rho;
        let half_s = 0.5 * h.sigma_sq();
        let n = 201usize;
        let grid: Vec<f64> = (0..n).map(|t| -4.0 + 8.0 * t as f64 / (n - 1) as f64).collect();
        let gauss = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp();
        let obs = |k: usize, x: f64| gauss(x, frames[k][0].xi.re, 0.5 * frames[k][0].psi);
        let (mut z, mut m1, mut m2, mut c) = (0.0, [0.0; 3], [0.0; 3], [0.0; 2]);
        for &a in &grid {
            let wa = gauss(a, h.zeta.re, half_s) * obs(0, a);
            for &b in &grid {
                let wb = wa * gauss(b, g * a + h.varrho * h.zeta.re, half_q) * obs(1, b);
                for &d in &grid {
                    let w = wb * gauss(d, g * b + h.varrho * h.zeta.re, half_q) * obs(2, d);
                    z += w;
                    let t = [a, b, d];
                    for k in 0..3 {
                        m1[k] += w * t[k];
                        m2[k] += w * t[k] * t[k];
                    }
                    c[0] += w * a * b;
                    c[1] += w * b * d;
                }
            }
        }
        for k in 0..3 {
            let mean = m1[k] / z;
            let var = m2[k] / z - mean * mean;
            assert!((m.theta_mean[k][0].re - mean).abs() < 1e-6, "mean {k}");
            assert!((m.theta_var[k][0] - 2.0 * var).abs() < 1e-6, "var {k}");
        }
        for k in 0..2 {
            let cov = c[k] / z - (m1[k] / z) * (m1[k + 1] / z);
            let got = m.theta_cross[k][0] - m.theta_mean[k + 1][0].conj() * m.theta_mean[k][0];
            assert!((got.re - 2.0 * cov).abs() < 1e-6, "cross {k}");
        }
    }
}

//! Independent reference implementations used by the integration tests and
//! by the acceptance suite.
#![allow(dead_code)]

use dcsjced_core::channel::HyperParams;
use dcsjced_core::emtune::{collect_moments, em_update};
use dcsjced_core::math::{LLR_CLAMP, VAR_CEIL, VAR_FLOOR};
use dcsjced_core::modem::SymbolAlphabet;
use dcsjced_core::msgcore::{
    across_backward_tap, across_forward_tap, apriori_symbol_probs, channel_posterior_tap, extrinsic_llr, extrinsic_update,
    into_tap, out_tap, s_update, symbol_posterior, z_conditional, z_posterior, TapOut, TapPrior,
};
use dcsjced_core::C64;
use rand::Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rand_c<R: Rng>(rng: &mut R, scale: f64) -> C64 {
    c(rng.random_range(-1.0..1.0) * scale, rng.random_range(-1.0..1.0) * scale)
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

// ---------------------------------------------------------------------------
// Bilinear core through an explicit selection tensor.

/// `z[m][i][j] = 1` when output `m` takes tap `i` times symbol `j`.
pub fn selection_tensor(l: usize, m_len: usize) -> Vec<Vec<Vec<f64>>> {
    (0..m_len)
        .map(|m| (0..l).map(|i| (0..m_len).map(|j| if i + j == m { 1.0 } else { 0.0 }).collect()).collect())
        .collect()
}

pub struct DenseConditional {
    pub p_hat: Vec<C64>,
    pub p_var: Vec<f64>,
    pub p_var_bar: Vec<f64>,
}

/// `z^{(i,*)}_m` and `z^{(*,j)}_m` for every `m`.
fn partial_products(z: &[Vec<Vec<f64>>], h: &[C64], x: &[C64]) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
    let by_tap = z
        .iter()
        .map(|zm| zm.iter().map(|row| row.iter().zip(x).map(|(w, xj)| xj * *w).sum()).collect())
        .collect();
    let by_sym = z
        .iter()
        .map(|zm| (0..x.len()).map(|j| zm.iter().zip(h).map(|(row, hi)| hi * row[j]).sum()).collect())
        .collect();
    (by_tap, by_sym)
}

pub fn dense_z_conditional(z: &[Vec<Vec<f64>>], h: &[C64], hv: &[f64], x: &[C64], xv: &[f64], s: &[C64]) -> DenseConditional {
    let (by_tap, by_sym) = partial_products(z, h, x);
    let mut out = DenseConditional { p_hat: vec![], p_var: vec![], p_var_bar: vec![] };
    for (m, zm) in z.iter().enumerate() {
        let mut full = c(0.0, 0.0);
        let mut both = 0.0;
        for (i, row) in zm.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                full += h[i] * x[j] * *w;
                both += hv[i] * xv[j] * w * w;
            }
        }
        let bar: f64 = (0..x.len()).map(|j| xv[j] * by_sym[m][j].norm_sqr()).sum::<f64>()
            + (0..h.len()).map(|i| hv[i] * by_tap[m][i].norm_sqr()).sum::<f64>();
        out.p_hat.push(full - s[m] * bar);
        out.p_var.push(bar + both);
        out.p_var_bar.push(bar);
    }
    out
}

pub struct DenseExtrinsic {
    pub q_hat: Vec<C64>,
    pub q_var: Vec<f64>,
    pub r_hat: Vec<C64>,
    pub r_var: Vec<f64>,
}

pub fn dense_extrinsic(z: &[Vec<Vec<f64>>], h: &[C64], hv: &[f64], x: &[C64], xv: &[f64], s: &[C64], sv: &[f64]) -> DenseExtrinsic {
    let (by_tap, by_sym) = partial_products(z, h, x);
    let m_len = z.len();
    let mut out = DenseExtrinsic { q_hat: vec![], q_var: vec![], r_hat: vec![], r_var: vec![] };
    for i in 0..h.len() {
        let prec: f64 = (0..m_len).map(|m| sv[m] * by_tap[m][i].norm_sqr()).sum();
        let v = 1.0 / prec;
        let corr: C64 = (0..m_len).map(|m| s[m] * by_tap[m][i].conj()).sum();
        let ons: f64 = (0..m_len).map(|m| sv[m] * (0..x.len()).map(|j| xv[j] * z[m][i][j].powi(2)).sum::<f64>()).sum();
        out.q_var.push(v);
        out.q_hat.push(h[i] + corr * v - h[i] * v * ons);
    }
    for j in 0..x.len() {
        let prec: f64 = (0..m_len).map(|m| sv[m] * by_sym[m][j].norm_sqr()).sum();
        let v = 1.0 / prec;
        let corr: C64 = (0..m_len).map(|m| s[m] * by_sym[m][j].conj()).sum();
        let ons: f64 = (0..m_len).map(|m| sv[m] * (0..h.len()).map(|i| hv[i] * z[m][i][j].powi(2)).sum::<f64>()).sum();
        out.r_var.push(v);
        out.r_hat.push(x[j] + corr * v - x[j] * v * ons);
    }
    out
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_err_r(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Worst relative error between the library and the dense oracle over
/// `trials` random instances with `L <= 3`, `M <= 6`.
pub fn bilinear_oracle_max_error<R: Rng>(rng: &mut R, trials: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let l = rng.random_range(1..=3);
        let m_len = rng.random_range(l..=6);
        let h: Vec<C64> = (0..l).map(|_| rand_c(rng, 1.0)).collect();
        let x: Vec<C64> = (0..m_len).map(|_| rand_c(rng, 1.0)).collect();
        let hv: Vec<f64> = (0..l).map(|_| rng.random_range(0.01..1.0)).collect();
        let xv: Vec<f64> = (0..m_len).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: Vec<C64> = (0..m_len).map(|_| rand_c(rng, 1.0)).collect();
        let sv: Vec<f64> = (0..m_len).map(|_| rng.random_range(0.05..2.0)).collect();
        let z = selection_tensor(l, m_len);

        let fast = z_conditional(&h, &hv, &x, &xv, &s);
        let slow = dense_z_conditional(&z, &h, &hv, &x, &xv, &s);
        for m in 0..m_len {
            worst = worst.max(rel_err(fast.p_hat[m], slow.p_hat[m]));
            worst = worst.max(rel_err_r(fast.p_var[m], slow.p_var[m]));
            worst = worst.max(rel_err_r(fast.p_var_bar[m], slow.p_var_bar[m]));
        }
        let fast = extrinsic_update(&h, &hv, &x, &xv, &s, &sv);
        let slow = dense_extrinsic(&z, &h, &hv, &x, &xv, &s, &sv);
        for i in 0..l {
            worst = worst.max(rel_err(fast.q_hat[i], slow.q_hat[i]));
            worst = worst.max(rel_err_r(fast.q_var[i], slow.q_var[i]));
        }
        for j in 0..m_len {
            worst = worst.max(rel_err(fast.r_hat[j], slow.r_hat[j]));
            worst = worst.max(rel_err_r(fast.r_var[j], slow.r_var[j]));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Out-stage collapse: local quadratic fit of the exact two-component message.

/// `ln M(t) - ln M(q)` for `M(t) = (1 - w) CN(t | q/eps, v/eps^2) + w CN(t | q, v)`.
fn log_mixture_ratio(t: C64, pi: f64, q: C64, v: f64, eps: f64) -> f64 {
    let e2 = eps * eps;
    let w = e2 * pi / (1.0 - pi + e2 * pi);
    // Component log weights at t = q (common 1/(pi v) dropped).
    let a_wide = (1.0 - w).ln() + e2.ln() - (q * eps - q).norm_sqr() / v;
    let a_narrow = w.ln();
    let top = a_wide.max(a_narrow);
    let (p_wide, p_narrow) = ((a_wide - top).exp(), (a_narrow - top).exp());
    let (p_wide, p_narrow) = (p_wide / (p_wide + p_narrow), p_narrow / (p_wide + p_narrow));
    let d_wide = -((t * eps - q).norm_sqr() - (q * eps - q).norm_sqr()) / v;
    let d_narrow = -(t - q).norm_sqr() / v;
    (p_wide * d_wide.exp_m1() + p_narrow * d_narrow.exp_m1()).ln_1p()
}

/// Gaussian `CN(xi, psi)` matching the gradient and the mean curvature of
/// `ln M` at `t = q`, by central differences on the complex plane.
pub fn mixture_local_gaussian(pi: f64, q: C64, v: f64, eps: f64) -> (C64, f64) {
    let h = 1e-2 * v.sqrt();
    let f = |t: C64| log_mixture_ratio(t, pi, q, v, eps);
    let (fr_p, fr_m) = (f(q + c(h, 0.0)), f(q - c(h, 0.0)));
    let (fi_p, fi_m) = (f(q + c(0.0, h)), f(q - c(0.0, h)));
    let grad = c((fr_p - fr_m) / (2.0 * h), (fi_p - fi_m) / (2.0 * h));
    let curv = (fr_p + fr_m + fi_p + fi_m) / (h * h) / 2.0;
    // ln CN(t | xi, psi) has curvature -2/psi along each axis.
    let psi = -2.0 / curv;
    (q + grad * (psi / 2.0), psi)
}

/// Worst relative error of the out-stage amplitude message against the
/// local fit, over `draws` random inputs. Returns `(xi_err, psi_err)`.
pub fn out_stage_oracle_max_error<R: Rng>(rng: &mut R, draws: usize) -> (f64, f64) {
    let eps = dcsjced_core::math::MIXTURE_EPS;
    let (mut ex, mut ep): (f64, f64) = (0.0, 0.0);
    for _ in 0..draws {
        let pi = rng.random_range(0.02..0.98);
        let v = log_uniform(rng, 1e-4, 1.0);
        let q = rand_c(rng, 3.0 * v.sqrt());
        let prior = TapPrior { pi, xi: rand_c(rng, 0.1), psi: log_uniform(rng, 1e-4, 1.0) };
        let out = out_tap(&prior, q, v);
        let (xi, psi) = mixture_local_gaussian(pi, q, v, eps);
        ep = ep.max(rel_err_r(out.psi, psi));
        ex = ex.max((out.xi - xi).norm() / xi.norm().max(psi.sqrt()));
    }
    (ex, ep)
}

// ---------------------------------------------------------------------------
// Across stage by quadrature of the transition integral.

/// Normalised weights of `N(t; m1, v1) N(t; m2, v2)` (real, per-axis
/// variances) on a grid around the narrower factor.
fn product_grid(m1: f64, v1: f64, m2: f64, v2: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (mc, vc) = if v1 <= v2 { (m1, v1) } else { (m2, v2) };
    let half = 14.0 * vc.sqrt() + (m1 - m2).abs().min(14.0 * v1.max(v2).sqrt());
    let step = 2.0 * half / (n - 1) as f64;
    let ts: Vec<f64> = (0..n).map(|a| mc - half + a as f64 * step).collect();
    let logs: Vec<f64> = ts.iter().map(|t| -(t - m1).powi(2) / (2.0 * v1) - (t - m2).powi(2) / (2.0 * v2)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    (ts, w)
}

/// Standard normal grid scaled by `sd`.
fn noise_grid(sd: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let half = 12.0;
    let step = 2.0 * half / (n - 1) as f64;
    let us: Vec<f64> = (0..n).map(|b| -half + b as f64 * step).collect();
    let mut w: Vec<f64> = us.iter().map(|u| (-0.5 * u * u).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    (us.into_iter().map(|u| u * sd).collect(), w)
}

/// Mean and variance of `f(t, u)` under the product grid measure.
fn moments(ts: &[f64], wt: &[f64], us: &[f64], wu: &[f64], f: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let (mut s1, mut s2) = (0.0, 0.0);
    for (t, a) in ts.iter().zip(wt) {
        for (u, b) in us.iter().zip(wu) {
            let v = f(*t, *u);
            s1 += a * b * v;
            s2 += a * b * v * v;
        }
    }
    (s1, s2 - s1 * s1)
}

/// Forward message: `theta' = (1 - varrho) theta + varrho zeta + varrho sqrt(rho) w`
/// integrated against the belief `CN(eta, kappa) CN(xi, psi)` on `theta`.
pub fn quad_across_forward(eta: C64, kappa: f64, out: &TapOut, hyper: &HyperParams) -> (C64, f64) {
    let g = 1.0 - hyper.varrho;
    let sd = (hyper.varrho * hyper.varrho * hyper.rho / 2.0).sqrt();
    let (us, wu) = noise_grid(sd, 201);
    let axis = |e: f64, x: f64, z: f64| {
        let (ts, wt) = product_grid(e, kappa / 2.0, x, out.psi / 2.0, 801);
        moments(&ts, &wt, &us, &wu, |t, u| g * t + hyper.varrho * z + u)
    };
    let (mr, vr) = axis(eta.re, out.xi.re, hyper.zeta.re);
    let (mi, vi) = axis(eta.im, out.xi.im, hyper.zeta.im);
    (c(mr, mi), vr + vi)
}

/// Backward message: the transition density read as a function of the
/// earlier amplitude, integrated against the later frame's belief.
pub fn quad_across_backward(eta: C64, kappa: f64, out: &TapOut, hyper: &HyperParams) -> (C64, f64) {
    let g = 1.0 - hyper.varrho;
    let sd = (hyper.varrho * hyper.varrho * hyper.rho / 2.0).sqrt();
    let (us, wu) = noise_grid(sd, 201);
    let axis = |e: f64, x: f64, z: f64| {
        let (ts, wt) = product_grid(e, kappa / 2.0, x, out.psi / 2.0, 801);
        moments(&ts, &wt, &us, &wu, |t, u| (t - hyper.varrho * z - u) / g)
    };
    let (mr, vr) = axis(eta.re, out.xi.re, hyper.zeta.re);
    let (mi, vi) = axis(eta.im, out.xi.im, hyper.zeta.im);
    (c(mr, mi), vr + vi)
}

pub fn random_hyper<R: Rng>(rng: &mut R) -> HyperParams {
    HyperParams {
        p01: rng.random_range(0.001..0.5),
        lambda: rng.random_range(0.05..0.5),
        zeta: rand_c(rng, 0.2),
        varrho: rng.random_range(0.01..0.6),
        rho: rng.random_range(0.2..2.0),
    }
}

/// Worst absolute error of `(eta, kappa)` and of the support message over
/// `draws` random inputs, forward then backward.
pub fn across_oracle_max_error<R: Rng>(rng: &mut R, draws: usize) -> [f64; 2] {
    let mut worst = [0.0f64; 2];
    for _ in 0..draws {
        let hyper = random_hyper(rng);
        let lam = rng.random_range(0.01..0.99);
        let eta = rand_c(rng, 0.3);
        let kappa = log_uniform(rng, 1e-3, 0.5);
        let psi = log_uniform(rng, 1e-3, 0.5);
        let xi = eta + rand_c(rng, 2.0 * (kappa + psi).sqrt());
        let out = TapOut { pi: rng.random_range(0.01..0.99), xi, psi };

        let p10 = hyper.p10();
        let w1 = out.pi * lam;
        let w0 = (1.0 - out.pi) * (1.0 - lam);

        let (l, e, k) = across_forward_tap(lam, eta, kappa, &out, &hyper);
        let (qe, qk) = quad_across_forward(eta, kappa, &out, &hyper);
        let ql = (w1 * (1.0 - hyper.p01) + w0 * p10) / (w0 + w1);
        worst[0] = worst[0].max((e - qe).norm()).max((k - qk).abs()).max((l - ql).abs());

        let (l, e, k) = across_backward_tap(lam, eta, kappa, &out, &hyper);
        let (qe, qk) = quad_across_backward(eta, kappa, &out, &hyper);
        let on = w1 * (1.0 - hyper.p01) + w0 * hyper.p01;
        let off = w1 * p10 + w0 * (1.0 - p10);
        worst[1] = worst[1].max((e - qe).norm()).max((k - qk).abs()).max((l - on / (on + off)).abs());
    }
    worst
}

// ---------------------------------------------------------------------------
// Symbol-wise MAP detection over a short-memory ISI trellis.

/// Per-position candidate symbols; index into these is the trellis label.
pub type Candidates = Vec<Vec<C64>>;

/// Posterior symbol probabilities by forward-backward over the trellis of
/// the last `h.len() - 1` symbols, `y_m = sum_i h_i x_{m-i} + CN(0, nv)`.
pub fn map_symbol_probs(y: &[C64], h: &[C64], cand: &Candidates, nv: f64) -> Vec<Vec<f64>> {
    let mem = h.len() - 1;
    let n = y.len();
    let width = cand.iter().map(Vec::len).max().unwrap();
    // A state lists the labels of x_{m}, x_{m-1}, ..., x_{m-mem+1}.
    let n_states = width.pow(mem as u32);
    let digit = |s: usize, d: usize| (s / width.pow(d as u32)) % width;
    let valid = |m: usize, s: usize| (0..mem).all(|d| if m < d { digit(s, d) == 0 } else { digit(s, d) < cand[m - d].len() });
    let sym = |m: usize, lab: usize| if m < cand.len() { cand[m][lab] } else { c(0.0, 0.0) };
    let shift = |s: usize, lab: usize| (s * width + lab) % n_states;
    let branch = |m: usize, prev: usize, lab: usize| {
        let mut z = h[0] * sym(m, lab);
        for i in 1..=mem {
            if m >= i {
                z += h[i] * sym(m - i, digit(prev, i - 1));
            }
        }
        -(y[m] - z).norm_sqr() / nv
    };
    let ninf = f64::NEG_INFINITY;
    let lse = |a: f64, b: f64| if a == ninf { b } else if b == ninf { a } else { a.max(b) + (-(a - b).abs()).exp().ln_1p() };
    // alpha[m][s]: state after consuming symbol m.
    let mut alpha = vec![vec![ninf; n_states]; n];
    for m in 0..n {
        for prev in 0..n_states {
            let a_prev = if m == 0 { if prev == 0 { 0.0 } else { ninf } } else { alpha[m - 1][prev] };
            if a_prev == ninf || (m > 0 && !valid(m - 1, prev)) {
                continue;
            }
            for lab in 0..cand[m].len() {
                let s = shift(prev, lab);
                alpha[m][s] = lse(alpha[m][s], a_prev + branch(m, prev, lab));
            }
        }
    }
    let mut beta = vec![vec![ninf; n_states]; n];
    beta[n - 1].iter_mut().for_each(|b| *b = 0.0);
    for m in (0..n - 1).rev() {
        for s in 0..n_states {
            if alpha[m][s] == ninf {
                continue;
            }
            for lab in 0..cand[m + 1].len() {
                let t = shift(s, lab);
                beta[m][s] = lse(beta[m][s], beta[m + 1][t] + branch(m + 1, s, lab));
            }
        }
    }
    (0..n)
        .map(|m| {
            let mut lp = vec![ninf; cand[m].len()];
            for s in 0..n_states {
                if alpha[m][s] != ninf {
                    lp[s % width] = lse(lp[s % width], alpha[m][s] + beta[m][s]);
                }
            }
            let top = lp.iter().copied().fold(ninf, f64::max);
            let mut p: Vec<f64> = lp.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            p
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Range invariants of every stage on one random draw.

fn check(ok: bool, what: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

fn prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

fn fin(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Random input magnitudes span many decades, including near-degenerate
/// variances and extreme LLRs.
pub fn stage_invariants<R: Rng>(rng: &mut R) -> Result<(), String> {
    let hyper = random_hyper(rng);
    let wide = |rng: &mut R| log_uniform(rng, 1e-10, 1e6);
    let p = |rng: &mut R| if rng.random_bool(0.1) { [0.0, 1.0][rng.random_range(0..2)] } else { rng.random::<f64>() };

    let kappa_f = if rng.random_bool(0.2) { f64::INFINITY } else { wide(rng) };
    let kappa_b = if rng.random_bool(0.3) { f64::INFINITY } else { wide(rng) };
    let prior = into_tap(p(rng), p(rng), rand_c(rng, 2.0), kappa_f, rand_c(rng, 2.0), kappa_b);
    check(prob(prior.pi) && fin(prior.xi) && prior.psi > 0.0, "into")?;

    let (q, qv) = (rand_c(rng, 5.0), wide(rng));
    let post = channel_posterior_tap(&prior, q, qv);
    check(prob(post.pi) && post.nu >= VAR_FLOOR && fin(post.mean()), "posterior")?;
    check(post.var().is_finite() && post.var() >= 0.0, "posterior variance")?;

    let out = out_tap(&prior, q, qv);
    check(prob(out.pi) && fin(out.xi) && out.psi >= VAR_FLOOR && !out.psi.is_nan(), "out")?;

    let (l, e, k) = across_forward_tap(p(rng), rand_c(rng, 1.0), kappa_f, &out, &hyper);
    check(prob(l) && fin(e) && k > 0.0 && !k.is_nan(), "across forward")?;
    let (l, e, k) = across_backward_tap(p(rng), rand_c(rng, 1.0), kappa_b, &out, &hyper);
    check(prob(l) && fin(e) && k > 0.0 && !k.is_nan(), "across backward")?;

    let qpsk = SymbolAlphabet::qpsk_gray();
    let llr: Vec<f64> = (0..2).map(|_| rng.random_range(-60.0..60.0)).collect();
    let pmf = apriori_symbol_probs(&llr, &qpsk);
    check(pmf.iter().all(|&x| prob(x)) && (pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12, "symbol prior")?;
    let (r, rv) = (rand_c(rng, 3.0), wide(rng));
    let (xm, xv) = symbol_posterior(r, rv, &llr, &qpsk);
    check(fin(xm) && xm.norm() <= 1.0 + 1e-12 && (0.0..=1.0 + 1e-12).contains(&xv), "symbol posterior")?;
    let ext = extrinsic_llr(&[r], &[rv], &llr, &qpsk);
    check(ext.iter().all(|x| x.is_finite() && x.abs() <= LLR_CLAMP), "extrinsic llr")?;

    let m_len = rng.random_range(3..10);
    let l_len = rng.random_range(1..=m_len.min(4));
    let h: Vec<C64> = (0..l_len).map(|_| rand_c(rng, 2.0)).collect();
    let hv: Vec<f64> = (0..l_len).map(|_| wide(rng)).collect();
    let x: Vec<C64> = (0..m_len).map(|_| rand_c(rng, 1.0)).collect();
    let xv: Vec<f64> = (0..m_len).map(|_| log_uniform(rng, 1e-10, 1.0)).collect();
    let s: Vec<C64> = (0..m_len).map(|_| rand_c(rng, 1.0)).collect();
    let zc = z_conditional(&h, &hv, &x, &xv, &s);
    check(zc.p_var.iter().zip(&zc.p_var_bar).all(|(a, b)| *a >= VAR_FLOOR && *a >= *b && *b >= 0.0), "p variance")?;
    let y: Vec<C64> = (0..m_len).map(|_| rand_c(rng, 3.0)).collect();
    let nv = wide(rng);
    let (zh, zv) = z_posterior(&zc.p_hat, &zc.p_var, &y, nv);
    check(zh.iter().all(|z| fin(*z)), "z mean")?;
    check(zv.iter().zip(&zc.p_var).all(|(v, pv)| *v >= VAR_FLOOR && *v <= pv.min(nv).max(VAR_FLOOR) * (1.0 + 1e-12)), "z variance")?;
    let (sh, sv) = s_update(&zh, &zc.p_hat, &zc.p_var, &zv);
    check(sv.iter().all(|v| *v >= 0.0 && v.is_finite()) && sh.iter().all(|z| fin(*z)), "s")?;
    let ext = extrinsic_update(&h, &hv, &x, &xv, &sh, &sv);
    let var_ok = |v: &f64| (VAR_FLOOR..=VAR_CEIL).contains(v);
    check(ext.q_var.iter().all(var_ok) && ext.r_var.iter().all(var_ok), "extrinsic variance")?;

    let frames = rng.random_range(1..5);
    let taps = rng.random_range(1..4);
    let outs: Vec<Vec<TapOut>> = (0..frames)
        .map(|_| {
            (0..taps)
                .map(|_| TapOut { pi: p(rng), xi: rand_c(rng, 1.0), psi: if rng.random_bool(0.2) { f64::INFINITY } else { wide(rng) } })
                .collect()
        })
        .collect();
    let moments = collect_moments(&outs, &hyper).map_err(|e| e.to_string())?;
    check(moments.s_marginal.iter().flatten().all(|&x| prob(x)), "support marginal")?;
    check(moments.s_pair.iter().flatten().all(|&x| prob(x)), "support pair")?;
    check(moments.theta_var.iter().flatten().all(|&x| x >= 0.0 && x.is_finite()), "amplitude variance")?;
    let next = em_update(&moments, &hyper);
    check(next.validate().is_ok() && prob(next.p10()), "em update")?;
    Ok(())
}

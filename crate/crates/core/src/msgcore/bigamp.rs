//! Bilinear AMP iterations inside one frame, in time or frequency domain.
//!
//! The selection tensor has `z_m^{(i,j)} = 1` exactly when `m = i + j`
//! (zero-based), so every sum over `(i, j)` collapses to a sum over taps.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::local::{channel_posterior_tap, TapPrior};
use super::symbol::symbol_posterior;
use crate::dft::Dft;
use crate::math::{clamp_var, clamp_var_finite, norm_sqr, PINNED_VAR, VAR_FLOOR};
use crate::modem::{FrameConfig, SymbolAlphabet};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Domain {
    #[default]
    Time,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WithinConfig {
    pub t_inner: usize,
    pub breakout_tol: f64,
    pub domain: Domain,
    /// Weight of the new iterate in `(p_hat, p_var, h_hat, x_hat)`.
    pub damping: f64,
}

impl Default for WithinConfig {
    fn default() -> Self {
        WithinConfig { t_inner: 25, breakout_tol: 1e-4, domain: Domain::Time, damping: 0.5 }
    }
}

/// Conditional mean and variance of `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZConditional {
    /// `z^{(*,*)}`, the plug-in product of the current estimates.
    pub z_bar: Vec<C64>,
    pub p_hat: Vec<C64>,
    pub p_var: Vec<f64>,
    pub p_var_bar: Vec<f64>,
}

/// Extrinsic Gaussian parameters of the channel and the symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrinsic {
    pub q_hat: Vec<C64>,
    pub q_var: Vec<f64>,
    pub r_hat: Vec<C64>,
    pub r_var: Vec<f64>,
}

pub fn z_conditional(h_hat: &[C64], h_var: &[f64], x_hat: &[C64], x_var: &[f64], s_hat: &[C64]) -> ZConditional {
    let m_len = x_hat.len();
    let mut out = ZConditional {
        z_bar: vec![ZERO; m_len],
        p_hat: vec![ZERO; m_len],
        p_var: vec![0.0; m_len],
        p_var_bar: vec![0.0; m_len],
    };
    for m in 0..m_len {
        let mut z = ZERO;
        let mut bar = 0.0;
        let mut both = 0.0;
        for i in 0..h_hat.len().min(m + 1) {
            let j = m - i;
            z += h_hat[i] * x_hat[j];
            bar += x_var[j] * h_hat[i].norm_sqr() + h_var[i] * x_hat[j].norm_sqr();
            both += h_var[i] * x_var[j];
        }
        out.z_bar[m] = z;
        out.p_var_bar[m] = bar;
        out.p_var[m] = clamp_var(bar + both);
        out.p_hat[m] = z - s_hat[m] * bar;
    }
    out
}

/// Combine the prediction `CN(p_hat, p_var)` with `y = z + CN(0, noise_var)`.
pub fn z_posterior(p_hat: &[C64], p_var: &[f64], y: &[C64], noise_var: f64) -> (Vec<C64>, Vec<f64>) {
    p_hat
        .iter()
        .zip(p_var)
        .zip(y)
        .map(|((&p, &v), &y)| {
            if v.is_infinite() {
                return (y, clamp_var(noise_var));
            }
            if noise_var.is_infinite() {
                return (p, clamp_var(v));
            }
            let w = v / (v + noise_var);
            (y * w + p * (1.0 - w), clamp_var(noise_var * w))
        })
        .unzip()
}

pub fn s_update(z_hat: &[C64], p_hat: &[C64], p_var: &[f64], z_var: &[f64]) -> (Vec<C64>, Vec<f64>) {
    z_hat
        .iter()
        .zip(p_hat)
        .zip(p_var.iter().zip(z_var))
        .map(|((&z, &p), (&v, &zv))| ((z - p) / v, ((1.0 - zv / v) / v).max(0.0)))
        .unzip()
}

pub fn extrinsic_update(
    h_hat: &[C64],
    h_var: &[f64],
    x_hat: &[C64],
    x_var: &[f64],
    s_hat: &[C64],
    s_var: &[f64],
) -> Extrinsic {
    let (l, m_len) = (h_hat.len(), x_hat.len());
    let mut q_hat = vec![ZERO; l];
    let mut q_var = vec![0.0; l];
    for i in 0..l.min(m_len) {
        let (mut prec, mut ons, mut corr) = (0.0, 0.0, ZERO);
        for m in i..m_len {
            let x = x_hat[m - i];
            prec += s_var[m] * x.norm_sqr();
            ons += s_var[m] * x_var[m - i];
            corr += s_hat[m] * x.conj();
        }
        let v = if prec > 0.0 { clamp_var_finite(1.0 / prec) } else { clamp_var_finite(f64::INFINITY) };
        q_var[i] = v;
        q_hat[i] = h_hat[i] * (1.0 - v * ons) + corr * v;
    }
    for i in m_len..l {
        q_var[i] = clamp_var_finite(f64::INFINITY);
        q_hat[i] = h_hat[i];
    }
    let mut r_hat = vec![ZERO; m_len];
    let mut r_var = vec![0.0; m_len];
    for j in 0..m_len {
        let (mut prec, mut ons, mut corr) = (0.0, 0.0, ZERO);
        for i in 0..l.min(m_len - j) {
            let m = i + j;
            prec += s_var[m] * h_hat[i].norm_sqr();
            ons += s_var[m] * h_var[i];
            corr += s_hat[m] * h_hat[i].conj();
        }
        let v = if prec > 0.0 { clamp_var_finite(1.0 / prec) } else { clamp_var_finite(f64::INFINITY) };
        r_var[j] = v;
        r_hat[j] = x_hat[j] * (1.0 - v * ons) + corr * v;
    }
    Extrinsic { q_hat, q_var, r_hat, r_var }
}

/// Frequency-domain conditional of `z_bar = F z / sqrt(M)` with `F` unitary.
/// `s_hat` lives in the same domain; variances are averaged per frame.
pub fn z_conditional_fd(dft: &Dft, h_hat: &[C64], h_var: &[f64], x_hat: &[C64], x_var: &[f64], s_hat: &[C64]) -> ZConditional {
    let m = dft.len() as f64;
    let xf = dft.forward(x_hat);
    let hf = dft.forward(h_hat);
    let mx = x_var.iter().sum::<f64>() / m;
    let mh = h_var.iter().sum::<f64>() / m;
    let z_bar: Vec<C64> = xf.iter().zip(&hf).map(|(a, b)| a * b).collect();
    let p_var_bar: Vec<f64> = xf.iter().zip(&hf).map(|(a, b)| mx * b.norm_sqr() + mh * a.norm_sqr()).collect();
    let p_var = p_var_bar.iter().map(|v| clamp_var(v + mx * mh)).collect();
    let p_hat = z_bar.iter().zip(&p_var_bar).zip(s_hat).map(|((z, v), s)| z - s * *v).collect();
    ZConditional { z_bar, p_hat, p_var, p_var_bar }
}

pub fn extrinsic_update_fd(
    dft: &Dft,
    h_hat: &[C64],
    h_var: &[f64],
    x_hat: &[C64],
    x_var: &[f64],
    s_hat: &[C64],
    s_var: &[f64],
) -> Extrinsic {
    let m = dft.len() as f64;
    let l = h_hat.len();
    let xf = dft.forward(x_hat);
    let hf = dft.forward(h_hat);
    let (ss, sh, sx) = (s_var.iter().sum::<f64>(), h_var.iter().sum::<f64>(), x_var.iter().sum::<f64>());
    let inv = |prec: f64| if prec > 0.0 { clamp_var_finite(m / prec) } else { clamp_var_finite(f64::INFINITY) };

    let r_v = inv(s_var.iter().zip(&hf).map(|(s, h)| s * h.norm_sqr()).sum());
    let back_x = dft.inverse(&hf.iter().zip(s_hat).map(|(h, s)| h.conj() * s).collect::<Vec<_>>());
    let shrink_x = 1.0 - r_v * ss * sh / (m * m);
    let r_hat = x_hat.iter().zip(&back_x).map(|(x, b)| x * shrink_x + b * r_v).collect();

    let q_v = inv(s_var.iter().zip(&xf).map(|(s, x)| s * x.norm_sqr()).sum());
    let back_h = dft.inverse(&xf.iter().zip(s_hat).map(|(x, s)| x.conj() * s).collect::<Vec<_>>());
    let shrink_h = 1.0 - q_v * ss * sx / (m * m);
    let q_hat = h_hat.iter().zip(&back_h[..l]).map(|(h, b)| h * shrink_h + b * q_v).collect();

    Extrinsic { q_hat, q_var: vec![q_v; l], r_hat, r_var: vec![r_v; x_hat.len()] }
}

/// Ratio between the channel energy at which the inner loop is declared
/// divergent and the per-symbol received energy.
pub const DIVERGENCE_RATIO: f64 = 1e3;

/// Everything the inner iterations of one frame carry between calls.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGampState {
    pub h_hat: Vec<C64>,
    pub h_var: Vec<f64>,
    pub x_hat: Vec<C64>,
    pub x_var: Vec<f64>,
    pub q_hat: Vec<C64>,
    pub q_var: Vec<f64>,
    pub r_hat: Vec<C64>,
    pub r_var: Vec<f64>,
    pub p_hat: Vec<C64>,
    pub p_var: Vec<f64>,
    pub p_var_bar: Vec<f64>,
    pub z_hat: Vec<C64>,
    pub z_var: Vec<f64>,
    pub s_hat: Vec<C64>,
    pub s_var: Vec<f64>,
    layout: FrameConfig,
    pilot: Vec<C64>,
    /// Whether `p_hat`/`p_var` hold a previous iterate (for damping).
    primed: bool,
    domain: Option<Domain>,
}

/// Summary of one call to [`within_stage`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WithinReport {
    pub iterations: usize,
    pub converged: bool,
    /// A non-finite or runaway iterate was produced and rolled back.
    pub diverged: bool,
}

impl BiGampState {
    /// Initial state: pilots pinned, data flat, guard pinned to zero, and the
    /// given extrinsic channel estimate.
    pub fn new(layout: &FrameConfig, pilot: &[C64], q_init: Vec<C64>, q_var_init: Vec<f64>) -> Result<Self> {
        let m = layout.frame_len();
        let l = layout.channel_len;
        if pilot.len() != layout.n_pilot {
            return Err(Error::LengthMismatch { what: "pilot", expected: layout.n_pilot, got: pilot.len() });
        }
        if q_init.len() != l || q_var_init.len() != l {
            return Err(Error::LengthMismatch { what: "channel initialisation", expected: l, got: q_init.len() });
        }
        let mut r_hat = vec![ZERO; m];
        let mut r_var = vec![PINNED_VAR; m];
        r_hat[..layout.n_pilot].copy_from_slice(pilot);
        for v in &mut r_var[layout.data_range()] {
            *v = 1.0;
        }
        Ok(BiGampState {
            h_hat: vec![ZERO; l],
            h_var: vec![0.0; l],
            x_hat: r_hat.clone(),
            x_var: r_var.clone(),
            q_hat: q_init,
            q_var: q_var_init.into_iter().map(clamp_var_finite).collect(),
            r_hat,
            r_var,
            p_hat: vec![ZERO; m],
            p_var: vec![1.0; m],
            p_var_bar: vec![0.0; m],
            z_hat: vec![ZERO; m],
            z_var: vec![0.0; m],
            s_hat: vec![ZERO; m],
            s_var: vec![0.0; m],
            layout: *layout,
            pilot: pilot.to_vec(),
            primed: false,
            domain: None,
        })
    }

    pub fn layout(&self) -> &FrameConfig {
        &self.layout
    }

    /// Posterior channel moments from the current extrinsic estimate.
    pub fn channel_posterior(&self, prior: &[TapPrior]) -> (Vec<C64>, Vec<f64>) {
        prior
            .iter()
            .zip(self.q_hat.iter().zip(&self.q_var))
            .map(|(p, (&q, &v))| {
                let post = channel_posterior_tap(p, q, v);
                (post.mean(), post.var())
            })
            .unzip()
    }

    /// Step I for the symbols: data from the extrinsic estimate and priors,
    /// pilot and guard pinned.
    fn symbol_step(&self, apriori: &[f64], alphabet: &SymbolAlphabet) -> (Vec<C64>, Vec<f64>) {
        let q = alphabet.bits_per_symbol();
        let mut x = vec![ZERO; self.r_hat.len()];
        let mut v = vec![PINNED_VAR; self.r_hat.len()];
        x[..self.layout.n_pilot].copy_from_slice(&self.pilot);
        for (d, j) in self.layout.data_range().enumerate() {
            let (m, var) = symbol_posterior(self.r_hat[j], self.r_var[j], &apriori[d * q..(d + 1) * q], alphabet);
            x[j] = m;
            v[j] = clamp_var(var);
        }
        (x, v)
    }

    fn pin_extrinsic(&mut self) {
        for j in self.layout.pilot_range() {
            self.r_hat[j] = self.pilot[j];
            self.r_var[j] = PINNED_VAR;
        }
        for j in self.layout.guard_range() {
            self.r_hat[j] = ZERO;
            self.r_var[j] = PINNED_VAR;
        }
    }

    fn is_finite(&self) -> bool {
        let c = |v: &[C64]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        let r = |v: &[f64]| v.iter().all(|x| x.is_finite());
        c(&self.q_hat) && c(&self.r_hat) && c(&self.z_hat) && c(&self.s_hat) && r(&self.q_var) && r(&self.r_var) && r(&self.p_var)
    }
}

/// Inputs of the within stage that stay fixed across inner iterations.
#[derive(Debug, Clone, Copy)]
pub struct WithinInput<'a> {
    pub y: &'a [C64],
    pub noise_var: f64,
    pub prior: &'a [TapPrior],
    /// `Q` a priori LLRs per data symbol.
    pub apriori: &'a [f64],
    pub alphabet: &'a SymbolAlphabet,
}

/// Run up to `t_inner` iterations of steps I-V, then refresh the posterior
/// channel and symbol estimates from the final extrinsic values.
pub fn within_stage(state: &mut BiGampState, input: &WithinInput<'_>, cfg: &WithinConfig, dft: Option<&Dft>) -> Result<WithinReport> {
    let m_len = state.layout.frame_len();
    let l = state.layout.channel_len;
    if input.y.len() != m_len {
        return Err(Error::LengthMismatch { what: "received frame", expected: m_len, got: input.y.len() });
    }
    if input.prior.len() != l {
        return Err(Error::LengthMismatch { what: "local prior", expected: l, got: input.prior.len() });
    }
    let q = input.alphabet.bits_per_symbol();
    if input.apriori.len() != state.layout.n_data * q {
        return Err(Error::LengthMismatch { what: "a priori LLRs", expected: state.layout.n_data * q, got: input.apriori.len() });
    }
    if state.domain != Some(cfg.domain) {
        // Quantities tied to the domain of z are reset on a switch.
        state.s_hat.iter_mut().for_each(|s| *s = ZERO);
        state.s_var.iter_mut().for_each(|s| *s = 0.0);
        state.primed = false;
        state.domain = Some(cfg.domain);
    }
    let owned_dft;
    let fd = match cfg.domain {
        Domain::Time => None,
        Domain::Frequency => Some(match dft {
            Some(d) if d.len() == m_len => d,
            _ => {
                owned_dft = Dft::new(m_len);
                &owned_dft
            }
        }),
    };
    let (y_obs, noise_obs) = match fd {
        None => (input.y.to_vec(), input.noise_var),
        Some(d) => {
            let s = 1.0 / (m_len as f64).sqrt();
            (d.forward(input.y).into_iter().map(|v| v * s).collect(), input.noise_var / m_len as f64)
        }
    };
    let beta = cfg.damping.clamp(f64::MIN_POSITIVE, 1.0);
    // A channel estimate far above what the received energy can support
    // means the iteration has run away.
    let occupied = (state.layout.n_pilot + state.layout.n_data).max(1) as f64;
    let energy_cap = DIVERGENCE_RATIO * (norm_sqr(input.y) / occupied).max(input.noise_var).max(VAR_FLOOR);
    let mut report = WithinReport::default();
    for _ in 0..cfg.t_inner {
        let backup = state.clone();
        report.iterations += 1;

        // Step I.
        let (h, hv) = state.channel_posterior(input.prior);
        let (x, xv) = state.symbol_step(input.apriori, input.alphabet);
        if state.primed && beta < 1.0 {
            state.h_hat = blend(&h, &state.h_hat, beta);
            state.x_hat = blend(&x, &state.x_hat, beta);
        } else {
            state.h_hat = h;
            state.x_hat = x;
        }
        state.h_var = hv;
        state.x_var = xv;

        // Step II.
        let zc = match fd {
            None => z_conditional(&state.h_hat, &state.h_var, &state.x_hat, &state.x_var, &state.s_hat),
            Some(d) => z_conditional_fd(d, &state.h_hat, &state.h_var, &state.x_hat, &state.x_var, &state.s_hat),
        };
        if state.primed && beta < 1.0 {
            state.p_hat = blend(&zc.p_hat, &state.p_hat, beta);
            state.p_var = zc.p_var.iter().zip(&state.p_var).map(|(n, o)| beta * n + (1.0 - beta) * o).collect();
        } else {
            state.p_hat = zc.p_hat;
            state.p_var = zc.p_var;
        }
        state.p_var_bar = zc.p_var_bar;

        // Steps III and IV.
        let previous_z = core::mem::take(&mut state.z_hat);
        let (z, zv) = z_posterior(&state.p_hat, &state.p_var, &y_obs, noise_obs);
        state.z_hat = z;
        state.z_var = zv;
        let (s, sv) = s_update(&state.z_hat, &state.p_hat, &state.p_var, &state.z_var);
        state.s_hat = s;
        state.s_var = sv;

        // Step V.
        let ext = match fd {
            None => extrinsic_update(&state.h_hat, &state.h_var, &state.x_hat, &state.x_var, &state.s_hat, &state.s_var),
            Some(d) => extrinsic_update_fd(d, &state.h_hat, &state.h_var, &state.x_hat, &state.x_var, &state.s_hat, &state.s_var),
        };
        state.q_hat = ext.q_hat;
        state.q_var = ext.q_var;
        state.r_hat = ext.r_hat;
        state.r_var = ext.r_var;
        state.pin_extrinsic();

        if !state.is_finite() || norm_sqr(&state.q_hat) > energy_cap {
            *state = backup;
            report.diverged = true;
            break;
        }
        let was_primed = state.primed;
        state.primed = true;
        if was_primed {
            let prev = norm_sqr(&previous_z).sqrt();
            let diff = state.z_hat.iter().zip(&previous_z).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            if prev > 0.0 && diff / prev < cfg.breakout_tol {
                report.converged = true;
                break;
            }
        }
    }
    let (h, hv) = state.channel_posterior(input.prior);
    state.h_hat = h;
    state.h_var = hv;
    let (x, xv) = state.symbol_step(input.apriori, input.alphabet);
    state.x_hat = x;
    state.x_var = xv;
    Ok(report)
}

fn blend(new: &[C64], old: &[C64], beta: f64) -> Vec<C64> {
    new.iter().zip(old).map(|(n, o)| n * beta + o * (1.0 - beta)).collect()
}

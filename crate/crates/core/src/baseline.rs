//! Reference receivers: pilot-only LMMSE channel estimation followed by a
//! sliding-window MMSE turbo equalizer, and the single-frame joint equalizer.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{CMatrix, Cholesky};
use crate::math::{clamp_var, clamp_var_finite, PINNED_VAR};
use crate::modem::{FrameConfig, SymbolAlphabet};
use crate::msgcore::{apriori_symbol_probs, extrinsic_llr};
use crate::turbo::{EqualizerOutput, IterationRecord, Link};
use crate::{Error, Result, C64};

pub use crate::turbo::run_single_frame as jced_single_frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmseConfig {
    /// Observations after the target symbol.
    pub n1: usize,
    /// Observations before the target symbol.
    pub n2: usize,
    pub t_turbo: usize,
    pub decoder_iters: usize,
}

impl Default for MmseConfig {
    fn default() -> Self {
        MmseConfig { n1: 15, n2: 20, t_turbo: 3, decoder_iters: crate::fec::DEFAULT_DECODER_ITERS }
    }
}

impl MmseConfig {
    pub fn validate(&self, frame_len: usize) -> Result<()> {
        if self.n1 + self.n2 + 1 > frame_len {
            return Err(Error::Config("MMSE window longer than the frame"));
        }
        if self.t_turbo == 0 || self.decoder_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1"));
        }
        Ok(())
    }
}

/// Pilot convolution matrix over the rows whose support is pilot or the
/// zero guard before the frame: `P[m][i] = x_{m-i}` for `m < N_p`.
pub fn pilot_matrix(pilot: &[C64], l: usize) -> CMatrix {
    let mut p = CMatrix::zeros(pilot.len(), l);
    for m in 0..pilot.len() {
        for i in 0..l.min(m + 1) {
            p[(m, i)] = pilot[m - i];
        }
    }
    p
}

/// Ridge-regularised least squares on the pilot span. Returns the estimate and
/// its error covariance `noise_var (P^H P + noise_var I)^-1`.
pub fn lmmse_channel_estimate(y_pilot: &[C64], pilot: &[C64], l: usize, noise_var: f64) -> Result<(Vec<C64>, CMatrix)> {
    if y_pilot.len() != pilot.len() {
        return Err(Error::LengthMismatch { what: "pilot observations", expected: pilot.len(), got: y_pilot.len() });
    }
    if pilot.len() < l {
        return Err(Error::Config("pilot span shorter than the channel"));
    }
    let p = pilot_matrix(pilot, l);
    let mut g = p.gram();
    g.add_diagonal(noise_var.max(0.0));
    let chol = Cholesky::new_regularized(&g);
    let h = chol.solve(&p.adjoint_mul(y_pilot));
    let mut cov = chol.inverse();
    for r in 0..l {
        for c in 0..l {
            cov[(r, c)] *= noise_var;
        }
    }
    Ok((h, cov))
}

/// Prior mean and variance of every frame symbol: pilots and guard are known,
/// data symbols come from the a priori LLRs.
pub fn symbol_priors(frame: &FrameConfig, pilot: &[C64], apriori: &[f64], alphabet: &SymbolAlphabet) -> (Vec<C64>, Vec<f64>) {
    let m = frame.frame_len();
    let q = alphabet.bits_per_symbol();
    let mut mean = vec![C64::new(0.0, 0.0); m];
    let mut var = vec![PINNED_VAR; m];
    mean[frame.pilot_range()].copy_from_slice(pilot);
    for (j, idx) in frame.data_range().enumerate() {
        let pmf = apriori_symbol_probs(&apriori[j * q..(j + 1) * q], alphabet);
        let mu: C64 = pmf.iter().zip(alphabet.points()).map(|(p, a)| a * p).sum();
        let e2: f64 = pmf.iter().zip(alphabet.points()).map(|(p, a)| p * a.norm_sqr()).sum();
        mean[idx] = mu;
        var[idx] = clamp_var(e2 - mu.norm_sqr());
    }
    (mean, var)
}

/// Extrinsic Gaussian statistics `(r_hat, r_var)` of every data symbol from
/// the per-symbol MMSE filter over observations `n - n2 ..= n + n1`.
///
/// The target's own prior is replaced by zero mean and unit variance so the
/// output excludes it.
pub fn mmse_filter(
    y: &[C64],
    h: &[C64],
    prior_mean: &[C64],
    prior_var: &[f64],
    targets: core::ops::Range<usize>,
    cfg: &MmseConfig,
    noise_var: f64,
) -> (Vec<C64>, Vec<f64>) {
    let m_len = y.len();
    let l = h.len();
    let mut r_hat = Vec::with_capacity(targets.len());
    let mut r_var = Vec::with_capacity(targets.len());
    for n in targets {
        let lo = n.saturating_sub(cfg.n2);
        let hi = (n + cfg.n1).min(m_len - 1);
        let rows = hi - lo + 1;
        // Symbols reaching the window: indices lo-(L-1) ..= hi.
        let s_lo = lo.saturating_sub(l - 1);
        let cols = hi - s_lo + 1;
        let mut hm = CMatrix::zeros(rows, cols);
        for r in 0..rows {
            let m = lo + r;
            for (i, &hv) in h.iter().enumerate() {
                if m >= i && m - i >= s_lo {
                    hm[(r, m - i - s_lo)] = hv;
                }
            }
        }
        let t = n - s_lo;
        let var_of = |c: usize| if c == t { 1.0 } else { prior_var[s_lo + c] };
        let mean_of = |c: usize| if c == t { C64::new(0.0, 0.0) } else { prior_mean[s_lo + c] };
        let mut cov = CMatrix::zeros(rows, rows);
        for a in 0..rows {
            for b in a..rows {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..cols {
                    acc += hm[(a, c)] * hm[(b, c)].conj() * var_of(c);
                }
                cov[(a, b)] = acc;
                cov[(b, a)] = acc.conj();
            }
        }
        cov.add_diagonal(noise_var.max(0.0));
        let resid: Vec<C64> = (0..rows)
            .map(|r| y[lo + r] - (0..cols).map(|c| hm[(r, c)] * mean_of(c)).sum::<C64>())
            .collect();
        let col: Vec<C64> = (0..rows).map(|r| hm[(r, t)]).collect();
        let f = Cholesky::new_regularized(&cov).solve(&col);
        let mu = f.iter().zip(&col).map(|(a, b)| a.conj() * b).sum::<C64>().re;
        let est: C64 = f.iter().zip(&resid).map(|(a, b)| a.conj() * b).sum();
        if mu > 1e-12 {
            r_hat.push(est / mu);
            r_var.push(clamp_var_finite((1.0 - mu).max(0.0) / mu));
        } else {
            r_hat.push(C64::new(0.0, 0.0));
            r_var.push(crate::math::VAR_CEIL);
        }
    }
    (r_hat, r_var)
}

/// One equalizer pass on one frame: extrinsic LLRs of the data bits.
pub fn mmse_turbo_equalize(
    link: &Link,
    y: &[C64],
    h: &[C64],
    apriori: &[f64],
    cfg: &MmseConfig,
    noise_var: f64,
) -> Result<Vec<f64>> {
    let frame = &link.frame;
    if y.len() != frame.frame_len() {
        return Err(Error::LengthMismatch { what: "received frame", expected: frame.frame_len(), got: y.len() });
    }
    let (mean, var) = symbol_priors(frame, &link.pilot, apriori, &link.alphabet);
    let (r_hat, r_var) = mmse_filter(y, h, &mean, &var, frame.data_range(), cfg, noise_var);
    Ok(extrinsic_llr(&r_hat, &r_var, apriori, &link.alphabet))
}

/// LMMSE estimate on the pilots, then `t_turbo` rounds of MMSE equalization
/// and decoding, independently per frame.
pub fn run_mmse_turbo(link: &Link, y: &[Vec<C64>], cfg: &MmseConfig, noise_var: f64) -> Result<EqualizerOutput> {
    let frame = &link.frame;
    cfg.validate(frame.frame_len())?;
    let l = frame.channel_len;
    let k_len = y.len();
    let mut estimates = Vec::with_capacity(k_len);
    let mut vars = Vec::with_capacity(k_len);
    for yk in y {
        if yk.len() != frame.frame_len() {
            return Err(Error::LengthMismatch { what: "received frame", expected: frame.frame_len(), got: yk.len() });
        }
        let (h, cov) = lmmse_channel_estimate(&yk[frame.pilot_range()], &link.pilot, l, noise_var)?;
        estimates.push(h);
        vars.push((0..l).map(|i| clamp_var(cov[(i, i)].re)).collect::<Vec<f64>>());
    }
    let mut apriori = vec![vec![0.0; frame.n_code()]; k_len];
    let mut iterations = Vec::with_capacity(cfg.t_turbo);
    for _ in 0..cfg.t_turbo {
        let mut eq_llrs = Vec::with_capacity(k_len);
        let mut info_bits = Vec::with_capacity(k_len);
        let mut next = Vec::with_capacity(k_len);
        let mut decoded = 0;
        for k in 0..k_len {
            let llr = mmse_turbo_equalize(link, &y[k], &estimates[k], &apriori[k], cfg, noise_var)?;
            let (apr, bits, ok) = link.decode(&llr, cfg.decoder_iters)?;
            decoded += ok as usize;
            eq_llrs.push(llr);
            info_bits.push(bits);
            next.push(apr);
        }
        let used = core::mem::replace(&mut apriori, next);
        iterations.push(IterationRecord {
            channel_estimates: estimates.clone(),
            info_bits,
            apriori: used,
            equalizer_llrs: eq_llrs,
            inner_iterations: 0,
            diverged_frames: 0,
            decoded_frames: decoded,
            hyper: None,
        });
    }
    let last = iterations.last().expect("t_turbo >= 1");
    Ok(EqualizerOutput {
        info_bits: last.info_bits.clone(),
        extrinsic_llrs: last.equalizer_llrs.clone(),
        channel_estimates: estimates,
        channel_vars: vars,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sample_cn;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        (0..n).map(|_| sample_cn(rng, C64::new(0.0, 0.0), 1.0)).collect()
    }

    fn to_na(m: &CMatrix) -> DMatrix<C64> {
        DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
    }

    #[test]
    fn lmmse_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let pilot: Vec<C64> = (0..20).map(|_| C64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)).collect();
            let y = rand_vec(20, &mut rng);
            let nv = rng.random_range(0.01..1.0);
            let (h, cov) = lmmse_channel_estimate(&y, &pilot, 6, nv).unwrap();
            let p = to_na(&pilot_matrix(&pilot, 6));
            let g = p.adjoint() * &p + DMatrix::identity(6, 6) * C64::new(nv, 0.0);
            let inv = g.clone().try_inverse().unwrap();
            let expect = &inv * p.adjoint() * DVector::from_vec(y.clone());
            for i in 0..6 {
                assert!((h[i] - expect[i]).norm() < 1e-10);
                for j in 0..6 {
                    assert!((cov[(i, j)] - inv[(i, j)] * nv).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn lmmse_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pilot: Vec<C64> = crate::modem::pilot_sequence(63).unwrap().into_iter().map(|p| C64::new(p, 0.0)).collect();
        let h = rand_vec(25, &mut rng);
        let y: Vec<C64> = (0..63).map(|m| (0..25.min(m + 1)).map(|i| h[i] * pilot[m - i]).sum()).collect();
        let (est, _) = lmmse_channel_estimate(&y, &pilot, 25, 1e-14).unwrap();
        let err: f64 = est.iter().zip(&h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / crate::math::norm_sqr(&h);
        assert!(err < 1e-20, "{err}");
        let (est, _) = lmmse_channel_estimate(&y, &pilot, 25, 1e12).unwrap();
        assert!(crate::math::norm_sqr(&est) < 1e-12);
    }

    #[test]
    fn awgn_detection_with_identity_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alph = SymbolAlphabet::qpsk_gray();
        let n = 40;
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let x: Vec<C64> = idx.iter().map(|&i| alph.points()[i]).collect();
        let y: Vec<C64> = x.iter().map(|&v| sample_cn(&mut rng, v, 1e-3)).collect();
        let h = [C64::new(1.0, 0.0)];
        let cfg = MmseConfig { n1: 3, n2: 3, ..Default::default() };
        let (r, v) = mmse_filter(&y, &h, &vec![C64::new(0.0, 0.0); n], &vec![1.0; n], 0..n, &cfg, 1e-3);
        let llr = extrinsic_llr(&r, &v, &vec![0.0; 2 * n], &alph);
        for (j, &i) in idx.iter().enumerate() {
            for q in 0..2 {
                assert_eq!(llr[2 * j + q] < 0.0, alph.bit(i, q) == 1);
            }
        }
    }

    #[test]
    fn known_neighbours_reduce_to_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 12;
        let h = rand_vec(3, &mut rng);
        let x = rand_vec(n, &mut rng);
        let y: Vec<C64> = (0..n).map(|m| (0..3.min(m + 1)).map(|i| h[i] * x[m - i]).sum::<C64>() + sample_cn(&mut rng, C64::new(0.0, 0.0), 0.1)).collect();
        let cfg = MmseConfig { n1: 2, n2: 2, ..Default::default() };
        let (r, _) = mmse_filter(&y, &h, &x, &vec![0.0; n], 0..n, &cfg, 0.1);
        for t in 0..n {
            // With every other symbol known, only the target's taps carry information.
            let lo = t.saturating_sub(2);
            let hi = (t + 2).min(n - 1);
            let mut num = C64::new(0.0, 0.0);
            let mut den = 0.0;
            for m in lo..=hi {
                if m >= t && m - t < 3 {
                    let g = h[m - t];
                    let clean: C64 = (0..3.min(m + 1)).filter(|&i| m - i != t).map(|i| h[i] * x[m - i]).sum();
                    num += g.conj() * (y[m] - clean);
                    den += g.norm_sqr();
                }
            }
            assert!((r[t] - num / den).norm() < 1e-10);
        }
    }

    #[test]
    fn filter_matches_dense_mmse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 9;
        let l = 3;
        let h = rand_vec(l, &mut rng);
        let y = rand_vec(n, &mut rng);
        let mean = rand_vec(n, &mut rng);
        let var: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let cfg = MmseConfig { n1: 2, n2: 3, ..Default::default() };
        let nv = 0.2;
        let (r, rv) = mmse_filter(&y, &h, &mean, &var, 0..n, &cfg, nv);
        for t in 0..n {
            // Full convolution matrix restricted to the window rows.
            let lo = t.saturating_sub(3);
            let hi = (t + 2).min(n - 1);
            let rows: Vec<usize> = (lo..=hi).collect();
            let hm = DMatrix::from_fn(rows.len(), n, |a, c| {
                let m = rows[a];
                if m >= c && m - c < l { h[m - c] } else { C64::new(0.0, 0.0) }
            });
            let mut vd = var.clone();
            vd[t] = 1.0;
            let mut md = mean.clone();
            md[t] = C64::new(0.0, 0.0);
            let vmat = DMatrix::from_fn(n, n, |a, b| if a == b { C64::new(vd[a], 0.0) } else { C64::new(0.0, 0.0) });
            let cov = &hm * vmat * hm.adjoint() + DMatrix::identity(rows.len(), rows.len()) * C64::new(nv, 0.0);
            let col = hm.column(t).into_owned();
            let f = cov.try_inverse().unwrap() * &col;
            let yw = DVector::from_iterator(rows.len(), rows.iter().map(|&m| y[m]));
            let resid = yw - &hm * DVector::from_vec(md);
            let mu = (f.adjoint() * &col)[(0, 0)].re;
            let est = (f.adjoint() * resid)[(0, 0)];
            assert!((r[t] - est / mu).norm() < 1e-10);
            assert!((rv[t] - (1.0 - mu) / mu).abs() < 1e-10 * (1.0 + rv[t]));
        }
    }

    #[test]
    fn window_must_fit() {
        assert!(MmseConfig::default().validate(218).is_ok());
        assert!(MmseConfig { n1: 200, ..Default::default() }.validate(218).is_err());
    }
}

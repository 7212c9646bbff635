//! Discrete symbol posteriors and bit-level soft demapping.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::math::{clamp_llr, clamp_var, ln_sum_exp, logistic};
use crate::modem::SymbolAlphabet;
use crate::C64;

/// Unnormalised log prior of each point: `sum_q (-1)^chi L_q / 2`, with bit
/// `skip` left out.
fn log_prior(alphabet: &SymbolAlphabet, n: usize, llr: &[f64], skip: Option<usize>) -> f64 {
    llr.iter()
        .enumerate()
        .filter(|&(q, _)| Some(q) != skip)
        .map(|(q, &l)| if alphabet.bit(n, q) == 0 { 0.5 * l } else { -0.5 * l })
        .sum()
}

/// Normalised a priori pmf over the alphabet from the bit LLRs of one symbol.
pub fn apriori_symbol_probs(llr: &[f64], alphabet: &SymbolAlphabet) -> Vec<f64> {
    // Bitwise sigmoid then product; the log form is identical up to scale.
    let mut pmf: Vec<f64> = (0..alphabet.len())
        .map(|n| {
            llr.iter()
                .enumerate()
                .map(|(q, &l)| {
                    let l = clamp_llr(l);
                    if alphabet.bit(n, q) == 0 {
                        logistic(l)
                    } else {
                        logistic(-l)
                    }
                })
                .product()
        })
        .collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// Posterior mean and variance of one symbol given the extrinsic Gaussian
/// `CN(r_hat, r_var)` and its bits' a priori LLRs.
pub fn symbol_posterior(r_hat: C64, r_var: f64, llr: &[f64], alphabet: &SymbolAlphabet) -> (C64, f64) {
    let r_var = clamp_var(r_var);
    let logs: Vec<f64> = alphabet
        .points()
        .iter()
        .enumerate()
        .map(|(n, a)| -(a - r_hat).norm_sqr() / r_var + log_prior(alphabet, n, llr, None))
        .collect();
    let norm = ln_sum_exp(&logs);
    let probs: Vec<f64> = logs.iter().map(|lg| (lg - norm).exp()).collect();
    let mean = probs.iter().zip(alphabet.points()).fold(C64::new(0.0, 0.0), |acc, (p, a)| acc + a * p);
    let var = probs.iter().zip(alphabet.points()).map(|(p, a)| p * (a - mean).norm_sqr()).sum();
    (mean, var)
}

/// Extrinsic LLRs `ln p(c=0)/p(c=1)` of the bits of one symbol; the bit's
/// own prior is excluded from its output.
pub fn symbol_extrinsic_llr(r_hat: C64, r_var: f64, llr: &[f64], alphabet: &SymbolAlphabet, out: &mut [f64]) {
    let r_var = clamp_var(r_var);
    let like: Vec<f64> = alphabet.points().iter().map(|a| -(a - r_hat).norm_sqr() / r_var).collect();
    let mut zero = Vec::with_capacity(alphabet.len());
    let mut one = Vec::with_capacity(alphabet.len());
    for (q, o) in out.iter_mut().enumerate().take(alphabet.bits_per_symbol()) {
        zero.clear();
        one.clear();
        for (n, &lk) in like.iter().enumerate() {
            let v = lk + log_prior(alphabet, n, llr, Some(q));
            if alphabet.bit(n, q) == 0 {
                zero.push(v)
            } else {
                one.push(v)
            }
        }
        *o = clamp_llr(ln_sum_exp(&zero) - ln_sum_exp(&one));
    }
}

/// Extrinsic LLRs for a run of data symbols; `llr` holds `Q` a priori
/// values per symbol in label order.
pub fn extrinsic_llr(r_hat: &[C64], r_var: &[f64], llr: &[f64], alphabet: &SymbolAlphabet) -> Vec<f64> {
    let q = alphabet.bits_per_symbol();
    let mut out = alloc::vec![0.0; r_hat.len() * q];
    for (j, (&r, &v)) in r_hat.iter().zip(r_var).enumerate() {
        symbol_extrinsic_llr(r, v, &llr[j * q..(j + 1) * q], alphabet, &mut out[j * q..(j + 1) * q]);
    }
    out
}

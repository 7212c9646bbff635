//! Rate-1/2 LDPC code: seeded progressive-edge-growth construction,
//! systematic encoding and log-domain sum-product decoding.
//!
//! Codewords are laid out `[information | parity]`. The parity-check matrix
//! is stored sparsely with its columns already permuted into that order.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use crate::math::{clamp_llr, LLR_CLAMP};
use crate::{Error, Result};

const VARIABLE_DEGREE: usize = 3;
const CONSTRUCTION_ATTEMPTS: usize = 64;

/// Default sum-product iteration budget per decoder call.
pub const DEFAULT_DECODER_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LdpcCode {
    n_info: usize,
    n_code: usize,
    /// Column indices of each parity check.
    checks: Vec<Vec<usize>>,
    /// Per parity bit, the information bits it is the XOR of.
    generator: Vec<Vec<usize>>,
}

/// Output of [`LdpcCode::decode_spa`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Posterior minus channel LLR for every coded bit.
    pub extrinsic: Vec<f64>,
    /// Hard decisions on the full codeword.
    pub hard_bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

impl LdpcCode {
    /// Seeded (3, 6)-regular code via progressive edge growth. Retries with
    /// derived seeds until the parity checks are linearly independent.
    pub fn build(n_info: usize, n_code: usize, seed: u64) -> Result<Self> {
        if n_code != 2 * n_info || n_info == 0 {
            return Err(Error::Config("LDPC construction supports rate 1/2 only"));
        }
        let n_checks = n_code - n_info;
        for attempt in 0..CONSTRUCTION_ATTEMPTS {
            let mut rng = rand::rngs::SmallRng::seed_from_u64(seed.wrapping_add(attempt as u64 * 0x9E37_79B9_7F4A_7C15));
            let checks = peg_construct(n_code, n_checks, &mut rng);
            if let Ok(code) = Self::from_parity_checks(n_code, checks) {
                if code.n_info == n_info {
                    return Ok(code);
                }
            }
        }
        Err(Error::CodeConstruction { attempts: CONSTRUCTION_ATTEMPTS })
    }

    /// Build from an explicit parity-check matrix (row -> column list). The
    /// columns are reordered so that information bits come first; the number
    /// of information bits is `n_code - rank(H)`.
    pub fn from_parity_checks(n_code: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        if checks.iter().flatten().any(|&c| c >= n_code) {
            return Err(Error::Config("parity check column out of range"));
        }
        let words = n_code.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = checks
            .iter()
            .map(|cols| {
                let mut r = vec![0u64; words];
                for &c in cols {
                    r[c / 64] ^= 1 << (c % 64);
                }
                r
            })
            .collect();
        // Reduced row echelon form over GF(2).
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n_code {
            let Some(p) = (rank..rows.len()).find(|&r| bit(&rows[r], col)) else {
                continue;
            };
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank && bit(&rows[r], col) {
                    let (a, b) = if r < rank {
                        let (lo, hi) = rows.split_at_mut(rank);
                        (&mut lo[r], &hi[0])
                    } else {
                        let (lo, hi) = rows.split_at_mut(r);
                        (&mut hi[0], &lo[rank])
                    };
                    a.iter_mut().zip(b).for_each(|(x, y)| *x ^= y);
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == rows.len() {
                break;
            }
        }
        let is_pivot = {
            let mut v = vec![false; n_code];
            pivots.iter().for_each(|&p| v[p] = true);
            v
        };
        let info_cols: Vec<usize> = (0..n_code).filter(|&c| !is_pivot[c]).collect();
        let order: Vec<usize> = info_cols.iter().chain(&pivots).copied().collect();
        let mut position = vec![0; n_code];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let generator = (0..rank)
            .map(|r| {
                info_cols
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| bit(&rows[r], c))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        let checks = checks
            .into_iter()
            .map(|cols| {
                let mut v: Vec<usize> = cols.into_iter().map(|c| position[c]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(LdpcCode { n_info: info_cols.len(), n_code, checks, generator })
    }

    pub fn n_info(&self) -> usize {
        self.n_info
    }

    pub fn n_code(&self) -> usize {
        self.n_code
    }

    pub fn parity_checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    /// Systematic encoding `[info | parity]`.
    pub fn encode(&self, info_bits: &[u8]) -> Result<Vec<u8>> {
        if info_bits.len() != self.n_info {
            return Err(Error::LengthMismatch { what: "information bits", expected: self.n_info, got: info_bits.len() });
        }
        let mut cw = Vec::with_capacity(self.n_code);
        cw.extend(info_bits.iter().map(|b| b & 1));
        for row in &self.generator {
            cw.push(row.iter().fold(0u8, |acc, &i| acc ^ (info_bits[i] & 1)));
        }
        Ok(cw)
    }

    /// Number of unsatisfied parity checks.
    pub fn syndrome_weight(&self, bits: &[u8]) -> usize {
        self.checks
            .iter()
            .filter(|cols| cols.iter().fold(0u8, |acc, &c| acc ^ (bits[c] & 1)) != 0)
            .count()
    }

    /// Log-domain sum-product decoding with `L = ln p(0)/p(1)` inputs.
    ///
    /// Stops as soon as the hard decisions satisfy every check.
    pub fn decode_spa(&self, channel_llr: &[f64], max_iters: usize) -> Result<DecodeOutput> {
        if channel_llr.len() != self.n_code {
            return Err(Error::LengthMismatch { what: "channel LLRs", expected: self.n_code, got: channel_llr.len() });
        }
        let input: Vec<f64> = channel_llr.iter().map(|&l| clamp_llr(l)).collect();
        // Edge storage follows `checks`; var_edges maps bits to edge indices.
        let offsets: Vec<usize> = core::iter::once(0)
            .chain(self.checks.iter().scan(0, |acc, c| {
                *acc += c.len();
                Some(*acc)
            }))
            .collect();
        let n_edges = *offsets.last().unwrap_or(&0);
        let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); self.n_code];
        for (r, cols) in self.checks.iter().enumerate() {
            for (k, &c) in cols.iter().enumerate() {
                var_edges[c].push(offsets[r] + k);
            }
        }
        let mut v2c = vec![0.0; n_edges];
        let mut c2v = vec![0.0; n_edges];
        for (r, cols) in self.checks.iter().enumerate() {
            for (k, &c) in cols.iter().enumerate() {
                v2c[offsets[r] + k] = input[c];
            }
        }
        let mut total = input.clone();
        let mut hard = vec![0u8; self.n_code];
        let mut converged = false;
        let mut iterations = 0;
        let mut tanhs = Vec::new();
        for _ in 0..max_iters.max(1) {
            iterations += 1;
            for (r, cols) in self.checks.iter().enumerate() {
                let edges = offsets[r]..offsets[r] + cols.len();
                tanhs.clear();
                tanhs.extend(v2c[edges.clone()].iter().map(|&m| (0.5 * m).tanh()));
                for (k, e) in edges.enumerate() {
                    let prod: f64 = tanhs.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, t)| t).product();
                    let prod = prod.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[e] = (2.0 * prod.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }
            for v in 0..self.n_code {
                total[v] = input[v] + var_edges[v].iter().map(|&e| c2v[e]).sum::<f64>();
                for &e in &var_edges[v] {
                    v2c[e] = clamp_llr(total[v] - c2v[e]);
                }
                hard[v] = (total[v] < 0.0) as u8;
            }
            if self.syndrome_weight(&hard) == 0 {
                converged = true;
                break;
            }
        }
        let extrinsic = total.iter().zip(&input).map(|(t, l)| clamp_llr(t - l)).collect();
        Ok(DecodeOutput { extrinsic, hard_bits: hard, converged, iterations })
    }
}

#[inline]
fn bit(row: &[u64], c: usize) -> bool {
    (row[c / 64] >> (c % 64)) & 1 == 1
}

/// Progressive edge growth: each new edge of a variable goes to a check of
/// minimum degree among those farthest from it in the current graph.
fn peg_construct<R: Rng>(n_vars: usize, n_checks: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let max_check_degree = (n_vars * VARIABLE_DEGREE).div_ceil(n_checks);
    let mut check_vars: Vec<Vec<usize>> = vec![Vec::new(); n_checks];
    let mut var_checks: Vec<Vec<usize>> = vec![Vec::new(); n_vars];
    let mut depth_of = vec![usize::MAX; n_checks];
    let mut var_seen = vec![false; n_vars];
    let mut queue = VecDeque::new();
    for v in 0..n_vars {
        for _ in 0..VARIABLE_DEGREE {
            // Breadth-first search over the current graph from v.
            depth_of.iter_mut().for_each(|d| *d = usize::MAX);
            var_seen.iter_mut().for_each(|s| *s = false);
            var_seen[v] = true;
            queue.clear();
            queue.push_back((v, 0usize));
            while let Some((u, d)) = queue.pop_front() {
                for &c in &var_checks[u] {
                    if depth_of[c] == usize::MAX {
                        depth_of[c] = d;
                        for &w in &check_vars[c] {
                            if !var_seen[w] {
                                var_seen[w] = true;
                                queue.push_back((w, d + 1));
                            }
                        }
                    }
                }
            }
            let open = |c: &usize| check_vars[*c].len() < max_check_degree && !var_checks[v].contains(c);
            let unreached: Vec<usize> = (0..n_checks).filter(|c| depth_of[*c] == usize::MAX).filter(open).collect();
            let candidates = if !unreached.is_empty() {
                unreached
            } else {
                let far = (0..n_checks).filter(open).map(|c| depth_of[c]).max().unwrap_or(0);
                (0..n_checks).filter(open).filter(|c| depth_of[*c] == far).collect()
            };
            let candidates = if candidates.is_empty() {
                (0..n_checks).filter(|c| !var_checks[v].contains(c)).collect()
            } else {
                candidates
            };
            let min_deg = candidates.iter().map(|&c| check_vars[c].len()).min().unwrap_or(0);
            let best: Vec<usize> = candidates.into_iter().filter(|&c| check_vars[c].len() == min_deg).collect();
            let &c = best.choose(rng).expect("at least one check node");
            check_vars[c].push(v);
            var_checks[v].push(c);
        }
    }
    check_vars
}

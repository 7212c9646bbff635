//! Bit-to-frame pipeline: pilots, interleaving, constellation mapping and
//! frame assembly.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result, C64};

/// Symbol-level layout of one frame: `[pilot | data | guard]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub n_pilot: usize,
    pub n_data: usize,
    pub n_guard: usize,
    pub n_info_bits: usize,
    /// Code rate as `(numerator, denominator)`.
    pub code_rate: (usize, usize),
    pub bits_per_symbol: usize,
    pub channel_len: usize,
}

impl FrameConfig {
    /// 130 information bits, rate 1/2, QPSK, 25 guard symbols and a 25-tap
    /// channel, with the given pilot length.
    pub fn standard(n_pilot: usize) -> Self {
        FrameConfig {
            n_pilot,
            n_data: 130,
            n_guard: 25,
            n_info_bits: 130,
            code_rate: (1, 2),
            bits_per_symbol: 2,
            channel_len: 25,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.n_pilot + self.n_data + self.n_guard
    }

    /// Number of coded bits per frame.
    pub fn n_code(&self) -> usize {
        self.n_info_bits * self.code_rate.1 / self.code_rate.0
    }

    pub fn rate(&self) -> f64 {
        self.code_rate.0 as f64 / self.code_rate.1 as f64
    }

    pub fn pilot_range(&self) -> Range<usize> {
        0..self.n_pilot
    }

    pub fn data_range(&self) -> Range<usize> {
        self.n_pilot..self.n_pilot + self.n_data
    }

    pub fn guard_range(&self) -> Range<usize> {
        self.n_pilot + self.n_data..self.frame_len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_len == 0 {
            return Err(Error::Config("channel length must be positive"));
        }
        if self.n_guard + 1 < self.channel_len {
            return Err(Error::Config("guard must be at least channel_len - 1 symbols"));
        }
        if self.code_rate.0 == 0 || self.code_rate.0 > self.code_rate.1 {
            return Err(Error::Config("code rate must lie in (0, 1]"));
        }
        if (self.n_info_bits * self.code_rate.1) % self.code_rate.0 != 0 {
            return Err(Error::Config("information bits do not divide by the code rate"));
        }
        if self.n_data * self.bits_per_symbol != self.n_code() {
            return Err(Error::Config("data symbols do not carry exactly one codeword"));
        }
        if self.channel_len > self.frame_len() {
            return Err(Error::ChannelTooLong { channel: self.channel_len, frame: self.frame_len() });
        }
        Ok(())
    }
}

/// Unit-average-energy constellation with per-point bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolAlphabet {
    points: Vec<C64>,
    /// `labels[n]` holds the bits of point `n`, first bit in the most
    /// significant position.
    labels: Vec<u32>,
    bits: usize,
}

impl SymbolAlphabet {
    pub fn new(points: Vec<C64>, labels: Vec<u32>) -> Result<Self> {
        let bits = points.len().trailing_zeros() as usize;
        if !points.len().is_power_of_two() || labels.len() != points.len() || bits == 0 {
            return Err(Error::Config("alphabet needs 2^Q points and one label per point"));
        }
        let mut seen = vec![false; points.len()];
        for &l in &labels {
            let l = l as usize;
            if l >= points.len() || seen[l] {
                return Err(Error::Config("alphabet labels must be distinct Q-bit words"));
            }
            seen[l] = true;
        }
        Ok(SymbolAlphabet { points, labels, bits })
    }

    /// Gray-labelled QPSK: bit 0 selects the sign of the real part, bit 1 the
    /// sign of the imaginary part, `00 -> (1 + j)/sqrt(2)`.
    pub fn qpsk_gray() -> Self {
        let mut points = Vec::with_capacity(4);
        let mut labels = Vec::with_capacity(4);
        for label in 0..4u32 {
            let b0 = (label >> 1) & 1;
            let b1 = label & 1;
            let re = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            points.push(C64::new(re, im));
            labels.push(label);
        }
        SymbolAlphabet { points, labels, bits: 2 }
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    /// Bit `q` (0 = first) of the label of point `n`.
    #[inline]
    pub fn bit(&self, n: usize, q: usize) -> u8 {
        ((self.labels[n] >> (self.bits - 1 - q)) & 1) as u8
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    fn index_of_label(&self, label: u32) -> usize {
        self.labels.iter().position(|&l| l == label).expect("label table is complete")
    }

    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (n, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = n;
            }
        }
        best
    }
}

/// Feedback taps of a primitive polynomial for each LFSR degree 2..=16.
/// Bit `i` set means the term `x^i` is present; the `x^degree` and `1`
/// terms are implicit.
pub fn default_taps(degree: u32) -> Option<u32> {
    let t = match degree {
        2 => 0b10,
        3 => 0b10,
        4 => 0b10,
        5 => 0b100,
        6 => 0b10,
        7 => 0b1000,
        8 => 0b1_1100,
        9 => 0b1_0000,
        10 => 0b1000,
        11 => 0b100,
        12 => 0b101_0010,
        13 => 0b1_1010,
        14 => 0b10_1010,
        15 => 0b10,
        16 => 0b10_1100,
        _ => return None,
    };
    Some(t)
}

/// Maximal-length `+-1` sequence from a Fibonacci LFSR.
///
/// `taps` lists the middle terms of the feedback polynomial (see
/// [`default_taps`]); `seed_state` is the initial register content and must
/// be nonzero in its low `degree` bits.
pub fn generate_m_sequence(degree: u32, taps: u32, seed_state: u32) -> Result<Vec<f64>> {
    if !(2..=24).contains(&degree) {
        return Err(Error::Config("m-sequence degree must be within 2..=24"));
    }
    let mask = (1u32 << degree) - 1;
    let mut state = seed_state & mask;
    if state == 0 {
        return Err(Error::Config("m-sequence seed state must be nonzero"));
    }
    let period = (1usize << degree) - 1;
    // Recurrence a[n+d] = a[n] + sum_{i in taps} a[n+i] over GF(2).
    let feedback = (taps & mask) | 1;
    let start = state;
    let mut out = Vec::with_capacity(period);
    for n in 0..period {
        let bit = state & 1;
        out.push(if bit == 0 { 1.0 } else { -1.0 });
        let fb = (state & feedback).count_ones() & 1;
        state = (state >> 1) | (fb << (degree - 1));
        if state == start && n + 1 < period {
            return Err(Error::NotPrimitive { period: n + 1, expected: period });
        }
    }
    if state != start {
        return Err(Error::NotPrimitive { period: 0, expected: period });
    }
    Ok(out)
}

/// Pilot of length `n`: an m-sequence of the smallest degree `d` with
/// `2^d - 1 >= n`, truncated to `n` symbols.
pub fn pilot_sequence(n: usize) -> Result<Vec<f64>> {
    let mut degree = 2u32;
    while ((1usize << degree) - 1) < n {
        degree += 1;
    }
    let taps = default_taps(degree).ok_or(Error::Config("pilot too long"))?;
    let mut seq = generate_m_sequence(degree, taps, 1)?;
    seq.truncate(n);
    Ok(seq)
}

/// Bit permutation; `interleave(x)[i] = x[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut inverse = vec![usize::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inverse[p] != usize::MAX {
                return Err(Error::NotAPermutation);
            }
            inverse[p] = i;
        }
        Ok(Interleaver { perm, inverse })
    }

    pub fn identity(n: usize) -> Self {
        Self::new((0..n).collect()).expect("identity is a permutation")
    }

    /// Uniformly random permutation drawn from `rng`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Self::new(perm).expect("shuffle yields a permutation")
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        Ok(self.perm.iter().map(|&p| input[p]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        Ok(self.inverse.iter().map(|&p| input[p]).collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::LengthMismatch { what: "interleaver input", expected: self.perm.len(), got: len });
        }
        Ok(())
    }
}

/// Map groups of `Q` bits onto constellation points.
pub fn map_symbols(coded_bits: &[u8], alphabet: &SymbolAlphabet) -> Result<Vec<C64>> {
    let q = alphabet.bits_per_symbol();
    if coded_bits.len() % q != 0 {
        return Err(Error::LengthMismatch {
            what: "bits for symbol mapping",
            expected: coded_bits.len().div_ceil(q) * q,
            got: coded_bits.len(),
        });
    }
    Ok(coded_bits
        .chunks(q)
        .map(|chunk| {
            let label = chunk.iter().fold(0u32, |acc, &b| (acc << 1) | (b & 1) as u32);
            alphabet.points()[alphabet.index_of_label(label)]
        })
        .collect())
}

/// Nearest-point demapping back to bits.
pub fn hard_demap(symbols: &[C64], alphabet: &SymbolAlphabet) -> Vec<u8> {
    let q = alphabet.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * q);
    for &z in symbols {
        let n = alphabet.nearest(z);
        bits.extend((0..q).map(|b| alphabet.bit(n, b)));
    }
    bits
}

/// One transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub symbols: Vec<C64>,
    pub config: FrameConfig,
}

impl Frame {
    pub fn pilot(&self) -> &[C64] {
        &self.symbols[self.config.pilot_range()]
    }

    pub fn data(&self) -> &[C64] {
        &self.symbols[self.config.data_range()]
    }

    pub fn guard(&self) -> &[C64] {
        &self.symbols[self.config.guard_range()]
    }
}

pub fn assemble_frame(pilot: &[f64], data_symbols: &[C64], cfg: &FrameConfig) -> Result<Frame> {
    if pilot.len() != cfg.n_pilot {
        return Err(Error::LengthMismatch { what: "pilot", expected: cfg.n_pilot, got: pilot.len() });
    }
    if data_symbols.len() != cfg.n_data {
        return Err(Error::LengthMismatch { what: "data symbols", expected: cfg.n_data, got: data_symbols.len() });
    }
    let mut symbols = Vec::with_capacity(cfg.frame_len());
    symbols.extend(pilot.iter().map(|&p| C64::new(p, 0.0)));
    symbols.extend_from_slice(data_symbols);
    symbols.resize(cfg.frame_len(), C64::new(0.0, 0.0));
    Ok(Frame { symbols, config: *cfg })
}

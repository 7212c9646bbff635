//! Bit error rate, channel NMSE and the paired bootstrap used to compare
//! receivers on common random numbers.

use dcsjced_core::C64;
use rand::Rng;

/// Reported NMSE when the estimate is exact.
pub const NMSE_FLOOR_DB: f64 = -100.0;

pub fn bit_errors(truth: &[u8], decided: &[u8]) -> usize {
    assert_eq!(truth.len(), decided.len(), "bit vectors differ in length");
    truth.iter().zip(decided).filter(|(a, b)| a != b).count()
}

/// `||h_hat - h||^2 / ||h||^2`, or `None` for an all-zero channel.
pub fn nmse(estimate: &[C64], truth: &[C64]) -> Option<f64> {
    let den: f64 = truth.iter().map(|h| h.norm_sqr()).sum();
    if den == 0.0 {
        return None;
    }
    let num: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    Some(num / den)
}

pub fn to_db(x: f64) -> f64 {
    if x <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * x.log10()).max(NMSE_FLOOR_DB)
}

/// Per-trial sums for one receiver and one turbo iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub bit_errors: usize,
    pub bits_total: usize,
    /// Sum of per-frame NMSE ratios.
    pub nmse_sum: f64,
    /// Frames that contributed to `nmse_sum`.
    pub nmse_frames: usize,
    pub frames: usize,
}

impl Tally {
    pub fn add(&mut self, other: &Tally) {
        self.bit_errors += other.bit_errors;
        self.bits_total += other.bits_total;
        self.nmse_sum += other.nmse_sum;
        self.nmse_frames += other.nmse_frames;
        self.frames += other.frames;
    }

    pub fn ber(&self) -> f64 {
        if self.bits_total == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_total as f64
        }
    }

    /// Mean per-frame NMSE (linear).
    pub fn nmse(&self) -> f64 {
        if self.nmse_frames == 0 {
            0.0
        } else {
            self.nmse_sum / self.nmse_frames as f64
        }
    }

    pub fn nmse_db(&self) -> f64 {
        to_db(self.nmse())
    }
}

/// Percentile bootstrap of the mean of paired differences `a_i - b_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedBootstrap {
    pub mean_diff: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PairedBootstrap {
    /// `a` is smaller than `b` at the interval's confidence.
    pub fn a_smaller(&self) -> bool {
        self.hi < 0.0
    }
}

pub fn paired_bootstrap<R: Rng + ?Sized>(a: &[f64], b: &[f64], resamples: usize, confidence: f64, rng: &mut R) -> PairedBootstrap {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    assert!(!a.is_empty(), "no samples");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let mean_diff = d.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| d[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let pick = |p: f64| means[((p * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    PairedBootstrap { mean_diff, lo: pick(tail), hi: pick(1.0 - tail) }
}

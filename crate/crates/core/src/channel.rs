//! Time-varying sparse channel: Markov support times Gauss-Markov amplitude,
//! plus the per-frame convolution with additive noise.
//!
//! Matrices are stored frame-major: `track[k][i]` is tap `i` of frame `k`.

use alloc::vec::Vec;

use rand::Rng;

use crate::math::sample_cn;
use crate::{Error, Result, C64};

/// Channel prior `q = [p01, lambda, zeta, varrho, rho]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Probability that an active tap turns off between frames.
    pub p01: f64,
    /// Marginal probability that a tap is active.
    pub lambda: f64,
    /// Amplitude mean.
    pub zeta: C64,
    /// Amplitude innovation weight; 0 is static, 1 is memoryless.
    pub varrho: f64,
    /// Driving noise variance.
    pub rho: f64,
}

impl HyperParams {
    /// The synthetic ensemble used throughout the experiments.
    pub fn synthetic() -> Self {
        HyperParams { p01: 0.01, lambda: 0.2, zeta: C64::new(0.0, 0.0), varrho: 0.005, rho: 1.0 }
    }

    /// Probability that an inactive tap turns on, from stationarity.
    pub fn p10(&self) -> f64 {
        if self.lambda >= 1.0 {
            return 1.0;
        }
        self.lambda * self.p01 / (1.0 - self.lambda)
    }

    /// Stationary amplitude variance.
    pub fn sigma_sq(&self) -> f64 {
        self.varrho * self.rho / (2.0 - self.varrho)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.p01) || !unit(self.lambda) {
            return Err(Error::Config("p01 and lambda must lie in [0, 1]"));
        }
        if !unit(self.varrho) {
            return Err(Error::Config("varrho must lie in [0, 1]"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config("rho must be positive"));
        }
        if !(self.zeta.re.is_finite() && self.zeta.im.is_finite()) {
            return Err(Error::Config("zeta must be finite"));
        }
        if self.p10() > 1.0 {
            return Err(Error::Config("lambda and p01 imply p10 > 1"));
        }
        Ok(())
    }
}

/// Channel of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub support: Vec<u8>,
    pub amplitude: Vec<C64>,
    pub cir: Vec<C64>,
}

impl ChannelState {
    pub fn new(support: Vec<u8>, amplitude: Vec<C64>) -> Result<Self> {
        if support.len() != amplitude.len() {
            return Err(Error::LengthMismatch { what: "amplitude", expected: support.len(), got: amplitude.len() });
        }
        let cir = support.iter().zip(&amplitude).map(|(&s, &a)| if s != 0 { a } else { C64::new(0.0, 0.0) }).collect();
        Ok(ChannelState { support, amplitude, cir })
    }

    /// Wrap a known impulse response; the support marks the nonzero taps.
    pub fn from_cir(cir: Vec<C64>) -> Self {
        let support = cir.iter().map(|h| (h.norm_sqr() > 0.0) as u8).collect();
        ChannelState { support, amplitude: cir.clone(), cir }
    }

    pub fn len(&self) -> usize {
        self.cir.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cir.is_empty()
    }
}

/// A group of `K` frames sharing one tap count.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrack {
    pub frames: Vec<ChannelState>,
    /// Generating prior, if known.
    pub hyper: Option<HyperParams>,
}

impl ChannelTrack {
    /// Build from impulse responses only, e.g. an imported trace.
    pub fn from_cirs(cirs: Vec<Vec<C64>>) -> Result<Self> {
        let l = cirs.first().map(Vec::len).ok_or(Error::Config("channel track has no frames"))?;
        if let Some(bad) = cirs.iter().find(|c| c.len() != l) {
            return Err(Error::LengthMismatch { what: "channel taps", expected: l, got: bad.len() });
        }
        Ok(ChannelTrack { frames: cirs.into_iter().map(ChannelState::from_cir).collect(), hyper: None })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_taps(&self) -> usize {
        self.frames.first().map_or(0, ChannelState::len)
    }
}

/// Two-state Markov support chains, one per tap, started from the
/// stationary distribution.
pub fn sample_support_chain<R: Rng + ?Sized>(hyper: &HyperParams, l: usize, k: usize, rng: &mut R) -> Vec<Vec<u8>> {
    let p10 = hyper.p10();
    let mut out: Vec<Vec<u8>> = Vec::with_capacity(k);
    for f in 0..k {
        let row = (0..l)
            .map(|i| {
                let u: f64 = rng.random();
                let on = match f {
                    0 => u < hyper.lambda,
                    _ if out[f - 1][i] == 1 => u >= hyper.p01,
                    _ => u < p10,
                };
                on as u8
            })
            .collect();
        out.push(row);
    }
    out
}

/// Gauss-Markov amplitudes, one process per tap, started from the
/// stationary distribution `CN(zeta, sigma^2)`.
pub fn sample_amplitude_process<R: Rng + ?Sized>(hyper: &HyperParams, l: usize, k: usize, rng: &mut R) -> Vec<Vec<C64>> {
    let sigma_sq = hyper.sigma_sq();
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(k);
    for f in 0..k {
        let row = (0..l)
            .map(|i| match f {
                0 => sample_cn(rng, hyper.zeta, sigma_sq),
                _ => {
                    let w = sample_cn(rng, C64::new(0.0, 0.0), hyper.rho);
                    (out[f - 1][i] - hyper.zeta) * (1.0 - hyper.varrho) + w * hyper.varrho + hyper.zeta
                }
            })
            .collect();
        out.push(row);
    }
    out
}

/// Elementwise `h[k] = s[k] * theta[k]`.
pub fn compose_channel(support: Vec<Vec<u8>>, amplitude: Vec<Vec<C64>>) -> Result<ChannelTrack> {
    if support.len() != amplitude.len() {
        return Err(Error::LengthMismatch { what: "amplitude frames", expected: support.len(), got: amplitude.len() });
    }
    let frames = support
        .into_iter()
        .zip(amplitude)
        .map(|(s, a)| ChannelState::new(s, a))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = frames.first() {
        if let Some(bad) = frames.iter().find(|f| f.len() != first.len()) {
            return Err(Error::LengthMismatch { what: "channel taps", expected: first.len(), got: bad.len() });
        }
    }
    Ok(ChannelTrack { frames, hyper: None })
}

/// Sample a full `K`-frame track from the prior.
pub fn sample_track<R: Rng + ?Sized>(hyper: &HyperParams, l: usize, k: usize, rng: &mut R) -> ChannelTrack {
    let s = sample_support_chain(hyper, l, k, rng);
    let a = sample_amplitude_process(hyper, l, k, rng);
    let mut track = compose_channel(s, a).expect("shapes agree by construction");
    track.hyper = Some(*hyper);
    track
}

/// Noiseless linear convolution truncated to the input length:
/// `z_m = sum_i h_i x_{m-i}` with zero initial state.
pub fn convolve(x: &[C64], h: &[C64]) -> Vec<C64> {
    (0..x.len())
        .map(|m| {
            h.iter()
                .take(m + 1)
                .enumerate()
                .fold(C64::new(0.0, 0.0), |acc, (i, &hi)| acc + hi * x[m - i])
        })
        .collect()
}

/// Pass one frame through `cir` and add `CN(0, noise_var)` noise.
pub fn apply_channel<R: Rng + ?Sized>(symbols: &[C64], cir: &[C64], noise_var: f64, rng: &mut R) -> Result<Vec<C64>> {
    if cir.len() > symbols.len() {
        return Err(Error::ChannelTooLong { channel: cir.len(), frame: symbols.len() });
    }
    let mut y = convolve(symbols, cir);
    if noise_var > 0.0 {
        for v in &mut y {
            *v += sample_cn(rng, C64::new(0.0, 0.0), noise_var);
        }
    }
    Ok(y)
}

//! Turbo loop over a group of frames: propagation sweeps, EM tuning, soft
//! demapping, LDPC decoding and a priori feedback.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::channel::HyperParams;
use crate::dft::Dft;
use crate::emtune::{collect_moments, em_update};
use crate::fec::{LdpcCode, DEFAULT_DECODER_ITERS};
use crate::math::{clamp_var_finite, sample_cn};
use crate::modem::{map_symbols, pilot_sequence, FrameConfig, Interleaver, SymbolAlphabet};
use crate::msgcore::{
    across_backward, across_forward, into_stage, out_stage, within_stage, BiGampState, Domain, FrameMessages, WithinConfig,
    WithinInput,
};
use crate::{Error, Result, C64};

pub use crate::msgcore::{apriori_symbol_probs, extrinsic_llr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Serial,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurboConfig {
    pub t_turbo: usize,
    pub t_fp: usize,
    pub t_bp: usize,
    pub t_inner: usize,
    pub breakout_tol: f64,
    pub domain: Domain,
    pub schedule: Schedule,
    pub damping: f64,
    pub decoder_iters: usize,
    /// Re-estimate the channel prior after the sweeps of every iteration.
    pub em: bool,
}

impl Default for TurboConfig {
    fn default() -> Self {
        TurboConfig {
            t_turbo: 3,
            t_fp: 2,
            t_bp: 2,
            t_inner: 25,
            breakout_tol: 1e-4,
            domain: Domain::Time,
            schedule: Schedule::Serial,
            damping: 0.5,
            decoder_iters: DEFAULT_DECODER_ITERS,
            em: true,
        }
    }
}

impl TurboConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_turbo == 0 || self.t_fp == 0 || self.t_inner == 0 || self.decoder_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1 (t_bp may be 0)"));
        }
        if !(self.breakout_tol > 0.0) {
            return Err(Error::Config("breakout tolerance must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config("damping must lie in (0, 1]"));
        }
        Ok(())
    }

    fn within(&self) -> WithinConfig {
        WithinConfig { t_inner: self.t_inner, breakout_tol: self.breakout_tol, domain: self.domain, damping: self.damping }
    }
}

/// Where the interleaver sits relative to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitOrder {
    /// Encode, then permute coded bits before mapping.
    #[default]
    EncodeThenInterleave,
    /// Permute information bits, then encode; coded bits map directly.
    InterleaveThenEncode,
}

/// Everything transmitter and receiver agree on.
#[derive(Debug, Clone)]
pub struct Link {
    pub frame: FrameConfig,
    pub alphabet: SymbolAlphabet,
    pub code: LdpcCode,
    pub interleaver: Interleaver,
    pub pilot: Vec<C64>,
    pub order: BitOrder,
}

impl Link {
    pub fn new(frame: FrameConfig, code: LdpcCode, interleaver: Interleaver, order: BitOrder) -> Result<Self> {
        frame.validate()?;
        let alphabet = SymbolAlphabet::qpsk_gray();
        if frame.bits_per_symbol != alphabet.bits_per_symbol() {
            return Err(Error::Config("only QPSK is built in"));
        }
        if code.n_info() != frame.n_info_bits || code.n_code() != frame.n_code() {
            return Err(Error::Config("code size does not match the frame"));
        }
        let expected_perm = match order {
            BitOrder::EncodeThenInterleave => frame.n_code(),
            BitOrder::InterleaveThenEncode => frame.n_info_bits,
        };
        if interleaver.len() != expected_perm {
            return Err(Error::LengthMismatch { what: "interleaver", expected: expected_perm, got: interleaver.len() });
        }
        let pilot = pilot_sequence(frame.n_pilot)?.into_iter().map(|p| C64::new(p, 0.0)).collect();
        Ok(Link { frame, alphabet, code, interleaver, pilot, order })
    }

    /// Information bits to the full frame of symbols.
    pub fn modulate(&self, info: &[u8]) -> Result<Vec<C64>> {
        let bits = match self.order {
            BitOrder::EncodeThenInterleave => self.interleaver.interleave(&self.code.encode(info)?)?,
            BitOrder::InterleaveThenEncode => self.code.encode(&self.interleaver.interleave(info)?)?,
        };
        let data = map_symbols(&bits, &self.alphabet)?;
        let pilot: Vec<f64> = self.pilot.iter().map(|p| p.re).collect();
        Ok(crate::modem::assemble_frame(&pilot, &data, &self.frame)?.symbols)
    }

    /// Equalizer-order LLRs to decoder order.
    pub fn to_decoder(&self, llr: &[f64]) -> Result<Vec<f64>> {
        match self.order {
            BitOrder::EncodeThenInterleave => self.interleaver.deinterleave(llr),
            BitOrder::InterleaveThenEncode => Ok(llr.to_vec()),
        }
    }

    /// Decoder-order LLRs to equalizer order.
    pub fn to_equalizer(&self, llr: &[f64]) -> Result<Vec<f64>> {
        match self.order {
            BitOrder::EncodeThenInterleave => self.interleaver.interleave(llr),
            BitOrder::InterleaveThenEncode => Ok(llr.to_vec()),
        }
    }

    /// Information bits from decoder hard decisions.
    pub fn info_bits(&self, hard: &[u8]) -> Result<Vec<u8>> {
        let sys = &hard[..self.code.n_info()];
        match self.order {
            BitOrder::EncodeThenInterleave => Ok(sys.to_vec()),
            BitOrder::InterleaveThenEncode => self.interleaver.deinterleave(sys),
        }
    }

    /// One decoder pass: returns equalizer-order a priori LLRs for the next
    /// iteration and the decoded information bits.
    pub fn decode(&self, eq_llr: &[f64], max_iters: usize) -> Result<(Vec<f64>, Vec<u8>, bool)> {
        let out = self.code.decode_spa(&self.to_decoder(eq_llr)?, max_iters)?;
        Ok((self.to_equalizer(&out.extrinsic)?, self.info_bits(&out.hard_bits)?, out.converged))
    }
}

/// Per-turbo-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Posterior channel mean per frame after the sweeps.
    pub channel_estimates: Vec<Vec<C64>>,
    pub info_bits: Vec<Vec<u8>>,
    /// Equalizer-order a priori LLRs the equalizer used in this iteration.
    pub apriori: Vec<Vec<f64>>,
    /// Extrinsic LLRs handed to the decoder.
    pub equalizer_llrs: Vec<Vec<f64>>,
    pub inner_iterations: usize,
    pub diverged_frames: usize,
    pub decoded_frames: usize,
    /// Channel prior after EM; `None` for receivers without one.
    pub hyper: Option<HyperParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizerOutput {
    pub info_bits: Vec<Vec<u8>>,
    pub extrinsic_llrs: Vec<Vec<f64>>,
    pub channel_estimates: Vec<Vec<C64>>,
    pub channel_vars: Vec<Vec<f64>>,
    pub iterations: Vec<IterationRecord>,
}

impl EqualizerOutput {
    fn empty() -> Self {
        EqualizerOutput {
            info_bits: Vec::new(),
            extrinsic_llrs: Vec::new(),
            channel_estimates: Vec::new(),
            channel_vars: Vec::new(),
            iterations: Vec::new(),
        }
    }
}

/// Message-passing state for a group of `K` frames.
#[derive(Debug, Clone)]
pub struct GroupEqualizer<'a> {
    link: &'a Link,
    y: &'a [Vec<C64>],
    noise_var: f64,
    cfg: TurboConfig,
    pub hyper: HyperParams,
    pub msgs: Vec<FrameMessages>,
    pub states: Vec<BiGampState>,
    /// Equalizer-order a priori LLRs per frame.
    pub apriori: Vec<Vec<f64>>,
    dft: Option<Dft>,
    forward_done: bool,
    backward_done: bool,
    inner_iterations: usize,
    diverged: usize,
}

impl<'a> GroupEqualizer<'a> {
    pub fn new(
        link: &'a Link,
        y: &'a [Vec<C64>],
        noise_var: f64,
        cfg: TurboConfig,
        hyper: HyperParams,
        q_init: Vec<Vec<C64>>,
        q_var_init: Vec<Vec<f64>>,
    ) -> Result<Self> {
        cfg.validate()?;
        hyper.validate()?;
        let k = y.len();
        if k == 0 {
            return Err(Error::Config("at least one frame is needed"));
        }
        if q_init.len() != k || q_var_init.len() != k {
            return Err(Error::LengthMismatch { what: "channel initialisations", expected: k, got: q_init.len() });
        }
        let l = link.frame.channel_len;
        let states = q_init
            .into_iter()
            .zip(q_var_init)
            .map(|(q, v)| BiGampState::new(&link.frame, &link.pilot, q, v))
            .collect::<Result<Vec<_>>>()?;
        let dft = (cfg.domain == Domain::Frequency).then(|| Dft::new(link.frame.frame_len()));
        Ok(GroupEqualizer {
            link,
            y,
            noise_var,
            cfg,
            hyper,
            msgs: vec![FrameMessages::new(l, &hyper); k],
            states,
            apriori: vec![vec![0.0; link.frame.n_code()]; k],
            dft,
            forward_done: false,
            backward_done: false,
            inner_iterations: 0,
            diverged: 0,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.y.len()
    }

    /// Into, within and out for one frame.
    fn process_frame(&mut self, k: usize) -> Result<()> {
        let local = into_stage(&self.msgs[k]);
        let input = WithinInput {
            y: &self.y[k],
            noise_var: self.noise_var,
            prior: &local,
            apriori: &self.apriori[k],
            alphabet: &self.link.alphabet,
        };
        let report = within_stage(&mut self.states[k], &input, &self.cfg.within(), self.dft.as_ref())?;
        self.inner_iterations += report.iterations;
        self.diverged += report.diverged as usize;
        let st = &self.states[k];
        self.msgs[k].out = out_stage(&local, &st.q_hat, &st.q_var);
        self.msgs[k].local = local;
        Ok(())
    }

    pub fn forward_sweep(&mut self) -> Result<()> {
        let hyper = self.hyper;
        self.msgs[0].set_forward_prior(&hyper);
        let k_len = self.n_frames();
        if self.cfg.schedule == Schedule::Parallel {
            for k in 0..k_len {
                self.process_frame(k)?;
            }
        }
        for k in 0..k_len {
            if self.cfg.schedule == Schedule::Serial {
                self.process_frame(k)?;
            }
            if k + 1 < k_len {
                let (head, tail) = self.msgs.split_at_mut(k + 1);
                across_forward(&head[k], &hyper, &mut tail[0]);
            }
        }
        self.forward_done = true;
        Ok(())
    }

    pub fn backward_sweep(&mut self) -> Result<()> {
        let hyper = self.hyper;
        let k_len = self.n_frames();
        self.msgs[k_len - 1].clear_backward();
        if self.cfg.schedule == Schedule::Parallel {
            for k in 0..k_len {
                self.process_frame(k)?;
            }
        }
        for k in (0..k_len).rev() {
            if self.cfg.schedule == Schedule::Serial {
                self.process_frame(k)?;
            }
            if k > 0 {
                let (head, tail) = self.msgs.split_at_mut(k);
                across_backward(&tail[0], &hyper, &mut head[k - 1]);
            }
        }
        self.backward_done = true;
        Ok(())
    }

    /// EM tuning; needs both sweep directions in this iteration unless the
    /// group is a single frame.
    pub fn em_step(&mut self) -> Result<()> {
        if !(self.forward_done && (self.backward_done || self.n_frames() == 1)) {
            return Err(Error::MomentsUnavailable("EM needs a forward and a backward sweep first"));
        }
        let out: Vec<_> = self.msgs.iter().map(|m| m.out.clone()).collect();
        let moments = collect_moments(&out, &self.hyper)?;
        self.hyper = em_update(&moments, &self.hyper);
        Ok(())
    }

    /// Extrinsic LLRs of the data bits of every frame, equalizer order.
    pub fn equalizer_llrs(&self) -> Vec<Vec<f64>> {
        let data = self.link.frame.data_range();
        self.states
            .iter()
            .zip(&self.apriori)
            .map(|(st, apr)| extrinsic_llr(&st.r_hat[data.clone()], &st.r_var[data.clone()], apr, &self.link.alphabet))
            .collect()
    }

    /// One full turbo iteration; returns its record.
    pub fn turbo_iteration(&mut self) -> Result<IterationRecord> {
        self.forward_done = false;
        self.backward_done = false;
        self.inner_iterations = 0;
        self.diverged = 0;
        let (mut f, mut b) = (0, 0);
        while f < self.cfg.t_fp || b < self.cfg.t_bp {
            if f < self.cfg.t_fp {
                self.forward_sweep()?;
                f += 1;
            }
            if b < self.cfg.t_bp {
                self.backward_sweep()?;
                b += 1;
            }
        }
        if self.cfg.em && (self.cfg.t_bp >= 1 || self.n_frames() == 1) {
            self.em_step()?;
        }
        let eq_llrs = self.equalizer_llrs();
        let mut info_bits = Vec::with_capacity(self.n_frames());
        let mut next_apriori = Vec::with_capacity(self.n_frames());
        let mut decoded = 0;
        for llr in &eq_llrs {
            let (apr, bits, ok) = self.link.decode(llr, self.cfg.decoder_iters)?;
            next_apriori.push(apr);
            info_bits.push(bits);
            decoded += ok as usize;
        }
        let used = core::mem::replace(&mut self.apriori, next_apriori);
        Ok(IterationRecord {
            channel_estimates: self.states.iter().map(|s| s.h_hat.clone()).collect(),
            info_bits,
            apriori: used,
            equalizer_llrs: eq_llrs,
            inner_iterations: self.inner_iterations,
            diverged_frames: self.diverged,
            decoded_frames: decoded,
            hyper: Some(self.hyper),
        })
    }

    fn finish(self, iterations: Vec<IterationRecord>) -> EqualizerOutput {
        let last = iterations.last();
        EqualizerOutput {
            info_bits: last.map(|r| r.info_bits.clone()).unwrap_or_default(),
            extrinsic_llrs: last.map(|r| r.equalizer_llrs.clone()).unwrap_or_default(),
            channel_estimates: self.states.iter().map(|s| s.h_hat.clone()).collect(),
            channel_vars: self.states.iter().map(|s| s.h_var.clone()).collect(),
            iterations,
        }
    }
}

/// Random channel initialisation: `CN(0, 1)` means with variance `rho`.
pub fn random_channel_init<R: Rng + ?Sized>(l: usize, hyper: &HyperParams, rng: &mut R) -> (Vec<C64>, Vec<f64>) {
    let q = (0..l).map(|_| sample_cn(rng, C64::new(0.0, 0.0), 1.0)).collect();
    (q, vec![clamp_var_finite(hyper.rho); l])
}

/// Joint channel estimation and decoding of `K` frames at once.
pub fn run_dcs_jced<R: Rng + ?Sized>(
    link: &Link,
    y: &[Vec<C64>],
    cfg: &TurboConfig,
    hyper: &HyperParams,
    noise_var: f64,
    rng: &mut R,
) -> Result<EqualizerOutput> {
    let l = link.frame.channel_len;
    let (q, v): (Vec<_>, Vec<_>) = (0..y.len()).map(|_| random_channel_init(l, hyper, rng)).unzip();
    let mut eq = GroupEqualizer::new(link, y, noise_var, *cfg, *hyper, q, v)?;
    let mut records = Vec::with_capacity(cfg.t_turbo);
    for _ in 0..cfg.t_turbo {
        records.push(eq.turbo_iteration()?);
    }
    Ok(eq.finish(records))
}

/// Single-frame variant: every frame runs on its own with flat cross-frame
/// messages, and each frame's channel search starts from the previous
/// frame's posterior.
pub fn run_single_frame<R: Rng + ?Sized>(
    link: &Link,
    y: &[Vec<C64>],
    cfg: &TurboConfig,
    hyper: &HyperParams,
    noise_var: f64,
    rng: &mut R,
) -> Result<EqualizerOutput> {
    let cfg = TurboConfig { t_bp: 0, ..*cfg };
    let l = link.frame.channel_len;
    let mut out = EqualizerOutput::empty();
    let mut warm: Option<(Vec<C64>, Vec<f64>)> = None;
    for (k, yk) in y.iter().enumerate() {
        let (q, v) = match warm.take() {
            Some(w) => w,
            None => random_channel_init(l, hyper, rng),
        };
        let frame = core::slice::from_ref(yk);
        let mut eq = GroupEqualizer::new(link, frame, noise_var, cfg, *hyper, vec![q], vec![v])?;
        let mut records = Vec::with_capacity(cfg.t_turbo);
        for _ in 0..cfg.t_turbo {
            records.push(eq.turbo_iteration()?);
        }
        let single = eq.finish(records);
        warm = Some((single.channel_estimates[0].clone(), single.channel_vars[0].iter().map(|&v| clamp_var_finite(v)).collect()));
        merge_frame(&mut out, single, k);
    }
    Ok(out)
}

/// Append a one-frame result as frame `k` of a group result.
pub(crate) fn merge_frame(out: &mut EqualizerOutput, single: EqualizerOutput, k: usize) {
    out.info_bits.extend(single.info_bits);
    out.extrinsic_llrs.extend(single.extrinsic_llrs);
    out.channel_estimates.extend(single.channel_estimates);
    out.channel_vars.extend(single.channel_vars);
    for (t, rec) in single.iterations.into_iter().enumerate() {
        if k == 0 {
            out.iterations.push(rec);
            continue;
        }
        let dst = &mut out.iterations[t];
        dst.channel_estimates.extend(rec.channel_estimates);
        dst.info_bits.extend(rec.info_bits);
        dst.apriori.extend(rec.apriori);
        dst.equalizer_llrs.extend(rec.equalizer_llrs);
        dst.inner_iterations += rec.inner_iterations;
        dst.diverged_frames += rec.diverged_frames;
        dst.decoded_frames += rec.decoded_frames;
        dst.hyper = rec.hyper;
    }
}

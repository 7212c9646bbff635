//! Seeded Monte-Carlo trials over SNR points and receivers.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use dcsjced_core::baseline::{jced_single_frame, run_mmse_turbo};
use dcsjced_core::channel::{apply_channel, sample_track, ChannelTrack};
use dcsjced_core::fec::LdpcCode;
use dcsjced_core::modem::Interleaver;
use dcsjced_core::turbo::{run_dcs_jced, BitOrder, EqualizerOutput, Link};
use dcsjced_core::C64;

use crate::config::{ChannelSource, ExperimentConfig, Mode};
use crate::formats::{import_cir_trace, import_parity};
use crate::metrics::{bit_errors, nmse, Tally};
use crate::streams::{substream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub mode: Mode,
    /// 1-based.
    pub turbo_iter: usize,
    pub ber: f64,
    pub nmse_db: f64,
    pub bit_errors: usize,
    pub bits_total: usize,
    pub frames: usize,
    pub wall_time_s: f64,
}

/// One receiver on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub mode: Mode,
    /// Indexed by turbo iteration.
    pub per_iter: Vec<Tally>,
    pub wall_time_s: f64,
}

/// What one trial transmits and receives.
#[derive(Debug, Clone)]
pub struct Observation {
    pub link: Link,
    pub track: ChannelTrack,
    pub bits: Vec<Vec<u8>>,
    pub y: Vec<Vec<C64>>,
    pub noise_var: f64,
}

/// Everything shared by the trials of one experiment.
#[derive(Debug, Clone)]
pub struct Harness {
    pub cfg: ExperimentConfig,
    pub code: LdpcCode,
    pub trace: Option<ChannelTrack>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Format(#[from] crate::formats::FormatError),
    #[error("trial {trial}, {mode}: {source}")]
    Receiver { trial: usize, mode: Mode, source: dcsjced_core::Error },
    #[error("{0}")]
    Core(#[from] dcsjced_core::Error),
    #[error("channel trace has {got} taps but the frame expects {expected}")]
    TraceTaps { expected: usize, got: usize },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Draws that leave a frame with no active tap are redrawn from the same
/// stream; such a frame carries no signal at all.
const MAX_REDRAWS: usize = 10_000;

impl Harness {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, RunError> {
        cfg.validate()?;
        let code = match &cfg.parity_file {
            Some(p) => import_parity(p)?,
            None => LdpcCode::build(cfg.frame.n_info_bits, cfg.frame.n_code(), cfg.code_seed)?,
        };
        let trace = match &cfg.channel_source {
            ChannelSource::Synthetic => None,
            ChannelSource::Trace(p) => {
                let t = import_cir_trace(p)?;
                if t.n_taps() != cfg.frame.channel_len {
                    return Err(RunError::TraceTaps { expected: cfg.frame.channel_len, got: t.n_taps() });
                }
                Some(t)
            }
        };
        Ok(Harness { cfg, code, trace })
    }

    /// The `K`-frame channel group of a trial.
    pub fn channel(&self, trial: usize) -> ChannelTrack {
        let k = self.cfg.frames;
        match &self.trace {
            Some(t) => {
                let n = t.n_frames();
                let cirs = (0..k).map(|f| t.frames[(trial * k + f) % n].cir.clone()).collect();
                ChannelTrack::from_cirs(cirs).expect("taps checked on load")
            }
            None => {
                let mut rng = substream(self.cfg.seed, trial as u64, Stream::Channel);
                let l = self.cfg.frame.channel_len;
                let mut track = sample_track(&self.cfg.hyper, l, k, &mut rng);
                for _ in 0..MAX_REDRAWS {
                    if track.frames.iter().all(|f| f.cir.iter().any(|h| h.norm_sqr() > 0.0)) {
                        break;
                    }
                    track = sample_track(&self.cfg.hyper, l, k, &mut rng);
                }
                track
            }
        }
    }

    pub fn link(&self, trial: usize) -> Result<Link, RunError> {
        let mut rng = substream(self.cfg.seed, trial as u64, Stream::Interleaver);
        let n = match self.cfg.bit_order {
            BitOrder::EncodeThenInterleave => self.cfg.frame.n_code(),
            BitOrder::InterleaveThenEncode => self.cfg.frame.n_info_bits,
        };
        Ok(Link::new(self.cfg.frame, self.code.clone(), Interleaver::random(n, &mut rng), self.cfg.bit_order)?)
    }

    /// Transmitted bits and received frames of one trial.
    pub fn observe(&self, snr_db: f64, trial: usize) -> Result<Observation, RunError> {
        let cfg = &self.cfg;
        let link = self.link(trial)?;
        let track = self.channel(trial);
        let noise_var = cfg.noise_var(snr_db);
        let mut bits_rng = substream(cfg.seed, trial as u64, Stream::Bits);
        let mut noise_rng = substream(cfg.seed, trial as u64, Stream::Noise);
        let mut bits = Vec::with_capacity(cfg.frames);
        let mut y = Vec::with_capacity(cfg.frames);
        for f in &track.frames {
            let b: Vec<u8> = (0..cfg.frame.n_info_bits).map(|_| bits_rng.random_range(0..2u8)).collect();
            let x = link.modulate(&b)?;
            y.push(apply_channel(&x, &f.cir, noise_var, &mut noise_rng)?);
            bits.push(b);
        }
        Ok(Observation { link, track, bits, y, noise_var })
    }

    /// Run every configured receiver on one trial at one SNR.
    pub fn run_trial(&self, snr_db: f64, trial: usize) -> Result<Vec<TrialOutcome>, RunError> {
        let cfg = &self.cfg;
        let Observation { link, track, bits, y, noise_var } = self.observe(snr_db, trial)?;
        cfg.modes
            .iter()
            .map(|&mode| {
                let mut init = substream(cfg.seed, trial as u64, Stream::Init);
                let t0 = Instant::now();
                let out = match mode {
                    Mode::DcsJced => run_dcs_jced(&link, &y, &cfg.mode_turbo(mode), &cfg.hyper, noise_var, &mut init),
                    Mode::Jced => jced_single_frame(&link, &y, &cfg.mode_turbo(mode), &cfg.hyper, noise_var, &mut init),
                    Mode::Mmse => run_mmse_turbo(&link, &y, &cfg.mmse, noise_var),
                }
                .map_err(|source| RunError::Receiver { trial, mode, source })?;
                let wall = t0.elapsed().as_secs_f64();
                Ok(TrialOutcome { trial, mode, per_iter: compute_metrics(&bits, &track, &out), wall_time_s: wall })
            })
            .collect()
    }

    /// All trials at one SNR; outer index is the trial.
    pub fn run_point(&self, snr_db: f64) -> Result<Vec<Vec<TrialOutcome>>, RunError> {
        let go = || (0..self.cfg.trials).into_par_iter().map(|t| self.run_trial(snr_db, t)).collect::<Result<Vec<_>, _>>();
        if self.cfg.threads == 0 {
            return go();
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?
            .install(go)
    }
}

/// Per-turbo-iteration BER and NMSE tallies of one receiver output.
pub fn compute_metrics(bits: &[Vec<u8>], track: &ChannelTrack, out: &EqualizerOutput) -> Vec<Tally> {
    out.iterations
        .iter()
        .map(|rec| {
            let mut t = Tally::default();
            for (k, truth) in bits.iter().enumerate() {
                t.bit_errors += bit_errors(truth, &rec.info_bits[k]);
                t.bits_total += truth.len();
                t.frames += 1;
                if let Some(e) = nmse(&rec.channel_estimates[k], &track.frames[k].cir) {
                    t.nmse_sum += e;
                    t.nmse_frames += 1;
                }
            }
            t
        })
        .collect()
}

/// Fold trial outcomes into one row per receiver and turbo iteration.
pub fn aggregate(cfg: &ExperimentConfig, snr_db: f64, trials: &[Vec<TrialOutcome>]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for (mi, &mode) in cfg.modes.iter().enumerate() {
        let n_iter = trials.first().map_or(0, |t| t[mi].per_iter.len());
        let wall: f64 = if cfg.timing { trials.iter().map(|t| t[mi].wall_time_s).sum() } else { 0.0 };
        for it in 0..n_iter {
            let mut tally = Tally::default();
            for t in trials {
                tally.add(&t[mi].per_iter[it]);
            }
            rows.push(ResultRow {
                snr_db,
                mode,
                turbo_iter: it + 1,
                ber: tally.ber(),
                nmse_db: tally.nmse_db(),
                bit_errors: tally.bit_errors,
                bits_total: tally.bits_total,
                frames: tally.frames,
                wall_time_s: wall,
            });
        }
    }
    rows
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, RunError> {
    let h = Harness::new(cfg.clone())?;
    let mut rows = Vec::new();
    for &snr in &cfg.snr_list {
        log::info!("snr {snr} dB: {} trials x {} frames", cfg.trials, cfg.frames);
        let trials = h.run_point(snr)?;
        rows.extend(aggregate(cfg, snr, &trials));
    }
    Ok(rows)
}

pub fn run_trial(cfg: &ExperimentConfig, snr_db: f64, trial: usize) -> Result<Vec<TrialOutcome>, RunError> {
    Harness::new(cfg.clone())?.run_trial(snr_db, trial)
}

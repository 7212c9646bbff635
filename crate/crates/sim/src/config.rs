//! Experiment configuration: flat `key = value` files with `#` comments, and
//! the override layer used by the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dcsjced_core::baseline::MmseConfig;
use dcsjced_core::channel::HyperParams;
use dcsjced_core::modem::FrameConfig;
use dcsjced_core::msgcore::Domain;
use dcsjced_core::turbo::{BitOrder, Schedule, TurboConfig};
use dcsjced_core::C64;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    DcsJced,
    Jced,
    Mmse,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::DcsJced => "dcs-jced",
            Mode::Jced => "jced",
            Mode::Mmse => "mmse",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dcs-jced" | "dcsjced" | "dcs" => Ok(Mode::DcsJced),
            "jced" => Ok(Mode::Jced),
            "mmse" | "mmse-turbo" => Ok(Mode::Mmse),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelSource {
    Synthetic,
    Trace(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// E_b/N_0 points in dB.
    pub snr_list: Vec<f64>,
    pub trials: usize,
    /// Frames per group (`K`).
    pub frames: usize,
    /// Receivers evaluated on every trial, in output order.
    pub modes: Vec<Mode>,
    pub frame: FrameConfig,
    pub turbo: TurboConfig,
    /// Inner iteration budget of the single-frame receiver.
    pub jced_inner_iters: usize,
    pub mmse: MmseConfig,
    /// Generator prior for synthetic channels and starting point of EM.
    pub hyper: HyperParams,
    pub bit_order: BitOrder,
    pub seed: u64,
    pub code_seed: u64,
    pub parity_file: Option<PathBuf>,
    pub channel_source: ChannelSource,
    pub out: Option<PathBuf>,
    /// Record wall-clock time per row; off keeps the CSV byte-reproducible.
    pub timing: bool,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            snr_list: vec![30.0],
            trials: 200,
            frames: 10,
            modes: vec![Mode::DcsJced],
            frame: FrameConfig::standard(63),
            turbo: TurboConfig::default(),
            jced_inner_iters: 100,
            mmse: MmseConfig::default(),
            hyper: HyperParams::synthetic(),
            bit_order: BitOrder::EncodeThenInterleave,
            seed: 1,
            code_seed: 1,
            parity_file: None,
            channel_source: ChannelSource::Synthetic,
            out: None,
            timing: false,
            threads: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| ConfigError::Value { key: key.into(), msg: e.to_string() })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Value { key: key.into(), msg: format!("expected a boolean, got `{v}`") }),
    }
}

pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

pub fn parse_domain(v: &str) -> Result<Domain, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "time" | "td" => Ok(Domain::Time),
        "freq" | "frequency" | "fd" => Ok(Domain::Frequency),
        other => Err(format!("unknown domain `{other}`")),
    }
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = key.trim().to_ascii_lowercase().replace('-', "_");
        let v = value.trim();
        match k.as_str() {
            "snr" | "snr_db" | "snr_list" => self.snr_list = parse_list(&k, v)?,
            "trials" => self.trials = parse(&k, v)?,
            "frames" | "k" => self.frames = parse(&k, v)?,
            "mode" | "modes" => self.modes = parse_list(&k, v)?,
            "pilot_len" | "n_pilot" => self.frame = with_pilot(self.frame, parse(&k, v)?),
            "tfp" | "t_fp" => self.turbo.t_fp = parse(&k, v)?,
            "tbp" | "t_bp" => self.turbo.t_bp = parse(&k, v)?,
            "turbo_iters" | "t_turbo" => {
                self.turbo.t_turbo = parse(&k, v)?;
                self.mmse.t_turbo = self.turbo.t_turbo;
            }
            "inner_iters" | "t_inner" => self.turbo.t_inner = parse(&k, v)?,
            "jced_inner_iters" => self.jced_inner_iters = parse(&k, v)?,
            "breakout_tol" => self.turbo.breakout_tol = parse(&k, v)?,
            "damping" => self.turbo.damping = parse(&k, v)?,
            "domain" => self.turbo.domain = parse_domain(v).map_err(|msg| ConfigError::Value { key: k.clone(), msg })?,
            "schedule" => {
                self.turbo.schedule = match v.to_ascii_lowercase().as_str() {
                    "serial" => Schedule::Serial,
                    "parallel" => Schedule::Parallel,
                    _ => return Err(ConfigError::Value { key: k, msg: format!("unknown schedule `{v}`") }),
                }
            }
            "em" => self.turbo.em = parse_bool(&k, v)?,
            "decoder_iters" => {
                self.turbo.decoder_iters = parse(&k, v)?;
                self.mmse.decoder_iters = self.turbo.decoder_iters;
            }
            "n1" => self.mmse.n1 = parse(&k, v)?,
            "n2" => self.mmse.n2 = parse(&k, v)?,
            "p01" => self.hyper.p01 = parse(&k, v)?,
            "lambda" => self.hyper.lambda = parse(&k, v)?,
            "zeta_re" => self.hyper.zeta = C64::new(parse(&k, v)?, self.hyper.zeta.im),
            "zeta_im" => self.hyper.zeta = C64::new(self.hyper.zeta.re, parse(&k, v)?),
            "varrho" => self.hyper.varrho = parse(&k, v)?,
            "rho" => self.hyper.rho = parse(&k, v)?,
            "bit_order" => {
                self.bit_order = match v.to_ascii_lowercase().as_str() {
                    "encode_then_interleave" | "encode-then-interleave" => BitOrder::EncodeThenInterleave,
                    "interleave_then_encode" | "interleave-then-encode" => BitOrder::InterleaveThenEncode,
                    _ => return Err(ConfigError::Value { key: k, msg: format!("unknown bit order `{v}`") }),
                }
            }
            "seed" => self.seed = parse(&k, v)?,
            "code_seed" => self.code_seed = parse(&k, v)?,
            "parity_file" => self.parity_file = Some(PathBuf::from(v)),
            "channel_trace" => self.channel_source = ChannelSource::Trace(PathBuf::from(v)),
            "out" => self.out = Some(PathBuf::from(v)),
            "timing" => self.timing = parse_bool(&k, v)?,
            "threads" => self.threads = parse(&k, v)?,
            _ => return Err(ConfigError::UnknownKey(key.trim().to_string())),
        }
        Ok(())
    }

    /// Apply every setting in a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: n + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            self.set(key, value).map_err(|e| ConfigError::Syntax { line: n + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.snr_list.is_empty() {
            return bad("snr list is empty".into());
        }
        if let Some(s) = self.snr_list.iter().find(|s| !s.is_finite()) {
            return bad(format!("snr {s} is not finite"));
        }
        if self.trials == 0 || self.frames == 0 {
            return bad("trials and frames must be at least 1".into());
        }
        if self.modes.is_empty() {
            return bad("no receiver mode selected".into());
        }
        if self.jced_inner_iters == 0 {
            return bad("jced_inner_iters must be at least 1".into());
        }
        self.frame.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.turbo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.mmse.validate(self.frame.frame_len()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.hyper.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Noise variance for a given E_b/N_0 with unit symbol energy:
    /// `1 / (R Q 10^(snr/10))`.
    pub fn noise_var(&self, snr_db: f64) -> f64 {
        1.0 / (self.frame.rate() * self.frame.bits_per_symbol as f64 * 10f64.powf(snr_db / 10.0))
    }

    pub fn mode_turbo(&self, mode: Mode) -> TurboConfig {
        match mode {
            Mode::Jced => TurboConfig { t_inner: self.jced_inner_iters, t_bp: 0, ..self.turbo },
            _ => self.turbo,
        }
    }
}

fn with_pilot(frame: FrameConfig, n_pilot: usize) -> FrameConfig {
    FrameConfig { n_pilot, ..frame }
}

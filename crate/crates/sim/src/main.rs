use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dcsjced_sim::config::{parse_domain, ExperimentConfig, Mode};
use dcsjced_sim::experiment::{run_experiment, Harness};
use dcsjced_sim::formats::{export_cir_trace, write_csv, write_cir_trace};

#[derive(Parser)]
#[command(name = "dcsjced", version, about = "Monte-Carlo simulation of joint channel estimation and turbo equalization")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single SNR point.
    Run(Opts),
    /// Simulate every point of the SNR list.
    Sweep(Opts),
    /// Write the channel groups of the first trials as a CIR trace.
    ExportChannel(Opts),
}

#[derive(Args)]
struct Opts {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// E_b/N_0 values in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Option<Vec<f64>>,
    /// Receivers, comma separated: dcs-jced, jced, mmse.
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<Mode>>,
    /// Frames per group (K).
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    pilot_len: Option<usize>,
    #[arg(long)]
    tfp: Option<usize>,
    #[arg(long)]
    tbp: Option<usize>,
    #[arg(long)]
    turbo_iters: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    /// time or freq.
    #[arg(long, value_parser = parse_domain)]
    domain: Option<dcsjced_core::msgcore::Domain>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use channels from a CIR trace file instead of the synthetic model.
    #[arg(long)]
    channel_trace: Option<PathBuf>,
    /// Record wall-clock time per row.
    #[arg(long)]
    timing: bool,
}

impl Opts {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.snr {
            c.snr_list = v.clone();
        }
        if let Some(v) = &self.mode {
            c.modes = v.clone();
        }
        let set = |c: &mut ExperimentConfig, k: &str, v: Option<String>| -> Result<()> {
            if let Some(v) = v {
                c.set(k, &v)?;
            }
            Ok(())
        };
        set(&mut c, "frames", self.frames.map(|v| v.to_string()))?;
        set(&mut c, "pilot_len", self.pilot_len.map(|v| v.to_string()))?;
        set(&mut c, "tfp", self.tfp.map(|v| v.to_string()))?;
        set(&mut c, "tbp", self.tbp.map(|v| v.to_string()))?;
        set(&mut c, "turbo_iters", self.turbo_iters.map(|v| v.to_string()))?;
        if let Some(n) = self.inner_iters {
            c.turbo.t_inner = n;
            c.jced_inner_iters = n;
        }
        if let Some(d) = self.domain {
            c.turbo.domain = d;
        }
        set(&mut c, "seed", self.seed.map(|v| v.to_string()))?;
        set(&mut c, "trials", self.trials.map(|v| v.to_string()))?;
        if let Some(p) = &self.out {
            c.out = Some(p.clone());
        }
        if let Some(p) = &self.channel_trace {
            c.set("channel_trace", &p.to_string_lossy())?;
        }
        c.timing |= self.timing;
        c.validate()?;
        Ok(c)
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Command::Run(o) => {
            let cfg = o.config()?;
            if cfg.snr_list.len() != 1 {
                bail!("`run` takes exactly one SNR point; use `sweep` for a list");
            }
            let rows = run_experiment(&cfg)?;
            let mut w = output(&cfg.out)?;
            write_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Command::Sweep(o) => {
            let cfg = o.config()?;
            let rows = run_experiment(&cfg)?;
            let mut w = output(&cfg.out)?;
            write_csv(&mut w, &rows)?;
            w.flush()?;
        }
        Command::ExportChannel(o) => {
            let cfg = o.config()?;
            let h = Harness::new(cfg.clone())?;
            let mut frames = Vec::with_capacity(cfg.trials * cfg.frames);
            for t in 0..cfg.trials {
                frames.extend(h.channel(t).frames.into_iter().map(|f| f.cir));
            }
            let track = dcsjced_core::channel::ChannelTrack::from_cirs(frames)?;
            match &cfg.out {
                Some(p) => export_cir_trace(p, &track)?,
                None => write_cir_trace(std::io::stdout().lock(), &track)?,
            }
        }
    }
    Ok(())
}

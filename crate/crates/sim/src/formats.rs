//! Plain-text file formats: CIR traces, parity-check listings and result CSV.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use dcsjced_core::channel::ChannelTrack;
use dcsjced_core::fec::LdpcCode;
use dcsjced_core::C64;

use crate::experiment::ResultRow;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Empty(&'static str),
    #[error("{0}")]
    Core(#[from] dcsjced_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

/// Read a CIR trace: one frame per line as `re_1 im_1 re_2 im_2 ...`.
pub fn read_cir_trace<R: BufRead>(reader: R) -> Result<ChannelTrack, FormatError> {
    let mut frames: Vec<Vec<C64>> = Vec::new();
    let mut taps = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let nums = body
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(n + 1, format!("`{t}`: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if nums.len() % 2 != 0 {
            return Err(parse_err(n + 1, format!("odd number of values ({})", nums.len())));
        }
        if let Some(bad) = nums.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(n + 1, format!("non-finite value {bad}")));
        }
        let cir: Vec<C64> = nums.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
        match taps {
            None => taps = Some(cir.len()),
            Some(l) if l != cir.len() => return Err(parse_err(n + 1, format!("expected {l} taps, found {}", cir.len()))),
            _ => {}
        }
        frames.push(cir);
    }
    if frames.is_empty() {
        return Err(FormatError::Empty("channel trace has no frames"));
    }
    Ok(ChannelTrack::from_cirs(frames)?)
}

pub fn import_cir_trace(path: &Path) -> Result<ChannelTrack, FormatError> {
    read_cir_trace(io::BufReader::new(std::fs::File::open(path)?))
}

/// Write a CIR trace with round-trip exact float formatting.
pub fn write_cir_trace<W: Write>(mut w: W, track: &ChannelTrack) -> io::Result<()> {
    writeln!(w, "# {} frames x {} taps, re im pairs", track.n_frames(), track.n_taps())?;
    for f in &track.frames {
        let mut line = String::new();
        for (i, h) in f.cir.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{:?} {:?}", h.re, h.im).expect("writing to a string");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn export_cir_trace(path: &Path, track: &ChannelTrack) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write_cir_trace(&mut f, track)?;
    f.flush()
}

/// Parity-check listing: a `rows cols` header, then one `row col` pair per
/// nonzero entry.
pub fn write_parity<W: Write>(mut w: W, code: &LdpcCode) -> io::Result<()> {
    let checks = code.parity_checks();
    writeln!(w, "{} {}", checks.len(), code.n_code())?;
    for (r, row) in checks.iter().enumerate() {
        for &c in row {
            writeln!(w, "{r} {c}")?;
        }
    }
    Ok(())
}

pub fn read_parity<R: BufRead>(reader: R) -> Result<LdpcCode, FormatError> {
    let mut header = None;
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let v = body
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| parse_err(n + 1, format!("`{t}`: {e}"))))
            .collect::<Result<Vec<usize>, _>>()?;
        if v.len() != 2 {
            return Err(parse_err(n + 1, "expected two integers"));
        }
        match header {
            None => {
                header = Some((v[0], v[1]));
                rows = vec![Vec::new(); v[0]];
            }
            Some((nr, nc)) => {
                if v[0] >= nr || v[1] >= nc {
                    return Err(parse_err(n + 1, format!("entry ({}, {}) outside {nr} x {nc}", v[0], v[1])));
                }
                rows[v[0]].push(v[1]);
            }
        }
    }
    let (_, n_code) = header.ok_or(FormatError::Empty("parity listing has no header"))?;
    Ok(LdpcCode::from_parity_checks(n_code, rows)?)
}

pub fn import_parity(path: &Path) -> Result<LdpcCode, FormatError> {
    read_parity(io::BufReader::new(std::fs::File::open(path)?))
}

pub const CSV_HEADER: &str = "snr_db,mode,turbo_iter,ber,nmse_db,bit_errors,bits_total,frames,wall_time_s";

/// At most 10 significant digits, no exponent for ordinary magnitudes and no
/// trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        let s = format!("{:.9e}", x);
        let (mant, e) = s.split_once('e').expect("exponent form");
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        return format!("{mant}e{e}");
    }
    let decimals = (9 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(mut w: W, rows: &[ResultRow]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_sig(r.snr_db),
            r.mode,
            r.turbo_iter,
            fmt_sig(r.ber),
            fmt_sig(r.nmse_db),
            r.bit_errors,
            r.bits_total,
            r.frames,
            fmt_sig(r.wall_time_s)
        )?;
    }
    Ok(())
}

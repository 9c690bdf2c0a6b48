use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::{PowerSeries, DEFAULT_DT_SECONDS};

use super::{format_time, parse_time, read_bytes, write_atomic};

pub const HEADER: &str = "timestamp,power_mw";
pub const SIGNIFICANT_DIGITS: i32 = 9;

/// Plain decimal with nine significant digits.
pub fn format_value(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (SIGNIFICANT_DIGITS - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn encode_series(series: &PowerSeries) -> String {
    let mut s = String::with_capacity(32 * (series.len() + 1));
    s.push_str(HEADER);
    s.push('\n');
    for (i, &v) in series.values.iter().enumerate() {
        let _ = writeln!(s, "{},{}", format_time(series.time_at(i)), format_value(v));
    }
    s
}

/// Parses a series; rows must be evenly spaced and strictly increasing. A
/// single-row file is taken to have the default 3 h step.
pub fn decode_series(text: &str) -> Result<PowerSeries> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some(_) => return Err(Error::format("line 1", format!("expected header `{HEADER}`"))),
        None => return Err(Error::format("line 1", "file is empty")),
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let field = format!("line {}", i + 1);
        let (ts, v) = line
            .split_once(',')
            .ok_or_else(|| Error::format(&field, format!("expected `timestamp,value`, got `{line}`")))?;
        let t = parse_time(ts).ok_or_else(|| Error::format(&field, format!("bad timestamp `{ts}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::format(&field, format!("bad value `{v}`")))?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::format(&field, format!("timestamp {ts} does not increase")));
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.is_empty() {
        return Err(Error::format("line 2", "no data rows"));
    }
    let dt = if times.len() > 1 {
        (times[1] - times[0]).num_seconds()
    } else {
        DEFAULT_DT_SECONDS
    };
    for (i, w) in times.windows(2).enumerate() {
        if (w[1] - w[0]).num_seconds() != dt {
            return Err(Error::format(format!("line {}", i + 3), "uneven time step"));
        }
    }
    Ok(PowerSeries {
        t0: times[0],
        dt_seconds: dt,
        values,
    })
}

pub fn write_series(path: &Path, series: &PowerSeries) -> Result<()> {
    write_atomic(path, encode_series(series).as_bytes())
}

pub fn read_series(path: &Path) -> Result<PowerSeries> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("encoding", "not valid UTF-8"))?;
    decode_series(text)
}

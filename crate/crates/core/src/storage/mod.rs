//! On-disk formats: weather rasters, power series, fleets, checkpoints,
//! run configuration and grayscale images.
//!
//! Writers go through a temporary file in the target directory followed by an
//! atomic rename, so readers never observe a partial file.

pub mod checkpoint;
pub mod config;
pub mod fleet;
pub mod pgm;
pub mod raster;
pub mod series;

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use fleet::{read_fleet, write_fleet};
pub use pgm::write_pgm;
pub use raster::{read_raster, write_raster};
pub use series::{read_series, write_series};

pub const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format_time(t: DateTime<Utc>) -> String {
    t.format(TIME_FORMAT).to_string()
}

pub fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s.trim(), TIME_FORMAT)
        .ok()
        .map(|n| n.and_utc())
}

/// Writes `bytes` to `path` via a sibling temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Splits off the next `\n`-terminated ASCII line.
pub(crate) fn take_line<'a>(buf: &mut &'a [u8], field: &str) -> Result<&'a str> {
    let end = buf
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(field, "header ended early"))?;
    let line = std::str::from_utf8(&buf[..end]).map_err(|_| Error::format(field, "not valid UTF-8"))?;
    *buf = &buf[end + 1..];
    Ok(line)
}

pub(crate) fn parse_field<T: std::str::FromStr>(line: &str, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    line.trim()
        .parse::<T>()
        .map_err(|e| Error::format(field, format!("cannot parse `{line}`: {e}")))
}

pub(crate) fn check_magic(buf: &mut &[u8], magic: &[u8]) -> Result<()> {
    if buf.len() < magic.len() || &buf[..magic.len()] != magic {
        return Err(Error::format(
            "magic",
            format!("expected {:?}", String::from_utf8_lossy(magic).trim_end()),
        ));
    }
    *buf = &buf[magic.len()..];
    Ok(())
}

pub(crate) fn f32_payload(values: impl Iterator<Item = f32>, out: &mut Vec<u8>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn read_f32s(payload: &[u8], count: usize, field: &str) -> Result<Vec<f32>> {
    let expected = count * 4;
    if payload.len() != expected {
        return Err(Error::Truncated {
            field: field.to_string(),
            expected,
            actual: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::{GridSpec, RasterSeries};
use crate::tensor::Tensor;

use super::{
    check_magic, f32_payload, format_time, parse_field, parse_time, read_bytes, read_f32s, take_line, write_atomic,
};

pub const MAGIC: &[u8; 6] = b"PVRS1\n";

pub fn encode_raster(series: &RasterSeries) -> Vec<u8> {
    let g = &series.grid;
    let s = series.frames.shape();
    let mut out = MAGIC.to_vec();
    let header = format!(
        "{}\n{}\n{}\n{}\n{}\n{}\n{}\n{}\n{}\n{}\n{}\n",
        s[0],
        s[1],
        s[2],
        s[3],
        format_time(series.t0),
        series.dt_seconds,
        g.lat0,
        g.lon0,
        g.dlat,
        g.dlon,
        series.channels.join(",")
    );
    out.extend_from_slice(header.as_bytes());
    f32_payload(series.frames.data().iter().map(|&v| v as f32), &mut out);
    out
}

pub fn decode_raster(bytes: &[u8]) -> Result<RasterSeries> {
    let mut buf = bytes;
    check_magic(&mut buf, MAGIC)?;
    let n_frames: usize = parse_field(take_line(&mut buf, "n_frames")?, "n_frames")?;
    let n_channels: usize = parse_field(take_line(&mut buf, "n_channels")?, "n_channels")?;
    let n_rows: usize = parse_field(take_line(&mut buf, "n_rows")?, "n_rows")?;
    let n_cols: usize = parse_field(take_line(&mut buf, "n_cols")?, "n_cols")?;
    let t0_line = take_line(&mut buf, "t0")?;
    let t0 = parse_time(t0_line).ok_or_else(|| Error::format("t0", format!("cannot parse `{t0_line}`")))?;
    let dt_seconds: i64 = parse_field(take_line(&mut buf, "dt_seconds")?, "dt_seconds")?;
    let lat0: f64 = parse_field(take_line(&mut buf, "lat0")?, "lat0")?;
    let lon0: f64 = parse_field(take_line(&mut buf, "lon0")?, "lon0")?;
    let dlat: f64 = parse_field(take_line(&mut buf, "dlat")?, "dlat")?;
    let dlon: f64 = parse_field(take_line(&mut buf, "dlon")?, "dlon")?;
    let channels: Vec<String> = take_line(&mut buf, "channels")?
        .split(',')
        .map(|c| c.trim().to_string())
        .collect();
    if channels.len() != n_channels || channels.iter().any(|c| c.is_empty()) {
        return Err(Error::format(
            "channels",
            format!("{} names listed for {n_channels} channels", channels.len()),
        ));
    }
    if n_frames == 0 {
        return Err(Error::format("n_frames", "must be positive"));
    }
    let count = n_frames
        .checked_mul(n_channels)
        .and_then(|v| v.checked_mul(n_rows))
        .and_then(|v| v.checked_mul(n_cols))
        .ok_or_else(|| Error::format("n_frames", "payload size overflows"))?;
    let values = read_f32s(buf, count, "frames")?;
    let grid = GridSpec {
        lat0,
        lon0,
        dlat,
        dlon,
        n_rows,
        n_cols,
    };
    let frames = Tensor::new(
        vec![n_frames, n_channels, n_rows, n_cols],
        values.into_iter().map(f64::from).collect(),
    )?;
    RasterSeries::new(grid, channels, t0, dt_seconds, frames).map_err(|e| Error::format("header", e.to_string()))
}

/// Stores frames as 32-bit little-endian floats after a text header.
pub fn write_raster(path: &Path, series: &RasterSeries) -> Result<()> {
    write_atomic(path, &encode_raster(series))
}

pub fn read_raster(path: &Path) -> Result<RasterSeries> {
    decode_raster(&read_bytes(path)?)
}

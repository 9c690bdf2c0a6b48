use std::path::Path;

use crate::error::{Error, Result};

use super::write_atomic;

/// 8-bit binary PGM, darkest where `values` is largest. An all-zero map is white.
pub fn encode_pgm(values: &[f64], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if values.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(Error::dim(format!("{} values for a {rows}×{cols} image", values.len())));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        let level = if max > 0.0 {
            (255.0 * v.max(0.0) / max).round()
        } else {
            0.0
        };
        255 - level as u8
    }));
    Ok(out)
}

pub fn write_pgm(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    write_atomic(path, &encode_pgm(values, rows, cols)?)
}

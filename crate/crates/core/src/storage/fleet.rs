use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synth::{Fleet, GridSpec, Plant};

use super::{read_bytes, write_atomic};

pub const HEADER: &str = "lat,lon,capacity_mw";

/// One plant per line; floats in shortest round-trip form.
pub fn encode_fleet(fleet: &Fleet) -> String {
    let mut s = format!("{HEADER}\n");
    for p in fleet.plants() {
        let _ = writeln!(s, "{},{},{}", p.lat, p.lon, p.capacity);
    }
    s
}

pub fn decode_fleet(text: &str, grid: &GridSpec) -> Result<Fleet> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(Error::format("line 1", format!("expected header `{HEADER}`"))),
    }
    let mut plants = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let field = format!("line {}", i + 1);
        let nums: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(&field, e.to_string()))?;
        let [lat, lon, capacity] = nums[..] else {
            return Err(Error::format(&field, "expected three values"));
        };
        plants.push(Plant { lat, lon, capacity });
    }
    Fleet::new(plants, grid).map_err(|e| Error::format("plants", e.to_string()))
}

pub fn write_fleet(path: &Path, fleet: &Fleet) -> Result<()> {
    write_atomic(path, encode_fleet(fleet).as_bytes())
}

pub fn read_fleet(path: &Path, grid: &GridSpec) -> Result<Fleet> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("encoding", "not valid UTF-8"))?;
    decode_fleet(text, grid)
}

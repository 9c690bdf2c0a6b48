use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{Normalization, N_FEATURES};
use crate::model::{Architecture, PVNetParams};

use super::config::{parse_config_str, RunConfig};
use super::{check_magic, f32_payload, parse_field, read_bytes, read_f32s, take_line, write_atomic};

pub const MAGIC: &[u8; 6] = b"PVNW1\n";

/// Trained weights with the configuration and normalization they were trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub normalization: Normalization,
    pub params: PVNetParams<f64>,
}

impl Checkpoint {
    pub fn architecture(config: &RunConfig) -> Result<Architecture> {
        let g = &config.synth.grid;
        Architecture::new(&config.model, N_FEATURES, g.n_rows, g.n_cols)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Text header (config echo, normalization, tensor list) then every
/// parameter as 32-bit little-endian floats.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let echo = ckpt.config.echo();
    let n = &ckpt.normalization;
    let mut h = String::new();
    let _ = writeln!(h, "config {}", echo.lines().count());
    h.push_str(&echo);
    let _ = writeln!(h, "normalization 3");
    let _ = writeln!(h, "channel_mean = {}", join(&n.channel_mean));
    let _ = writeln!(h, "channel_std = {}", join(&n.channel_std));
    let _ = writeln!(h, "target_scale = {}", n.target_scale);
    let names = ckpt.params.names();
    let tensors = ckpt.params.tensors();
    let _ = writeln!(h, "entries {}", names.len());
    for (name, t) in names.iter().zip(&tensors) {
        let shape = t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        let _ = writeln!(h, "{name} {shape}");
    }
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(h.as_bytes());
    f32_payload(
        tensors.iter().flat_map(|t| t.data().iter().map(|&v| v as f32)),
        &mut out,
    );
    out
}

fn section_count(line: &str, name: &str) -> Result<usize> {
    let rest = line
        .strip_prefix(name)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::format(name, format!("expected `{name} <count>`, got `{line}`")))?;
    parse_field(rest, name)
}

fn keyed_line<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.split_once('=')
        .filter(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
        .ok_or_else(|| Error::format(key, format!("expected `{key} = ...`, got `{line}`")))
}

fn float_list(line: &str, key: &str) -> Result<Vec<f64>> {
    keyed_line(line, key)?
        .split(',')
        .map(|v| parse_field::<f64>(v, key))
        .collect()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut buf = bytes;
    check_magic(&mut buf, MAGIC)?;
    let n_config = section_count(take_line(&mut buf, "config")?, "config")?;
    let mut echo = String::new();
    for _ in 0..n_config {
        echo.push_str(take_line(&mut buf, "config")?);
        echo.push('\n');
    }
    let config = parse_config_str(&echo).map_err(|e| Error::format("config", e.to_string()))?;
    if section_count(take_line(&mut buf, "normalization")?, "normalization")? != 3 {
        return Err(Error::format("normalization", "expected 3 lines"));
    }
    let normalization = Normalization {
        channel_mean: float_list(take_line(&mut buf, "channel_mean")?, "channel_mean")?,
        channel_std: float_list(take_line(&mut buf, "channel_std")?, "channel_std")?,
        target_scale: parse_field(
            keyed_line(take_line(&mut buf, "target_scale")?, "target_scale")?,
            "target_scale",
        )?,
    };
    normalization
        .validate()
        .map_err(|e| Error::format("normalization", e.to_string()))?;

    let arch = Checkpoint::architecture(&config).map_err(|e| Error::format("config", e.to_string()))?;
    let mut params = PVNetParams::<f64>::zeros(&arch);
    let names = params.names();
    let n_entries = section_count(take_line(&mut buf, "entries")?, "entries")?;
    if n_entries != names.len() {
        return Err(Error::format(
            "entries",
            format!("{n_entries} entries listed, the configured model has {}", names.len()),
        ));
    }
    for (name, t) in names.iter().zip(params.tensors()) {
        let line = take_line(&mut buf, name)?;
        let expected = t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        if line.trim() != format!("{name} {expected}") {
            return Err(Error::format(
                name,
                format!("expected `{name} {expected}`, got `{line}`"),
            ));
        }
    }
    let values = read_f32s(buf, params.param_count(), "weights")?;
    params.assign_flat(&values.into_iter().map(f64::from).collect::<Vec<_>>())?;
    Ok(Checkpoint {
        config,
        normalization,
        params,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_bytes(path)?)
}

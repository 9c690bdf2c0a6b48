use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evaluation::DaylightRule;
use crate::model::{format_stack, parse_stack, PVNetConfig};
use crate::occlusion::DEFAULT_SAMPLES;
use crate::synth::SynthConfig;

use super::{format_time, parse_time, read_bytes};

/// Every tunable of a run. One seed drives data generation and training.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub model: PVNetConfig,
    pub train_fraction: f64,
    pub occlusion_samples: usize,
    pub daylight_rule: DaylightRule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            model: PVNetConfig::default(),
            train_fraction: 0.75,
            occlusion_samples: DEFAULT_SAMPLES,
            daylight_rule: DaylightRule::Measured,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "seed",
    "days",
    "start",
    "dt_seconds",
    "n_rows",
    "n_cols",
    "lat0",
    "lon0",
    "dlat",
    "dlon",
    "n_plants",
    "concentration",
    "conv_stack",
    "fc_dim",
    "lstm_units",
    "dropout_conv",
    "dropout_fc",
    "lr",
    "batch_size",
    "epochs",
    "train_fraction",
    "occlusion_samples",
    "daylight_rule",
];

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.model.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.synth.seed = seed;
    }

    fn get(&self, key: &str) -> Option<String> {
        let s = &self.synth;
        let m = &self.model;
        Some(match key {
            "seed" => self.seed().to_string(),
            "days" => s.days.to_string(),
            "start" => format_time(s.t0),
            "dt_seconds" => s.dt_seconds.to_string(),
            "n_rows" => s.grid.n_rows.to_string(),
            "n_cols" => s.grid.n_cols.to_string(),
            "lat0" => s.grid.lat0.to_string(),
            "lon0" => s.grid.lon0.to_string(),
            "dlat" => s.grid.dlat.to_string(),
            "dlon" => s.grid.dlon.to_string(),
            "n_plants" => s.n_plants.to_string(),
            "concentration" => s.concentration.to_string(),
            "conv_stack" => format_stack(&m.conv_stack),
            "fc_dim" => m.fc_dim.to_string(),
            "lstm_units" => m.lstm_units.to_string(),
            "dropout_conv" => m.dropout_conv.to_string(),
            "dropout_fc" => m.dropout_fc.to_string(),
            "lr" => m.lr.to_string(),
            "batch_size" => m.batch_size.to_string(),
            "epochs" => m.epochs.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "occlusion_samples" => self.occlusion_samples.to_string(),
            "daylight_rule" => self.daylight_rule.name().to_string(),
            _ => return None,
        })
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>()
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
        }
        let v = value.trim();
        let s = &mut self.synth;
        let m = &mut self.model;
        match key {
            "seed" => {
                let seed = num(key, v)?;
                self.set_seed(seed);
            }
            "days" => s.days = num(key, v)?,
            "start" => {
                s.t0 = parse_time(v)
                    .ok_or_else(|| Error::config(key, format!("expected YYYY-MM-DDTHH:MM:SSZ, got `{v}`")))?
            }
            "dt_seconds" => s.dt_seconds = num(key, v)?,
            "n_rows" => s.grid.n_rows = num(key, v)?,
            "n_cols" => s.grid.n_cols = num(key, v)?,
            "lat0" => s.grid.lat0 = num(key, v)?,
            "lon0" => s.grid.lon0 = num(key, v)?,
            "dlat" => s.grid.dlat = num(key, v)?,
            "dlon" => s.grid.dlon = num(key, v)?,
            "n_plants" => s.n_plants = num(key, v)?,
            "concentration" => s.concentration = num(key, v)?,
            "conv_stack" => m.conv_stack = parse_stack(v).map_err(|e| Error::config(key, e))?,
            "fc_dim" => m.fc_dim = num(key, v)?,
            "lstm_units" => m.lstm_units = num(key, v)?,
            "dropout_conv" => m.dropout_conv = num(key, v)?,
            "dropout_fc" => m.dropout_fc = num(key, v)?,
            "lr" => m.lr = num(key, v)?,
            "batch_size" => m.batch_size = num(key, v)?,
            "epochs" => m.epochs = num(key, v)?,
            "train_fraction" => self.train_fraction = num(key, v)?,
            "occlusion_samples" => self.occlusion_samples = num(key, v)?,
            "daylight_rule" => self.daylight_rule = v.parse().map_err(|e: String| Error::config(key, e))?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synth;
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if s.days == 0 {
            return bad("days", "must be at least 1".into());
        }
        if s.dt_seconds <= 0 || 86_400 % s.dt_seconds != 0 {
            return bad("dt_seconds", format!("{} does not divide one day", s.dt_seconds));
        }
        for (key, n) in [("n_rows", s.grid.n_rows), ("n_cols", s.grid.n_cols)] {
            if n < 4 || n % 2 != 0 {
                return bad(key, format!("{n} must be even and at least 4"));
            }
        }
        for (key, d) in [("dlat", s.grid.dlat), ("dlon", s.grid.dlon)] {
            if !(d > 0.0 && d.is_finite()) {
                return bad(key, format!("{d} must be positive"));
            }
        }
        for (key, d) in [("lat0", s.grid.lat0), ("lon0", s.grid.lon0)] {
            if !d.is_finite() {
                return bad(key, "must be finite".into());
            }
        }
        if s.n_plants == 0 {
            return bad("n_plants", "must be at least 1".into());
        }
        if !(s.concentration >= 0.0 && s.concentration.is_finite()) {
            return bad(
                "concentration",
                format!("{} must be finite and non-negative", s.concentration),
            );
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction", format!("{} is outside (0, 1)", self.train_fraction));
        }
        if self.occlusion_samples == 0 {
            return bad("occlusion_samples", "must be at least 1".into());
        }
        self.model.validate(s.grid.n_rows, s.grid.n_cols).map_err(|e| match e {
            Error::Dimension(msg) => Error::config("conv_stack", msg),
            other => other,
        })
    }

    /// Canonical `key = value` listing of every key.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("listed key"));
        }
        s
    }
}

/// Parses `key = value` lines with `#` comments over the defaults.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", i + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let key = key.trim();
        if cfg.get(key).is_none() {
            return Err(Error::config(key, "unknown key"));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::config(key, "given more than once"));
        }
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::config("file", "not valid UTF-8"))?;
    parse_config_str(text)
}

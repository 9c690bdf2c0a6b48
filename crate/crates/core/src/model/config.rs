use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One entry of the convolutional stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3×3 same-padded convolution with this many output channels, then PReLU and dropout.
    Conv(usize),
    /// 2×2 max pooling.
    Pool,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv(c) => write!(f, "{c}"),
            LayerSpec::Pool => f.write_str("pool"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("pool") {
            return Ok(LayerSpec::Pool);
        }
        match s.parse::<usize>() {
            Ok(c) if c > 0 => Ok(LayerSpec::Conv(c)),
            _ => Err(format!("`{s}` is neither a positive channel count nor `pool`")),
        }
    }
}

pub fn parse_stack(s: &str) -> std::result::Result<Vec<LayerSpec>, String> {
    s.split(',').map(str::parse).collect()
}

pub fn format_stack(stack: &[LayerSpec]) -> String {
    stack.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PVNetConfig {
    pub conv_stack: Vec<LayerSpec>,
    pub fc_dim: usize,
    pub lstm_units: usize,
    pub dropout_conv: f64,
    pub dropout_fc: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PVNetConfig {
    fn default() -> Self {
        use LayerSpec::*;
        Self {
            conv_stack: vec![
                Conv(64),
                Conv(64),
                Pool,
                Conv(128),
                Conv(128),
                Pool,
                Conv(256),
                Conv(256),
                Pool,
            ],
            fc_dim: 512,
            lstm_units: 128,
            dropout_conv: 0.2,
            dropout_fc: 0.3,
            lr: 0.0015,
            batch_size: 32,
            epochs: 60,
            seed: 0,
        }
    }
}

impl PVNetConfig {
    pub fn pools(&self) -> usize {
        self.conv_stack.iter().filter(|l| **l == LayerSpec::Pool).count()
    }

    /// Checks hyperparameters and that the grid survives every pool.
    pub fn validate(&self, n_rows: usize, n_cols: usize) -> Result<()> {
        let cfg = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.fc_dim == 0 {
            return cfg("fc_dim", "must be at least 1".into());
        }
        if self.lstm_units == 0 {
            return cfg("lstm_units", "must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_conv) {
            return cfg("dropout_conv", format!("{} is outside [0, 1)", self.dropout_conv));
        }
        if !(0.0..1.0).contains(&self.dropout_fc) {
            return cfg("dropout_fc", format!("{} is outside [0, 1)", self.dropout_fc));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return cfg("lr", format!("{} must be finite and non-negative", self.lr));
        }
        if self.batch_size == 0 {
            return cfg("batch_size", "must be at least 1".into());
        }
        if self.epochs == 0 {
            return cfg("epochs", "must be at least 1".into());
        }
        let div = 1usize << self.pools();
        if n_rows == 0 || n_cols == 0 || !n_rows.is_multiple_of(div) || !n_cols.is_multiple_of(div) {
            return Err(Error::dim(format!(
                "a {n_rows}×{n_cols} grid is not divisible by {div} ({} pools)",
                self.pools()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_round_trip() {
        let c = PVNetConfig::default();
        let s = format_stack(&c.conv_stack);
        assert_eq!(s, "64,64,pool,128,128,pool,256,256,pool");
        assert_eq!(parse_stack(&s).unwrap(), c.conv_stack);
        assert!(parse_stack("64,0").is_err());
    }

    #[test]
    fn grid_must_survive_pools() {
        let c = PVNetConfig::default();
        assert!(c.validate(16, 16).is_ok());
        assert!(matches!(c.validate(12, 16), Err(Error::Dimension(_))));
    }
}

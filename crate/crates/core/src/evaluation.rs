//! Capacity-normalized error metrics, the persistence baseline and the
//! model-vs-baseline comparison table.

use std::fmt::Write as _;

use chrono::Duration;

use crate::error::{Error, Result};
use crate::synth::PowerSeries;

pub const BASELINE_HORIZON_SECONDS: i64 = 24 * 3600;

/// Which samples count as daylight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DaylightRule {
    /// measured > 0
    Measured,
    /// measured > 0 and predicted > 0
    Both,
}

impl DaylightRule {
    pub fn describe(self) -> &'static str {
        match self {
            DaylightRule::Measured => "measured > 0",
            DaylightRule::Both => "measured > 0 and predicted > 0",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DaylightRule::Measured => "measured",
            DaylightRule::Both => "both",
        }
    }
}

impl std::str::FromStr for DaylightRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "measured" => Ok(DaylightRule::Measured),
            "both" => Ok(DaylightRule::Both),
            other => Err(format!(
                "unknown daylight rule `{other}` (expected `measured` or `both`)"
            )),
        }
    }
}

/// Retained `(measured, predicted)` pairs and their indices into the series.
#[derive(Clone, Debug, PartialEq)]
pub struct Pairs {
    pub indices: Vec<usize>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    pub rule: DaylightRule,
}

impl Pairs {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn check_aligned(a: &PowerSeries, b: &PowerSeries) -> Result<()> {
    if a.t0 != b.t0 || a.dt_seconds != b.dt_seconds || a.len() != b.len() {
        return Err(Error::param(format!(
            "series are not aligned: ({}, {} s, {}) vs ({}, {} s, {})",
            a.t0,
            a.dt_seconds,
            a.len(),
            b.t0,
            b.dt_seconds,
            b.len()
        )));
    }
    Ok(())
}

pub fn daylight_filter_with(measured: &PowerSeries, predicted: &PowerSeries, rule: DaylightRule) -> Result<Pairs> {
    check_aligned(measured, predicted)?;
    let mut pairs = Pairs {
        indices: Vec::new(),
        measured: Vec::new(),
        predicted: Vec::new(),
        rule,
    };
    for (i, (&m, &p)) in measured.values.iter().zip(&predicted.values).enumerate() {
        let keep = match rule {
            DaylightRule::Measured => m > 0.0,
            DaylightRule::Both => m > 0.0 && p > 0.0,
        };
        if keep {
            pairs.indices.push(i);
            pairs.measured.push(m);
            pairs.predicted.push(p);
        }
    }
    Ok(pairs)
}

/// Keeps samples whose measured power is positive.
pub fn daylight_filter(measured: &PowerSeries, predicted: &PowerSeries) -> Result<Pairs> {
    daylight_filter_with(measured, predicted, DaylightRule::Measured)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    /// Percent of capacity.
    pub nrmse: f64,
    pub nmae: f64,
    pub n_points: usize,
    pub capacity: f64,
    pub filter_rule: String,
}

pub fn compute_metrics(pairs: &Pairs, capacity: f64) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyReport);
    }
    if !(capacity > 0.0) {
        return Err(Error::param(format!("capacity must be positive, got {capacity}")));
    }
    let n = pairs.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    for (m, p) in pairs.measured.iter().zip(&pairs.predicted) {
        let e = p - m;
        sq += e * e;
        abs += e.abs();
    }
    let rmse = (sq / n).sqrt();
    let mae = abs / n;
    Ok(MetricsReport {
        rmse,
        mae,
        nrmse: 100.0 * rmse / capacity,
        nmae: 100.0 * mae / capacity,
        n_points: pairs.len(),
        capacity,
        filter_rule: pairs.rule.describe().to_string(),
    })
}

/// `prediction(t) = measured(t − 24 h)`; the first day has no prediction.
///
/// The result starts 24 h after `power` and has `len − lag` samples.
pub fn persistence_baseline(power: &PowerSeries) -> Result<PowerSeries> {
    if power.dt_seconds <= 0 || BASELINE_HORIZON_SECONDS % power.dt_seconds != 0 {
        return Err(Error::param("time step must divide 24 h"));
    }
    let lag = (BASELINE_HORIZON_SECONDS / power.dt_seconds) as usize;
    if power.len() <= lag {
        return Err(Error::param(format!(
            "series of {} steps is too short for a {lag}-step persistence baseline",
            power.len()
        )));
    }
    Ok(PowerSeries {
        t0: power.t0 + Duration::seconds(BASELINE_HORIZON_SECONDS),
        dt_seconds: power.dt_seconds,
        values: power.values[..power.len() - lag].to_vec(),
    })
}

/// Sub-series of `series` covering the instants of `like`.
pub fn align_to(series: &PowerSeries, like: &PowerSeries) -> Result<PowerSeries> {
    if series.dt_seconds != like.dt_seconds {
        return Err(Error::param("series have different time steps"));
    }
    let start = series
        .index_of(like.t0)
        .ok_or_else(|| Error::param(format!("{} is not covered", like.t0)))?;
    if start + like.len() > series.len() {
        return Err(Error::param("series does not cover the requested span"));
    }
    Ok(PowerSeries {
        t0: like.t0,
        dt_seconds: like.dt_seconds,
        values: series.values[start..start + like.len()].to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub model: MetricsReport,
    pub baseline: MetricsReport,
}

impl Comparison {
    /// Baseline error over model error; above 1 means the model is better.
    pub fn rmse_ratio(&self) -> f64 {
        self.baseline.nrmse / self.model.nrmse
    }

    pub fn mae_ratio(&self) -> f64 {
        self.baseline.nmae / self.model.nmae
    }
}

/// Model and baseline metrics over one shared filtered index set.
pub fn compare_report(
    model: &MetricsReport,
    baseline: &MetricsReport,
    model_pairs: &Pairs,
    baseline_pairs: &Pairs,
) -> Result<Comparison> {
    if model_pairs.indices != baseline_pairs.indices {
        return Err(Error::param("model and baseline were evaluated on different samples"));
    }
    if model.capacity != baseline.capacity {
        return Err(Error::param("model and baseline use different capacities"));
    }
    Ok(Comparison {
        model: model.clone(),
        baseline: baseline.clone(),
    })
}

fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "filter: {}; points: {}; capacity: {} MW",
            self.model.filter_rule,
            self.model.n_points,
            sig6(self.model.capacity)
        );
        let _ = writeln!(
            s,
            "{:<14}{:>12}{:>12}{:>12}{:>12}",
            "method", "nRMSE (%)", "nMAE (%)", "RMSE (MW)", "MAE (MW)"
        );
        for (name, m) in [("Persistence", &self.baseline), ("PVNet", &self.model)] {
            let _ = writeln!(
                s,
                "{:<14}{:>12.4}{:>12.4}{:>12.4}{:>12.4}",
                name, m.nrmse, m.nmae, m.rmse, m.mae
            );
        }
        let _ = writeln!(s, "{:<14}{:>12}{:>12}", "Lorenz et al.", "n/a", "n/a");
        let _ = writeln!(
            s,
            "improvement (baseline / model): nRMSE {:.4}, nMAE {:.4}",
            ratio(self.baseline.nrmse, self.model.nrmse),
            ratio(self.baseline.nmae, self.model.nmae)
        );
        s
    }

    /// `name,value,unit` lines at six significant digits.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("name,value,unit\n");
        for (prefix, m) in [("model", &self.model), ("baseline", &self.baseline)] {
            for (name, v, unit) in [
                ("rmse", m.rmse, "MW"),
                ("mae", m.mae, "MW"),
                ("nrmse", m.nrmse, "%"),
                ("nmae", m.nmae, "%"),
                ("n_points", m.n_points as f64, "count"),
                ("capacity", m.capacity, "MW"),
            ] {
                let _ = writeln!(s, "{prefix}_{name},{},{unit}", sig6(v));
            }
        }
        let _ = writeln!(
            s,
            "ratio_nrmse,{},ratio",
            sig6(ratio(self.baseline.nrmse, self.model.nrmse))
        );
        let _ = writeln!(
            s,
            "ratio_nmae,{},ratio",
            sig6(ratio(self.baseline.nmae, self.model.nmae))
        );
        s
    }
}

/// Parses a delimited report back into `(name, value)` pairs.
pub fn parse_delimited(text: &str) -> Result<Vec<(String, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some("name,value,unit") {
        return Err(Error::format("header", "expected `name,value,unit`"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut parts = l.split(',');
            let (Some(name), Some(value), Some(_unit), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::format(
                    format!("line {}", i + 2),
                    format!("expected three fields in `{l}`"),
                ));
            };
            let v = value
                .parse::<f64>()
                .map_err(|e| Error::format(format!("line {}", i + 2), e.to_string()))?;
            Ok((name.to_string(), v))
        })
        .collect()
}

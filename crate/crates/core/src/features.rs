//! Sliding-window training samples built from a raster and a power series.
//!
//! Every frame of a window depends only on its own instant, so a dataset keeps
//! one shared stack of per-instant frames `[N, 5, H, W]` and windows are views
//! of eight consecutive frames.

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};

use crate::error::{Error, Result};
use crate::synth::{clearsky_plane, GridSpec, PowerSeries, RasterSeries, DSWRF, EACC, TMP};
use crate::tensor::Tensor;

pub const WINDOW_LEN: usize = 8;
pub const PERSISTENCE_LAG_SECONDS: i64 = 48 * 3600;
pub const PSS: &str = "PSS";
pub const CSM: &str = "CSM";
pub const FEATURE_CHANNELS: [&str; 5] = [DSWRF, EACC, TMP, PSS, CSM];
pub const N_FEATURES: usize = FEATURE_CHANNELS.len();
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureWindow {
    /// `[8, 5, H, W]`.
    pub inputs: Tensor<f64>,
    pub target: f64,
    pub target_time: DateTime<Utc>,
    pub window_times: Vec<DateTime<Utc>>,
}

/// Decimates a series to a coarser step.
pub fn downsample_power(series: &PowerSeries, target_dt: i64) -> Result<PowerSeries> {
    if series.dt_seconds <= 0 || target_dt <= 0 || target_dt % series.dt_seconds != 0 {
        return Err(Error::param(format!(
            "target step {target_dt} s is not a multiple of {} s",
            series.dt_seconds
        )));
    }
    let stride = (target_dt / series.dt_seconds) as usize;
    Ok(PowerSeries {
        t0: series.t0,
        dt_seconds: target_dt,
        values: series.values.iter().step_by(stride).copied().collect(),
    })
}

/// Power `lag` before `t`, broadcast over the grid.
pub fn persistence_channel(power: &PowerSeries, t: DateTime<Utc>, lag: Duration, grid: &GridSpec) -> Result<Vec<f64>> {
    let at = t - lag;
    let v = power.at(at).ok_or_else(|| {
        Error::OutOfRange(format!(
            "no power sample at {at} (lag {} h before {t})",
            lag.num_hours()
        ))
    })?;
    Ok(vec![v; grid.cells()])
}

/// Clear-sky irradiance plane at `t`.
pub fn csm_channel(grid: &GridSpec, t: DateTime<Utc>) -> Vec<f64> {
    clearsky_plane(grid, t)
}

fn lag_steps(dt: i64) -> Result<usize> {
    if dt <= 0 || PERSISTENCE_LAG_SECONDS % dt != 0 {
        return Err(Error::param(format!(
            "time step {dt} s does not divide the 48 h persistence lag"
        )));
    }
    Ok((PERSISTENCE_LAG_SECONDS / dt) as usize)
}

/// First target index with a full window and an in-range target persistence lag.
pub fn first_target_index(dt: i64) -> Result<usize> {
    Ok(lag_steps(dt)?.max(WINDOW_LEN - 1))
}

fn check_aligned(raster: &RasterSeries, power: &PowerSeries) -> Result<()> {
    if raster.t0 != power.t0 || raster.dt_seconds != power.dt_seconds || raster.len() != power.len() {
        return Err(Error::param(format!(
            "raster ({}, {} s, {} steps) and power ({}, {} s, {} steps) are not aligned",
            raster.t0,
            raster.dt_seconds,
            raster.len(),
            power.t0,
            power.dt_seconds,
            power.len()
        )));
    }
    for name in [DSWRF, EACC, TMP] {
        if raster.channel_index(name).is_none() {
            return Err(Error::param(format!("raster lacks channel {name}")));
        }
    }
    Ok(())
}

/// Feature frame `[5, H, W]` for raster index `t`. Persistence lags that fall
/// before the series start read as zero.
fn frame_at(raster: &RasterSeries, power: &PowerSeries, t: usize, lag: usize, out: &mut Vec<f64>) {
    let hw = raster.grid.cells();
    for name in [DSWRF, EACC, TMP] {
        let c = raster.channel_index(name).expect("checked");
        out.extend_from_slice(raster.plane(t, c));
    }
    let pss = if t >= lag { power.values[t - lag] } else { 0.0 };
    out.extend(std::iter::repeat_n(pss, hw));
    out.extend(csm_channel(&raster.grid, raster.time_at(t)));
}

/// One window ending at `target_time`.
pub fn assemble_window(
    raster: &RasterSeries,
    power: &PowerSeries,
    target_time: DateTime<Utc>,
) -> Result<FeatureWindow> {
    check_aligned(raster, power)?;
    let lag = lag_steps(raster.dt_seconds)?;
    let idx = raster
        .index_of(target_time)
        .ok_or_else(|| Error::OutOfRange(format!("{target_time} is not a raster instant")))?;
    if idx < first_target_index(raster.dt_seconds)? {
        return Err(Error::OutOfRange(format!(
            "window ending at {target_time} needs history before the series start"
        )));
    }
    let (h, w) = (raster.grid.n_rows, raster.grid.n_cols);
    let mut data = Vec::with_capacity(WINDOW_LEN * N_FEATURES * h * w);
    let first = idx + 1 - WINDOW_LEN;
    for t in first..=idx {
        frame_at(raster, power, t, lag, &mut data);
    }
    Ok(FeatureWindow {
        inputs: Tensor::new(vec![WINDOW_LEN, N_FEATURES, h, w], data)?,
        target: power.values[idx],
        target_time,
        window_times: (first..=idx).map(|t| raster.time_at(t)).collect(),
    })
}

/// Ordered windows over a shared frame stack.
#[derive(Clone, Debug)]
pub struct Dataset {
    grid: GridSpec,
    t0: DateTime<Utc>,
    dt_seconds: i64,
    frames: Arc<Tensor<f64>>,
    /// Raster index of each window's target, strictly increasing.
    target_indices: Vec<usize>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.target_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_indices.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dt_seconds(&self) -> i64 {
        self.dt_seconds
    }

    pub fn frames(&self) -> &Tensor<f64> {
        &self.frames
    }

    pub fn frame_len(&self) -> usize {
        N_FEATURES * self.grid.cells()
    }

    pub fn window_len(&self) -> usize {
        WINDOW_LEN * self.frame_len()
    }

    pub fn target_index(&self, i: usize) -> usize {
        self.target_indices[i]
    }

    pub fn target_indices(&self) -> &[usize] {
        &self.target_indices
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_time(&self, i: usize) -> DateTime<Utc> {
        self.time_of(self.target_indices[i])
    }

    fn time_of(&self, index: usize) -> DateTime<Utc> {
        self.t0 + Duration::seconds(self.dt_seconds * index as i64)
    }

    /// Inputs of window `i`, row-major `[8, 5, H, W]`.
    pub fn inputs(&self, i: usize) -> &[f64] {
        let idx = self.target_indices[i];
        let f = self.frame_len();
        &self.frames.data()[(idx + 1 - WINDOW_LEN) * f..(idx + 1) * f]
    }

    pub fn window(&self, i: usize) -> FeatureWindow {
        let idx = self.target_indices[i];
        let (h, w) = (self.grid.n_rows, self.grid.n_cols);
        FeatureWindow {
            inputs: Tensor::new(vec![WINDOW_LEN, N_FEATURES, h, w], self.inputs(i).to_vec()).expect("window shape"),
            target: self.targets[i],
            target_time: self.time_of(idx),
            window_times: (idx + 1 - WINDOW_LEN..=idx).map(|t| self.time_of(t)).collect(),
        }
    }

    /// Windows `range` as a new dataset sharing the frame stack.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            target_indices: self.target_indices[range.clone()].to_vec(),
            targets: self.targets[range].to_vec(),
            frames: Arc::clone(&self.frames),
            ..*self
        }
    }

    /// Windows at the given positions, in that order.
    pub fn select(&self, positions: &[usize]) -> Dataset {
        Dataset {
            target_indices: positions.iter().map(|&p| self.target_indices[p]).collect(),
            targets: positions.iter().map(|&p| self.targets[p]).collect(),
            frames: Arc::clone(&self.frames),
            ..*self
        }
    }
}

/// One window per valid target index, `N − 16` windows at 3 h steps.
pub fn build_dataset(raster: &RasterSeries, power: &PowerSeries) -> Result<Dataset> {
    check_aligned(raster, power)?;
    let lag = lag_steps(raster.dt_seconds)?;
    let first = first_target_index(raster.dt_seconds)?;
    let n = raster.len();
    if n <= first {
        return Err(Error::param(format!(
            "series of {n} steps is too short; at least {} are needed",
            first + 1
        )));
    }
    let (h, w) = (raster.grid.n_rows, raster.grid.n_cols);
    let mut data = Vec::with_capacity(n * N_FEATURES * h * w);
    for t in 0..n {
        frame_at(raster, power, t, lag, &mut data);
    }
    Ok(Dataset {
        grid: raster.grid,
        t0: raster.t0,
        dt_seconds: raster.dt_seconds,
        frames: Arc::new(Tensor::new(vec![n, N_FEATURES, h, w], data)?),
        target_indices: (first..n).collect(),
        targets: power.values[first..].to_vec(),
    })
}

/// First `⌊fraction·n⌋` windows train, the rest validate.
pub fn split_train_val(dataset: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!(
            "train fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let n_train = (fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::param(format!(
            "fraction {fraction} of {n} windows leaves an empty split"
        )));
    }
    Ok((dataset.slice(0..n_train), dataset.slice(n_train..n)))
}

/// Per-channel z-score statistics and target scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub channel_mean: Vec<f64>,
    pub channel_std: Vec<f64>,
    /// MW per normalized target unit (total fleet capacity).
    pub target_scale: f64,
}

impl Normalization {
    /// Statistics over every frame of every window in `train`, a frame counted
    /// once per window that contains it.
    pub fn fit(train: &Dataset, capacity: f64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::param("normalization needs a non-empty training split"));
        }
        if !(capacity > 0.0) {
            return Err(Error::param(format!("capacity must be positive, got {capacity}")));
        }
        let n_frames = train.frames.shape()[0];
        let mut weight = vec![0usize; n_frames];
        for &idx in &train.target_indices {
            for w in &mut weight[idx + 1 - WINDOW_LEN..=idx] {
                *w += 1;
            }
        }
        let hw = train.grid.cells();
        let count = (train.len() * WINDOW_LEN * hw) as f64;
        let mut mean = vec![0.0; N_FEATURES];
        let mut var = vec![0.0; N_FEATURES];
        for c in 0..N_FEATURES {
            let plane = |t: usize| &train.frames.data()[(t * N_FEATURES + c) * hw..(t * N_FEATURES + c + 1) * hw];
            let (mut s, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
            for (t, &wt) in weight.iter().enumerate().filter(|(_, &w)| w > 0) {
                s += wt as f64 * plane(t).iter().sum::<f64>();
                for &v in plane(t) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            // a constant channel keeps its exact value so it maps to zeros
            mean[c] = if lo == hi { lo } else { s / count };
            let mut ss = 0.0;
            for (t, &wt) in weight.iter().enumerate().filter(|(_, &w)| w > 0) {
                ss += wt as f64 * plane(t).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
            }
            var[c] = ss / count;
        }
        Ok(Self {
            channel_mean: mean,
            channel_std: var.into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect(),
            target_scale: capacity,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_mean.len() != N_FEATURES || self.channel_std.len() != N_FEATURES {
            return Err(Error::param(format!("normalization must cover {N_FEATURES} channels")));
        }
        if self.channel_std.iter().any(|&s| !(s > 0.0)) || !(self.target_scale > 0.0) {
            return Err(Error::param("normalization scales must be positive"));
        }
        Ok(())
    }

    fn map_frames(&self, frames: &Tensor<f64>, f: impl Fn(f64, f64, f64) -> f64) -> Tensor<f64> {
        let hw = frames.shape()[2] * frames.shape()[3];
        let mut out = frames.clone();
        for (i, plane) in out.data_mut().chunks_exact_mut(hw).enumerate() {
            let c = i % N_FEATURES;
            for v in plane {
                *v = f(*v, self.channel_mean[c], self.channel_std[c]);
            }
        }
        out
    }

    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        Dataset {
            frames: Arc::new(self.map_frames(&dataset.frames, |v, m, s| (v - m) / s)),
            targets: dataset.targets.iter().map(|t| t / self.target_scale).collect(),
            target_indices: dataset.target_indices.clone(),
            ..*dataset
        }
    }

    pub fn invert(&self, dataset: &Dataset) -> Dataset {
        Dataset {
            frames: Arc::new(self.map_frames(&dataset.frames, |v, m, s| v * s + m)),
            targets: dataset.targets.iter().map(|&t| self.denormalize_target(t)).collect(),
            target_indices: dataset.target_indices.clone(),
            ..*dataset
        }
    }

    pub fn normalize_target(&self, mw: f64) -> f64 {
        mw / self.target_scale
    }

    pub fn denormalize_target(&self, value: f64) -> f64 {
        value * self.target_scale
    }

    /// Normalized value of a raw channel reading.
    pub fn normalize_value(&self, channel: usize, value: f64) -> f64 {
        (value - self.channel_mean[channel]) / self.channel_std[channel]
    }
}

/// Train and validation splits normalized with train-only statistics.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Dataset,
    pub normalization: Normalization,
}

pub fn prepare(raster: &RasterSeries, power: &PowerSeries, capacity: f64, train_fraction: f64) -> Result<Prepared> {
    let all = build_dataset(raster, power)?;
    let (train, _) = split_train_val(&all, train_fraction)?;
    let normalization = Normalization::fit(&train, capacity)?;
    let (train, val) = split_train_val(&normalization.apply(&all), train_fraction)?;
    Ok(Prepared {
        train,
        val,
        normalization,
    })
}

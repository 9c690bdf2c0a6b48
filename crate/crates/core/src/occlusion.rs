//! Occlusion sensitivity maps and the plant-capacity density map.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::features::{Dataset, Normalization, FEATURE_CHANNELS, N_FEATURES, WINDOW_LEN};
use crate::model::{predict_windows, PVNetParams};
use crate::rng;
use crate::scalar::Scalar;
use crate::synth::{Fleet, GridSpec};
use crate::tensor::Tensor;

pub const PATCH: usize = 2;
pub const DENSITY_RESOLUTION: f64 = 0.25;
pub const DEFAULT_SAMPLES: usize = 64;

/// Sets a 2×2 patch of one channel to `fill` in every frame of a window `[8, C, H, W]`.
pub fn occlude_patch(inputs: &Tensor<f64>, channel: usize, row: usize, col: usize, fill: f64) -> Result<Tensor<f64>> {
    let s = inputs.shape();
    if s.len() != 4 {
        return Err(Error::dim(format!("window must be [T, C, H, W], got {s:?}")));
    }
    let mut out = inputs.clone();
    occlude_in_place(out.data_mut(), s[0], s[1], s[2], s[3], channel, row, col, fill)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn occlude_in_place(
    data: &mut [f64],
    t: usize,
    c: usize,
    h: usize,
    w: usize,
    channel: usize,
    row: usize,
    col: usize,
    fill: f64,
) -> Result<()> {
    if channel >= c {
        return Err(Error::param(format!("channel {channel} out of range for {c} channels")));
    }
    if row + PATCH > h || col + PATCH > w {
        return Err(Error::param(format!(
            "2×2 patch at ({row}, {col}) does not fit a {h}×{w} grid"
        )));
    }
    for k in 0..t {
        let base = (k * c + channel) * h * w;
        for r in row..row + PATCH {
            for cc in col..col + PATCH {
                data[base + r * w + cc] = fill;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMap {
    pub channel: String,
    pub grid: GridSpec,
    /// Row-major `[rows, cols]`, MW.
    pub values: Vec<f64>,
}

impl SensitivityMap {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Seeded choice of `samples` window positions out of `n`, ascending.
/// Asking for more than `n` returns all of them.
pub fn sample_windows(n: usize, samples: usize, seed: u64) -> Vec<usize> {
    if samples >= n {
        return (0..n).collect();
    }
    let mut r = rng::stream(seed, "occlusion", &[]);
    let mut picked = index::sample(&mut r, n, samples).into_vec();
    picked.sort_unstable();
    picked
}

/// What an occluded patch is filled with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    /// The channel's training mean.
    TrainingMean,
    /// The patch's own values, which leaves the input unchanged.
    Original,
}

/// Mean absolute change of the clamped MW prediction when each 2×2 patch of
/// `channel` is replaced by the training mean, averaged per cell over the
/// patches covering it. `windows` must be normalized.
pub fn sensitivity_map<S: Scalar>(
    params: &PVNetParams<S>,
    windows: &Dataset,
    norm: &Normalization,
    channel: usize,
) -> Result<SensitivityMap> {
    sensitivity_map_with(params, windows, norm, channel, Fill::TrainingMean)
}

pub fn sensitivity_map_with<S: Scalar>(
    params: &PVNetParams<S>,
    windows: &Dataset,
    norm: &Normalization,
    channel: usize,
    fill: Fill,
) -> Result<SensitivityMap> {
    if windows.is_empty() {
        return Err(Error::param("sensitivity needs at least one window"));
    }
    if channel >= N_FEATURES {
        return Err(Error::param(format!("channel {channel} out of range")));
    }
    let grid = *windows.grid();
    let (h, w) = (grid.n_rows, grid.n_cols);
    let mean = norm.normalize_value(channel, norm.channel_mean[channel]);
    let to_mw = |v: f64| norm.denormalize_target(v).max(0.0);
    let originals: Vec<&[f64]> = (0..windows.len()).map(|i| windows.inputs(i)).collect();
    let base: Vec<f64> = predict_windows(params, &originals)?.into_iter().map(to_mw).collect();

    let (ph, pw) = (h - PATCH + 1, w - PATCH + 1);
    let mut patch_sens = vec![0.0; ph * pw];
    let mut buf: Vec<Vec<f64>> = originals.iter().map(|o| o.to_vec()).collect();
    for pr in 0..ph {
        for pc in 0..pw {
            for (b, o) in buf.iter_mut().zip(&originals) {
                b.copy_from_slice(o);
                if fill == Fill::TrainingMean {
                    occlude_in_place(b, WINDOW_LEN, N_FEATURES, h, w, channel, pr, pc, mean)?;
                }
            }
            let refs: Vec<&[f64]> = buf.iter().map(|b| b.as_slice()).collect();
            let pred = predict_windows(params, &refs)?;
            patch_sens[pr * pw + pc] = pred
                .into_iter()
                .zip(&base)
                .map(|(p, b)| (to_mw(p) - b).abs())
                .sum::<f64>()
                / windows.len() as f64;
        }
    }
    let mut values = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let rows = r.saturating_sub(PATCH - 1)..=r.min(ph - 1);
            let cols = c.saturating_sub(PATCH - 1)..=c.min(pw - 1);
            let (mut acc, mut n) = (0.0, 0usize);
            for pr in rows {
                for pc in cols.clone() {
                    acc += patch_sens[pr * pw + pc];
                    n += 1;
                }
            }
            values[r * w + c] = acc / n as f64;
        }
    }
    Ok(SensitivityMap {
        channel: FEATURE_CHANNELS[channel].to_string(),
        grid,
        values,
    })
}

/// Channel names by total sensitivity, descending; ties keep input order.
pub fn channel_ranking(maps: &[SensitivityMap]) -> Vec<String> {
    let mut order: Vec<&SensitivityMap> = maps.iter().collect();
    order.sort_by(|a, b| b.total().total_cmp(&a.total()));
    order.into_iter().map(|m| m.channel.clone()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub north: f64,
    pub west: f64,
    pub resolution: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major capacity per cell, MW.
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sums `factor × factor` blocks into a coarser map.
    pub fn aggregate(&self, factor: usize) -> Result<DensityMap> {
        if factor == 0 || !self.n_rows.is_multiple_of(factor) || !self.n_cols.is_multiple_of(factor) {
            return Err(Error::param(format!(
                "cannot aggregate a {}×{} map by {factor}",
                self.n_rows, self.n_cols
            )));
        }
        let (rows, cols) = (self.n_rows / factor, self.n_cols / factor);
        let mut values = vec![0.0; rows * cols];
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                values[(r / factor) * cols + c / factor] += self.values[r * self.n_cols + c];
            }
        }
        Ok(DensityMap {
            resolution: self.resolution * factor as f64,
            n_rows: rows,
            n_cols: cols,
            values,
            ..*self
        })
    }
}

fn cell_index(offset: f64, res: f64, n: usize) -> usize {
    // a point on a boundary belongs to the cell before it (north / west)
    let i = (offset / res).ceil() as isize - 1;
    i.clamp(0, n as isize - 1) as usize
}

/// Capacity summed into 0.25° cells over the grid footprint.
pub fn density_map(fleet: &Fleet, grid: &GridSpec) -> Result<DensityMap> {
    let res = DENSITY_RESOLUTION;
    let n_rows = (grid.n_rows as f64 * grid.dlat / res).round() as usize;
    let n_cols = (grid.n_cols as f64 * grid.dlon / res).round() as usize;
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::param("grid is smaller than one density cell"));
    }
    let (north, west) = (grid.north_edge(), grid.west_edge());
    let mut values = vec![0.0; n_rows * n_cols];
    for p in fleet.plants() {
        let r = cell_index(north - p.lat, res, n_rows);
        let c = cell_index(p.lon - west, res, n_cols);
        values[r * n_cols + c] += p.capacity;
    }
    Ok(DensityMap {
        north,
        west,
        resolution: res,
        n_rows,
        n_cols,
        values,
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::param("spearman needs two equal-length samples of at least 2"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Numerical("spearman is undefined for a constant sample".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman correlation between a sensitivity map and the density map
/// aggregated to the sensitivity grid.
pub fn sensitivity_density_correlation(map: &SensitivityMap, density: &DensityMap) -> Result<f64> {
    let factor = (map.grid.dlat / density.resolution).round() as usize;
    let coarse = density.aggregate(factor)?;
    if coarse.n_rows != map.grid.n_rows || coarse.n_cols != map.grid.n_cols {
        return Err(Error::dim("density map does not cover the sensitivity grid"));
    }
    spearman(&map.values, &coarse.values)
}

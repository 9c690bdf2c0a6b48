//! Synthetic weather rasters, PV fleet and the aggregate power they imply.
//!
//! All randomness is counter-based per `(seed, purpose, step, cell)`, so
//! generated data does not depend on evaluation order.

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::Rng;

use crate::error::{Error, Result};
use crate::physics::{clearsky_ghi, plant_power, solar_cos_zenith, ModuleWeather};
use crate::rng;
use crate::tensor::Tensor;

pub const DSWRF: &str = "DSWRF";
pub const EACC: &str = "EACC";
pub const TMP: &str = "TMP";
pub const NWP_CHANNELS: [&str; 3] = [DSWRF, EACC, TMP];

pub const DEFAULT_DT_SECONDS: i64 = 3 * 3600;
pub const CLOUD_AR_COEFF: f64 = 0.85;
pub const TEMP_AR_COEFF: f64 = 0.9;
pub const BASE_TEMPERATURE_K: f64 = 283.0;
pub const SEASONAL_AMPLITUDE_K: f64 = 10.0;
pub const DIURNAL_AMPLITUDE_K: f64 = 5.0;
pub const ANOMALY_STD_K: f64 = 2.0;
/// Anomalies are truncated at this many standard deviations.
pub const ANOMALY_CLIP_SIGMAS: f64 = 2.5;
/// Wind speed assumed at every plant, m/s.
pub const WIND_PROXY: f64 = 2.0;
pub const KELVIN_OFFSET: f64 = 273.15;
/// Exponential tilt per unit concentration.
const TILT_PER_CONCENTRATION: f64 = 3.0;
const SMOOTHING_PASSES: usize = 3;
/// Logistic gain applied to the unit-variance cloud latent.
const CLOUD_GAIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Latitude of the northernmost row centre.
    pub lat0: f64,
    /// Longitude of the westernmost column centre.
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lat0: 54.5,
            lon0: 5.5,
            dlat: 0.5,
            dlon: 0.5,
            n_rows: 16,
            n_cols: 16,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dlat > 0.0 && self.dlon > 0.0) {
            return Err(Error::param("grid spacing must be positive"));
        }
        if self.n_rows < 4 || self.n_cols < 4 || !self.n_rows.is_multiple_of(2) || !self.n_cols.is_multiple_of(2) {
            return Err(Error::param(format!(
                "grid must be at least 4×4 with even extents, got {}×{}",
                self.n_rows, self.n_cols
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (self.lat0 - row as f64 * self.dlat, self.lon0 + col as f64 * self.dlon)
    }

    pub fn north_edge(&self) -> f64 {
        self.lat0 + 0.5 * self.dlat
    }

    pub fn south_edge(&self) -> f64 {
        self.north_edge() - self.n_rows as f64 * self.dlat
    }

    pub fn west_edge(&self) -> f64 {
        self.lon0 - 0.5 * self.dlon
    }

    pub fn east_edge(&self) -> f64 {
        self.west_edge() + self.n_cols as f64 * self.dlon
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat <= self.north_edge() && lat >= self.south_edge() && lon >= self.west_edge() && lon <= self.east_edge()
    }

    /// Cell holding a point; points on the outer edge map to the edge cell.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        if !self.contains(lat, lon) {
            return None;
        }
        let r = ((self.north_edge() - lat) / self.dlat).floor() as usize;
        let c = ((lon - self.west_edge()) / self.dlon).floor() as usize;
        Some((r.min(self.n_rows - 1), c.min(self.n_cols - 1)))
    }
}

/// Time-indexed multi-channel raster stack, frames `[T, C, rows, cols]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterSeries {
    pub grid: GridSpec,
    pub channels: Vec<String>,
    pub t0: DateTime<Utc>,
    pub dt_seconds: i64,
    pub frames: Tensor<f64>,
}

impl RasterSeries {
    pub fn new(
        grid: GridSpec,
        channels: Vec<String>,
        t0: DateTime<Utc>,
        dt_seconds: i64,
        frames: Tensor<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        if dt_seconds <= 0 {
            return Err(Error::param("raster time step must be positive"));
        }
        let s = frames.shape();
        if s.len() != 4 || s[1] != channels.len() || s[2] != grid.n_rows || s[3] != grid.n_cols {
            return Err(Error::dim(format!(
                "frames {s:?} do not match {} channels on a {}×{} grid",
                channels.len(),
                grid.n_rows,
                grid.n_cols
            )));
        }
        Ok(Self {
            grid,
            channels,
            t0,
            dt_seconds,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.t0 + Duration::seconds(self.dt_seconds * index as i64)
    }

    pub fn index_of(&self, time: DateTime<Utc>) -> Option<usize> {
        index_of(self.t0, self.dt_seconds, self.len(), time)
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// One `[rows, cols]` plane.
    pub fn plane(&self, frame: usize, channel: usize) -> &[f64] {
        let hw = self.grid.cells();
        let c = self.channels.len();
        &self.frames.data()[(frame * c + channel) * hw..(frame * c + channel + 1) * hw]
    }
}

pub(crate) fn index_of(t0: DateTime<Utc>, dt: i64, len: usize, time: DateTime<Utc>) -> Option<usize> {
    let offset = (time - t0).num_seconds();
    if offset < 0 || offset % dt != 0 {
        return None;
    }
    let i = (offset / dt) as usize;
    (i < len).then_some(i)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plant {
    pub lat: f64,
    pub lon: f64,
    /// MW.
    pub capacity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fleet {
    plants: Vec<Plant>,
    total_capacity: f64,
}

impl Fleet {
    /// Validates every plant against the grid footprint.
    pub fn new(plants: Vec<Plant>, grid: &GridSpec) -> Result<Self> {
        if plants.is_empty() {
            return Err(Error::param("fleet needs at least one plant"));
        }
        for (i, p) in plants.iter().enumerate() {
            if !(p.capacity > 0.0) || !p.capacity.is_finite() {
                return Err(Error::param(format!(
                    "plant {i} has non-positive capacity {}",
                    p.capacity
                )));
            }
            if !grid.contains(p.lat, p.lon) {
                return Err(Error::param(format!(
                    "plant {i} at ({}, {}) lies outside the grid",
                    p.lat, p.lon
                )));
            }
        }
        let total_capacity = plants.iter().map(|p| p.capacity).sum();
        Ok(Self { plants, total_capacity })
    }

    pub fn plants(&self) -> &[Plant] {
        &self.plants
    }

    pub fn total_capacity(&self) -> f64 {
        self.total_capacity
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries {
    pub t0: DateTime<Utc>,
    pub dt_seconds: i64,
    /// MW.
    pub values: Vec<f64>,
}

impl PowerSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.t0 + Duration::seconds(self.dt_seconds * index as i64)
    }

    pub fn index_of(&self, time: DateTime<Utc>) -> Option<usize> {
        index_of(self.t0, self.dt_seconds, self.len(), time)
    }

    pub fn at(&self, time: DateTime<Utc>) -> Option<f64> {
        self.index_of(time).map(|i| self.values[i])
    }
}

/// Generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub grid: GridSpec,
    pub days: usize,
    pub t0: DateTime<Utc>,
    pub dt_seconds: i64,
    pub n_plants: usize,
    pub concentration: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            days: 480,
            t0: Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap(),
            dt_seconds: DEFAULT_DT_SECONDS,
            n_plants: 5000,
            concentration: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_steps(&self) -> usize {
        self.days * (86_400 / self.dt_seconds) as usize
    }
}

fn box_smooth(field: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for r in 0..rows {
        for c in 0..cols {
            let (mut acc, mut n) = (0.0, 0usize);
            for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    acc += field[rr * cols + cc];
                    n += 1;
                }
            }
            out[r * cols + c] = acc / n as f64;
        }
    }
    out
}

fn smooth(mut field: Vec<f64>, rows: usize, cols: usize) -> Vec<f64> {
    for _ in 0..SMOOTHING_PASSES {
        field = box_smooth(&field, rows, cols);
    }
    field
}

/// Standard deviation of white unit noise after smoothing, at an interior cell.
fn smoothed_noise_std() -> f64 {
    let n = 4 * SMOOTHING_PASSES + 1;
    let mut delta = vec![0.0; n * n];
    delta[(n / 2) * n + n / 2] = 1.0;
    smooth(delta, n, n).iter().map(|w| w * w).sum::<f64>().sqrt()
}

/// Unit-variance, spatially smoothed AR(1) latent sequence `[T, rows·cols]`.
fn smoothed_ar_field(grid: &GridSpec, n_steps: usize, coeff: f64, key: u64) -> Vec<Vec<f64>> {
    let cells = grid.cells();
    let innov = (1.0 - coeff * coeff).sqrt();
    let norm = 1.0 / smoothed_noise_std();
    let mut latent = vec![0.0; cells];
    let mut out = Vec::with_capacity(n_steps);
    for t in 0..n_steps {
        for (i, l) in latent.iter_mut().enumerate() {
            let eps = rng::normal_at(key, (t * cells + i) as u64);
            *l = if t == 0 { eps } else { coeff * *l + innov * eps };
        }
        let s = smooth(latent.clone(), grid.n_rows, grid.n_cols);
        out.push(s.into_iter().map(|v| v * norm).collect());
    }
    out
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cloud cover in [0, 1], shape `[T, rows, cols]`.
pub fn gen_cloud_field(grid: &GridSpec, n_steps: usize, seed: u64) -> Result<Tensor<f64>> {
    grid.validate()?;
    if n_steps == 0 {
        return Err(Error::param("need at least one step"));
    }
    let key = rng::derive(seed, "cloud", &[]);
    let data: Vec<f64> = smoothed_ar_field(grid, n_steps, CLOUD_AR_COEFF, key)
        .into_iter()
        .flatten()
        .map(|v| logistic(CLOUD_GAIN * v))
        .collect();
    Tensor::new(vec![n_steps, grid.n_rows, grid.n_cols], data)
}

/// Local solar hour for a UTC instant at a longitude, in [0, 24).
pub fn solar_hour(time: DateTime<Utc>, lon: f64) -> f64 {
    let utc = time.hour() as f64 + time.minute() as f64 / 60.0 + time.second() as f64 / 3600.0;
    (utc + lon / 15.0).rem_euclid(24.0)
}

/// Ambient temperature in kelvin, shape `[T, rows, cols]`.
pub fn gen_temperature_field(
    grid: &GridSpec,
    t0: DateTime<Utc>,
    dt_seconds: i64,
    n_steps: usize,
    seed: u64,
) -> Result<Tensor<f64>> {
    grid.validate()?;
    if n_steps == 0 {
        return Err(Error::param("need at least one step"));
    }
    let key = rng::derive(seed, "temperature", &[]);
    let anomaly = smoothed_ar_field(grid, n_steps, TEMP_AR_COEFF, key);
    let clip = ANOMALY_CLIP_SIGMAS * ANOMALY_STD_K;
    let mut data = Vec::with_capacity(n_steps * grid.cells());
    for (t, anom) in anomaly.iter().enumerate() {
        let time = t0 + Duration::seconds(dt_seconds * t as i64);
        let day_of_year = time.ordinal0() as f64 + time.num_seconds_from_midnight() as f64 / 86_400.0;
        // warmest around day 201 (late July)
        let seasonal = SEASONAL_AMPLITUDE_K * (std::f64::consts::TAU * (day_of_year - 110.0) / 365.0).sin();
        for r in 0..grid.n_rows {
            for c in 0..grid.n_cols {
                let (_, lon) = grid.cell_center(r, c);
                // warmest at 14:00 local solar time
                let diurnal =
                    DIURNAL_AMPLITUDE_K * (std::f64::consts::TAU * (solar_hour(time, lon) - 14.0) / 24.0).cos();
                let a = (ANOMALY_STD_K * anom[r * grid.n_cols + c]).clamp(-clip, clip);
                data.push(BASE_TEMPERATURE_K + seasonal + diurnal + a);
            }
        }
    }
    Tensor::new(vec![n_steps, grid.n_rows, grid.n_cols], data)
}

/// Clear-sky irradiance per cell, shape `[rows, cols]`.
pub fn clearsky_plane(grid: &GridSpec, time: DateTime<Utc>) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.cells());
    for r in 0..grid.n_rows {
        for c in 0..grid.n_cols {
            let (lat, lon) = grid.cell_center(r, c);
            out.push(clearsky_ghi(solar_cos_zenith(time, lat, lon)));
        }
    }
    out
}

/// Cloud attenuation of clear-sky irradiance.
pub fn irradiance_from_cloud(clearsky: &Tensor<f64>, cloud: &Tensor<f64>) -> Result<Tensor<f64>> {
    if clearsky.shape() != cloud.shape() {
        return Err(Error::dim(format!(
            "clear-sky {:?} vs cloud {:?}",
            clearsky.shape(),
            cloud.shape()
        )));
    }
    let data = clearsky
        .data()
        .iter()
        .zip(cloud.data())
        .map(|(&cs, &n)| cs * (1.0 - 0.75 * n.powf(3.4)))
        .collect();
    Tensor::new(clearsky.shape().to_vec(), data)
}

fn tilted_unit(r: f64, beta: f64) -> f64 {
    if beta.abs() < 1e-12 {
        r
    } else {
        (1.0 + r * beta.exp_m1()).ln() / beta
    }
}

/// Plants concentrated toward the south-west corner; capacities log-uniform in [1, 50] MW.
pub fn gen_fleet(grid: &GridSpec, n_plants: usize, seed: u64, concentration: f64) -> Result<Fleet> {
    grid.validate()?;
    if n_plants == 0 {
        return Err(Error::param("fleet needs at least one plant"));
    }
    if !(concentration >= 0.0) {
        return Err(Error::param(format!("concentration must be ≥ 0, got {concentration}")));
    }
    let beta = TILT_PER_CONCENTRATION * concentration;
    let mut stream = rng::stream(seed, "fleet", &[]);
    let (north, west) = (grid.north_edge(), grid.west_edge());
    let (height, width) = (grid.n_rows as f64 * grid.dlat, grid.n_cols as f64 * grid.dlon);
    let plants = (0..n_plants)
        .map(|_| {
            let south = tilted_unit(stream.gen::<f64>(), beta);
            let westness = tilted_unit(stream.gen::<f64>(), beta);
            let capacity = (stream.gen::<f64>() * 50f64.ln()).exp();
            Plant {
                lat: north - south * height,
                lon: west + (1.0 - westness) * width,
                capacity,
            }
        })
        .collect();
    Fleet::new(plants, grid)
}

/// Fleet output per timestep from the DSWRF and TMP channels, MW.
pub fn aggregate_pv_power(fleet: &Fleet, weather: &RasterSeries) -> Result<PowerSeries> {
    let irr = weather
        .channel_index(DSWRF)
        .ok_or_else(|| Error::param("weather raster lacks a DSWRF channel"))?;
    let tmp = weather
        .channel_index(TMP)
        .ok_or_else(|| Error::param("weather raster lacks a TMP channel"))?;
    let cells: Vec<(usize, f64)> = fleet
        .plants()
        .iter()
        .map(|p| {
            weather
                .grid
                .cell_of(p.lat, p.lon)
                .map(|(r, c)| (r * weather.grid.n_cols + c, p.capacity))
                .ok_or_else(|| Error::param(format!("plant at ({}, {}) outside weather grid", p.lat, p.lon)))
        })
        .collect::<Result<_>>()?;
    let values = (0..weather.len())
        .map(|t| {
            let (irr_plane, tmp_plane) = (weather.plane(t, irr), weather.plane(t, tmp));
            cells
                .iter()
                .map(|&(cell, cap)| {
                    plant_power(
                        cap,
                        &ModuleWeather {
                            ambient_temp: tmp_plane[cell] - KELVIN_OFFSET,
                            irradiance: irr_plane[cell],
                            wind_speed: WIND_PROXY,
                        },
                    )
                })
                .sum()
        })
        .collect();
    Ok(PowerSeries {
        t0: weather.t0,
        dt_seconds: weather.dt_seconds,
        values,
    })
}

/// Weather raster (DSWRF, EACC, TMP), power series and fleet for a config.
pub fn generate(config: &SynthConfig) -> Result<(RasterSeries, PowerSeries, Fleet)> {
    let grid = config.grid;
    grid.validate()?;
    if config.dt_seconds <= 0 || 86_400 % config.dt_seconds != 0 {
        return Err(Error::param("time step must divide one day"));
    }
    let n = config.n_steps();
    if n == 0 {
        return Err(Error::param("dataset must span at least one day"));
    }
    let hw = grid.cells();
    let cloud = gen_cloud_field(&grid, n, config.seed)?;
    let temp = gen_temperature_field(&grid, config.t0, config.dt_seconds, n, config.seed)?;
    let mut frames = Vec::with_capacity(n * 3 * hw);
    for t in 0..n {
        let time = config.t0 + Duration::seconds(config.dt_seconds * t as i64);
        let cs = Tensor::new(vec![hw], clearsky_plane(&grid, time))?;
        let cl = Tensor::new(vec![hw], cloud.slab(t).to_vec())?;
        let irr = irradiance_from_cloud(&cs, &cl)?;
        frames.extend_from_slice(irr.data());
        frames.extend_from_slice(cl.data());
        frames.extend_from_slice(temp.slab(t));
    }
    let raster = RasterSeries::new(
        grid,
        NWP_CHANNELS.iter().map(|s| s.to_string()).collect(),
        config.t0,
        config.dt_seconds,
        Tensor::new(vec![n, 3, grid.n_rows, grid.n_cols], frames)?,
    )?;
    let fleet = gen_fleet(&grid, config.n_plants, config.seed, config.concentration)?;
    let power = aggregate_pv_power(&fleet, &raster)?;
    Ok((raster, power, fleet))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> GridSpec {
        GridSpec {
            n_rows: 8,
            n_cols: 8,
            ..GridSpec::default()
        }
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::default().validate().is_ok());
        assert!(GridSpec {
            n_rows: 5,
            ..GridSpec::default()
        }
        .validate()
        .is_err());
        assert!(GridSpec {
            n_rows: 2,
            ..GridSpec::default()
        }
        .validate()
        .is_err());
        assert!(GridSpec {
            dlat: 0.0,
            ..GridSpec::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn cell_lookup() {
        let g = GridSpec::default();
        assert_eq!(g.cell_of(54.5, 5.5), Some((0, 0)));
        assert_eq!(g.cell_of(47.0, 13.0), Some((15, 15)));
        assert_eq!(g.cell_of(g.south_edge(), g.east_edge()), Some((15, 15)));
        assert_eq!(g.cell_of(60.0, 5.5), None);
    }

    #[test]
    fn cloud_field_is_bounded_and_deterministic() {
        let g = small_grid();
        let a = gen_cloud_field(&g, 50, 3).unwrap();
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a, gen_cloud_field(&g, 50, 3).unwrap());
        assert_ne!(a, gen_cloud_field(&g, 50, 4).unwrap());
    }

    #[test]
    fn cloud_attenuation_formula() {
        let cs = Tensor::from_vec(vec![800.0, 800.0, 500.0]);
        let cl = Tensor::from_vec(vec![0.0, 1.0, 0.5]);
        let irr = irradiance_from_cloud(&cs, &cl).unwrap();
        assert_eq!(irr.data()[0], 800.0);
        assert_eq!(irr.data()[1], 200.0);
        assert!(irr.data()[2] <= 500.0);
        assert!(irradiance_from_cloud(&cs, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn fleet_total_is_exact_sum() {
        let g = small_grid();
        let f = gen_fleet(&g, 100, 1, 1.0).unwrap();
        let sum: f64 = f.plants().iter().map(|p| p.capacity).sum();
        assert_eq!(f.total_capacity(), sum);
        assert!(f
            .plants()
            .iter()
            .all(|p| (1.0..=50.0).contains(&p.capacity) && g.contains(p.lat, p.lon)));
    }

    #[test]
    fn fleet_rejects_out_of_grid_plants() {
        let g = small_grid();
        let p = Plant {
            lat: 10.0,
            lon: 5.5,
            capacity: 1.0,
        };
        assert!(Fleet::new(vec![p], &g).is_err());
    }

    #[test]
    fn night_power_is_zero() {
        let cfg = SynthConfig {
            grid: small_grid(),
            days: 2,
            n_plants: 20,
            ..SynthConfig::default()
        };
        let (raster, power, _) = generate(&cfg).unwrap();
        let dsw = raster.channel_index(DSWRF).unwrap();
        for t in 0..raster.len() {
            let cs = clearsky_plane(&raster.grid, raster.time_at(t));
            if cs.iter().all(|&v| v == 0.0) {
                assert_eq!(power.values[t], 0.0);
                assert!(raster.plane(t, dsw).iter().all(|&v| v == 0.0));
            }
        }
        assert_eq!(power.values[0], 0.0);
    }
}

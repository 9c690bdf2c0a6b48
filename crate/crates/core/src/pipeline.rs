//! End-to-end steps shared by the command-line tool and the test suites.

use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::{
    align_to, compare_report, compute_metrics, daylight_filter_with, persistence_baseline, Comparison, Pairs,
};
use crate::features::{build_dataset, prepare, split_train_val, Prepared, FEATURE_CHANNELS};
use crate::model::{predict, train, EpochLoss, PVNetParams};
use crate::occlusion::{channel_ranking, density_map, sample_windows, sensitivity_map, DensityMap, SensitivityMap};
use crate::storage::{self, Checkpoint, RunConfig};
use crate::synth::{generate, Fleet, GridSpec, PowerSeries, RasterSeries};
use crate::tensor::Tensor;

pub const WEATHER_FILE: &str = "weather.pvrs";
pub const POWER_FILE: &str = "power.csv";
pub const FLEET_FILE: &str = "fleet.csv";
pub const RANKING_FILE: &str = "ranking.txt";
pub const DENSITY_FILE: &str = "density.pvrs";

#[derive(Clone, Debug)]
pub struct DataBundle {
    pub raster: RasterSeries,
    pub power: PowerSeries,
    pub fleet: Fleet,
}

pub fn generate_bundle(config: &RunConfig) -> Result<DataBundle> {
    config.validate()?;
    let (raster, power, fleet) = generate(&config.synth)?;
    Ok(DataBundle { raster, power, fleet })
}

pub fn write_bundle(bundle: &DataBundle, dir: &Path) -> Result<()> {
    storage::write_raster(&dir.join(WEATHER_FILE), &bundle.raster)?;
    storage::write_series(&dir.join(POWER_FILE), &bundle.power)?;
    storage::write_fleet(&dir.join(FLEET_FILE), &bundle.fleet)
}

/// Generates the weather raster, power series and fleet and writes them to `dir`.
pub fn generate_dataset(config: &RunConfig, dir: &Path) -> Result<DataBundle> {
    let bundle = generate_bundle(config)?;
    write_bundle(&bundle, dir)?;
    Ok(bundle)
}

pub fn load_bundle(dir: &Path) -> Result<DataBundle> {
    let raster = storage::read_raster(&dir.join(WEATHER_FILE))?;
    let power = storage::read_series(&dir.join(POWER_FILE))?;
    let fleet = storage::read_fleet(&dir.join(FLEET_FILE), &raster.grid)?;
    Ok(DataBundle { raster, power, fleet })
}

pub fn prepare_bundle(bundle: &DataBundle, config: &RunConfig) -> Result<Prepared> {
    prepare(
        &bundle.raster,
        &bundle.power,
        bundle.fleet.total_capacity(),
        config.train_fraction,
    )
}

/// Splits the bundle as the checkpoint's config says and applies its stored
/// normalization instead of refitting.
pub fn prepare_for_checkpoint(bundle: &DataBundle, ckpt: &Checkpoint) -> Result<Prepared> {
    check_grid(ckpt, &bundle.raster.grid)?;
    let all = build_dataset(&bundle.raster, &bundle.power)?;
    let (train, val) = split_train_val(&ckpt.normalization.apply(&all), ckpt.config.train_fraction)?;
    Ok(Prepared {
        train,
        val,
        normalization: ckpt.normalization.clone(),
    })
}

/// Rejects a checkpoint whose grid does not match the data.
pub fn check_grid(ckpt: &Checkpoint, grid: &GridSpec) -> Result<()> {
    let g = &ckpt.config.synth.grid;
    if g.n_rows != grid.n_rows || g.n_cols != grid.n_cols {
        return Err(Error::param(format!(
            "checkpoint expects a {}×{} grid, data has {}×{}",
            g.n_rows, g.n_cols, grid.n_rows, grid.n_cols
        )));
    }
    Ok(())
}

/// One loss-log line: epoch, train MSE and validation MSE (`-` when absent).
pub fn loss_line(e: &EpochLoss) -> String {
    match e.val_mse {
        Some(v) => format!("{} {:e} {:e}", e.epoch, e.train_mse, v),
        None => format!("{} {:e} -", e.epoch, e.train_mse),
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    /// Best-validation weights, stored as they will be on disk.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

/// Trains on the bundle's train split and packs the best epoch into a checkpoint.
pub fn train_bundle(
    bundle: &DataBundle,
    config: &RunConfig,
    on_epoch: impl FnMut(&EpochLoss),
) -> Result<(Prepared, TrainRun)> {
    config.validate()?;
    let prepared = prepare_bundle(bundle, config)?;
    let val = (!prepared.val.is_empty()).then_some(&prepared.val);
    let trained = train::<f64>(&prepared.train, val, &config.model, on_epoch)?;
    let checkpoint = Checkpoint {
        config: config.clone(),
        normalization: prepared.normalization.clone(),
        params: trained.params.quantized(),
    };
    let run = TrainRun {
        checkpoint,
        history: trained.history,
        best_epoch: trained.best_epoch,
    };
    Ok((prepared, run))
}

/// Model and 24 h persistence metrics on the validation split, both over the
/// samples the daylight rule keeps for the model.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub comparison: Comparison,
    pub model_pairs: Pairs,
    pub baseline_pairs: Pairs,
    pub predicted: PowerSeries,
    pub measured: PowerSeries,
    pub baseline: PowerSeries,
}

pub fn evaluate(
    params: &PVNetParams<f64>,
    prepared: &Prepared,
    bundle: &DataBundle,
    config: &RunConfig,
) -> Result<Evaluation> {
    let predicted = predict(params, &prepared.val, &prepared.normalization)?;
    evaluate_predictions(predicted, bundle, config)
}

pub fn evaluate_predictions(predicted: PowerSeries, bundle: &DataBundle, config: &RunConfig) -> Result<Evaluation> {
    let measured = align_to(&bundle.power, &predicted)?;
    let baseline = align_to(&persistence_baseline(&bundle.power)?, &predicted)?;
    let capacity = bundle.fleet.total_capacity();
    let model_pairs = daylight_filter_with(&measured, &predicted, config.daylight_rule)?;
    let baseline_pairs = Pairs {
        measured: model_pairs.measured.clone(),
        predicted: model_pairs.indices.iter().map(|&i| baseline.values[i]).collect(),
        indices: model_pairs.indices.clone(),
        rule: model_pairs.rule,
    };
    let model = compute_metrics(&model_pairs, capacity)?;
    let base = compute_metrics(&baseline_pairs, capacity)?;
    let comparison = compare_report(&model, &base, &model_pairs, &baseline_pairs)?;
    Ok(Evaluation {
        comparison,
        model_pairs,
        baseline_pairs,
        predicted,
        measured,
        baseline,
    })
}

#[derive(Clone, Debug)]
pub struct OcclusionResult {
    pub maps: Vec<SensitivityMap>,
    pub density: DensityMap,
    pub ranking: Vec<String>,
}

/// Sensitivity maps for the given channels over a seeded validation sample.
pub fn occlusion_maps(
    params: &PVNetParams<f64>,
    prepared: &Prepared,
    channels: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<SensitivityMap>> {
    let picked = sample_windows(prepared.val.len(), samples, seed);
    let subset = prepared.val.select(&picked);
    channels
        .iter()
        .map(|&c| sensitivity_map(params, &subset, &prepared.normalization, c))
        .collect()
}

pub fn run_occlusion(
    params: &PVNetParams<f64>,
    prepared: &Prepared,
    bundle: &DataBundle,
    samples: usize,
    seed: u64,
) -> Result<OcclusionResult> {
    let all: Vec<usize> = (0..FEATURE_CHANNELS.len()).collect();
    let maps = occlusion_maps(params, prepared, &all, samples, seed)?;
    let density = density_map(&bundle.fleet, &bundle.raster.grid)?;
    let ranking = channel_ranking(&maps);
    Ok(OcclusionResult { maps, density, ranking })
}

fn single_plane_raster(name: &str, grid: GridSpec, values: &[f64], like: &RasterSeries) -> Result<RasterSeries> {
    RasterSeries::new(
        grid,
        vec![name.to_string()],
        like.t0,
        like.dt_seconds,
        Tensor::new(vec![1, 1, grid.n_rows, grid.n_cols], values.to_vec())?,
    )
}

/// Writes one raster and one PGM per channel, the density raster and the ranking.
pub fn write_occlusion(result: &OcclusionResult, like: &RasterSeries, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for m in &result.maps {
        let raster_path = dir.join(format!("sensitivity_{}.pvrs", m.channel));
        storage::write_raster(&raster_path, &single_plane_raster(&m.channel, m.grid, &m.values, like)?)?;
        let pgm_path = dir.join(format!("sensitivity_{}.pgm", m.channel));
        storage::write_pgm(&pgm_path, &m.values, m.grid.n_rows, m.grid.n_cols)?;
        written.extend([raster_path, pgm_path]);
    }
    let d = &result.density;
    let dgrid = GridSpec {
        lat0: d.north - d.resolution / 2.0,
        lon0: d.west + d.resolution / 2.0,
        dlat: d.resolution,
        dlon: d.resolution,
        n_rows: d.n_rows,
        n_cols: d.n_cols,
    };
    let density_path = dir.join(DENSITY_FILE);
    storage::write_raster(
        &density_path,
        &single_plane_raster("capacity_mw", dgrid, &d.values, like)?,
    )?;
    written.push(density_path);
    let mut text = String::new();
    for (i, (name, total)) in result
        .ranking
        .iter()
        .map(|n| {
            (
                n,
                result.maps.iter().find(|m| &m.channel == n).map_or(0.0, |m| m.total()),
            )
        })
        .enumerate()
    {
        text.push_str(&format!("{} {} {:.6e}\n", i + 1, name, total));
    }
    let ranking_path = dir.join(RANKING_FILE);
    storage::write_atomic(&ranking_path, text.as_bytes())?;
    written.push(ranking_path);
    Ok(written)
}

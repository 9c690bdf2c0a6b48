use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::{Dataset, Normalization};
use crate::nn::{adam_update, AdamState};
use crate::rng;
use crate::scalar::Scalar;
use crate::synth::PowerSeries;

use super::config::PVNetConfig;
use super::network::{backward, forward_batch, forward_train, DropoutPlan};
use super::params::{Architecture, PVNetParams};

/// Windows processed per forward/backward call inside a mini-batch.
const MICRO_BATCH: usize = 2;
/// Windows per eval-mode forward call.
const EVAL_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trained<S> {
    /// Parameters from the epoch with the lowest validation MSE.
    pub params: PVNetParams<S>,
    pub last: PVNetParams<S>,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

fn window_as<S: Scalar>(ds: &Dataset, i: usize) -> Vec<S> {
    ds.inputs(i).iter().map(|&v| S::cst(v)).collect()
}

/// Architecture for a dataset's grid under `config`.
pub fn architecture_for(config: &PVNetConfig, ds: &Dataset) -> Result<Architecture> {
    let g = ds.grid();
    Architecture::new(config, crate::features::N_FEATURES, g.n_rows, g.n_cols)
}

pub fn train<S: Scalar>(
    train: &Dataset,
    val: Option<&Dataset>,
    config: &PVNetConfig,
    on_epoch: impl FnMut(&EpochLoss),
) -> Result<Trained<S>> {
    let arch = architecture_for(config, train)?;
    let init = PVNetParams::init(&arch, rng::derive(config.seed, "model", &[]));
    train_from(init, train, val, config, on_epoch)
}

/// Adam on mini-batch MSE from the given starting parameters.
pub fn train_from<S: Scalar>(
    mut params: PVNetParams<S>,
    train: &Dataset,
    val: Option<&Dataset>,
    config: &PVNetConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<Trained<S>> {
    if train.is_empty() {
        return Err(Error::param("training split is empty"));
    }
    let arch = architecture_for(config, train)?;
    if arch != params.arch {
        return Err(Error::dim(
            "initial parameters do not match the configured architecture",
        ));
    }
    let mut adam = AdamState::for_params(&params.tensors(), S::cst(config.lr));
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, PVNetParams<S>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        let mut shuffle = rng::stream(config.seed, "shuffle", &[epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut shuffle);
        let plan = DropoutPlan {
            seed: config.seed,
            epoch: epoch as u64,
            rate_conv: config.dropout_conv,
            rate_fc: config.dropout_fc,
        };
        let mut sq_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = S::cst(2.0 / batch.len() as f64);
            let mut grads = PVNetParams::zeros(&params.arch);
            let mut batch_sq = 0.0;
            for micro in batch.chunks(MICRO_BATCH) {
                let inputs: Vec<Vec<S>> = micro.iter().map(|&i| window_as(train, i)).collect();
                let refs: Vec<&[S]> = inputs.iter().map(|v| v.as_slice()).collect();
                let ids: Vec<u64> = micro.iter().map(|&i| i as u64).collect();
                let (pred, cache) = forward_train(&params, &refs, Some((&plan, &ids)))?;
                let d_pred: Vec<S> = pred
                    .iter()
                    .zip(micro)
                    .map(|(&p, &i)| {
                        let e = p - S::cst(train.targets()[i]);
                        batch_sq += e.to_f64_lossy().powi(2);
                        scale * e
                    })
                    .collect();
                grads.add_assign(&backward(&params, &cache, &d_pred)?);
            }
            if !batch_sq.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("non-finite loss in batch {b}"),
                });
            }
            sq_sum += batch_sq;
            adam_update(&mut params.tensors_mut(), &grads.tensors(), &mut adam)?;
        }
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                message: "parameters became non-finite".into(),
            });
        }
        let train_mse = sq_sum / train.len() as f64;
        let val_mse = val.map(|v| mse(&params, v)).transpose()?;
        let entry = EpochLoss {
            epoch,
            train_mse,
            val_mse,
        };
        log::info!("epoch {epoch}: train {train_mse:.6e} val {val_mse:?}");
        on_epoch(&entry);
        history.push(entry);
        let score = val_mse.unwrap_or(train_mse);
        if best.as_ref().is_none_or(|(s, ..)| score < *s) {
            best = Some((score, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(Trained {
        params: best_params,
        last: params,
        history,
        best_epoch,
    })
}

/// Eval-mode MSE in normalized units.
pub fn mse<S: Scalar>(params: &PVNetParams<S>, ds: &Dataset) -> Result<f64> {
    let pred = predict_normalized(params, ds)?;
    Ok(pred.iter().zip(ds.targets()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / ds.len() as f64)
}

/// Eval-mode outputs for arbitrary windows `[8, C, H, W]`, split across
/// `crate::worker_threads()` workers; order is preserved.
pub fn predict_windows<S: Scalar>(params: &PVNetParams<S>, windows: &[&[f64]]) -> Result<Vec<f64>> {
    let run = |ws: &[&[f64]]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ws.len());
        for chunk in ws.chunks(EVAL_CHUNK) {
            let inputs: Vec<Vec<S>> = chunk.iter().map(|w| w.iter().map(|&v| S::cst(v)).collect()).collect();
            let refs: Vec<&[S]> = inputs.iter().map(|v| v.as_slice()).collect();
            out.extend(forward_batch(params, &refs)?.into_iter().map(|v| v.to_f64_lossy()));
        }
        Ok(out)
    };
    let threads = crate::worker_threads().min(windows.len().div_ceil(EVAL_CHUNK)).max(1);
    if threads == 1 {
        return run(windows);
    }
    let per = windows.len().div_ceil(threads);
    let parts: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = windows.chunks(per).map(|ws| s.spawn(move || run(ws))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(windows.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Eval-mode outputs in normalized units, one per window.
pub fn predict_normalized<S: Scalar>(params: &PVNetParams<S>, ds: &Dataset) -> Result<Vec<f64>> {
    let windows: Vec<&[f64]> = (0..ds.len()).map(|i| ds.inputs(i)).collect();
    predict_windows(params, &windows)
}

/// Predictions in MW, clamped at zero. Windows must be consecutive in time.
pub fn predict<S: Scalar>(params: &PVNetParams<S>, ds: &Dataset, norm: &Normalization) -> Result<PowerSeries> {
    if ds.is_empty() {
        return Err(Error::param("no windows to predict"));
    }
    if ds.target_indices().windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::param("prediction windows must be consecutive"));
    }
    let values = predict_normalized(params, ds)?
        .into_iter()
        .map(|v| norm.denormalize_target(v).max(0.0))
        .collect();
    Ok(PowerSeries {
        t0: ds.target_time(0),
        dt_seconds: ds.dt_seconds(),
        values,
    })
}

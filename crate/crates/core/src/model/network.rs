//! Batched forward and backward passes.
//!
//! A batch of `B` windows becomes `N = 8B` frames in the channel-major layout
//! `[C, N, H, W]`, frame `n = 8b + k` holding step `k` of window `b`.

use crate::error::{Error, Result};
use crate::nn::{
    bilstm_backward, bilstm_forward_matrix, conv2d_backward_batch, conv2d_forward_batch, dense_backward_batch,
    dense_forward_batch, maxpool2x2_backward, maxpool2x2_forward, prelu_backward, prelu_forward, BiLstmCache,
    ConvCache, DropoutMask, PoolArgmax,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::config::LayerSpec;
use super::params::{Architecture, PVNetParams};

/// Dropout settings for a training pass. Masks are keyed by
/// `(seed, epoch, sample, layer)` so they do not depend on batching.
#[derive(Clone, Copy, Debug)]
pub struct DropoutPlan {
    pub seed: u64,
    pub epoch: u64,
    pub rate_conv: f64,
    pub rate_fc: f64,
}

enum LayerCache<S> {
    Conv {
        conv: ConvCache<S>,
        pre: Tensor<S>,
        mask: DropoutMask<S>,
    },
    Pool(PoolArgmax),
}

/// Intermediate values kept for the backward pass.
pub struct BatchCache<S> {
    n_windows: usize,
    layers: Vec<LayerCache<S>>,
    flat: Tensor<S>,
    fc_mask: DropoutMask<S>,
    bilstm: Vec<BiLstmCache<S>>,
    head_in: Tensor<S>,
}

impl<S: Scalar> BatchCache<S> {
    /// Which side of every non-differentiable point the pass took: PReLU
    /// input signs, pooling winners and hard-sigmoid regions. Two passes with
    /// equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> Vec<u32> {
        let mut sig = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerCache::Conv { pre, .. } => sig.extend(pre.data().iter().map(|&v| u32::from(v > S::zero()))),
                LayerCache::Pool(arg) => sig.extend(arg.indices.iter().map(|&i| i as u32)),
            }
        }
        for c in &self.bilstm {
            c.push_regions(&mut sig);
        }
        sig
    }
}

fn dropout_mask<S: Scalar>(
    plan: Option<(&DropoutPlan, &[u64])>,
    layer: u64,
    shape: &[usize],
    window: usize,
    conv: bool,
) -> Result<DropoutMask<S>> {
    let Some((plan, samples)) = plan else {
        return Ok(DropoutMask::identity());
    };
    let rate = if conv { plan.rate_conv } else { plan.rate_fc };
    let keys: Vec<u64> = samples
        .iter()
        .map(|&s| rng::derive(plan.seed, "dropout", &[plan.epoch, s, layer]))
        .collect();
    let len: usize = shape.iter().product();
    if conv {
        // [C, N, h, w]
        let (n, hw) = (shape[1], shape[2] * shape[3]);
        DropoutMask::from_keep(len, rate, |i| {
            let (c, rem) = (i / (n * hw), i % (n * hw));
            let (frame, pix) = (rem / hw, rem % hw);
            let (b, k) = (frame / window, frame % window);
            let counter = ((c * window + k) * hw + pix) as u64;
            rng::uniform_at(keys[b], counter) >= rate
        })
    } else {
        // [N, d]
        let d = shape[1];
        DropoutMask::from_keep(len, rate, |i| {
            let (frame, j) = (i / d, i % d);
            let (b, k) = (frame / window, frame % window);
            rng::uniform_at(keys[b], (k * d + j) as u64) >= rate
        })
    }
}

/// `[C, N, h, w]` → `[N, C·h·w]`.
fn flatten_frames<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let s = x.shape();
    let (c, n, hw) = (s[0], s[1], s[2] * s[3]);
    let mut out = vec![S::zero(); x.len()];
    for ci in 0..c {
        for f in 0..n {
            let src = &x.data()[(ci * n + f) * hw..(ci * n + f + 1) * hw];
            out[f * c * hw + ci * hw..f * c * hw + (ci + 1) * hw].copy_from_slice(src);
        }
    }
    Tensor::new(vec![n, c * hw], out).expect("flatten shape")
}

fn unflatten_frames<S: Scalar>(x: &Tensor<S>, c: usize, h: usize, w: usize) -> Tensor<S> {
    let n = x.shape()[0];
    let hw = h * w;
    let mut out = vec![S::zero(); x.len()];
    for f in 0..n {
        for ci in 0..c {
            out[(ci * n + f) * hw..(ci * n + f + 1) * hw]
                .copy_from_slice(&x.data()[f * c * hw + ci * hw..f * c * hw + (ci + 1) * hw]);
        }
    }
    Tensor::new(vec![c, n, h, w], out).expect("unflatten shape")
}

/// Stacks frames `[N][C, H, W]` into `[C, N, H, W]`.
fn stack_frames<S: Scalar>(frames: &[&[S]], arch: &Architecture) -> Result<Tensor<S>> {
    let (c, hw) = (arch.in_channels, arch.height * arch.width);
    let n = frames.len();
    let mut x = vec![S::zero(); c * n * hw];
    for (f, frame) in frames.iter().enumerate() {
        if frame.len() != c * hw {
            return Err(Error::dim(format!(
                "frame has {} values, expected {c}×{}×{}",
                frame.len(),
                arch.height,
                arch.width
            )));
        }
        for ci in 0..c {
            x[(ci * n + f) * hw..(ci * n + f + 1) * hw].copy_from_slice(&frame[ci * hw..(ci + 1) * hw]);
        }
    }
    Tensor::new(vec![c, n, arch.height, arch.width], x)
}

/// Features `[N, fc_dim]`, per-layer caches, the flattened encoder output and the FC dropout mask.
type Encoded<S> = (Tensor<S>, Vec<LayerCache<S>>, Tensor<S>, DropoutMask<S>);

/// CNN encoder and FC layer over `[C, N, H, W]`; returns `[N, fc_dim]`.
fn encode<S: Scalar>(
    params: &PVNetParams<S>,
    mut x: Tensor<S>,
    plan: Option<(&DropoutPlan, &[u64])>,
    keep_cache: bool,
) -> Result<Encoded<S>> {
    let window = params.arch.window;
    let mut caches = Vec::new();
    let mut conv_idx = 0;
    for spec in &params.arch.layers {
        match spec {
            LayerSpec::Conv(_) => {
                let layer = &params.conv[conv_idx];
                let (pre, conv) = conv2d_forward_batch(&x, &layer.kernel, &layer.bias)?;
                let act = prelu_forward(&pre, &layer.slope)?;
                let mask = dropout_mask(plan, conv_idx as u64, act.shape(), window, true)?;
                x = mask.apply(&act);
                if keep_cache {
                    caches.push(LayerCache::Conv { conv, pre, mask });
                }
                conv_idx += 1;
            }
            LayerSpec::Pool => {
                let (pooled, arg) = maxpool2x2_forward(&x)?;
                x = pooled;
                if keep_cache {
                    caches.push(LayerCache::Pool(arg));
                }
            }
        }
    }
    let flat = flatten_frames(&x);
    let fc = dense_forward_batch(&flat, &params.fc_w, &params.fc_b)?;
    let fc_mask = dropout_mask(plan, params.conv.len() as u64, fc.shape(), window, false)?;
    Ok((fc_mask.apply(&fc), caches, flat, fc_mask))
}

/// Feature vector of one frame `[C, H, W]` (eval mode).
pub fn encode_frame<S: Scalar>(frame: &Tensor<S>, params: &PVNetParams<S>) -> Result<Tensor<S>> {
    let a = &params.arch;
    frame.check_shape(&[a.in_channels, a.height, a.width], "frame")?;
    let x = stack_frames(&[frame.data()], a)?;
    let (feat, ..) = encode(params, x, None, false)?;
    feat.reshape(&[a.fc_dim])
}

fn check_windows<S: Scalar>(windows: &[&[S]], arch: &Architecture) -> Result<()> {
    let len = arch.window * arch.in_channels * arch.height * arch.width;
    if windows.is_empty() {
        return Err(Error::param("empty batch"));
    }
    for w in windows {
        if w.len() != len {
            return Err(Error::dim(format!(
                "window has {} values, expected [{}, {}, {}, {}]",
                w.len(),
                arch.window,
                arch.in_channels,
                arch.height,
                arch.width
            )));
        }
    }
    Ok(())
}

fn run<S: Scalar>(
    params: &PVNetParams<S>,
    windows: &[&[S]],
    plan: Option<(&DropoutPlan, &[u64])>,
    keep_cache: bool,
) -> Result<(Vec<S>, Option<BatchCache<S>>)> {
    let a = &params.arch;
    check_windows(windows, a)?;
    let frame_len = a.in_channels * a.height * a.width;
    let frames: Vec<&[S]> = windows.iter().flat_map(|w| w.chunks_exact(frame_len)).collect();
    let x = stack_frames(&frames, a)?;
    let (feats, layers, flat, fc_mask) = encode(params, x, plan, keep_cache)?;
    let (t, d) = (a.window, a.fc_dim);
    let mut head_in = Vec::with_capacity(windows.len() * a.head_dim());
    let mut bilstm = Vec::new();
    for b in 0..windows.len() {
        let xs = Tensor::new(vec![t, d], feats.data()[b * t * d..(b + 1) * t * d].to_vec())?;
        let (hs, cache) = bilstm_forward_matrix(&xs, &params.lstm_fwd, &params.lstm_bwd)?;
        head_in.extend_from_slice(hs.data());
        if keep_cache {
            bilstm.push(cache);
        }
    }
    let head_in = Tensor::new(vec![windows.len(), a.head_dim()], head_in)?;
    let out = dense_forward_batch(&head_in, &params.head_w, &params.head_b)?.into_data();
    let cache = keep_cache.then_some(BatchCache {
        n_windows: windows.len(),
        layers,
        flat,
        fc_mask,
        bilstm,
        head_in,
    });
    Ok((out, cache))
}

/// Eval-mode predictions (normalized units) for windows `[8, C, H, W]`.
pub fn forward_batch<S: Scalar>(params: &PVNetParams<S>, windows: &[&[S]]) -> Result<Vec<S>> {
    Ok(run(params, windows, None, false)?.0)
}

/// Eval-mode prediction for one window.
pub fn forward<S: Scalar>(window: &Tensor<S>, params: &PVNetParams<S>) -> Result<S> {
    let a = &params.arch;
    window.check_shape(&[a.window, a.in_channels, a.height, a.width], "window")?;
    Ok(forward_batch(params, &[window.data()])?[0])
}

/// Forward pass that keeps what [`backward`] needs. With a dropout plan,
/// `samples` names each window for mask derivation.
pub fn forward_train<S: Scalar>(
    params: &PVNetParams<S>,
    windows: &[&[S]],
    dropout: Option<(&DropoutPlan, &[u64])>,
) -> Result<(Vec<S>, BatchCache<S>)> {
    if let Some((_, samples)) = dropout {
        if samples.len() != windows.len() {
            return Err(Error::dim("one sample id per window is required"));
        }
    }
    let (out, cache) = run(params, windows, dropout, true)?;
    Ok((out, cache.expect("cache requested")))
}

/// Parameter gradients given `d loss / d prediction` for every window.
pub fn backward<S: Scalar>(params: &PVNetParams<S>, cache: &BatchCache<S>, d_pred: &[S]) -> Result<PVNetParams<S>> {
    let a = &params.arch;
    if d_pred.len() != cache.n_windows {
        return Err(Error::dim(format!(
            "{} prediction gradients for {} windows",
            d_pred.len(),
            cache.n_windows
        )));
    }
    let mut grads = PVNetParams::zeros(a);
    let g_out = Tensor::new(vec![cache.n_windows, 1], d_pred.to_vec())?;
    let head = dense_backward_batch(&g_out, &cache.head_in, &params.head_w)?;
    grads.head_w = head.weight;
    grads.head_b = head.bias;

    let (t, d, u) = (a.window, a.fc_dim, a.lstm_units);
    let mut d_feats = Vec::with_capacity(cache.n_windows * t * d);
    for (b, bc) in cache.bilstm.iter().enumerate() {
        let d_hs = Tensor::new(vec![t, 2 * u], head.input.slab(b).to_vec())?;
        let (dx, gf, gb) = bilstm_backward(&d_hs, bc, &params.lstm_fwd, &params.lstm_bwd)?;
        d_feats.extend_from_slice(dx.data());
        for (dst, src) in grads.lstm_fwd.tensors_mut().into_iter().zip(gf.tensors()) {
            dst.add_assign(src);
        }
        for (dst, src) in grads.lstm_bwd.tensors_mut().into_iter().zip(gb.tensors()) {
            dst.add_assign(src);
        }
    }
    let d_fc = cache
        .fc_mask
        .apply(&Tensor::new(vec![cache.n_windows * t, d], d_feats)?);
    let fc = dense_backward_batch(&d_fc, &cache.flat, &params.fc_w)?;
    grads.fc_w = fc.weight;
    grads.fc_b = fc.bias;

    let (c, h, w) = a.encoder_output();
    let mut g = unflatten_frames(&fc.input, c, h, w);
    let mut conv_idx = params.conv.len();
    for lc in cache.layers.iter().rev() {
        match lc {
            LayerCache::Pool(arg) => g = maxpool2x2_backward(&g, arg)?,
            LayerCache::Conv { conv, pre, mask } => {
                conv_idx -= 1;
                let layer = &params.conv[conv_idx];
                let (g_pre, d_slope) = prelu_backward(&mask.apply(&g), pre, &layer.slope)?;
                let cg = conv2d_backward_batch(&g_pre, conv, &layer.kernel, conv_idx > 0)?;
                grads.conv[conv_idx].kernel = cg.kernels;
                grads.conv[conv_idx].bias = cg.bias;
                grads.conv[conv_idx].slope = d_slope;
                if let Some(gi) = cg.input {
                    g = gi;
                }
            }
        }
    }
    Ok(grads)
}

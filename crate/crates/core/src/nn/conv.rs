//! 3×3 same-padded convolution via im2col + GEMM.
//!
//! Batched tensors use a channel-major layout `[C, N, H, W]`: the GEMM output
//! `W[C_out, C_in·9] × cols[C_in·9, N·H·W]` lands directly in that layout, and
//! per-channel ops (bias, PReLU) touch contiguous memory. A single frame
//! `[C, H, W]` is the `N = 1` case of the same layout.

use crate::error::{Error, Result};
use crate::scalar::{gemm, Op, Scalar};
use crate::tensor::Tensor;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Saved im2col matrix and geometry for the backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache<S> {
    cols: Vec<S>,
    c_in: usize,
    n: usize,
    h: usize,
    w: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<S> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<S>>,
    pub kernels: Tensor<S>,
    pub bias: Tensor<S>,
}

fn check_kernels<S: Scalar>(kernels: &Tensor<S>, bias: &Tensor<S>, c_in: usize) -> Result<usize> {
    let ks = kernels.shape();
    if ks.len() != 4 || ks[2] != KERNEL || ks[3] != KERNEL {
        return Err(Error::dim(format!(
            "conv kernels must be [C_out, C_in, 3, 3], got {ks:?}"
        )));
    }
    if ks[1] != c_in {
        return Err(Error::dim(format!(
            "conv kernels expect {} input channels, input has {c_in}",
            ks[1]
        )));
    }
    bias.check_shape(&[ks[0]], "conv bias")?;
    Ok(ks[0])
}

fn im2col<S: Scalar>(input: &[S], c_in: usize, n: usize, h: usize, w: usize) -> Vec<S> {
    let hw = h * w;
    let p = n * hw;
    let mut cols = vec![S::zero(); c_in * TAPS * p];
    for ci in 0..c_in {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * p;
                for b in 0..n {
                    let src = &input[(ci * n + b) * hw..(ci * n + b + 1) * hw];
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let srow = &src[(sy - 1) * w..sy * w];
                        let dst = &mut cols[row + b * hw + y * w..row + b * hw + (y + 1) * w];
                        // dst[x] = srow[x + kx - 1] where in range
                        match kx {
                            0 => dst[1..].copy_from_slice(&srow[..w - 1]),
                            1 => dst.copy_from_slice(srow),
                            _ => dst[..w - 1].copy_from_slice(&srow[1..]),
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<S: Scalar>(cols: &[S], c_in: usize, n: usize, h: usize, w: usize) -> Vec<S> {
    let hw = h * w;
    let p = n * hw;
    let mut out = vec![S::zero(); c_in * p];
    for ci in 0..c_in {
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (ci * TAPS + ky * KERNEL + kx) * p;
                for b in 0..n {
                    let dst = &mut out[(ci * n + b) * hw..(ci * n + b + 1) * hw];
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let src = &cols[row + b * hw + y * w..row + b * hw + (y + 1) * w];
                        let drow = &mut dst[(sy - 1) * w..sy * w];
                        match kx {
                            0 => drow[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, &s)| *d += s),
                            1 => drow.iter_mut().zip(src).for_each(|(d, &s)| *d += s),
                            _ => drow[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, &s)| *d += s),
                        }
                    }
                }
            }
        }
    }
    out
}

/// Batched forward on `[C_in, N, H, W]`, returning `[C_out, N, H, W]`.
pub fn conv2d_forward_batch<S: Scalar>(
    input: &Tensor<S>,
    kernels: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<(Tensor<S>, ConvCache<S>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::dim(format!("conv input must be [C, N, H, W], got {s:?}")));
    }
    let (c_in, n, h, w) = (s[0], s[1], s[2], s[3]);
    let c_out = check_kernels(kernels, bias, c_in)?;
    let cols = im2col(input.data(), c_in, n, h, w);
    let p = n * h * w;
    let mut out = vec![S::zero(); c_out * p];
    for (co, row) in out.chunks_exact_mut(p).enumerate() {
        row.fill(bias.data()[co]);
    }
    gemm(
        Op::N,
        Op::N,
        c_out,
        p,
        c_in * TAPS,
        S::one(),
        kernels.data(),
        &cols,
        S::one(),
        &mut out,
    );
    let cache = ConvCache { cols, c_in, n, h, w };
    Ok((Tensor::new(vec![c_out, n, h, w], out)?, cache))
}

/// Gradients of a batched convolution given `d loss / d output`.
pub fn conv2d_backward_batch<S: Scalar>(
    grad_out: &Tensor<S>,
    cache: &ConvCache<S>,
    kernels: &Tensor<S>,
    need_input_grad: bool,
) -> Result<ConvGrads<S>> {
    let c_out = kernels.shape()[0];
    let ConvCache { cols, c_in, n, h, w } = cache;
    let (c_in, n, h, w) = (*c_in, *n, *h, *w);
    grad_out.check_shape(&[c_out, n, h, w], "conv output gradient")?;
    let p = n * h * w;
    let k = c_in * TAPS;
    let g = grad_out.data();

    let mut dk = vec![S::zero(); c_out * k];
    gemm(Op::N, Op::T, c_out, k, p, S::one(), g, cols, S::zero(), &mut dk);
    let db: Vec<S> = g.chunks_exact(p).map(|r| r.iter().copied().sum()).collect();

    let input = if need_input_grad {
        let mut dcols = vec![S::zero(); k * p];
        gemm(
            Op::T,
            Op::N,
            k,
            p,
            c_out,
            S::one(),
            kernels.data(),
            g,
            S::zero(),
            &mut dcols,
        );
        Some(Tensor::new(vec![c_in, n, h, w], col2im(&dcols, c_in, n, h, w))?)
    } else {
        None
    };
    Ok(ConvGrads {
        input,
        kernels: Tensor::new(kernels.shape().to_vec(), dk)?,
        bias: Tensor::from_vec(db),
    })
}

/// Single-frame forward: `[C_in, H, W]` → `[C_out, H, W]`, zero same-padding.
pub fn conv2d_forward<S: Scalar>(input: &Tensor<S>, kernels: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
    let (out, _) = conv2d_forward_cached(input, kernels, bias)?;
    Ok(out)
}

pub fn conv2d_forward_cached<S: Scalar>(
    input: &Tensor<S>,
    kernels: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<(Tensor<S>, ConvCache<S>)> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::dim(format!("conv input must be [C, H, W], got {s:?}")));
    }
    let batched = input.clone().reshape(&[s[0], 1, s[1], s[2]])?;
    let (out, cache) = conv2d_forward_batch(&batched, kernels, bias)?;
    let os = out.shape().to_vec();
    Ok((out.reshape(&[os[0], os[2], os[3]])?, cache))
}

pub fn conv2d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    cache: &ConvCache<S>,
    kernels: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    let s = grad_out.shape();
    if s.len() != 3 {
        return Err(Error::dim(format!("conv gradient must be [C, H, W], got {s:?}")));
    }
    let batched = grad_out.clone().reshape(&[s[0], 1, s[1], s[2]])?;
    let mut grads = conv2d_backward_batch(&batched, cache, kernels, true)?;
    grads.input = grads
        .input
        .map(|t| t.reshape(&[cache.c_in, cache.h, cache.w]))
        .transpose()?;
    Ok(grads)
}

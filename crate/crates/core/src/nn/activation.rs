use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `max(0, min(1, 0.2 x + 0.5))`.
#[inline]
pub fn hard_sigmoid<S: Scalar>(x: S) -> S {
    (S::cst(0.2) * x + S::cst(0.5)).max(S::zero()).min(S::one())
}

/// Derivative of [`hard_sigmoid`]; zero on the saturated pieces and at the kinks.
#[inline]
pub fn hard_sigmoid_grad<S: Scalar>(x: S) -> S {
    let bound = S::cst(2.5);
    if x > -bound && x < bound {
        S::cst(0.2)
    } else {
        S::zero()
    }
}

fn channel_span<S: Scalar>(input: &Tensor<S>, slope: &Tensor<S>) -> Result<usize> {
    let c = input.shape()[0];
    if slope.shape() != [c] {
        return Err(Error::dim(format!(
            "prelu slope must have one entry per channel ({c}), got {:?}",
            slope.shape()
        )));
    }
    Ok(input.len() / c)
}

/// Parametric ReLU with one slope per leading-axis channel.
pub fn prelu_forward<S: Scalar>(input: &Tensor<S>, slope: &Tensor<S>) -> Result<Tensor<S>> {
    let span = channel_span(input, slope)?;
    let mut out = input.clone();
    for (chunk, &a) in out.data_mut().chunks_exact_mut(span).zip(slope.data()) {
        for v in chunk.iter_mut() {
            if *v <= S::zero() {
                *v *= a;
            }
        }
    }
    Ok(out)
}

/// Returns `(d input, d slope)`; `input` is the pre-activation value.
pub fn prelu_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    slope: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let span = channel_span(input, slope)?;
    grad_out.check_shape(input.shape(), "prelu output gradient")?;
    let mut d_in = grad_out.clone();
    let mut d_slope = Tensor::zeros(slope.shape());
    for (c, (gi, xi)) in d_in
        .data_mut()
        .chunks_exact_mut(span)
        .zip(input.data().chunks_exact(span))
        .enumerate()
    {
        let a = slope.data()[c];
        let mut acc = S::zero();
        for (g, &x) in gi.iter_mut().zip(xi) {
            if x <= S::zero() {
                acc += *g * x;
                *g *= a;
            }
        }
        d_slope.data_mut()[c] = acc;
    }
    Ok((d_in, d_slope))
}

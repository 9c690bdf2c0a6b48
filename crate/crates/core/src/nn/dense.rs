use crate::error::{Error, Result};
use crate::scalar::{gemm, Op, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct DenseGrads<S> {
    pub input: Tensor<S>,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

fn dims<S: Scalar>(weight: &Tensor<S>, bias: &Tensor<S>) -> Result<(usize, usize)> {
    if weight.ndim() != 2 {
        return Err(Error::dim(format!(
            "dense weight must be [d_out, d_in], got {:?}",
            weight.shape()
        )));
    }
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    bias.check_shape(&[d_out], "dense bias")?;
    Ok((d_out, d_in))
}

/// `W x + b` for a single vector.
pub fn dense_forward<S: Scalar>(input: &Tensor<S>, weight: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
    let (_, d_in) = dims(weight, bias)?;
    input.check_shape(&[d_in], "dense input")?;
    let batched = input.clone().reshape(&[1, d_in])?;
    let out = dense_forward_batch(&batched, weight, bias)?;
    let d_out = out.shape()[1];
    out.reshape(&[d_out])
}

/// Row-wise `W x + b` for inputs `[N, d_in]`.
pub fn dense_forward_batch<S: Scalar>(input: &Tensor<S>, weight: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
    let (d_out, d_in) = dims(weight, bias)?;
    if input.ndim() != 2 || input.shape()[1] != d_in {
        return Err(Error::dim(format!(
            "dense input must be [N, {d_in}], got {:?}",
            input.shape()
        )));
    }
    let n = input.shape()[0];
    let mut out = Vec::with_capacity(n * d_out);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(
        Op::N,
        Op::T,
        n,
        d_out,
        d_in,
        S::one(),
        input.data(),
        weight.data(),
        S::one(),
        &mut out,
    );
    Tensor::new(vec![n, d_out], out)
}

/// Gradients for inputs `[N, d_in]` and upstream gradient `[N, d_out]`.
pub fn dense_backward_batch<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    weight: &Tensor<S>,
) -> Result<DenseGrads<S>> {
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    let n = input.shape()[0];
    grad_out.check_shape(&[n, d_out], "dense output gradient")?;
    let g = grad_out.data();
    let mut dw = vec![S::zero(); d_out * d_in];
    gemm(
        Op::T,
        Op::N,
        d_out,
        d_in,
        n,
        S::one(),
        g,
        input.data(),
        S::zero(),
        &mut dw,
    );
    let mut dx = vec![S::zero(); n * d_in];
    gemm(
        Op::N,
        Op::N,
        n,
        d_in,
        d_out,
        S::one(),
        g,
        weight.data(),
        S::zero(),
        &mut dx,
    );
    let mut db = vec![S::zero(); d_out];
    for row in g.chunks_exact(d_out) {
        for (b, &v) in db.iter_mut().zip(row) {
            *b += v;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n, d_in], dx)?,
        weight: Tensor::new(vec![d_out, d_in], dw)?,
        bias: Tensor::from_vec(db),
    })
}

pub fn dense_backward<S: Scalar>(grad_out: &Tensor<S>, input: &Tensor<S>, weight: &Tensor<S>) -> Result<DenseGrads<S>> {
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    let g = grad_out.clone().reshape(&[1, d_out])?;
    let x = input.clone().reshape(&[1, d_in])?;
    let mut grads = dense_backward_batch(&g, &x, weight)?;
    grads.input = grads.input.reshape(&[d_in])?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_input() {
        let x = Tensor::from_vec(vec![1.0f64, -2.0, 3.0]);
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn zero_weight_gives_bias() {
        let x = Tensor::from_vec(vec![5.0f64, 7.0]);
        let b = Tensor::from_vec(vec![1.0, 2.0]);
        let y = dense_forward(&x, &Tensor::zeros(&[2, 2]), &b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let x = Tensor::<f64>::zeros(&[4]);
        let w = Tensor::zeros(&[2, 3]);
        assert!(matches!(
            dense_forward(&x, &w, &Tensor::zeros(&[2])),
            Err(Error::Dimension(_))
        ));
    }
}

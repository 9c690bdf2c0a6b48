use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Flat input index of the winning element for every output cell.
#[derive(Clone, Debug)]
pub struct PoolArgmax {
    pub input_shape: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Disjoint 2×2 max pooling over the two trailing axes.
///
/// Ties resolve to the first element in row-major block order.
pub fn maxpool2x2_forward<S: Scalar>(input: &Tensor<S>) -> Result<(Tensor<S>, PoolArgmax)> {
    let s = input.shape();
    if s.len() < 2 {
        return Err(Error::dim("maxpool needs at least two axes"));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(format!("maxpool needs even H and W, got {h}×{w}")));
    }
    let planes = input.len() / (h * w);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut indices = Vec::with_capacity(planes * oh * ow);
    let x = input.data();
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for cand in [i0 + 1, i0 + w, i0 + w + 1] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                out.push(x[best]);
                indices.push(best);
            }
        }
    }
    let mut oshape = s.to_vec();
    let n = oshape.len();
    oshape[n - 2] = oh;
    oshape[n - 1] = ow;
    Ok((
        Tensor::new(oshape, out)?,
        PoolArgmax {
            input_shape: s.to_vec(),
            indices,
        },
    ))
}

/// Routes each upstream gradient to the argmax of its block.
pub fn maxpool2x2_backward<S: Scalar>(grad_out: &Tensor<S>, argmax: &PoolArgmax) -> Result<Tensor<S>> {
    if grad_out.len() != argmax.indices.len() {
        return Err(Error::dim(format!(
            "maxpool gradient has {} entries, argmax record has {}",
            grad_out.len(),
            argmax.indices.len()
        )));
    }
    let mut d = Tensor::zeros(&argmax.input_shape);
    let dd = d.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(&argmax.indices) {
        dd[i] += g;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_block() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (y, am) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(am.indices, vec![3]);
    }

    #[test]
    fn constant_field_halves_resolution() {
        let x = Tensor::full(&[3, 4, 6], 2.5f64);
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.shape(), &[3, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn odd_extent_is_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 3, 4]);
        assert!(matches!(maxpool2x2_forward(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn backward_conserves_gradient_mass() {
        let x = Tensor::<f64>::from_fn(&[2, 4, 4], |i| ((i * 37) % 17) as f64);
        let (_, am) = maxpool2x2_forward(&x).unwrap();
        let g = Tensor::from_fn(&[2, 2, 2], |i| i as f64 - 3.5);
        let d = maxpool2x2_backward(&g, &am).unwrap();
        assert!((d.sum() - g.sum()).abs() < 1e-12);
        assert_eq!(d.data().iter().filter(|&&v| v != 0.0).count(), 8);
    }
}

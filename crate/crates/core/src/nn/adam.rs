use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bias-corrected Adam moments for an ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState<S> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step_count: u64,
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
}

impl<S: Scalar> AdamState<S> {
    /// Fresh state with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>, lr: S) -> Self {
        let m: Vec<Tensor<S>> = shapes.into_iter().map(Tensor::zeros).collect();
        Self {
            v: m.clone(),
            m,
            step_count: 0,
            lr,
            beta1: S::cst(0.9),
            beta2: S::cst(0.999),
            epsilon: S::cst(1e-8),
        }
    }

    pub fn for_params(params: &[&Tensor<S>], lr: S) -> Self {
        Self::new(params.iter().map(|t| t.shape()), lr)
    }
}

/// One Adam step over `params` in place; `step_count` advances once.
pub fn adam_update<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[&Tensor<S>],
    state: &mut AdamState<S>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::dim(format!(
                "adam slot {i}: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                state.m[i].shape()
            )));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.lr);
    let bc1 = S::one() - b1.powi(t);
    let bc2 = S::one() - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (S::one() - b1) * gi;
            *vi = b2 * *vi + (S::one() - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::from_vec(vec![1.0f64, -2.0]);
        let g = Tensor::zeros(&[2]);
        let mut st = AdamState::for_params(&[&p], 0.0015);
        adam_update(&mut [&mut p], &[&g], &mut st).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::from_vec(vec![0.0f64, 0.0, 0.0]);
        let g = Tensor::from_vec(vec![3.0, -0.01, 250.0]);
        let mut st = AdamState::for_params(&[&p], 0.0015);
        adam_update(&mut [&mut p], &[&g], &mut st).unwrap();
        for (&x, &gi) in p.data().iter().zip(g.data()) {
            let expected = -0.0015 * gi / (gi.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-15);
            assert!((x.abs() - 0.0015).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::<f64>::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut st = AdamState::for_params(&[&p], 0.1);
        assert!(adam_update(&mut [&mut p], &[&g], &mut st).is_err());
    }
}

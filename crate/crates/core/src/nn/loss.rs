use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if pred.len() != target.len() {
        return Err(Error::dim(format!(
            "mse: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::param("mse needs at least one sample"));
    }
    let n = S::from_usize(pred.len()).unwrap();
    let mut loss = S::zero();
    let mut grad = Vec::with_capacity(pred.len());
    let two_over_n = S::cst(2.0) / n;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let e = p - t;
        loss += e * e;
        grad.push(two_over_n * e);
    }
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

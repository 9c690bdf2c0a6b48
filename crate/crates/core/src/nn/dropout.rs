use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element multiplier applied in the forward pass (`0` or `1/(1-rate)`).
#[derive(Clone, Debug)]
pub struct DropoutMask<S> {
    scale: Option<Vec<S>>,
}

impl<S: Scalar> DropoutMask<S> {
    pub fn identity() -> Self {
        Self { scale: None }
    }

    /// Mask keeping element `i` iff `keep(i)`; survivors scale by `1/(1-rate)`.
    pub fn from_keep(len: usize, rate: f64, mut keep: impl FnMut(usize) -> bool) -> Result<Self> {
        check_rate(rate)?;
        if rate == 0.0 {
            return Ok(Self::identity());
        }
        let k = S::cst(1.0 / (1.0 - rate));
        Ok(Self {
            scale: Some((0..len).map(|i| if keep(i) { k } else { S::zero() }).collect()),
        })
    }

    pub fn apply(&self, input: &Tensor<S>) -> Tensor<S> {
        dropout_backward(input, self)
    }
}

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout: identity in eval mode, rescaled survivors in train mode.
pub fn dropout_forward<S: Scalar, R: Rng + ?Sized>(
    input: &Tensor<S>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<S>, DropoutMask<S>)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), DropoutMask { scale: None }));
    }
    let keep = S::cst(1.0 / (1.0 - rate));
    let scale: Vec<S> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { S::zero() } else { keep })
        .collect();
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&scale) {
        *v *= m;
    }
    Ok((out, DropoutMask { scale: Some(scale) }))
}

pub fn dropout_backward<S: Scalar>(grad_out: &Tensor<S>, mask: &DropoutMask<S>) -> Tensor<S> {
    match &mask.scale {
        None => grad_out.clone(),
        Some(scale) => {
            let mut d = grad_out.clone();
            for (v, &m) in d.data_mut().iter_mut().zip(scale) {
                *v *= m;
            }
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let x = Tensor::<f64>::from_fn(&[50], |i| i as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dropout_forward(&x, 0.0, Mode::Train, &mut rng).unwrap().0, x);
        assert_eq!(dropout_forward(&x, 0.7, Mode::Eval, &mut rng).unwrap().0, x);
    }

    #[test]
    fn rate_of_one_is_rejected() {
        let x = Tensor::<f64>::zeros(&[2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            dropout_forward(&x, 1.0, Mode::Train, &mut rng),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn kept_fraction_matches_rate() {
        let x = Tensor::<f64>::full(&[100_000], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (y, _) = dropout_forward(&x, 0.2, Mode::Train, &mut rng).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        assert!((kept - 0.8).abs() <= 0.01, "kept {kept}");
    }

    #[test]
    fn expectation_is_preserved() {
        let x = Tensor::<f64>::from_fn(&[8], |i| i as f64 + 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut acc = Tensor::zeros(&[8]);
        let draws = 10_000;
        for _ in 0..draws {
            acc.add_assign(&dropout_forward(&x, 0.3, Mode::Train, &mut rng).unwrap().0);
        }
        acc.scale(1.0 / draws as f64);
        let total_mean = acc.sum() / x.sum();
        assert!((total_mean - 1.0).abs() <= 0.01);
    }

    #[test]
    fn backward_applies_the_same_mask() {
        let x = Tensor::<f64>::full(&[64], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (y, mask) = dropout_forward(&x, 0.5, Mode::Train, &mut rng).unwrap();
        assert_eq!(dropout_backward(&x, &mask), y);
    }
}

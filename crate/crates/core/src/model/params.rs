use rand::Rng;

use crate::error::{Error, Result};
use crate::features::WINDOW_LEN;
use crate::nn::LstmParams;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::config::{LayerSpec, PVNetConfig};

pub const INITIAL_PRELU_SLOPE: f64 = 0.25;
pub const FORGET_BIAS: f64 = 1.0;

/// Shapes that fix every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub fc_dim: usize,
    pub lstm_units: usize,
    pub window: usize,
}

impl Architecture {
    pub fn new(config: &PVNetConfig, in_channels: usize, height: usize, width: usize) -> Result<Self> {
        config.validate(height, width)?;
        if in_channels == 0 {
            return Err(Error::dim("model needs at least one input channel"));
        }
        Ok(Self {
            layers: config.conv_stack.clone(),
            in_channels,
            height,
            width,
            fc_dim: config.fc_dim,
            lstm_units: config.lstm_units,
            window: WINDOW_LEN,
        })
    }

    /// `(in, out)` channel counts of each convolution.
    pub fn conv_channels(&self) -> Vec<(usize, usize)> {
        let mut c = self.in_channels;
        let mut out = Vec::new();
        for l in &self.layers {
            if let LayerSpec::Conv(n) = *l {
                out.push((c, n));
                c = n;
            }
        }
        out
    }

    /// `(channels, rows, cols)` after the whole stack.
    pub fn encoder_output(&self) -> (usize, usize, usize) {
        let (mut c, mut h, mut w) = (self.in_channels, self.height, self.width);
        for l in &self.layers {
            match *l {
                LayerSpec::Conv(n) => c = n,
                LayerSpec::Pool => {
                    h /= 2;
                    w /= 2;
                }
            }
        }
        (c, h, w)
    }

    pub fn flat_dim(&self) -> usize {
        let (c, h, w) = self.encoder_output();
        c * h * w
    }

    pub fn head_dim(&self) -> usize {
        self.window * 2 * self.lstm_units
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<S> {
    /// `[C_out, C_in, 3, 3]`.
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
    /// PReLU slope per output channel.
    pub slope: Tensor<S>,
}

/// All learnable weights. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct PVNetParams<S> {
    pub arch: Architecture,
    pub conv: Vec<ConvLayer<S>>,
    /// `[fc_dim, flat_dim]`.
    pub fc_w: Tensor<S>,
    pub fc_b: Tensor<S>,
    pub lstm_fwd: LstmParams<S>,
    pub lstm_bwd: LstmParams<S>,
    /// `[1, 8·2·units]`.
    pub head_w: Tensor<S>,
    pub head_b: Tensor<S>,
}

impl<S: Scalar> PVNetParams<S> {
    pub fn zeros(arch: &Architecture) -> Self {
        let conv = arch
            .conv_channels()
            .into_iter()
            .map(|(ci, co)| ConvLayer {
                kernel: Tensor::zeros(&[co, ci, 3, 3]),
                bias: Tensor::zeros(&[co]),
                slope: Tensor::zeros(&[co]),
            })
            .collect();
        Self {
            conv,
            fc_w: Tensor::zeros(&[arch.fc_dim, arch.flat_dim()]),
            fc_b: Tensor::zeros(&[arch.fc_dim]),
            lstm_fwd: LstmParams::zeros(arch.fc_dim, arch.lstm_units),
            lstm_bwd: LstmParams::zeros(arch.fc_dim, arch.lstm_units),
            head_w: Tensor::zeros(&[1, arch.head_dim()]),
            head_b: Tensor::zeros(&[1]),
            arch: arch.clone(),
        }
    }

    /// He-uniform convolution and dense weights, PReLU slopes 0.25, zero
    /// biases except the LSTM forget gates.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        let mut r = rng::stream(seed, "init", &[]);
        let mut uniform = |t: &mut Tensor<S>, bound: f64| {
            for v in t.data_mut() {
                *v = S::cst(r.gen_range(-bound..bound));
            }
        };
        for layer in &mut p.conv {
            let fan_in = layer.kernel.shape()[1] * 9;
            uniform(&mut layer.kernel, (6.0 / fan_in as f64).sqrt());
            layer.slope.fill(S::cst(INITIAL_PRELU_SLOPE));
        }
        uniform(&mut p.fc_w, (6.0 / arch.flat_dim() as f64).sqrt());
        let u = arch.lstm_units;
        for lstm in [&mut p.lstm_fwd, &mut p.lstm_bwd] {
            uniform(&mut lstm.w, 1.0 / (arch.fc_dim as f64).sqrt());
            uniform(&mut lstm.u, 1.0 / (u as f64).sqrt());
            lstm.b.data_mut()[..u].fill(S::cst(FORGET_BIAS));
        }
        uniform(&mut p.head_w, (6.0 / arch.head_dim() as f64).sqrt());
        p
    }

    /// Parameter names in serialization order.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.conv.len() {
            for part in ["kernel", "bias", "slope"] {
                names.push(format!("conv{i}.{part}"));
            }
        }
        names.extend(["fc.weight", "fc.bias"].map(String::from));
        for dir in ["lstm_fwd", "lstm_bwd"] {
            for part in ["w", "u", "b"] {
                names.push(format!("{dir}.{part}"));
            }
        }
        names.extend(["head.weight", "head.bias"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        for l in &self.conv {
            out.extend([&l.kernel, &l.bias, &l.slope]);
        }
        out.extend([&self.fc_w, &self.fc_b]);
        out.extend(self.lstm_fwd.tensors());
        out.extend(self.lstm_bwd.tensors());
        out.extend([&self.head_w, &self.head_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for l in &mut self.conv {
            out.extend([&mut l.kernel, &mut l.bias, &mut l.slope]);
        }
        out.extend([&mut self.fc_w, &mut self.fc_b]);
        out.extend(self.lstm_fwd.tensors_mut());
        out.extend(self.lstm_bwd.tensors_mut());
        out.extend([&mut self.head_w, &mut self.head_b]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: S) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn cast<T: Scalar>(&self) -> PVNetParams<T> {
        let mut out = PVNetParams::<T>::zeros(&self.arch);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }

    /// Every value rounded through 32-bit storage.
    pub fn quantized(&self) -> Self {
        self.cast::<f32>().cast()
    }

    /// All values flattened in serialization order.
    pub fn flatten(&self) -> Vec<S> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, values: &[S]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::dim(format!(
                "expected {} parameter values, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::new(&PVNetConfig::default(), 5, 16, 16).unwrap()
    }

    #[test]
    fn default_shapes() {
        let a = arch();
        assert_eq!(a.encoder_output(), (256, 2, 2));
        assert_eq!(a.flat_dim(), 1024);
        assert_eq!(a.head_dim(), 2048);
        let p = PVNetParams::<f64>::zeros(&a);
        assert_eq!(p.names().len(), p.tensors().len());
        let conv: usize = [(5, 64), (64, 64), (64, 128), (128, 128), (128, 256), (256, 256)]
            .iter()
            .map(|&(i, o)| o * i * 9 + 2 * o)
            .sum();
        let lstm = 2 * (4 * 128 * 512 + 4 * 128 * 128 + 4 * 128);
        assert_eq!(p.param_count(), conv + 512 * 1024 + 512 + lstm + 2048 + 1);
    }

    #[test]
    fn init_is_seeded() {
        let a = arch();
        let p = PVNetParams::<f64>::init(&a, 7);
        assert_eq!(p, PVNetParams::init(&a, 7));
        assert_ne!(p, PVNetParams::init(&a, 8));
        assert_eq!(p.lstm_fwd.b.data()[0], 1.0);
        assert_eq!(p.lstm_fwd.b.data()[128], 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let a = arch();
        let p = PVNetParams::<f64>::init(&a, 1);
        let mut q = PVNetParams::zeros(&a);
        q.assign_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
    }
}

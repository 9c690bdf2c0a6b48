//! LSTM cell with hard-sigmoid gates and tanh cell/hidden activations, plus
//! unidirectional and bidirectional sequence passes with exact backprop.
//!
//! Gate blocks are stacked row-wise in the order forget, input, output, cell:
//! `w` is `[4u, d]`, `u` is `[4u, u]`, `b` is `[4u]`.

use crate::error::{Error, Result};
use crate::scalar::{gemm, Op, Scalar};
use crate::tensor::Tensor;

use super::activation::{hard_sigmoid, hard_sigmoid_grad};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Forget,
    Input,
    Output,
    Cell,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Cell];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<S> {
    pub w: Tensor<S>,
    pub u: Tensor<S>,
    pub b: Tensor<S>,
}

impl<S: Scalar> LstmParams<S> {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self {
            w: Tensor::zeros(&[4 * units, input_dim]),
            u: Tensor::zeros(&[4 * units, units]),
            b: Tensor::zeros(&[4 * units]),
        }
    }

    pub fn units(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let units = self.u.shape().get(1).copied().unwrap_or(0);
        if self.w.ndim() != 2
            || self.w.shape()[0] != 4 * units
            || self.u.shape() != [4 * units, units]
            || self.b.shape() != [4 * units]
        {
            return Err(Error::dim(format!(
                "lstm params inconsistent: w {:?}, u {:?}, b {:?}",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }

    /// Input weights of one gate, `[u, d]` row-major.
    pub fn gate_w(&self, gate: Gate) -> &[S] {
        let span = self.units() * self.input_dim();
        &self.w.data()[gate.index() * span..(gate.index() + 1) * span]
    }

    pub fn gate_u(&self, gate: Gate) -> &[S] {
        let u = self.units();
        &self.u.data()[gate.index() * u * u..(gate.index() + 1) * u * u]
    }

    pub fn gate_b(&self, gate: Gate) -> &[S] {
        let u = self.units();
        &self.b.data()[gate.index() * u..(gate.index() + 1) * u]
    }

    pub fn tensors(&self) -> [&Tensor<S>; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<S>; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Everything one step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct LstmStep<S> {
    h_prev: Vec<S>,
    c_prev: Vec<S>,
    /// Pre-activations, gate-stacked.
    z: Vec<S>,
    /// Activations `f, i, o, g`, gate-stacked.
    a: Vec<S>,
    tanh_c: Vec<S>,
}

impl<S: Scalar> LstmStep<S> {
    /// Region of every hard-sigmoid pre-activation: 0 below the ramp, 1 on it, 2 above.
    pub(crate) fn push_regions(&self, out: &mut Vec<u32>) {
        let units = self.h_prev.len();
        let edge = S::cst(2.5);
        out.extend(self.z[..3 * units].iter().map(|&z| {
            if z < -edge {
                0
            } else if z > edge {
                2
            } else {
                1
            }
        }));
    }
}

/// `z` holds `W x + b` on entry; the recurrent term is added here.
fn step_forward<S: Scalar>(
    mut z: Vec<S>,
    h_prev: &[S],
    c_prev: &[S],
    u_mat: &Tensor<S>,
) -> (Vec<S>, Vec<S>, LstmStep<S>) {
    let units = h_prev.len();
    gemm(
        Op::N,
        Op::N,
        4 * units,
        1,
        units,
        S::one(),
        u_mat.data(),
        h_prev,
        S::one(),
        &mut z,
    );
    let mut a = vec![S::zero(); 4 * units];
    for j in 0..3 * units {
        a[j] = hard_sigmoid(z[j]);
    }
    for j in 3 * units..4 * units {
        a[j] = z[j].tanh();
    }
    let mut c = vec![S::zero(); units];
    let mut h = vec![S::zero(); units];
    let mut tanh_c = vec![S::zero(); units];
    for k in 0..units {
        let (f, i, o, g) = (a[k], a[units + k], a[2 * units + k], a[3 * units + k]);
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
    let step = LstmStep {
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        z,
        a,
        tanh_c,
    };
    (h, c, step)
}

/// Returns `(dz, dh_prev, dc_prev)` and accumulates `dU`.
fn step_backward<S: Scalar>(
    dh: &[S],
    dc_next: &[S],
    step: &LstmStep<S>,
    u_mat: &Tensor<S>,
    du: &mut [S],
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let units = dh.len();
    let a = &step.a;
    let mut dz = vec![S::zero(); 4 * units];
    let mut dc_prev = vec![S::zero(); units];
    for k in 0..units {
        let (f, i, o, g) = (a[k], a[units + k], a[2 * units + k], a[3 * units + k]);
        let tc = step.tanh_c[k];
        let dc = dc_next[k] + dh[k] * o * (S::one() - tc * tc);
        let d_o = dh[k] * tc;
        let d_f = dc * step.c_prev[k];
        let d_i = dc * g;
        let d_g = dc * i;
        dc_prev[k] = dc * f;
        dz[k] = d_f * hard_sigmoid_grad(step.z[k]);
        dz[units + k] = d_i * hard_sigmoid_grad(step.z[units + k]);
        dz[2 * units + k] = d_o * hard_sigmoid_grad(step.z[2 * units + k]);
        dz[3 * units + k] = d_g * (S::one() - g * g);
    }
    // dU += dz ⊗ h_prev ; dh_prev = Uᵀ dz
    gemm(
        Op::N,
        Op::N,
        4 * units,
        units,
        1,
        S::one(),
        &dz,
        &step.h_prev,
        S::one(),
        du,
    );
    let mut dh_prev = vec![S::zero(); units];
    gemm(
        Op::T,
        Op::N,
        units,
        1,
        4 * units,
        S::one(),
        u_mat.data(),
        &dz,
        S::zero(),
        &mut dh_prev,
    );
    (dz, dh_prev, dc_prev)
}

fn input_projection<S: Scalar>(xs: &[S], t: usize, params: &LstmParams<S>) -> Vec<S> {
    let (d, g) = (params.input_dim(), 4 * params.units());
    let mut z = Vec::with_capacity(t * g);
    for _ in 0..t {
        z.extend_from_slice(params.b.data());
    }
    gemm(Op::N, Op::T, t, g, d, S::one(), xs, params.w.data(), S::one(), &mut z);
    z
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell_step<S: Scalar>(
    x: &Tensor<S>,
    h_prev: &Tensor<S>,
    c_prev: &Tensor<S>,
    params: &LstmParams<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let (h, c, _) = lstm_cell_forward(x, h_prev, c_prev, params)?;
    Ok((h, c))
}

pub fn lstm_cell_forward<S: Scalar>(
    x: &Tensor<S>,
    h_prev: &Tensor<S>,
    c_prev: &Tensor<S>,
    params: &LstmParams<S>,
) -> Result<(Tensor<S>, Tensor<S>, LstmStep<S>)> {
    params.validate()?;
    let units = params.units();
    x.check_shape(&[params.input_dim()], "lstm input")?;
    h_prev.check_shape(&[units], "lstm hidden state")?;
    c_prev.check_shape(&[units], "lstm cell state")?;
    let z = input_projection(x.data(), 1, params);
    let (h, c, step) = step_forward(z, h_prev.data(), c_prev.data(), &params.u);
    Ok((Tensor::from_vec(h), Tensor::from_vec(c), step))
}

#[derive(Clone, Debug)]
pub struct CellGrads<S> {
    pub x: Tensor<S>,
    pub h_prev: Tensor<S>,
    pub c_prev: Tensor<S>,
    pub params: LstmParams<S>,
}

/// Backward of a single step given `dL/dh_t` and `dL/dc_t`.
pub fn lstm_cell_backward<S: Scalar>(
    dh: &Tensor<S>,
    dc: &Tensor<S>,
    x: &Tensor<S>,
    step: &LstmStep<S>,
    params: &LstmParams<S>,
) -> Result<CellGrads<S>> {
    let units = params.units();
    dh.check_shape(&[units], "lstm dh")?;
    dc.check_shape(&[units], "lstm dc")?;
    let mut grads = LstmParams::zeros(params.input_dim(), units);
    let (dz, dh_prev, dc_prev) = step_backward(dh.data(), dc.data(), step, &params.u, grads.u.data_mut());
    let d = params.input_dim();
    gemm(
        Op::N,
        Op::N,
        4 * units,
        d,
        1,
        S::one(),
        &dz,
        x.data(),
        S::zero(),
        grads.w.data_mut(),
    );
    grads.b.data_mut().copy_from_slice(&dz);
    let mut dx = vec![S::zero(); d];
    gemm(
        Op::N,
        Op::N,
        1,
        d,
        4 * units,
        S::one(),
        &dz,
        params.w.data(),
        S::zero(),
        &mut dx,
    );
    Ok(CellGrads {
        x: Tensor::from_vec(dx),
        h_prev: Tensor::from_vec(dh_prev),
        c_prev: Tensor::from_vec(dc_prev),
        params: grads,
    })
}

#[derive(Clone, Debug)]
pub struct LstmCache<S> {
    xs: Tensor<S>,
    steps: Vec<LstmStep<S>>,
}

/// Runs the recurrence over rows of `xs` (`[T, d]`) from zero states; returns `[T, u]`.
pub fn lstm_forward<S: Scalar>(xs: &Tensor<S>, params: &LstmParams<S>) -> Result<(Tensor<S>, LstmCache<S>)> {
    params.validate()?;
    if xs.ndim() != 2 || xs.shape()[1] != params.input_dim() {
        return Err(Error::dim(format!(
            "lstm sequence must be [T, {}], got {:?}",
            params.input_dim(),
            xs.shape()
        )));
    }
    let (t_len, units) = (xs.shape()[0], params.units());
    let zx = input_projection(xs.data(), t_len, params);
    let mut h = vec![S::zero(); units];
    let mut c = vec![S::zero(); units];
    let mut hs = Vec::with_capacity(t_len * units);
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let z = zx[t * 4 * units..(t + 1) * 4 * units].to_vec();
        let (h_new, c_new, step) = step_forward(z, &h, &c, &params.u);
        hs.extend_from_slice(&h_new);
        steps.push(step);
        h = h_new;
        c = c_new;
    }
    Ok((
        Tensor::new(vec![t_len, units], hs)?,
        LstmCache { xs: xs.clone(), steps },
    ))
}

/// Backprop through time given `dL/dh_t` for every step (`[T, u]`).
pub fn lstm_backward<S: Scalar>(
    d_hs: &Tensor<S>,
    cache: &LstmCache<S>,
    params: &LstmParams<S>,
) -> Result<(Tensor<S>, LstmParams<S>)> {
    let (t_len, units, d) = (cache.steps.len(), params.units(), params.input_dim());
    d_hs.check_shape(&[t_len, units], "lstm output gradient")?;
    let mut grads = LstmParams::zeros(d, units);
    let mut dz_all = vec![S::zero(); t_len * 4 * units];
    let mut dh_next = vec![S::zero(); units];
    let mut dc_next = vec![S::zero(); units];
    for t in (0..t_len).rev() {
        let dh: Vec<S> = d_hs.slab(t).iter().zip(&dh_next).map(|(&a, &b)| a + b).collect();
        let (dz, dh_prev, dc_prev) = step_backward(&dh, &dc_next, &cache.steps[t], &params.u, grads.u.data_mut());
        dz_all[t * 4 * units..(t + 1) * 4 * units].copy_from_slice(&dz);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    gemm(
        Op::T,
        Op::N,
        4 * units,
        d,
        t_len,
        S::one(),
        &dz_all,
        cache.xs.data(),
        S::zero(),
        grads.w.data_mut(),
    );
    for row in dz_all.chunks_exact(4 * units) {
        for (b, &v) in grads.b.data_mut().iter_mut().zip(row) {
            *b += v;
        }
    }
    let mut dxs = vec![S::zero(); t_len * d];
    gemm(
        Op::N,
        Op::N,
        t_len,
        d,
        4 * units,
        S::one(),
        &dz_all,
        params.w.data(),
        S::zero(),
        &mut dxs,
    );
    Ok((Tensor::new(vec![t_len, d], dxs)?, grads))
}

fn reverse_rows<S: Scalar>(m: &Tensor<S>) -> Tensor<S> {
    let t = m.shape()[0];
    let mut data = Vec::with_capacity(m.len());
    for i in (0..t).rev() {
        data.extend_from_slice(m.slab(i));
    }
    Tensor::new(m.shape().to_vec(), data).expect("same shape")
}

#[derive(Clone, Debug)]
pub struct BiLstmCache<S> {
    fwd: LstmCache<S>,
    bwd: LstmCache<S>,
}

impl<S: Scalar> BiLstmCache<S> {
    pub(crate) fn push_regions(&self, out: &mut Vec<u32>) {
        for step in self.fwd.steps.iter().chain(&self.bwd.steps) {
            step.push_regions(out);
        }
    }
}

/// Bidirectional pass over `[T, d]`; row `t` of the result is `[→h_t ; ←h_t]`.
pub fn bilstm_forward_matrix<S: Scalar>(
    xs: &Tensor<S>,
    fwd: &LstmParams<S>,
    bwd: &LstmParams<S>,
) -> Result<(Tensor<S>, BiLstmCache<S>)> {
    if xs.ndim() != 2 || xs.shape()[0] == 0 {
        return Err(Error::param("bilstm needs a non-empty [T, d] sequence"));
    }
    if fwd.units() != bwd.units() {
        return Err(Error::dim("bilstm directions must have equal width"));
    }
    let (hf, cf) = lstm_forward(xs, fwd)?;
    let (hb_rev, cb) = lstm_forward(&reverse_rows(xs), bwd)?;
    let hb = reverse_rows(&hb_rev);
    let (t_len, u) = (xs.shape()[0], fwd.units());
    let mut out = Vec::with_capacity(t_len * 2 * u);
    for t in 0..t_len {
        out.extend_from_slice(hf.slab(t));
        out.extend_from_slice(hb.slab(t));
    }
    Ok((Tensor::new(vec![t_len, 2 * u], out)?, BiLstmCache { fwd: cf, bwd: cb }))
}

/// Returns `(dL/dxs, forward-direction grads, backward-direction grads)`.
pub fn bilstm_backward<S: Scalar>(
    d_out: &Tensor<S>,
    cache: &BiLstmCache<S>,
    fwd: &LstmParams<S>,
    bwd: &LstmParams<S>,
) -> Result<(Tensor<S>, LstmParams<S>, LstmParams<S>)> {
    let u = fwd.units();
    let t_len = cache.fwd.steps.len();
    d_out.check_shape(&[t_len, 2 * u], "bilstm output gradient")?;
    let mut dhf = Vec::with_capacity(t_len * u);
    let mut dhb = Vec::with_capacity(t_len * u);
    for t in 0..t_len {
        dhf.extend_from_slice(&d_out.slab(t)[..u]);
        dhb.extend_from_slice(&d_out.slab(t)[u..]);
    }
    let dhf = Tensor::new(vec![t_len, u], dhf)?;
    let dhb_rev = reverse_rows(&Tensor::new(vec![t_len, u], dhb)?);
    let (dxf, gf) = lstm_backward(&dhf, &cache.fwd, fwd)?;
    let (dxb_rev, gb) = lstm_backward(&dhb_rev, &cache.bwd, bwd)?;
    let mut dx = dxf;
    dx.add_assign(&reverse_rows(&dxb_rev));
    Ok((dx, gf, gb))
}

/// Bidirectional pass over a list of feature vectors.
pub fn bilstm_forward<S: Scalar>(
    sequence: &[Tensor<S>],
    fwd: &LstmParams<S>,
    bwd: &LstmParams<S>,
) -> Result<Vec<Tensor<S>>> {
    if sequence.is_empty() {
        return Err(Error::param("bilstm needs at least one timestep"));
    }
    let d = sequence[0].len();
    let mut data = Vec::with_capacity(sequence.len() * d);
    for x in sequence {
        x.check_shape(&[d], "bilstm input")?;
        data.extend_from_slice(x.data());
    }
    let xs = Tensor::new(vec![sequence.len(), d], data)?;
    let (out, _) = bilstm_forward_matrix(&xs, fwd, bwd)?;
    Ok((0..sequence.len())
        .map(|t| Tensor::from_vec(out.slab(t).to_vec()))
        .collect())
}

//! Straight transcriptions used as oracles by several test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0) * scale).collect()
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(&x, &y)| rel(x, y)).fold(0.0, f64::max)
}

/// 3×3 zero-padded cross-correlation over `[ci][h][w]`, kernels `[co][ci][3][3]`.
pub fn conv_oracle(x: &[f64], ci: usize, h: usize, w: usize, k: &[f64], b: &[f64]) -> Vec<f64> {
    let co = b.len();
    let mut out = vec![0.0; co * h * w];
    for o in 0..co {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = b[o];
                for c in 0..ci {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let sy = y as isize + dy as isize - 1;
                            let sx = xx as isize + dx as isize - 1;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            acc += k[((o * ci + c) * 3 + dy) * 3 + dx] * x[(c * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

pub fn dense_oracle(x: &[f64], wt: &[f64], b: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..b.len())
        .map(|i| b[i] + (0..d).map(|j| wt[i * d + j] * x[j]).sum::<f64>())
        .collect()
}

fn hsig(x: f64) -> f64 {
    if x <= -2.5 {
        0.0
    } else if x >= 2.5 {
        1.0
    } else {
        0.2 * x + 0.5
    }
}

/// One step with gates stacked forget, input, output, cell.
pub fn lstm_cell_oracle(x: &[f64], h: &[f64], c: &[f64], w: &[f64], u: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let units = h.len();
    let d = x.len();
    let pre = |gate: usize, k: usize| {
        let row = gate * units + k;
        let mut z = b[row];
        for j in 0..d {
            z += w[row * d + j] * x[j];
        }
        for j in 0..units {
            z += u[row * units + j] * h[j];
        }
        z
    };
    let mut h_new = vec![0.0; units];
    let mut c_new = vec![0.0; units];
    for k in 0..units {
        let f = hsig(pre(0, k));
        let i = hsig(pre(1, k));
        let o = hsig(pre(2, k));
        let g = pre(3, k).tanh();
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    (h_new, c_new)
}

/// Outputs per timestep `[→h_t ; ←h_t]`, both directions from zero state.
pub fn bilstm_oracle(
    xs: &[Vec<f64>],
    units: usize,
    fwd: (&[f64], &[f64], &[f64]),
    bwd: (&[f64], &[f64], &[f64]),
) -> Vec<Vec<f64>> {
    let t_len = xs.len();
    let mut fw = vec![Vec::new(); t_len];
    let (mut h, mut c) = (vec![0.0; units], vec![0.0; units]);
    for t in 0..t_len {
        let (hn, cn) = lstm_cell_oracle(&xs[t], &h, &c, fwd.0, fwd.1, fwd.2);
        fw[t] = hn.clone();
        h = hn;
        c = cn;
    }
    let mut bw = vec![Vec::new(); t_len];
    let (mut h, mut c) = (vec![0.0; units], vec![0.0; units]);
    for t in (0..t_len).rev() {
        let (hn, cn) = lstm_cell_oracle(&xs[t], &h, &c, bwd.0, bwd.1, bwd.2);
        bw[t] = hn.clone();
        h = hn;
        c = cn;
    }
    (0..t_len).map(|t| [fw[t].clone(), bw[t].clone()].concat()).collect()
}

pub fn mse_oracle(p: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    let n = p.len() as f64;
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - t[i]) * (p[i] - t[i]);
    }
    let g = (0..p.len()).map(|i| 2.0 * (p[i] - t[i]) / n).collect();
    (s / n, g)
}

/// Runs `grads.len()` Adam steps on one parameter vector.
pub fn adam_oracle(p0: &[f64], grads: &[Vec<f64>], lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut p = p0.to_vec();
    let mut m = vec![0.0; p.len()];
    let mut v = vec![0.0; p.len()];
    for (step, g) in grads.iter().enumerate() {
        let t = (step + 1) as i32;
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            p[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    p
}

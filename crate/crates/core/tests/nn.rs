mod common;

use common::*;
use proptest::prelude::*;
use pvnet::nn::conv::conv2d_forward_cached;
use pvnet::nn::*;
use pvnet::Tensor;

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn lstm_params(r: &mut rand_chacha::ChaCha8Rng, d: usize, u: usize, scale: f64) -> LstmParams<f64> {
    LstmParams {
        w: t(&[4 * u, d], randn(r, 4 * u * d, scale)),
        u: t(&[4 * u, u], randn(r, 4 * u * u, scale)),
        b: Tensor::from_vec(randn(r, 4 * u, scale)),
    }
}

#[test]
fn conv_matches_nested_loops() {
    let mut r = rng(1);
    let x = randn(&mut r, 2 * 16, 1.0);
    let k = randn(&mut r, 3 * 2 * 9, 1.0);
    let b = randn(&mut r, 3, 1.0);
    let got = conv2d_forward(
        &t(&[2, 4, 4], x.clone()),
        &t(&[3, 2, 3, 3], k.clone()),
        &Tensor::from_vec(b.clone()),
    )
    .unwrap();
    assert_eq!(got.shape(), &[3, 4, 4]);
    assert!(max_rel(got.data(), &conv_oracle(&x, 2, 4, 4, &k, &b)) <= 1e-12);
}

#[test]
fn conv_gradients_match_finite_differences_and_shapes() {
    let mut r = rng(2);
    let x = t(&[2, 4, 6], randn(&mut r, 48, 1.0));
    let k = t(&[3, 2, 3, 3], randn(&mut r, 54, 1.0));
    let b = Tensor::from_vec(randn(&mut r, 3, 1.0));
    let up = randn(&mut r, 72, 1.0);
    let (_, cache) = conv2d_forward_cached(&x, &k, &b).unwrap();
    let g = conv2d_backward(&t(&[3, 4, 6], up.clone()), &cache, &k).unwrap();
    assert_eq!(g.kernels.shape(), k.shape());
    assert_eq!(g.bias.shape(), b.shape());
    assert_eq!(g.input.as_ref().unwrap().shape(), x.shape());
    let loss = |kv: &[f64]| {
        let out = conv2d_forward(&x, &t(&[3, 2, 3, 3], kv.to_vec()), &b).unwrap();
        out.data().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
    };
    let numeric = finite_diff_grad(loss, k.data(), 1e-5);
    assert!(max_relative_error(g.kernels.data(), &numeric) <= 1e-6);
}

#[test]
fn dense_matches_hand_expansion() {
    let w = t(&[2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.25, -0.75]);
    let b = Tensor::from_vec(vec![0.1, -0.2]);
    let x = Tensor::from_vec(vec![1.5, -2.0, 0.4]);
    let got = dense_forward(&x, &w, &b).unwrap();
    let want = [
        0.1 + 0.5 * 1.5 + -1.0 * -2.0 + 2.0 * 0.4,
        -0.2 + 3.0 * 1.5 + 0.25 * -2.0 + -0.75 * 0.4,
    ];
    assert!(max_rel(got.data(), &want) <= 1e-12);
    let g = dense_backward(&Tensor::from_vec(vec![1.0, 1.0]), &x, &w).unwrap();
    assert_eq!(
        (g.weight.shape(), g.bias.shape(), g.input.shape()),
        (w.shape(), b.shape(), x.shape())
    );
}

#[test]
fn lstm_step_matches_transcription() {
    let mut r = rng(3);
    for _ in 0..10 {
        let p = lstm_params(&mut r, 2, 3, 1.2);
        let x = randn(&mut r, 2, 1.0);
        let h = randn(&mut r, 3, 0.8);
        let c = randn(&mut r, 3, 1.5);
        let (hn, cn) = lstm_cell_step(
            &Tensor::from_vec(x.clone()),
            &Tensor::from_vec(h.clone()),
            &Tensor::from_vec(c.clone()),
            &p,
        )
        .unwrap();
        let (ho, co) = lstm_cell_oracle(&x, &h, &c, p.w.data(), p.u.data(), p.b.data());
        assert!(max_rel(hn.data(), &ho) <= 1e-12 && max_rel(cn.data(), &co) <= 1e-12);
    }
}

#[test]
fn bilstm_structure() {
    let mut r = rng(4);
    let (d, u) = (3, 2);
    let fwd = lstm_params(&mut r, d, u, 1.0);
    let bwd = lstm_params(&mut r, d, u, 1.0);

    let x = randn(&mut r, d, 1.0);
    let out = bilstm_forward(&[Tensor::from_vec(x.clone())], &fwd, &bwd).unwrap();
    let zero = Tensor::<f64>::zeros(&[u]);
    let (hf, _) = lstm_cell_step(&Tensor::from_vec(x.clone()), &zero, &zero, &fwd).unwrap();
    let (hb, _) = lstm_cell_step(&Tensor::from_vec(x), &zero, &zero, &bwd).unwrap();
    assert_eq!(out[0].data(), [hf.data(), hb.data()].concat().as_slice());

    let steps = 6;
    let xs = randn(&mut r, steps * d, 1.0);
    let seq: Vec<Tensor<f64>> = xs.chunks(d).map(|c| Tensor::from_vec(c.to_vec())).collect();
    let out = bilstm_forward(&seq, &fwd, &bwd).unwrap();
    let reversed: Vec<f64> = xs.chunks(d).rev().flatten().copied().collect();
    let (back, _) = lstm_forward(&t(&[steps, d], reversed), &bwd).unwrap();
    let (ahead, _) = lstm_forward(&t(&[steps, d], xs), &fwd).unwrap();
    for (k, o) in out.iter().enumerate() {
        assert_eq!(&o.data()[..u], &ahead.data()[k * u..(k + 1) * u]);
        assert_eq!(&o.data()[u..], &back.data()[(steps - 1 - k) * u..(steps - k) * u]);
    }
}

#[test]
fn prelu_slope_derivative() {
    let x = Tensor::from_vec(vec![-2.0]);
    let a = Tensor::from_vec(vec![0.25]);
    assert_eq!(prelu_forward(&x, &a).unwrap().data(), &[-0.5]);
    assert_eq!(prelu_forward(&Tensor::from_vec(vec![2.0]), &a).unwrap().data(), &[2.0]);
    let (_, ds) = prelu_backward(&Tensor::from_vec(vec![1.0]), &x, &a).unwrap();
    let numeric = finite_diff_grad(
        |s| prelu_forward(&x, &Tensor::from_vec(s.to_vec())).unwrap().data()[0],
        &[0.25],
        1e-5,
    );
    assert_eq!(ds.data(), &[-2.0]);
    assert!((numeric[0] + 2.0).abs() <= 1e-6);
}

#[test]
fn pooling_examples_and_routing() {
    let (out, _) = maxpool2x2_forward(&t(&[2, 2], vec![1.0, 2.0, 3.0, 4.0])).unwrap();
    assert_eq!(out.data(), &[4.0]);
    let (flat, _) = maxpool2x2_forward(&t(&[1, 4, 6], vec![2.5; 24])).unwrap();
    assert_eq!(flat.shape(), &[1, 2, 3]);
    assert!(flat.data().iter().all(|&v| v == 2.5));

    let mut r = rng(5);
    let x = randn(&mut r, 16, 1.0);
    let up = randn(&mut r, 4, 1.0);
    let (_, arg) = maxpool2x2_forward(&t(&[4, 4], x.clone())).unwrap();
    let g = maxpool2x2_backward(&t(&[2, 2], up.clone()), &arg).unwrap();
    let loss = |v: &[f64]| {
        let (o, _) = maxpool2x2_forward(&t(&[4, 4], v.to_vec())).unwrap();
        o.data().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
    };
    let numeric = finite_diff_grad(loss, &x, 1e-5);
    assert!(max_relative_error(g.data(), &numeric) <= 1e-8);
    assert_eq!(g.data().iter().filter(|&&v| v != 0.0).count(), 4);
}

#[test]
fn mse_examples() {
    let (l, g) = mse_loss(&Tensor::from_vec(vec![2.0]), &Tensor::from_vec(vec![0.0])).unwrap();
    assert_eq!((l, g.data()), (4.0, &[4.0][..]));
    let mut r = rng(6);
    let p = randn(&mut r, 7, 2.0);
    let q = randn(&mut r, 7, 2.0);
    let (l, g) = mse_loss(&Tensor::from_vec(p.clone()), &Tensor::from_vec(q.clone())).unwrap();
    let (lo, go) = mse_oracle(&p, &q);
    assert!(rel(l, lo) <= 1e-12 && max_rel(g.data(), &go) <= 1e-12);
}

#[test]
fn adam_trace_and_first_step() {
    let p0 = vec![0.3, -1.2, 2.0];
    let g: Vec<f64> = vec![0.5, -4.0, 1e-3];
    let mut p = Tensor::from_vec(p0.clone());
    let mut st = AdamState::for_params(&[&p], 0.0015);
    adam_update(&mut [&mut p], &[&Tensor::from_vec(g.clone())], &mut st).unwrap();
    for i in 0..3 {
        let moved = p0[i] - p.data()[i];
        assert!((moved - 0.0015 * g[i].signum()).abs() < 1e-6, "{moved}");
    }
    adam_update(&mut [&mut p], &[&Tensor::from_vec(g.clone())], &mut st).unwrap();
    assert!(max_rel(p.data(), &adam_oracle(&p0, &[g.clone(), g], 0.0015)) <= 1e-12);
    assert_eq!(st.step_count, 2);
}

#[test]
fn linear_layers_scale() {
    let mut r = rng(7);
    let x = randn(&mut r, 2 * 16, 1.0);
    let k = t(&[3, 2, 3, 3], randn(&mut r, 54, 1.0));
    let zb = Tensor::from_vec(vec![0.0; 3]);
    let w = t(&[4, 5], randn(&mut r, 20, 1.0));
    let xd = randn(&mut r, 5, 1.0);
    let p = randn(&mut r, 6, 1.0);
    let q = randn(&mut r, 6, 1.0);
    let conv1 = conv2d_forward(&t(&[2, 4, 4], x.clone()), &k, &zb).unwrap();
    let dense1 = dense_forward(&Tensor::from_vec(xd.clone()), &w, &Tensor::from_vec(vec![0.0; 4])).unwrap();
    let (mse1, _) = mse_loss(&Tensor::from_vec(p.clone()), &Tensor::from_vec(q.clone())).unwrap();
    for alpha in [0.0, 1.0, 2.0] {
        let s = |v: &[f64]| v.iter().map(|a| a * alpha).collect::<Vec<_>>();
        let c = conv2d_forward(&t(&[2, 4, 4], s(&x)), &k, &zb).unwrap();
        assert!(c
            .data()
            .iter()
            .zip(conv1.data())
            .all(|(a, b)| (a - alpha * b).abs() <= 1e-12 * b.abs().max(1.0)));
        let d = dense_forward(&Tensor::from_vec(s(&xd)), &w, &Tensor::from_vec(vec![0.0; 4])).unwrap();
        assert!(d
            .data()
            .iter()
            .zip(dense1.data())
            .all(|(a, b)| (a - alpha * b).abs() <= 1e-12 * b.abs().max(1.0)));
        let (m, _) = mse_loss(&Tensor::from_vec(s(&p)), &Tensor::from_vec(s(&q))).unwrap();
        assert!((m - alpha * alpha * mse1).abs() <= 1e-12 * mse1.max(1.0));
    }
}

#[test]
fn seeded_dropout_is_reproducible() {
    let x = Tensor::from_vec(vec![1.0; 1000]);
    let (a, _) = dropout_forward(&x, 0.2, Mode::Train, &mut rng(9)).unwrap();
    let (b, _) = dropout_forward(&x, 0.2, Mode::Train, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    let (e, _) = dropout_forward(&x, 0.5, Mode::Eval, &mut rng(9)).unwrap();
    assert_eq!(e, x);
}

proptest! {
    #[test]
    fn pool_backward_conserves_gradient_mass(seed in 0u64..10_000, c in 1usize..4, hh in 1usize..4, ww in 1usize..4) {
        let (h, w) = (2 * hh, 2 * ww);
        let mut r = rng(seed);
        let x = t(&[c, h, w], randn(&mut r, c * h * w, 3.0));
        let (out, arg) = maxpool2x2_forward(&x).unwrap();
        let up = t(out.shape(), randn(&mut r, out.len(), 1.0));
        let g = maxpool2x2_backward(&up, &arg).unwrap();
        let (a, b): (f64, f64) = (g.data().iter().sum(), up.data().iter().sum());
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn lstm_hidden_state_is_bounded(seed in 0u64..10_000, scale in 0.1..50.0f64) {
        let mut r = rng(seed);
        let p = lstm_params(&mut r, 3, 4, scale);
        let x = randn(&mut r, 3, scale);
        let h = randn(&mut r, 4, 1.0);
        let c = randn(&mut r, 4, scale);
        let (hn, cn) = lstm_cell_step(&Tensor::from_vec(x), &Tensor::from_vec(h), &Tensor::from_vec(c), &p).unwrap();
        prop_assert!(hn.data().iter().all(|v| v.abs() <= 1.0));
        prop_assert!(cn.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn adam_second_moment_stays_non_negative(seed in 0u64..10_000, steps in 1usize..6) {
        let mut r = rng(seed);
        let mut p = Tensor::from_vec(randn(&mut r, 5, 1.0));
        let mut st = AdamState::for_params(&[&p], 0.01);
        for _ in 0..steps {
            let g = Tensor::from_vec(randn(&mut r, 5, 10.0));
            adam_update(&mut [&mut p], &[&g], &mut st).unwrap();
            prop_assert!(st.v[0].data().iter().all(|&v| v >= 0.0));
            prop_assert_eq!(st.m[0].shape(), p.shape());
        }
        prop_assert!(p.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dropout_keeps_about_eighty_percent(seed in 0u64..1000) {
        let x = Tensor::from_vec(vec![1.0; 100_000]);
        let (y, _) = dropout_forward(&x, 0.2, Mode::Train, &mut rng(seed)).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        prop_assert!((kept - 0.8).abs() <= 0.01);
        let mean = y.data().iter().sum::<f64>() / 1e5;
        prop_assert!((mean - 1.0).abs() <= 0.0125);
    }
}

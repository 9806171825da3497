mod common;

use std::time::Instant;

use common::{random_vec, rng};
use pcp::assembly::{assemble_poisson_1d, PoissonForcing};
use pcp::neural::*;
use pcp::sparse::ilu_factorize;
use pcp::training::DiscreteLoss;
use proptest::prelude::*;

fn batch(rows: usize, cols: usize, seed: u64) -> Tensor {
    Tensor::matrix(rows, cols, random_vec(&mut rng(seed), rows * cols)).unwrap()
}

/// Loss `Σ u(x)²` over a fixed batch.
fn squared_output(
    x: Tensor,
) -> impl Fn(&MlpModel, &mut Tape, &[Var]) -> Result<(Var, f64), NeuralError> {
    move |model: &MlpModel, tape: &mut Tape, params: &[Var]| {
        let input = tape.constant(model.features(&x)?);
        let out = model.forward_tape(tape, params, input)?;
        let root = tape.sum_squares(out);
        let value = tape.value(root).data()[0];
        Ok((root, value))
    }
}

#[test]
fn tensor_shapes() {
    assert_eq!(Tensor::scalar(2.0).shape(), Vec::<usize>::new());
    assert_eq!(Tensor::vector(vec![1.0, 2.0]).shape(), vec![2]);
    assert_eq!(Tensor::zeros(3, 4).shape(), vec![3, 4]);
    assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
    assert!(Tensor::new(&[1, 1, 1], vec![0.0]).is_err());
}

#[test]
fn same_seed_same_parameters() {
    let spec = Some(EmbeddingSpec::default());
    let a = init_mlp(&[2, 16, 16, 1], Activation::Silu, spec, 7).unwrap();
    let b = init_mlp(&[2, 16, 16, 1], Activation::Silu, spec, 7).unwrap();
    assert_eq!(a, b);
    let bits = |m: &MlpModel| {
        m.params()
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(
        a,
        init_mlp(&[2, 16, 16, 1], Activation::Silu, spec, 8).unwrap()
    );
}

#[test]
fn glorot_variance_and_zero_biases() {
    let m = init_mlp(&[3, 100, 100, 1], Activation::Tanh, None, 42).unwrap();
    let w = m.params()[2].data();
    assert_eq!(w.len(), 10_000);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
    let want = 2.0 / 200.0;
    assert!((var - want).abs() / want < 0.1, "{var} vs {want}");
    for b in m.params().iter().skip(1).step_by(2) {
        assert!(b.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn embedding_widens_first_layer() {
    let m = init_mlp(
        &[2, 8, 1],
        Activation::Tanh,
        Some(EmbeddingSpec::default()),
        0,
    )
    .unwrap();
    assert_eq!(m.params()[0].rows(), 22);
    let spec = EmbeddingSpec {
        pass_through: false,
        ..EmbeddingSpec::default()
    };
    let m = init_mlp(&[2, 8, 1], Activation::Tanh, Some(spec), 0).unwrap();
    assert_eq!(m.params()[0].rows(), 20);
}

#[test]
fn frequency_draws_follow_their_laws() {
    let spec = EmbeddingSpec {
        n_freq: 4000,
        ..EmbeddingSpec::default()
    };
    let m = init_mlp(&[1, 4, 1], Activation::Tanh, Some(spec), 1).unwrap();
    let lo = 2.0 * std::f64::consts::PI / 32.0;
    let hi = 2.0 * std::f64::consts::PI * 32.0;
    let freqs = &m.embedding().unwrap().freqs;
    assert!(freqs.iter().all(|f| (lo..=hi).contains(&f.abs())));
    let mean_log = freqs
        .iter()
        .map(|f| (f.abs() / (2.0 * std::f64::consts::PI)).log2())
        .sum::<f64>()
        / 4000.0;
    assert!(mean_log.abs() < 0.2);

    let spec = EmbeddingSpec {
        n_freq: 4000,
        init: FrequencyInit::Normal,
        pass_through: true,
    };
    let m = init_mlp(&[1, 4, 1], Activation::Tanh, Some(spec), 1).unwrap();
    let freqs = &m.embedding().unwrap().freqs;
    let sd = (freqs.iter().map(|f| f * f).sum::<f64>() / 4000.0).sqrt();
    assert!((sd - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.05);
}

#[test]
fn rejects_bad_layer_lists() {
    assert!(init_mlp(&[2, 1], Activation::Tanh, None, 0).is_err());
    assert!(init_mlp(&[], Activation::Tanh, None, 0).is_err());
    assert!(init_mlp(&[2, 0, 1], Activation::Tanh, None, 0).is_err());
    let spec = EmbeddingSpec {
        n_freq: 0,
        ..EmbeddingSpec::default()
    };
    assert!(init_mlp(&[2, 4, 1], Activation::Tanh, Some(spec), 0).is_err());
}

#[test]
fn zero_weights_give_constant_output() {
    let mut m = init_mlp(
        &[2, 6, 6, 1],
        Activation::Silu,
        Some(EmbeddingSpec::default()),
        0,
    )
    .unwrap();
    let last = m.params().len() - 1;
    for (i, p) in m.params_mut().iter_mut().enumerate() {
        p.data_mut()
            .iter_mut()
            .for_each(|v| *v = if i == last { 0.75 } else { 0.0 });
    }
    let out = m.predict(&batch(5, 2, 3)).unwrap();
    assert!(out.iter().all(|&v| v == 0.75));
}

#[test]
fn tanh_network_without_biases_is_odd() {
    let m = init_mlp(&[2, 12, 12, 1], Activation::Tanh, None, 9).unwrap();
    let x = batch(7, 2, 4);
    let neg = Tensor::matrix(7, 2, x.data().iter().map(|v| -v).collect()).unwrap();
    let a = m.predict(&x).unwrap();
    let b = m.predict(&neg).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p + q).abs() < 1e-14);
    }
}

#[test]
fn matches_straight_line_evaluation() {
    for act in [Activation::Tanh, Activation::Silu] {
        let mut m = init_mlp(&[2, 3, 1], act, None, 5).unwrap();
        for p in m.params_mut().iter_mut().skip(1).step_by(2) {
            p.data_mut()
                .iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = 0.1 * (i as f64 + 1.0));
        }
        let xs = [[0.1, -0.4], [0.7, 0.2], [-0.3, 0.9]];
        let x = Tensor::matrix(3, 2, xs.iter().flatten().copied().collect()).unwrap();
        let (w1, b1, w2, b2) = (
            m.params()[0].data(),
            m.params()[1].data(),
            m.params()[2].data(),
            m.params()[3].data(),
        );
        let f = |z: f64| match act {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        };
        let (plain, _) = mlp_forward_batch(&m, &x, None).unwrap();
        let mut tape = Tape::new();
        let (taped, _) = mlp_forward_batch(&m, &x, Some(&mut tape)).unwrap();
        for (r, row) in xs.iter().enumerate() {
            let h: Vec<f64> = (0..3)
                .map(|j| f(row[0] * w1[j] + row[1] * w1[3 + j] + b1[j]))
                .collect();
            let want = h[0] * w2[0] + h[1] * w2[1] + h[2] * w2[2] + b2[0];
            assert!((plain[r] - want).abs() < 1e-14, "{act:?}");
            assert!((taped[r] - want).abs() < 1e-14, "{act:?}");
        }
    }
}

#[test]
fn input_dimension_is_checked() {
    let m = init_mlp(&[2, 4, 1], Activation::Tanh, None, 0).unwrap();
    assert!(m.predict(&batch(3, 3, 0)).is_err());
}

#[test]
fn square_gradient() {
    let mut tape = Tape::new();
    let t = tape.param(Tensor::scalar(3.0));
    let sq = tape.mul(t, t).unwrap();
    let root = tape.sum(sq);
    assert_eq!(tape.backward(root).unwrap().get(t).unwrap().data(), &[6.0]);
}

#[test]
fn activation_slopes_at_zero() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(0.0));
    let y = tape.tanh(x);
    let root = tape.sum(y);
    assert_eq!(tape.backward(root).unwrap().get(x).unwrap().data(), &[1.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(0.0));
    let y = tape.silu(x);
    let root = tape.sum(y);
    assert_eq!(tape.backward(root).unwrap().get(x).unwrap().data(), &[0.5]);
}

#[test]
fn rejects_non_scalar_root() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(
        tape.backward(x),
        Err(NeuralError::NonScalarRoot(_))
    ));
}

#[test]
fn constants_get_no_gradient() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
    let w = tape.param(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
    let y = tape.matmul(a, w).unwrap();
    let root = tape.sum(y);
    let g = tape.backward(root).unwrap();
    assert!(g.get(a).is_none());
    assert_eq!(g.get(w).unwrap().data(), &[1.0, 2.0]);
}

#[test]
fn matmul_matches_naive_product() {
    // integer entries keep every partial sum exact
    for &(m, k, n) in &[
        (2, 2, 2),
        (13, 7, 40),
        (6, 300, 64),
        (64, 513, 8),
        (5, 3, 1),
    ] {
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let b: Vec<f64> = (0..k * n)
            .map(|i| ((i * 104_729) % 11) as f64 - 5.0)
            .collect();
        let mut want = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                want[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        let mut tape = Tape::new();
        let av = tape.param(Tensor::matrix(m, k, a.clone()).unwrap());
        let bv = tape.param(Tensor::matrix(k, n, b.clone()).unwrap());
        let c = tape.matmul(av, bv).unwrap();
        assert_eq!(tape.value(c).data(), &want[..], "{m}x{k}x{n}");

        // d Σ(AB) / dA = 1·Bᵀ, d Σ(AB) / dB = Aᵀ·1
        let root = tape.sum(c);
        let g = tape.backward(root).unwrap();
        let ga: Vec<f64> = (0..m * k)
            .map(|i| (0..n).map(|j| b[(i % k) * n + j]).sum())
            .collect();
        let gb: Vec<f64> = (0..k * n)
            .map(|i| (0..m).map(|r| a[r * k + i / n]).sum())
            .collect();
        assert_eq!(g.get(av).unwrap().data(), &ga[..]);
        assert_eq!(g.get(bv).unwrap().data(), &gb[..]);
    }
}

#[test]
fn linear_op_matches_its_parts() {
    let x = batch(9, 5, 1);
    let w = batch(5, 16, 2);
    let b = batch(1, 16, 3);
    let mut t1 = Tape::new();
    let (xv, wv, bv) = (
        t1.constant(x.clone()),
        t1.param(w.clone()),
        t1.param(b.clone()),
    );
    let y = t1.linear(xv, wv, bv).unwrap();
    let y = t1.silu(y);
    let r1 = t1.sum_squares(y);
    let v1 = t1.value(r1).data()[0];
    let g1 = t1.backward(r1).unwrap();

    let mut t2 = Tape::new();
    let (xv2, wv2, bv2) = (t2.constant(x), t2.param(w), t2.param(b));
    let y = t2.matmul(xv2, wv2).unwrap();
    let y = t2.add_row_bias(y, bv2).unwrap();
    let y = t2.silu(y);
    let r2 = t2.sum_squares(y);
    let v2 = t2.value(r2).data()[0];
    let g2 = t2.backward(r2).unwrap();

    assert!((v1 - v2).abs() < 1e-12 * v1.abs());
    for (a, b) in [(wv, wv2), (bv, bv2)] {
        for (p, q) in g1
            .get(a)
            .unwrap()
            .data()
            .iter()
            .zip(g2.get(b).unwrap().data())
        {
            assert!((p - q).abs() < 1e-12 * (1.0 + q.abs()));
        }
    }
}

#[test]
fn network_gradients_match_finite_differences() {
    for act in [Activation::Tanh, Activation::Silu] {
        let m = init_mlp(&[2, 8, 8, 1], act, None, 3).unwrap();
        let report = gradcheck(&m, &squared_output(batch(6, 2, 8))).unwrap();
        assert_eq!(report.n_params, m.parameter_count());
        assert!(report.max_rel_error < 1e-6, "{act:?}: {report:?}");
    }
}

#[test]
fn embedded_network_gradients_match_finite_differences() {
    let m = init_mlp(
        &[2, 8, 8, 1],
        Activation::Silu,
        Some(EmbeddingSpec::default()),
        4,
    )
    .unwrap();
    let report = gradcheck(&m, &squared_output(batch(6, 2, 9))).unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn quadratic_loss_gradcheck_is_exact() {
    let m = init_mlp(&[2, 4, 3, 1], Activation::Tanh, None, 1).unwrap();
    let quad = |_: &MlpModel, tape: &mut Tape, params: &[Var]| -> Result<(Var, f64), NeuralError> {
        let mut acc = tape.sum_squares(params[0]);
        for &p in &params[1..] {
            let s = tape.sum_squares(p);
            let s = tape.scale(s, 0.5);
            acc = tape.add(acc, s)?;
        }
        let value = tape.value(acc).data()[0];
        Ok((acc, value))
    };
    let report = gradcheck(&m, &quad).unwrap();
    assert!(report.max_rel_error < 1e-9, "{report:?}");
}

#[test]
fn preconditioned_poisson_gradcheck() {
    let sys = assemble_poisson_1d(1.0, 18, PoissonForcing::Sine).unwrap();
    assert_eq!(sys.n(), 16);
    let f = ilu_factorize(sys.matrix(), 1e-4).unwrap();
    for emb in [None, Some(EmbeddingSpec::default())] {
        let m = init_mlp(&[1, 8, 8, 1], Activation::Silu, emb, 2).unwrap();
        let loss = DiscreteLoss::new(&sys, &f, &m).unwrap();
        let report = gradcheck(&m, &loss).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut p = vec![Tensor::scalar(1.0)];
    let mut s = AdamState::new(&p, AdamConfig::default());
    adam_step(&mut s, &mut p, &[Tensor::scalar(0.5)]).unwrap();
    assert!((p[0].data()[0] - (1.0 - 1e-3)).abs() < 1e-10);
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut p = vec![Tensor::vector(vec![1.0, -2.0])];
    let mut s = AdamState::new(&p, AdamConfig::default());
    adam_step(&mut s, &mut p, &[Tensor::vector(vec![0.0, 0.0])]).unwrap();
    assert_eq!(p[0].data(), &[1.0, -2.0]);
    assert_eq!(s.t, 1);
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut p = vec![Tensor::scalar(1.0)];
    let mut s = AdamState::new(&p, AdamConfig::default());
    assert!(adam_step(&mut s, &mut p, &[Tensor::vector(vec![0.0, 0.0])]).is_err());
    assert!(adam_step(&mut s, &mut p, &[]).is_err());
}

#[test]
fn adam_three_steps_on_a_parabola() {
    for cfg in [
        AdamConfig::default(),
        AdamConfig {
            lr: 0.1,
            beta1: 0.99,
            beta2: 0.99,
            eps: 1e-8,
        },
    ] {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut s = AdamState::new(&p, cfg);
        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * p[0].data()[0];
            adam_step(&mut s, &mut p, &[Tensor::scalar(g)]).unwrap();

            let g = 2.0 * theta;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            theta -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            assert!((p[0].data()[0] - theta).abs() < 1e-12);
        }
        assert_eq!(s.t, 3);
    }
}

#[test]
fn checkpoint_round_trip() {
    for emb in [
        None,
        Some(EmbeddingSpec::default()),
        Some(EmbeddingSpec {
            n_freq: 3,
            init: FrequencyInit::Normal,
            pass_through: false,
        }),
    ] {
        let m = init_mlp(&[2, 5, 3, 1], Activation::Silu, emb, 3).unwrap();
        let bytes = save_checkpoint(&m);
        assert_eq!(&bytes[..8], b"PCPMLP\0\0");
        assert_eq!(load_checkpoint(&bytes).unwrap(), m);
        assert!(load_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(load_checkpoint(&wrong).is_err());
    }
}

#[test]
fn load_params_requires_matching_layout() {
    let mut a = init_mlp(&[1, 4, 1], Activation::Tanh, None, 0).unwrap();
    let b = init_mlp(&[1, 4, 1], Activation::Tanh, None, 1).unwrap();
    a.load_params(&b).unwrap();
    assert_eq!(a.params(), b.params());
    let c = init_mlp(&[1, 5, 1], Activation::Tanh, None, 1).unwrap();
    assert!(a.load_params(&c).is_err());
}

#[test]
fn forward_cost_is_linear_in_batch() {
    let m = init_mlp(
        &[2, 64, 64, 64, 1],
        Activation::Silu,
        Some(EmbeddingSpec::default()),
        0,
    )
    .unwrap();
    // One worker, so the measurement counts work and not scheduling. Each
    // repetition gets fresh inputs; repeating one small batch lets the
    // branch predictor learn it and flatters the small case.
    let ratio = pcp::parallel::with_workers(Some(1), || {
        let time = |n: usize| {
            (0..30)
                .map(|r| {
                    let x = batch(n, 2, (n * 100 + r) as u64);
                    let t = Instant::now();
                    std::hint::black_box(m.predict(&x).unwrap());
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        };
        time(1000);
        time(1000) / time(100)
    });
    assert!(ratio <= 12.0, "ratio {ratio}");
}

#[test]
fn fast_exp_edges() {
    assert_eq!(exp_fast(0.0), 1.0);
    assert!(exp_fast(-1000.0) < 1e-300);
    assert!(exp_fast(1000.0).is_finite());
    assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
}

proptest! {
    #[test]
    fn fast_exp_is_accurate(x in -700.0f64..700.0) {
        let want = x.exp();
        prop_assert!((exp_fast(x) - want).abs() <= 4.0 * f64::EPSILON * want);
    }

    #[test]
    fn sigmoid_is_accurate(x in -40.0f64..40.0) {
        let want = 1.0 / (1.0 + (-x).exp());
        prop_assert!((sigmoid(x) - want).abs() <= 4.0 * f64::EPSILON * want);
    }

    #[test]
    fn gradients_match_finite_differences(seed in 0u64..1000, width in 2usize..10) {
        let m = init_mlp(&[2, width, width, 1], Activation::Silu, None, seed).unwrap();
        let loss = squared_output(batch(4, 2, seed));
        let (value, grads) = loss_gradient(&m, &loss).unwrap();
        let eval = |p: &MlpModel| {
            let mut tape = Tape::new();
            let vars = p.register(&mut tape);
            loss(p, &mut tape, &vars).unwrap().1
        };
        // fourth-order differences, truncation ~h⁴
        let h = 1e-3;
        let mut probe = m.clone();
        for (t, g) in grads.iter().enumerate() {
            for (k, &ga) in g.iter().enumerate() {
                let orig = probe.params()[t].data()[k];
                let mut at = |d: f64| {
                    probe.params_mut()[t].data_mut()[k] = orig + d;
                    eval(&probe)
                };
                let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
                probe.params_mut()[t].data_mut()[k] = orig;
                prop_assert!((ga - fd).abs() <= 1e-6 * ga.abs() + 1e-11 * value, "{t}/{k}: {ga} vs {fd}");
            }
        }
    }
}

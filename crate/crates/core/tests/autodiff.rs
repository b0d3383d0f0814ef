use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use set_twister::autodiff::{gradient_check, mlp_forward, mlp_forward_var, Activation, Graph, MlpSpec, OpKind, Tensor, Var};

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Straight-line evaluation of `x·W + b` followed by `act`, kept apart
/// from the tape.
fn hand_layer(x: &[f64], w: &Tensor, b: Option<&Tensor>, act: fn(f64) -> f64) -> Vec<f64> {
    let (rows, cols) = (w.rows(), w.cols());
    assert_eq!(x.len(), rows);
    (0..cols)
        .map(|j| {
            let mut s = b.map_or(0.0, |b| b.data()[j]);
            for i in 0..rows {
                s += x[i] * w.data()[i * cols + j];
            }
            act(s)
        })
        .collect()
}

#[test]
fn mlp_matches_hand_rolled_evaluation() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec::new(vec![2, 2, 1], Activation::Tanh);
        let params = spec.init(&mut rng).unwrap();
        let x = [0.7, -1.3];
        let got = mlp_forward(&spec, &params, &Tensor::vector(x.to_vec())).unwrap();
        let l0 = &params.layers[0];
        let l1 = &params.layers[1];
        let hidden = hand_layer(&x, &l0.weight, l0.bias.as_ref(), f64::tanh);
        let want = hand_layer(&hidden, &l1.weight, l1.bias.as_ref(), |v| v);
        assert_eq!(got.data().len(), 1);
        assert!((got.data()[0] - want[0]).abs() <= 1e-14, "{} vs {}", got.data()[0], want[0]);
    }
}

#[test]
fn three_layer_mlp_l1_gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let spec = MlpSpec::new(vec![3, 5, 4, 2], Activation::Tanh);
        let params = spec.init(&mut rng).unwrap();
        let x = Tensor::matrix(1, 3, uniform(&mut rng, 3, -2.0, 2.0)).unwrap();
        let target = uniform(&mut rng, 2, -3.0, 3.0);
        let flat: Vec<Tensor> = params.iter().cloned().collect();
        let report = gradient_check(
            |g, vars| {
                let mut it = vars.iter().copied();
                let bound = params.map(&mut |_| it.next().unwrap());
                let xv = g.constant(x.clone());
                let y = mlp_forward_var(g, &spec, &bound, xv)?;
                g.l1_loss(y, &target)
            },
            &flat,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: {}", report.max_rel_error);
    }
}

fn op_inputs(kind: OpKind, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    let m = |rng: &mut ChaCha8Rng, r: usize, c: usize| Tensor::matrix(r, c, uniform(rng, r * c, -2.0, 2.0)).unwrap();
    match kind {
        OpKind::MatMul => vec![m(rng, 2, 3), m(rng, 3, 4)],
        OpKind::Add | OpKind::Hadamard => vec![m(rng, 3, 2), m(rng, 3, 2)],
        OpKind::Concat(_) => vec![m(rng, 2, 3), m(rng, 2, 3)],
        OpKind::Scale(_) | OpKind::ReduceSumAxis(_) | OpKind::Tanh => vec![m(rng, 3, 4)],
        OpKind::Relu => {
            // Keep inputs away from the kink so central differences are valid.
            let mut t = m(rng, 3, 4);
            t.data_mut().iter_mut().for_each(|v| {
                if v.abs() < 0.1 {
                    *v += 0.2f64.copysign(*v);
                }
            });
            vec![t]
        }
    }
}

fn every_kind(scale: f64) -> Vec<OpKind> {
    vec![
        OpKind::MatMul,
        OpKind::Add,
        OpKind::Hadamard,
        OpKind::Scale(scale),
        OpKind::ReduceSumAxis(0),
        OpKind::ReduceSumAxis(1),
        OpKind::Concat(0),
        OpKind::Concat(1),
        OpKind::Tanh,
        OpKind::Relu,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_op_kind_passes_gradient_check(seed in any::<u64>(), scale in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in every_kind(scale) {
            let inputs: Vec<Tensor> = op_inputs(kind, &mut rng).into_iter().map(Tensor::with_grad).collect();
            let out_len = {
                let mut g = Graph::new();
                let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
                let y = g.apply(kind, &vars).unwrap();
                g.value(y).len()
            };
            let weights = uniform(&mut rng, out_len, -1.0, 1.0);
            let report = gradient_check(
                |g, vars| {
                    let y = g.apply(kind, vars)?;
                    let shape = g.shape(y).to_vec();
                    let w = g.constant(Tensor::new(shape, weights.clone())?);
                    let p = g.hadamard(y, w)?;
                    g.sum(p)
                },
                &inputs,
                1e-5,
                1e-4,
            )
            .unwrap();
            prop_assert!(report.passed(), "{kind:?}: {}", report.max_rel_error);
        }
    }

    #[test]
    fn forward_is_bit_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec::new(vec![4, 6, 3], Activation::Relu);
        let params = spec.init(&mut rng).unwrap();
        let x = Tensor::matrix(5, 4, uniform(&mut rng, 20, -2.0, 2.0)).unwrap();
        let a = mlp_forward(&spec, &params, &x).unwrap();
        let b = mlp_forward(&spec, &params, &x).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn backward_twice_without_zeroing_doubles_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = MlpSpec::new(vec![3, 4, 1], Activation::Tanh);
        let mut params = spec.init(&mut rng).unwrap();
        let x = Tensor::matrix(2, 3, uniform(&mut rng, 6, -2.0, 2.0)).unwrap();
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let xv = g.constant(x);
        let y = mlp_forward_var(&mut g, &spec, &bound, xv).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        let pairs: Vec<Var> = bound.iter().copied().collect();
        for (t, &v) in params.iter_mut().zip(&pairs) {
            g.accumulate_into(v, t).unwrap();
        }
        let once: Vec<Vec<f64>> = params.iter().map(|t| t.grad().unwrap().to_vec()).collect();
        g.backward(loss).unwrap();
        for (t, &v) in params.iter_mut().zip(&pairs) {
            g.accumulate_into(v, t).unwrap();
        }
        for (t, first) in params.iter().zip(&once) {
            for (twice, one) in t.grad().unwrap().iter().zip(first) {
                prop_assert_eq!(*twice, 2.0 * one);
            }
        }
    }
}

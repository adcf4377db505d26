use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_gradients, DEFAULT_STEP};
use super::*;
use crate::error::AceError;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = numel(shape);
    Tensor::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).unwrap()
}

/// Random values bounded away from zero so ReLU and |x| kinks are not straddled.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = numel(shape);
    let v = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(v, shape).unwrap()
}

#[test]
fn elementwise_examples() {
    let a = Tensor::vector(vec![1.0, 2.0]);
    let b = Tensor::vector(vec![3.0, 4.0]);
    assert_eq!(elementwise(ElementwiseOp::Add, &a, Some(&b)).unwrap().to_vec(), vec![4.0, 6.0]);
    let r = Tensor::vector(vec![-1.0, 0.0, 2.0]);
    assert_eq!(elementwise(ElementwiseOp::Relu, &r, None).unwrap().to_vec(), vec![0.0, 0.0, 2.0]);
    assert_eq!(Tensor::vector(vec![-0.3]).abs().to_vec(), vec![0.3]);
    assert!(elementwise(ElementwiseOp::Add, &a, None).is_err());
}

#[test]
fn scalar_broadcast_and_shape_errors() {
    let a = Tensor::vector(vec![1.0, 2.0, 3.0]);
    let s = Tensor::scalar(2.0);
    assert_eq!(a.mul(&s).unwrap().to_vec(), vec![2.0, 4.0, 6.0]);
    assert_eq!(s.sub(&a).unwrap().to_vec(), vec![1.0, 0.0, -1.0]);
    let err = a.add(&Tensor::vector(vec![1.0, 2.0])).unwrap_err();
    assert_eq!(
        err,
        AceError::ShapeMismatch {
            op: "add",
            left: vec![3],
            right: vec![2]
        }
    );
}

#[test]
fn matmul_examples() {
    let eye = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let m = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
    assert_eq!(eye.matmul(&m).unwrap().to_vec(), m.to_vec());
    let row = Tensor::new(vec![1.0, 0.0], &[1, 2]).unwrap();
    let col = Tensor::new(vec![2.0, 5.0], &[2, 1]).unwrap();
    let out = row.matmul(&col).unwrap();
    assert_eq!(out.shape(), &[1, 1]);
    assert_eq!(out.to_vec(), vec![2.0]);
    assert!(row.matmul(&m.reshape(&[4, 1]).unwrap()).is_err());
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b) = (random(&[3, 3], &mut rng), random(&[3, 3], &mut rng));
    let report = check_gradients("matmul", &[a, b], DEFAULT_STEP, |t| Ok(t[0].matmul(&t[1])?.sum())).unwrap();
    assert!(report.worst_rel_err <= 1e-6, "{report:?}");
}

#[test]
fn conv2d_unit_kernel_scales() {
    let x = Tensor::new((0..9).map(f64::from).collect(), &[1, 3, 3]).unwrap();
    let k = Tensor::new(vec![2.0], &[1, 1, 1, 1]).unwrap();
    let out = conv2d(&x, &k, Padding::Same).unwrap();
    assert_eq!(out.to_vec(), x.to_vec().iter().map(|v| 2.0 * v).collect::<Vec<_>>());
}

#[test]
fn conv2d_impulse_reproduces_kernel() {
    let mut x = vec![0.0; 25];
    x[12] = 1.0;
    let x = Tensor::new(x, &[1, 5, 5]).unwrap();
    let kv: Vec<f64> = (1..=9).map(f64::from).collect();
    let k = Tensor::new(kv.clone(), &[1, 1, 3, 3]).unwrap();
    let out = conv2d(&x, &k, Padding::Same).unwrap().to_vec();
    // Cross-correlation with an impulse yields the kernel flipped about the centre.
    for u in 0..3 {
        for v in 0..3 {
            assert_eq!(out[(1 + u) * 5 + (1 + v)], kv[(2 - u) * 3 + (2 - v)]);
        }
    }
    assert_eq!(out.iter().filter(|v| **v != 0.0).count(), 9);
}

#[test]
fn conv2d_rejects_bad_shapes() {
    let x = Tensor::zeros(&[2, 4, 4]);
    assert!(matches!(
        conv2d(&x, &Tensor::zeros(&[1, 2, 2, 2]), Padding::Same),
        Err(AceError::InvalidShape { .. })
    ));
    assert!(matches!(
        conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), Padding::Same),
        Err(AceError::ShapeMismatch { .. })
    ));
}

#[test]
fn conv2d_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 5, 5], &mut rng);
    let k = random(&[3, 2, 3, 3], &mut rng);
    let w = random(&[3, 5, 5], &mut rng);
    let report = check_gradients("conv2d", &[x, k], DEFAULT_STEP, |t| {
        conv2d(&t[0], &t[1], Padding::Same)?.mul(&w).map(|p| p.sum())
    })
    .unwrap();
    assert!(report.worst_rel_err <= 1e-6, "{report:?}");
}

#[test]
fn reduce_examples() {
    assert_eq!(Tensor::vector(vec![1.0, 2.0, 3.0]).sum().item(), 6.0);
    assert_eq!(Tensor::vector(vec![3.0, 4.0]).l2_norm().item(), 5.0);
    let m = Tensor::new(vec![1.0, 3.0, 3.0, 5.0], &[2, 2]).unwrap();
    let mean = m.mean_axes(&[0]).unwrap();
    assert_eq!(mean.shape(), &[2]);
    assert_eq!(mean.to_vec(), vec![2.0, 4.0]);
    assert_eq!(m.sum_axes(&[1]).unwrap().to_vec(), vec![4.0, 8.0]);
    assert_eq!(m.sum_axes(&[2]).unwrap_err(), AceError::InvalidAxis { axis: 2, rank: 2 });
    let l2 = reduce(ReduceOp::L2Norm, &m, Some(&[1])).unwrap();
    assert!((l2.to_vec()[0] - 10f64.sqrt()).abs() < 1e-15);
}

#[test]
fn backward_examples() {
    let x = Tensor::scalar_param(3.0);
    x.square().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);

    let x = Tensor::param(vec![-1.0, 2.0], &[2]).unwrap();
    x.relu().sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0, 1.0]);

    assert!(matches!(x.relu().backward(), Err(AceError::NonScalarLoss(_))));
}

#[test]
fn relu_and_abs_kinks_have_zero_gradient() {
    let x = Tensor::param(vec![0.0, 0.0], &[2]).unwrap();
    x.relu().add(&x.abs()).unwrap().sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
}

#[test]
fn repeated_backward_accumulates_until_zeroed() {
    let x = Tensor::scalar_param(2.0);
    let loss = x.square();
    loss.backward().unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![8.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
    let g = x.square().backward().unwrap();
    assert_eq!(g.get(&x).unwrap(), &[4.0]);
}

#[test]
fn shared_subexpressions_sum_their_contributions() {
    let x = Tensor::scalar_param(1.5);
    let y = x.square();
    // loss = y * y + y = x^4 + x^2
    let loss = y.mul(&y).unwrap().add(&y).unwrap();
    loss.backward().unwrap();
    let expected = 4.0 * 1.5f64.powi(3) + 2.0 * 1.5;
    assert!((x.grad().unwrap()[0] - expected).abs() < 1e-12);
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[4, 3], &mut rng);
    let target = random(&[4, 2], &mut rng);
    let w1 = random(&[3, 6], &mut rng);
    let w2 = random(&[6, 2], &mut rng);
    let report = check_gradients("mlp", &[w1, w2], DEFAULT_STEP, |t| {
        let h = x.matmul(&t[0])?.relu();
        let y = h.matmul(&t[1])?;
        Ok(y.sub(&target)?.square().mean())
    })
    .unwrap();
    assert!(report.worst_rel_err <= 1e-5, "{report:?}");
}

#[test]
fn structural_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random(&[2, 3], &mut rng);
    let b = random(&[4], &mut rng);
    let w = random(&[10], &mut rng);
    let index = Rc::new(vec![5, 0, 0, 3, 2, 1]);
    let report = check_gradients("concat/gather/reshape", &[a, b], DEFAULT_STEP, |t| {
        let g = t[0].gather(index.clone(), &[3, 2])?.reshape(&[6])?;
        concat(&[g, t[1].clone()]).mul(&w).map(|p| p.sum())
    })
    .unwrap();
    assert!(report.worst_rel_err <= 1e-6, "{report:?}");
}

#[test]
fn tape_free_forward_matches_taped() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[2, 4, 4], &mut rng);
    let k = random(&[2, 2, 3, 3], &mut rng);
    let run = |x: &Tensor, k: &Tensor| conv2d(x, k, Padding::Same).unwrap().relu().l2_norm();
    let plain = run(&x, &k);
    let taped = run(&x.requires_grad_leaf(), &k.requires_grad_leaf());
    assert!(plain.is_leaf());
    assert!(!taped.is_leaf());
    assert_eq!(plain.item().to_bits(), taped.item().to_bits());
}

#[test]
fn tape_nodes_are_created_after_their_parents() {
    let x = Tensor::scalar_param(1.0);
    let y = x.square().add(&x).unwrap().relu();
    let mut stack = vec![y];
    while let Some(t) = stack.pop() {
        if let Some(node) = t.node() {
            for p in node.parents() {
                assert!(p.id() < t.id());
                stack.push(p.clone());
            }
        }
    }
}

#[test]
fn custom_backward_is_used() {
    struct Doubler;
    impl CustomBackward for Doubler {
        fn name(&self) -> &'static str {
            "double"
        }
        fn backward(&self, _input: &[f64], _output: &[f64], grad_out: &[f64]) -> Vec<f64> {
            grad_out.iter().map(|g| 2.0 * g).collect()
        }
    }
    let x = Tensor::param(vec![1.0, -2.0], &[2]).unwrap();
    let y = x.custom_unary(x.to_vec().iter().map(|v| 2.0 * v).collect(), Rc::new(Doubler)).unwrap();
    y.sum().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn elementwise_ops_match_finite_differences(seed in 0u64..1000, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = away_from_zero(&[n], &mut rng);
        let b = away_from_zero(&[n], &mut rng);
        let s = away_from_zero(&[], &mut rng);
        let report = check_gradients("elementwise", &[a, b, s], DEFAULT_STEP, |t| {
            let sum = t[0].add(&t[1])?;
            let diff = t[0].sub(&t[2])?;
            let prod = t[1].mul(&t[2])?;
            Ok(sum.relu().add(&diff.abs())?.add(&prod.square())?.add(&t[0].neg())?.sum())
        }).unwrap();
        prop_assert!(report.worst_rel_err <= 1e-5, "{:?}", report);
    }

    #[test]
    fn reductions_match_finite_differences(seed in 0u64..1000, rows in 1usize..4, cols in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = away_from_zero(&[rows, cols], &mut rng);
        let w0 = random(&[cols], &mut rng);
        let w1 = random(&[rows], &mut rng);
        let report = check_gradients("reduce", &[a], DEFAULT_STEP, |t| {
            let m0 = t[0].mean_axes(&[0])?.mul(&w0)?.sum();
            let s1 = t[0].sum_axes(&[1])?.mul(&w1)?.sum();
            let n1 = reduce(ReduceOp::L2Norm, &t[0], Some(&[1]))?.mul(&w1)?.sum();
            m0.add(&s1)?.add(&n1)?.add(&t[0].l2_norm())
        }).unwrap();
        prop_assert!(report.worst_rel_err <= 1e-5, "{:?}", report);
    }

    #[test]
    fn forward_is_bitwise_deterministic(seed in 0u64..1000) {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&[1, 4, 4], &mut rng);
            let k = random(&[2, 1, 3, 3], &mut rng);
            let w = random(&[32, 3], &mut rng);
            conv2d(&x, &k, Padding::Same).unwrap().relu().reshape(&[1, 32]).unwrap().matmul(&w).unwrap().to_vec()
        };
        let (a, b) = (build(), build());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

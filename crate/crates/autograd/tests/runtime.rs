//! Execution policies, the optimizer and broadcasting.

use proptest::prelude::*;
use svc_autograd::optim::{clip_grad_norm, grad_norm};
use svc_autograd::{Adam, AdamConfig, Exec, Graph, ParamStore, Tensor};

#[test]
fn policies_agree() {
    let items: Vec<u64> = (0..1000).collect();
    let a = Exec::Sequential.map(&items, |x| x * x + 1);
    let b = Exec::Parallel.map(&items, |x| x * x + 1);
    assert_eq!(a, b);

    let mut x = vec![0usize; 100];
    let mut y = vec![0usize; 100];
    Exec::Sequential.for_each_chunk(&mut x, 7, |i, c| c.iter_mut().for_each(|v| *v = i));
    Exec::Parallel.for_each_chunk(&mut y, 7, |i, c| c.iter_mut().for_each(|v| *v = i));
    assert_eq!(x, y);
    assert_eq!(x[99], 14);
}

#[test]
fn first_adam_step_moves_by_lr() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("w", Tensor::from_f64(&[2], &[1.0, -1.0]));
    let mut opt = Adam::new(&store, AdamConfig::default());
    let g = Tensor::from_f64(&[2], &[0.5, -3.0]);
    opt.step(&mut store, &[Some(g)], 0.1);
    // The bias-corrected first step is lr * sign(g) up to eps.
    let w = store.get(id).data();
    assert!((w[0] - 0.9).abs() < 1e-6);
    assert!((w[1] + 0.9).abs() < 1e-6);
}

#[test]
fn missing_gradient_leaves_param() {
    let mut store = ParamStore::<f32>::new();
    store.add("a", Tensor::ones(&[3]));
    let b = store.add("b", Tensor::ones(&[1]));
    let mut opt = Adam::new(&store, AdamConfig::default());
    opt.step(&mut store, &[Some(Tensor::ones(&[3])), None], 0.01);
    assert_eq!(store.get(b).data(), &[1.0]);
    assert_eq!(opt.second_moments()[1].data(), &[0.0]);
}

#[test]
fn clipping_scales_to_max() {
    let mut g = vec![Some(Tensor::<f64>::from_f64(&[2], &[3.0, 4.0]))];
    let n = clip_grad_norm(&mut g, 1.0);
    assert_eq!(n, 5.0);
    assert!((grad_norm(&g) - 1.0).abs() < 1e-12);
}

#[test]
fn broadcasting_forward_and_reduction() {
    let g = Graph::<f64>::new();
    let a = g.input(Tensor::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
    let row = g.input(Tensor::from_f64(&[3], &[10., 20., 30.]));
    let col = g.input(Tensor::from_f64(&[2, 1], &[1., 2.]));
    let sum = a + row;
    assert_eq!(sum.value().data(), &[11., 22., 33., 14., 25., 36.]);
    let prod = a * col;
    assert_eq!(prod.value().data(), &[1., 2., 3., 8., 10., 12.]);
    let grads = g.backward((sum * prod).sum());
    // d/drow sums a*col over the broadcast rows; d/dcol sums (a+row)*a over columns.
    assert_eq!(grads.wrt(row).unwrap().data(), &[1. * 1. + 4. * 2., 2. * 1. + 5. * 2., 3. * 1. + 6. * 2.]);
    assert_eq!(grads.wrt(col).unwrap().data(), &[11. + 44. + 99., 56. + 125. + 216.]);
    assert_eq!(grads.wrt(col).unwrap().shape(), &[2, 1]);
}

proptest! {
    #[test]
    fn broadcast_gradient_has_operand_shape(rows in 1usize..5, cols in 1usize..5, seed in 0u64..1000) {
        let n = rows * cols;
        let data: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) % 17) as f64 - 8.0).collect();
        let g = Graph::<f64>::new();
        let a = g.input(Tensor::from_f64(&[rows, cols], &data));
        let b = g.input(Tensor::from_f64(&[cols], &vec![1.0; cols]));
        let grads = g.backward((a + b).sum());
        prop_assert_eq!(grads.wrt(b).unwrap().shape(), &[cols]);
        prop_assert!(grads.wrt(b).unwrap().data().iter().all(|&v| v == rows as f64));
    }

    #[test]
    fn sequential_and_parallel_maps_agree(values in proptest::collection::vec(-1e6f64..1e6, 0..300)) {
        let f = |x: &f64| (x * 1.5).sin() + x;
        let a = Exec::Sequential.map(&values, f);
        let b = Exec::Parallel.map(&values, f);
        prop_assert_eq!(a, b);
    }
}

//! Finite-difference and completeness checks over random small networks.

use ndarray::{Array1, Array2};
use rand::Rng as _;

use super::ig::integrated_gradients;
use super::net::*;
use crate::rng::{rng_for, rng_indexed, Rng};

fn random_spec(rng: &mut Rng) -> ModelSpec {
    let out = rng.random_range(2..5);
    let dropout = if rng.random_bool(0.5) { 0.2 } else { 0.0 };
    let blocks = vec![
        EncoderSpec {
            name: "static".into(),
            input_width: rng.random_range(1..5),
            widths: vec![rng.random_range(2..6), out],
            activation: Activation::Sigmoid,
            dropout,
            batch_norm: true,
        },
        EncoderSpec {
            name: "hourly".into(),
            input_width: rng.random_range(1..6),
            widths: vec![rng.random_range(2..6), out],
            activation: if rng.random_bool(0.5) { Activation::Relu } else { Activation::Sigmoid },
            dropout,
            batch_norm: rng.random_bool(0.5),
        },
    ];
    ModelSpec {
        blocks,
        pooling: if rng.random_bool(0.5) { Pooling::Concat } else { Pooling::Add },
        head_widths: vec![rng.random_range(2..6), rng.random_range(2..5)],
        head_dropout: dropout,
    }
}

pub(crate) fn random_net(index: u64) -> ModelParams {
    let mut rng = rng_indexed(17, "gradcheck/spec", index);
    let spec = random_spec(&mut rng);
    let mut p = ModelParams::init(&spec, index).unwrap();
    // Non-trivial running statistics and affine parameters.
    for s in p.blocks.iter_mut() {
        for l in s.layers.iter_mut() {
            if let Some(bn) = &mut l.bn {
                bn.running_mean.mapv_inplace(|_| rng.random_range(-0.5..0.5));
                bn.running_var.mapv_inplace(|_| rng.random_range(0.5..2.0));
                bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
                bn.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
            l.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
    }
    // Zero biases would park dead units exactly on the rectifier kink.
    for l in p.head.layers.iter_mut() {
        l.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    p
}

fn random_batch(p: &ModelParams, rows: usize, index: u64) -> (Vec<Array2<f64>>, Vec<bool>) {
    let mut rng = rng_indexed(17, "gradcheck/batch", index);
    let x = p
        .spec
        .blocks
        .iter()
        .map(|b| Array2::from_shape_fn((rows, b.input_width), |_| rng.random_range(-2.0..2.0)))
        .collect();
    let mut labels: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    (x, labels)
}

/// Largest relative error between analytic and central-difference gradients.
/// Entries whose gradients are both below 1e-7 in magnitude are compared on an
/// absolute scale, since their relative error is dominated by rounding.
pub(crate) fn max_relative_error(index: u64) -> f64 {
    let mut p = random_net(index);
    let rows = 3 + (index as usize % 6);
    let (x, labels) = random_batch(&p, rows, index);
    let views: Vec<_> = x.iter().map(|a| a.view()).collect();
    let cw = [0.7, 1.9];
    let lambda = 0.01;
    let loss = |p: &ModelParams| {
        let mut rng = rng_for(index, "dropout");
        loss_and_grad(p, &views, &labels, cw, lambda, Mode::Train, &[], &mut rng).unwrap().loss
    };
    let analytic: Vec<Vec<f64>> = {
        let mut rng = rng_for(index, "dropout");
        let out = loss_and_grad(&p, &views, &labels, cw, lambda, Mode::Train, &[], &mut rng).unwrap();
        out.grads.slices().iter().map(|s| s.to_vec()).collect()
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let n_tensors = p.params().len();
    for t in 0..n_tensors {
        let len = p.params()[t].len();
        for j in 0..len {
            let orig = p.params()[t][j];
            p.params_mut()[t].1[j] = orig + h;
            let up = loss(&p);
            p.params_mut()[t].1[j] = orig - h;
            let down = loss(&p);
            p.params_mut()[t].1[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[t][j];
            let scale = a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

pub(crate) fn completeness_gap(index: u64, steps: usize) -> f64 {
    let p = random_net(index);
    let mut rng = rng_indexed(17, "ig/x", index);
    let x = Array1::from_shape_fn(p.input_width(), |_| rng.random_range(-2.0..2.0));
    let b = Array1::zeros(p.input_width());
    let attr = integrated_gradients(&p, x.view(), b.view(), steps).unwrap();
    let fx = p.predict_proba(&split(&p, &x)).unwrap()[0];
    let fb = p.predict_proba(&split(&p, &b)).unwrap()[0];
    (attr.sum() - (fx - fb)).abs()
}

fn split<'a>(p: &ModelParams, x: &'a Array1<f64>) -> Vec<ndarray::ArrayView2<'a, f64>> {
    let mut col = 0;
    p.spec
        .blocks
        .iter()
        .map(|b| {
            let v = x.slice(ndarray::s![col..col + b.input_width]).insert_axis(ndarray::Axis(0));
            col += b.input_width;
            v
        })
        .collect()
}

#[test]
fn gradients_match_central_differences() {
    for i in 0..100 {
        let e = max_relative_error(i);
        assert!(e <= 1e-4, "net {i}: relative error {e}");
    }
}

#[test]
fn eval_mode_ignores_dropout_rng() {
    let p = random_net(3);
    let (x, _) = random_batch(&p, 4, 3);
    let views: Vec<_> = x.iter().map(|a| a.view()).collect();
    let a = p.forward(&views, Mode::Eval, &[], &mut rng_for(1, "a")).unwrap().logits;
    let b = p.forward(&views, Mode::Eval, &[], &mut rng_for(2, "b")).unwrap().logits;
    assert_eq!(a, b);
}

#[test]
fn integrated_gradients_completeness() {
    for i in 0..50 {
        let gap = completeness_gap(i, 256);
        assert!(gap <= 1e-3, "net {i}: completeness gap {gap}");
    }
    // The midpoint rule converges as the step count grows.
    for i in 0..10 {
        let g: Vec<f64> = [32, 128, 512].iter().map(|s| completeness_gap(i, *s)).collect();
        assert!(g[0] >= g[1] && g[1] >= g[2], "net {i}: {g:?}");
    }
}


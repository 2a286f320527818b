//! Finite-difference trials shared by the gradient tests and the acceptance
//! run. Each trial draws a fresh random instance and returns the worst
//! relative error between the analytic and the numeric gradient.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weds_core::mesh::{cotangent_laplacian, lumped_areas};
use weds_core::shapes::{self, BarParams};
use weds_core::spectral::{eig_generalized, EigOptions};
use weds_core::wavelet::FilterBank;
use weds_mgcn::gradcheck::{numeric_gradient, relative_error, STEP};
use weds_mgcn::layers::{column_ranges, CONV_INIT_GAIN, elu, elu_grad, minmax_backward, minmax_with, Dense, GraphConv};
use weds_mgcn::loss::{cross_entropy, hardnet};
use weds_mgcn::{Architecture, Model, OperatorKind, OperatorSet};

pub const TRIALS: usize = 20;

pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// A 50-vertex bar with wavelet operators for every filter.
pub fn small_shape() -> OperatorSet {
    let p = BarParams {
        rings: 10,
        sectors: 5,
        ..BarParams::default()
    };
    let mesh = shapes::bent_bar(&p, 0.4);
    let basis = eig_generalized(&cotangent_laplacian(&mesh), &lumped_areas(&mesh), 50, &EigOptions::default()).unwrap();
    let bank = FilterBank::for_basis(&basis, 31).unwrap();
    let mut ops = OperatorSet::new(50);
    ops.add_wavelets(&basis, &bank, &(0..32).collect::<Vec<_>>()).unwrap();
    ops.add_chebyshev(&mesh, 4);
    ops
}

fn scalar(z: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    z.component_mul(r).sum()
}

/// MGCONV with N = 50, C = 8, O = 4 and three scales.
pub fn mgconv_trial(ops: &OperatorSet, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scales: Vec<usize> = (0..3).map(|_| rng.random_range(1..32)).collect();
    scales.sort_unstable();
    scales.dedup();
    let layer = GraphConv::random(OperatorKind::Wavelet, scales, 8, 4, &mut rng);
    conv_trial(ops, layer, &mut rng)
}

pub fn chebconv_trial(ops: &OperatorSet, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = GraphConv::random(OperatorKind::Chebyshev, vec![0, 1, 2, 3], 8, 4, &mut rng);
    conv_trial(ops, layer, &mut rng)
}

/// Weights are brought back to unit Glorot gain: at the training gain the
/// Chebyshev pre-activations reach the ELU plateau and some columns become
/// nearly flat, which turns the finite differences into noise.
fn conv_trial(ops: &OperatorSet, mut layer: GraphConv, rng: &mut ChaCha8Rng) -> f64 {
    for w in &mut layer.weights {
        *w /= CONV_INIT_GAIN;
    }
    let x = DMatrix::from_fn(50, 8, |_, _| rng.random_range(0.0..1.0));
    let r = random(50, 4, rng);
    let (_, cache) = layer.forward(ops, &x).unwrap();
    let (dx, dw) = layer.backward(ops, &cache, &r).unwrap();
    let nx = numeric_gradient(&x, |x| scalar(&layer.forward_frozen(ops, x, &cache.ranges).unwrap(), &r), STEP);
    let mut err = relative_error(&dx, &nx);
    for (k, g) in dw.iter().enumerate() {
        let nw = numeric_gradient(&layer.weights[k], |w| {
            let mut l = layer.clone();
            l.weights[k] = w.clone();
            scalar(&l.forward_frozen(ops, &x, &cache.ranges).unwrap(), &r)
        }, STEP);
        err = err.max(relative_error(g, &nw));
    }
    err
}

pub fn elu_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(30, 3, &mut rng) * 3.0;
    let r = random(30, 3, &mut rng);
    let analytic = x.map(elu_grad).component_mul(&r);
    let numeric = numeric_gradient(&x, |x| scalar(&x.map(elu), &r), STEP);
    relative_error(&analytic, &numeric)
}

/// Minmax with the references held at the evaluation point.
pub fn norm_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = random(25, 4, &mut rng);
    let r = random(25, 4, &mut rng);
    let ranges = column_ranges(&e);
    let analytic = minmax_backward(&r, &ranges);
    let numeric = numeric_gradient(&e, |e| scalar(&minmax_with(e, &ranges), &r), STEP);
    relative_error(&analytic, &numeric)
}

pub fn fc_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Dense {
        weight: random(6, 5, &mut rng),
        bias: random(1, 5, &mut rng),
    };
    let x = random(12, 6, &mut rng);
    let r = random(12, 5, &mut rng);
    let (dx, dw, db) = d.backward(&x, &r);
    let f = |d: &Dense, x: &DMatrix<f64>| scalar(&d.forward(x).unwrap(), &r);
    let nx = numeric_gradient(&x, |x| f(&d, x), STEP);
    let nw = numeric_gradient(&d.weight, |w| f(&Dense { weight: w.clone(), bias: d.bias.clone() }, &x), STEP);
    let nb = numeric_gradient(&d.bias, |b| f(&Dense { weight: d.weight.clone(), bias: b.clone() }, &x), STEP);
    relative_error(&dx, &nx).max(relative_error(&dw, &nw)).max(relative_error(&db, &nb))
}

pub fn cross_entropy_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = random(15, 9, &mut rng) * 4.0;
    let labels: Vec<usize> = (0..15).map(|_| rng.random_range(0..9)).collect();
    let (_, g) = cross_entropy(&logits, &labels).unwrap();
    let numeric = numeric_gradient(&logits, |l| cross_entropy(l, &labels).unwrap().0, STEP);
    relative_error(&g, &numeric)
}

pub fn hardnet_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random(10, 6, &mut rng);
    let b = &a + random(10, 6, &mut rng) * 0.3;
    let (_, da, db) = hardnet(&a, &b, 1.0).unwrap();
    let na = numeric_gradient(&a, |a| hardnet(a, &b, 1.0).unwrap().0, STEP);
    let nb = numeric_gradient(&b, |b| hardnet(&a, b, 1.0).unwrap().0, STEP);
    relative_error(&da, &na).max(relative_error(&db, &nb))
}

/// Whole network plus head, every parameter checked.
pub fn model_trial(ops: &OperatorSet, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch: Architecture = "MGCONV6(3) + MGCONV5(4) + FC4".parse().unwrap();
    let mut model = Model::new(arch, 7, seed);
    model.set_head(Some(Dense::random(4, 3, &mut rng)));
    let x = DMatrix::from_fn(50, 7, |_, _| rng.random_range(0.0..1.0));
    let r = random(50, 4, &mut rng);
    let labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
    let cache = model.forward_cached(ops, &x).unwrap();
    let (_, dl) = cross_entropy(&model.logits(&cache).unwrap(), &labels).unwrap();
    let grads = model.backward(ops, &cache, Some(&r), Some(&dl)).unwrap();
    let objective = |m: &Model| {
        let frozen = m.forward_frozen(ops, &x, &cache).unwrap();
        scalar(frozen.output(), &r) + cross_entropy(&m.logits(&frozen).unwrap(), &labels).unwrap().0
    };
    let mut err: f64 = 0.0;
    let count = model.params(true).len();
    for k in 0..count {
        let p = model.params(true)[k].clone();
        let numeric = numeric_gradient(&p, |v| {
            let mut m = model.clone();
            *m.params_mut(true)[k] = v.clone();
            objective(&m)
        }, STEP);
        err = err.max(relative_error(&grads[k], &numeric));
    }
    err
}

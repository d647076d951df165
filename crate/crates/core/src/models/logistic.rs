//! Multinomial logistic regression, parameters `[W (c x d, row-major), b (c)]`.
//!
//! Loss is mean softmax cross-entropy plus `(l2_reg / 2) * ||theta||^2` over all
//! parameters, bias included, so the objective is `l2_reg`-strongly convex.

use crate::numkit::affine;

use super::{log_sum_exp, softmax_in_place, Batch, ModelSpec};

fn split<'p>(spec: &ModelSpec, params: &'p [f64]) -> (&'p [f64], &'p [f64]) {
    params.split_at(spec.n_classes * spec.d_feat)
}

pub(super) fn scores(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
    let (w, b) = split(spec, params);
    let mut z = vec![0.0; spec.n_classes];
    affine(w, b, x, &mut z);
    z
}

fn penalty(spec: &ModelSpec, params: &[f64]) -> f64 {
    0.5 * spec.l2_reg * params.iter().map(|v| v * v).sum::<f64>()
}

pub(super) fn loss(spec: &ModelSpec, params: &[f64], batch: &Batch<'_>) -> f64 {
    let (w, b) = split(spec, params);
    let mut z = vec![0.0; spec.n_classes];
    let mut total = 0.0;
    for (x, y) in batch.iter() {
        affine(w, b, x, &mut z);
        total += log_sum_exp(&z) - z[y];
    }
    total / batch.len() as f64 + penalty(spec, params)
}

pub(super) fn loss_and_grad(spec: &ModelSpec, params: &[f64], batch: &Batch<'_>, grad: &mut [f64]) -> f64 {
    let d = spec.d_feat;
    let (w, b) = split(spec, params);
    let (gw, gb) = grad.split_at_mut(spec.n_classes * d);
    let mut z = vec![0.0; spec.n_classes];
    let mut total = 0.0;
    for (x, y) in batch.iter() {
        affine(w, b, x, &mut z);
        let zy = z[y];
        let lse = softmax_in_place(&mut z);
        total += lse - zy;
        z[y] -= 1.0;
        for (j, &dz) in z.iter().enumerate() {
            gb[j] += dz;
            for (g, xv) in gw[j * d..(j + 1) * d].iter_mut().zip(x) {
                *g += dz * xv;
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for (g, wv) in gw.iter_mut().zip(w) {
        *g = *g * inv + spec.l2_reg * wv;
    }
    for (g, bv) in gb.iter_mut().zip(b) {
        *g = *g * inv + spec.l2_reg * bv;
    }
    total * inv + penalty(spec, params)
}

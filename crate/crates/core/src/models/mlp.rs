//! Fully connected ReLU network with a softmax cross-entropy head.
//!
//! Parameters are laid out layer by layer as `[W_l (out x in, row-major), b_l]`.
//! The ReLU derivative at exactly zero is taken as zero.

use crate::numkit::affine;

use super::{softmax_in_place, Batch, ModelSpec};

struct Layer<'p> {
    w: &'p [f64],
    b: &'p [f64],
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

fn layers<'p>(spec: &ModelSpec, params: &'p [f64]) -> Vec<Layer<'p>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for s in spec.layer_sizes().windows(2) {
        let (fan_in, fan_out) = (s[0], s[1]);
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        out.push(Layer {
            w,
            b,
            fan_in,
            fan_out,
            offset,
        });
        offset += fan_out * (fan_in + 1);
    }
    out
}

/// Pre-activations of every layer for one input.
fn forward(layers: &[Layer<'_>], x: &[f64]) -> Vec<Vec<f64>> {
    let mut pre = Vec::with_capacity(layers.len());
    let mut input: Vec<f64> = x.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let mut z = vec![0.0; layer.fan_out];
        affine(layer.w, layer.b, &input, &mut z);
        if l + 1 < layers.len() {
            input = z.iter().map(|v| v.max(0.0)).collect();
        }
        pre.push(z);
    }
    pre
}

pub(super) fn scores(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
    let layers = layers(spec, params);
    forward(&layers, x).pop().unwrap_or_default()
}

pub(super) fn loss_and_grad(
    spec: &ModelSpec,
    params: &[f64],
    batch: &Batch<'_>,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let layers = layers(spec, params);
    let mut total = 0.0;
    for (x, y) in batch.iter() {
        let mut pre = forward(&layers, x);
        let logits = pre.last_mut().expect("at least one layer");
        let zy = logits[y];
        let mut delta = logits.clone();
        let lse = softmax_in_place(&mut delta);
        total += lse - zy;
        let Some(g) = grad.as_deref_mut() else { continue };
        delta[y] -= 1.0;
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let input: Vec<f64> = if l == 0 {
                x.to_vec()
            } else {
                pre[l - 1].iter().map(|v| v.max(0.0)).collect()
            };
            let (gw, rest) = g[layer.offset..].split_at_mut(layer.fan_in * layer.fan_out);
            let gb = &mut rest[..layer.fan_out];
            for (j, &dz) in delta.iter().enumerate() {
                gb[j] += dz;
                if dz != 0.0 {
                    for (gv, a) in gw[j * layer.fan_in..(j + 1) * layer.fan_in].iter_mut().zip(&input) {
                        *gv += dz * a;
                    }
                }
            }
            if l > 0 {
                let mut next = vec![0.0; layer.fan_in];
                for (j, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    for (n, wv) in next.iter_mut().zip(&layer.w[j * layer.fan_in..(j + 1) * layer.fan_in]) {
                        *n += dz * wv;
                    }
                }
                for (n, z) in next.iter_mut().zip(&pre[l - 1]) {
                    if *z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v *= inv);
    }
    total * inv
}

pub(super) fn min_relu_margin(spec: &ModelSpec, params: &[f64], batch: &Batch<'_>) -> f64 {
    let layers = layers(spec, params);
    let mut margin = f64::INFINITY;
    for (x, _) in batch.iter() {
        let pre = forward(&layers, x);
        for z in &pre[..pre.len() - 1] {
            for v in z {
                margin = margin.min(v.abs());
            }
        }
    }
    margin
}

//! Heterogeneity estimates and generalization-bound arithmetic.
//!
//! Every supremum here is replaced by a maximum over a finite probe set, so
//! the reported numbers are lower bounds of the true quantities.

mod generalization;

pub use generalization::{corollary1_gap, optimal_alpha, theorem1_bound, GeneralizationInputs};

use serde::{Deserialize, Serialize};

use crate::datagen::{label_histogram, FederatedDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{minimize, MeanObjective, ModelKind, ModelSpec, Objective, ShardObjective};
use crate::numkit::{gaussian_vector, Matrix, Mean, ParamVector, RngStream, StreamTag};

/// Per-client gradient diversity and its sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaEstimate {
    pub zeta_i: Vec<f64>,
    pub zeta: f64,
}

/// `max_w ||grad F(w) - grad f_i(w)||^2` over `probes`, with `F` the mean of
/// the objectives in slice order.
pub fn estimate_zeta<O: Objective>(objectives: &[O], probes: &[ParamVector], exec: Execution) -> Result<ZetaEstimate> {
    if probes.is_empty() {
        return Err(Error::invalid("zeta estimate needs at least one probe"));
    }
    let per_probe = probe_gradients(objectives, probes, exec)?;
    let mut zeta_i = vec![0.0f64; objectives.len()];
    for (_, dists) in &per_probe {
        for (z, d) in zeta_i.iter_mut().zip(dists) {
            *z = z.max(*d);
        }
    }
    let zeta = zeta_i.iter().sum();
    Ok(ZetaEstimate { zeta_i, zeta })
}

/// For each probe: the mean gradient and each client's squared distance to it.
fn probe_gradients<O: Objective>(
    objectives: &[O],
    probes: &[ParamVector],
    exec: Execution,
) -> Result<Vec<(ParamVector, Vec<f64>)>> {
    MeanObjective::new(objectives)?;
    exec.map(probes, |w| {
        let grads = objectives.iter().map(|o| o.grad(w)).collect::<Result<Vec<_>>>()?;
        let global = crate::numkit::mean(&grads)?;
        let dists = grads.iter().map(|g| global.dist_sq(g)).collect::<Result<Vec<_>>>()?;
        Ok((global, dists))
    })
    .into_iter()
    .collect()
}

/// Local and global optima and their squared distances.
#[derive(Debug, Clone)]
pub struct DeltaEstimate {
    pub delta_i: Vec<f64>,
    pub global_opt: ParamVector,
    pub local_opt: Vec<ParamVector>,
    /// Largest final gradient norm over all solves.
    pub max_grad_norm: f64,
}

/// `||v_i* - w*||^2` with every optimum solved to gradient norm
/// `gd_tolerance`. Requires strongly convex objectives.
pub fn estimate_delta<O: Objective>(
    objectives: &[O],
    gd_tolerance: f64,
    max_iter: usize,
    exec: Execution,
) -> Result<DeltaEstimate> {
    let global = MeanObjective::new(objectives)?;
    if objectives.iter().any(|o| o.curvature().is_none()) {
        return Err(Error::invalid("optimality gap needs strongly convex objectives"));
    }
    let start = ParamVector::zeros(global.dim());
    let solve = |o: &dyn Objective| -> Result<(ParamVector, f64)> {
        let r = minimize(o, &start, gd_tolerance, max_iter)?;
        if !r.converged {
            return Err(Error::invalid(format!(
                "solver stopped at gradient norm {:.3e} after {} iterations",
                r.grad_norm, r.iterations
            )));
        }
        Ok((r.minimizer, r.grad_norm))
    };
    let (global_opt, mut max_grad_norm) = solve(&global)?;
    let locals = exec
        .map(objectives, |o| solve(o as &dyn Objective))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut delta_i = Vec::with_capacity(locals.len());
    let mut local_opt = Vec::with_capacity(locals.len());
    for (v, g) in locals {
        max_grad_norm = max_grad_norm.max(g);
        delta_i.push(v.dist_sq(&global_opt)?);
        local_opt.push(v);
    }
    Ok(DeltaEstimate {
        delta_i,
        global_opt,
        local_opt,
        max_grad_norm,
    })
}

/// `max ||grad F(x1) - grad F(x2)||^2` over the given pairs.
pub fn estimate_gamma<O: Objective + ?Sized>(objective: &O, pairs: &[(ParamVector, ParamVector)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("gamma estimate needs at least one probe pair"));
    }
    let mut best = 0.0f64;
    for (a, b) in pairs {
        best = best.max(objective.grad(a)?.dist_sq(&objective.grad(b)?)?);
    }
    Ok(best)
}

/// Largest squared distance between any two of the given gradients.
fn max_pairwise_dist_sq(grads: &[&ParamVector]) -> Result<f64> {
    let mut best = 0.0f64;
    for (i, a) in grads.iter().enumerate() {
        for b in &grads[i + 1..] {
            best = best.max(a.dist_sq(b)?);
        }
    }
    Ok(best)
}

fn mean_abs_projection(features: &Matrix, u: &[f64]) -> f64 {
    let total: f64 = (0..features.rows())
        .map(|i| features.row(i).iter().zip(u).map(|(x, w)| x * w).sum::<f64>().abs())
        .sum();
    total / features.rows() as f64
}

/// Worst-case mean disagreement of two linear hypotheses with norm at most
/// `radius` on the rows of `features`: `max_{||u|| <= 2R} mean |u . x|`.
///
/// Each random start is refined by the fixed-point iteration
/// `u <- 2R * sum_i s_i x_i / ||sum_i s_i x_i||` with `s_i = sign(u . x_i)`,
/// which never decreases the objective.
pub fn estimate_lambda_h(
    features: &Matrix,
    radius: f64,
    n_directions: usize,
    ascent_steps: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if features.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if n_directions == 0 {
        return Err(Error::invalid("need at least one direction"));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("radius must be >= 0, got {radius}")));
    }
    let d = features.cols();
    let scale_to = |mut u: Vec<f64>| -> Option<Vec<f64>> {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let s = 2.0 * radius / norm;
        u.iter_mut().for_each(|x| *x *= s);
        Some(u)
    };
    let mut best = 0.0f64;
    for _ in 0..n_directions {
        let raw: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let Some(mut u) = scale_to(raw) else { continue };
        best = best.max(mean_abs_projection(features, &u));
        for _ in 0..ascent_steps {
            let mut sum = vec![0.0; d];
            for i in 0..features.rows() {
                let x = features.row(i);
                let sign = if x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
                sum.iter_mut().zip(x).for_each(|(s, xi)| *s += sign * xi);
            }
            let Some(next) = scale_to(sum) else { break };
            if next == u {
                break;
            }
            u = next;
            best = best.max(mean_abs_projection(features, &u));
        }
    }
    Ok(best)
}

/// L1 distance between the label histograms of a shard and of the pooled
/// data. A stand-in for the joint-distribution divergence, in `[0, 2]`.
pub fn l1_divergence_proxy(shard_labels: &[usize], pooled_labels: &[usize], n_classes: usize) -> Result<f64> {
    if shard_labels.is_empty() || pooled_labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for &y in shard_labels.iter().chain(pooled_labels) {
        if y >= n_classes {
            return Err(Error::LabelOutOfRange { label: y, n_classes });
        }
    }
    let p = label_histogram(shard_labels, n_classes);
    let q = label_histogram(pooled_labels, n_classes);
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum())
}

/// Knobs for [`diagnose`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOptions {
    pub gaussian_probes: usize,
    /// Standard deviation of the random Gaussian probes.
    pub probe_scale: f64,
    pub gd_tolerance: f64,
    pub max_iter: usize,
    /// Norm bound `R` of the linear hypothesis class used for `lambda_H`.
    pub hypothesis_radius: f64,
    pub n_directions: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            gaussian_probes: 16,
            probe_scale: 1.0,
            gd_tolerance: 1e-8,
            max_iter: 200_000,
            hypothesis_radius: 1.0,
            n_directions: 8,
            ascent_steps: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub zeta_i: Vec<f64>,
    pub zeta: f64,
    /// Absent when the model is not strongly convex.
    pub delta_i: Option<Vec<f64>>,
    pub gamma: f64,
    pub lambda_i: Vec<f64>,
    pub l1_proxy_i: Vec<f64>,
    /// Always `"label_histogram"`: the divergence is a label-marginal proxy.
    pub l1_proxy_kind: String,
    pub probes_used: usize,
    pub gd_tolerance: f64,
    pub gd_max_grad_norm: Option<f64>,
    pub options: DiagnoseOptions,
}

/// Runs every estimator over the dataset's training rows. The probe set is
/// `trajectory`, then Gaussian points, then (for strongly convex models) the
/// global and local optima.
pub fn diagnose(
    spec: &ModelSpec,
    dataset: &FederatedDataset,
    trajectory: &[ParamVector],
    options: &DiagnoseOptions,
    exec: Execution,
) -> Result<DiversityReport> {
    spec.validate()?;
    let objectives: Vec<ShardObjective<'_>> = dataset.shards().iter().map(|shard| ShardObjective { spec, shard }).collect();
    let dim = spec.param_count();

    let mut probes: Vec<ParamVector> = trajectory.to_vec();
    let mut rng = RngStream::derive(options.seed, StreamTag::Probes, 0);
    for _ in 0..options.gaussian_probes {
        probes.push(gaussian_vector(&mut rng, dim, Mean::Scalar(0.0), options.probe_scale)?);
    }

    let strongly_convex = spec.kind == ModelKind::Logistic && spec.l2_reg > 0.0;
    let delta = if strongly_convex {
        let d = estimate_delta(&objectives, options.gd_tolerance, options.max_iter, exec)?;
        probes.push(d.global_opt.clone());
        probes.extend(d.local_opt.iter().cloned());
        Some(d)
    } else {
        None
    };

    let per_probe = probe_gradients(&objectives, &probes, exec)?;
    let mut zeta_i = vec![0.0f64; objectives.len()];
    for (_, dists) in &per_probe {
        for (z, d) in zeta_i.iter_mut().zip(dists) {
            *z = z.max(*d);
        }
    }
    let zeta = zeta_i.iter().sum();
    let globals: Vec<&ParamVector> = per_probe.iter().map(|(g, _)| g).collect();
    let gamma = max_pairwise_dist_sq(&globals)?;

    let lambda_i = exec
        .map(dataset.shards(), |shard| {
            let train = shard.features().select_rows(shard.train_idx());
            let mut r = RngStream::derive(options.seed, StreamTag::Probes, 1 + shard.client_id() as u64);
            estimate_lambda_h(&train, options.hypothesis_radius, options.n_directions, options.ascent_steps, &mut r)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let pooled_train: Vec<usize> = dataset
        .shards()
        .iter()
        .flat_map(|s| s.train_idx().iter().map(|&r| s.labels()[r]))
        .collect();
    let l1_proxy_i = dataset
        .shards()
        .iter()
        .map(|s| {
            let own: Vec<usize> = s.train_idx().iter().map(|&r| s.labels()[r]).collect();
            l1_divergence_proxy(&own, &pooled_train, dataset.n_classes())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DiversityReport {
        zeta_i,
        zeta,
        gd_max_grad_norm: delta.as_ref().map(|d| d.max_grad_norm),
        delta_i: delta.map(|d| d.delta_i),
        gamma,
        lambda_i,
        l1_proxy_i,
        l1_proxy_kind: "label_histogram".into(),
        probes_used: probes.len(),
        gd_tolerance: options.gd_tolerance,
        options: options.clone(),
    })
}

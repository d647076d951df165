//! Local objectives: multinomial logistic regression and a ReLU MLP, both with
//! hand-derived gradients.

mod batch;
mod logistic;
mod mlp;
mod objective;

use serde::{Deserialize, Serialize};

use crate::datagen::Shard;
use crate::error::{Error, Result};
use crate::numkit::{argmax, Matrix, ParamVector, RngStream};

pub use batch::Batch;
pub use objective::{minimize, MeanObjective, Objective, Quadratic, ShardObjective, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d_feat: usize,
    pub n_classes: usize,
    /// L2 weight on every parameter. Logistic only.
    pub l2_reg: f64,
    /// Hidden layer widths. MLP only.
    pub hidden_sizes: Vec<usize>,
}

impl ModelSpec {
    pub fn logistic(d_feat: usize, n_classes: usize, l2_reg: f64) -> Self {
        Self {
            kind: ModelKind::Logistic,
            d_feat,
            n_classes,
            l2_reg,
            hidden_sizes: Vec::new(),
        }
    }

    pub fn mlp(d_feat: usize, n_classes: usize, hidden_sizes: Vec<usize>) -> Self {
        Self {
            kind: ModelKind::Mlp,
            d_feat,
            n_classes,
            l2_reg: 0.0,
            hidden_sizes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_feat == 0 || self.n_classes < 2 {
            return Err(Error::invalid(format!(
                "model needs d_feat >= 1 and n_classes >= 2, got {} and {}",
                self.d_feat, self.n_classes
            )));
        }
        if !(self.l2_reg >= 0.0) || !self.l2_reg.is_finite() {
            return Err(Error::invalid(format!("l2_reg must be >= 0, got {}", self.l2_reg)));
        }
        if self.kind == ModelKind::Mlp && self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub(crate) fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.d_feat];
        if self.kind == ModelKind::Mlp {
            sizes.extend_from_slice(&self.hidden_sizes);
        }
        sizes.push(self.n_classes);
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Logistic: zeros. MLP: weights uniform in `±sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init_params(&self, rng: &mut RngStream) -> ParamVector {
        match self.kind {
            ModelKind::Logistic => ParamVector::zeros(self.param_count()),
            ModelKind::Mlp => {
                let mut values = Vec::with_capacity(self.param_count());
                for w in self.layer_sizes().windows(2) {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    values.extend((0..fan_in * fan_out).map(|_| rng.uniform_range(-limit, limit)));
                    values.extend(std::iter::repeat_n(0.0, fan_out));
                }
                ParamVector::from_vec_unchecked(values)
            }
        }
    }

    fn check(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if batch.features().cols() != self.d_feat {
            return Err(Error::DimensionMismatch {
                expected: self.d_feat,
                got: batch.features().cols(),
            });
        }
        if let Some(label) = batch.iter_labels().find(|&l| l >= self.n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: self.n_classes,
            });
        }
        Ok(())
    }

    pub fn loss(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<f64> {
        self.check(params, batch)?;
        let value = match self.kind {
            ModelKind::Logistic => logistic::loss(self, params.as_slice(), batch),
            ModelKind::Mlp => mlp::loss_and_grad(self, params.as_slice(), batch, None),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite("loss"))
        }
    }

    pub fn grad(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<ParamVector> {
        self.loss_and_grad(params, batch).map(|(_, g)| g)
    }

    pub fn loss_and_grad(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<(f64, ParamVector)> {
        self.check(params, batch)?;
        let mut g = vec![0.0; params.len()];
        let value = match self.kind {
            ModelKind::Logistic => logistic::loss_and_grad(self, params.as_slice(), batch, &mut g),
            ModelKind::Mlp => mlp::loss_and_grad(self, params.as_slice(), batch, Some(&mut g)),
        };
        let g = ParamVector::new(g)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((value, g))
    }

    /// Class scores for one input row.
    pub fn scores(&self, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if x.len() != self.d_feat {
            return Err(Error::DimensionMismatch {
                expected: self.d_feat,
                got: x.len(),
            });
        }
        Ok(match self.kind {
            ModelKind::Logistic => logistic::scores(self, params.as_slice(), x),
            ModelKind::Mlp => mlp::scores(self, params.as_slice(), x),
        })
    }

    /// Argmax class per row; ties go to the lowest class index.
    pub fn predict(&self, params: &ParamVector, features: &Matrix) -> Result<Vec<usize>> {
        (0..features.rows())
            .map(|r| self.scores(params, features.row(r)).map(|s| argmax(&s)))
            .collect()
    }

    /// Fraction of batch rows classified correctly.
    pub fn accuracy(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<f64> {
        let mut correct = 0usize;
        for (x, y) in batch.iter() {
            if argmax(&self.scores(params, x)?) == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / batch.len() as f64)
    }

    /// `(mu, L)` for the regularized logistic objective on `features`:
    /// `mu = l2_reg`, `L = l2_reg + max ||(x, 1)||^2 / 2` (the softmax Hessian
    /// has spectral norm at most 1/2). `None` for the MLP or `l2_reg == 0`.
    pub fn curvature_bounds(&self, features: &Matrix) -> Option<(f64, f64)> {
        if self.kind != ModelKind::Logistic || self.l2_reg <= 0.0 {
            return None;
        }
        let r2 = features.max_row_norm_sq() + 1.0;
        Some((self.l2_reg, self.l2_reg + 0.5 * r2))
    }

    /// Smallest |pre-activation| of any hidden unit over the batch; infinite
    /// for models without ReLUs. Finite differences are unreliable when this is
    /// comparable to the step.
    pub fn min_relu_margin(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<f64> {
        self.check(params, batch)?;
        Ok(match self.kind {
            ModelKind::Logistic => f64::INFINITY,
            ModelKind::Mlp => mlp::min_relu_margin(self, params.as_slice(), batch),
        })
    }
}

/// Maximum over coordinates of `|analytic - numeric| / (|analytic| + epsilon)`,
/// where `numeric` is the fourth-order central difference with step `epsilon`.
pub fn fd_check(spec: &ModelSpec, params: &ParamVector, batch: &Batch<'_>, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    let analytic = spec.grad(params, batch)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let base = params.as_slice()[k];
        let mut at = |offset: f64| -> Result<f64> {
            probe.as_mut_slice()[k] = base + offset;
            spec.loss(&probe, batch)
        };
        let (p1, m1) = (at(epsilon)?, at(-epsilon)?);
        let (p2, m2) = (at(2.0 * epsilon)?, at(-2.0 * epsilon)?);
        probe.as_mut_slice()[k] = base;
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon);
        let a = analytic.as_slice()[k];
        worst = worst.max((a - numeric).abs() / (a.abs() + epsilon));
    }
    Ok(worst)
}

/// Batch over the training rows of a shard.
pub fn train_batch(shard: &Shard) -> Batch<'_> {
    Batch::from_rows(shard.features(), shard.labels(), shard.train_idx())
}

/// Batch over the validation rows of a shard.
pub fn val_batch(shard: &Shard) -> Batch<'_> {
    Batch::from_rows(shard.features(), shard.labels(), shard.val_idx())
}

/// Numerically stable `ln(sum(exp(z)))`.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Overwrites `z` with `softmax(z)` and returns `ln(sum(exp(z)))` of the input.
pub(crate) fn softmax_in_place(z: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
    m + s.ln()
}

#[cfg(test)]
mod tests;

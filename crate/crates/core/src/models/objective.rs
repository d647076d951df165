//! Full-batch objectives and a deterministic solver for them.

use crate::datagen::Shard;
use crate::error::{Error, Result};
use crate::numkit::{dot, ParamVector};

use super::{train_batch, ModelSpec};

/// A differentiable function of a parameter vector, evaluated without
/// minibatch noise.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn loss(&self, params: &ParamVector) -> Result<f64>;
    fn grad(&self, params: &ParamVector) -> Result<ParamVector>;
    /// `(mu, L)` when the objective is known to be `mu`-strongly convex and
    /// `L`-smooth.
    fn curvature(&self) -> Option<(f64, f64)> {
        None
    }
}

/// A client's local objective `f_i` over its training rows.
#[derive(Debug, Clone, Copy)]
pub struct ShardObjective<'a> {
    pub spec: &'a ModelSpec,
    pub shard: &'a Shard,
}

impl Objective for ShardObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, params: &ParamVector) -> Result<f64> {
        self.spec.loss(params, &train_batch(self.shard))
    }

    fn grad(&self, params: &ParamVector) -> Result<ParamVector> {
        self.spec.grad(params, &train_batch(self.shard))
    }

    fn curvature(&self) -> Option<(f64, f64)> {
        self.spec.curvature_bounds(self.shard.features())
    }
}

/// `F = (1/n) sum_i f_i`, summed in slice order.
#[derive(Debug, Clone, Copy)]
pub struct MeanObjective<'a, O> {
    parts: &'a [O],
}

impl<'a, O: Objective> MeanObjective<'a, O> {
    pub fn new(parts: &'a [O]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("mean of zero objectives"));
        }
        Ok(Self { parts })
    }
}

impl<O: Objective> Objective for MeanObjective<'_, O> {
    fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    fn loss(&self, params: &ParamVector) -> Result<f64> {
        let mut total = 0.0;
        for p in self.parts {
            total += p.loss(params)?;
        }
        Ok(total / self.parts.len() as f64)
    }

    fn grad(&self, params: &ParamVector) -> Result<ParamVector> {
        let grads = self
            .parts
            .iter()
            .map(|p| p.grad(params))
            .collect::<Result<Vec<_>>>()?;
        crate::numkit::mean(&grads)
    }

    fn curvature(&self) -> Option<(f64, f64)> {
        let mut mu = f64::INFINITY;
        let mut l = 0.0f64;
        for p in self.parts {
            let (m, s) = p.curvature()?;
            mu = mu.min(m);
            l = l.max(s);
        }
        Some((mu, l))
    }
}

/// `f(x) = (scale / 2) * ||x - center||^2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub center: ParamVector,
    pub scale: f64,
}

impl Quadratic {
    pub fn new(center: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::invalid("quadratic scale must be positive"));
        }
        Ok(Self {
            center: ParamVector::new(center)?,
            scale,
        })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, params: &ParamVector) -> Result<f64> {
        Ok(0.5 * self.scale * params.dist_sq(&self.center)?)
    }

    fn grad(&self, params: &ParamVector) -> Result<ParamVector> {
        params.sub(&self.center)?.scale(self.scale)
    }

    fn curvature(&self) -> Option<(f64, f64)> {
        Some((self.scale, self.scale))
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub minimizer: ParamVector,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Full-batch accelerated gradient descent with step `1/L`, momentum
/// `(sqrt(kappa) - 1) / (sqrt(kappa) + 1)` and gradient-based restarts.
/// Stops when `||grad|| <= tol` at the current iterate.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    start: &ParamVector,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let (mu, l) = objective
        .curvature()
        .ok_or_else(|| Error::invalid("solver needs a strongly convex objective"))?;
    if !(tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let kappa_sqrt = (l / mu).sqrt();
    let momentum = (kappa_sqrt - 1.0) / (kappa_sqrt + 1.0);
    let step = 1.0 / l;

    let mut x = start.clone();
    let mut x_prev = start.clone();
    let mut g = objective.grad(&x)?;
    let mut gnorm = g.norm_sq().sqrt();
    let mut iterations = 0;
    while gnorm > tol && iterations < max_iter {
        let velocity = x.sub(&x_prev)?;
        let mut y = x.clone();
        y.axpy_assign(momentum, &velocity)?;
        let gy = objective.grad(&y)?;
        let mut next = y;
        next.axpy_assign(-step, &gy)?;
        let moved = next.sub(&x)?;
        x_prev = if dot(&gy, &moved)? > 0.0 { next.clone() } else { x };
        x = next;
        g = objective.grad(&x)?;
        gnorm = g.norm_sq().sqrt();
        iterations += 1;
    }
    Ok(SolveReport {
        minimizer: x,
        grad_norm: gnorm,
        iterations,
        converged: gnorm <= tol,
    })
}

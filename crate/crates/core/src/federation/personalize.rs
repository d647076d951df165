use rand::seq::SliceRandom;

use crate::datagen::Shard;
use crate::error::{Error, Result};
use crate::models::{Batch, ModelSpec};
use crate::numkit::{mix, ParamVector, RngStream, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonalizeOptions {
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Adapts a frozen global model to a client that took no part in training.
///
/// Starting from `v = global`, each epoch walks the shard's training rows in a
/// fresh shuffled order in minibatches and applies
/// `v <- v - lr * alpha * grad(alpha * v + (1 - alpha) * global)`.
/// Returns the mixed model `alpha * v + (1 - alpha) * global`.
pub fn personalize_new_client(
    spec: &ModelSpec,
    global: &ParamVector,
    shard: &Shard,
    options: &PersonalizeOptions,
) -> Result<ParamVector> {
    let PersonalizeOptions {
        alpha,
        epochs,
        lr,
        batch_size,
        seed,
    } = *options;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha={alpha} outside [0, 1]")));
    }
    if epochs == 0 || batch_size == 0 || !(lr > 0.0) {
        return Err(Error::invalid("epochs, batch_size and lr must be positive"));
    }
    if shard.train_idx().is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = RngStream::derive(seed, StreamTag::Personalize, shard.client_id() as u64);
    let mut v = global.clone();
    let mut order = shard.train_idx().to_vec();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch = Batch::with_owned_rows(shard.features(), shard.labels(), chunk.to_vec());
            let g = spec.grad(&mix(alpha, &v, global)?, &batch)?;
            v.axpy_assign(-lr * alpha, &g)?;
        }
    }
    mix(alpha, &v, global)
}

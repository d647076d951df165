//! Federated datasets: the synthetic heterogeneous generator, label-skew and
//! IID partitioners, per-shard train/validation splits, and CSV I/O.

mod csv_io;
mod partition;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream, StreamTag};

pub use csv_io::{load_csv_dataset, write_csv_dataset};
pub use partition::{partition_by_label, partition_iid};
pub use synthetic::{gen_synthetic, gen_synthetic_with_truth, SyntheticParams};

/// One client's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    client_id: usize,
    features: Matrix,
    labels: Vec<usize>,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
}

impl Shard {
    /// A shard whose rows are all training rows.
    pub fn new(client_id: usize, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        let train_idx = (0..labels.len()).collect();
        Ok(Self {
            client_id,
            features,
            labels,
            train_idx,
            val_idx: Vec::new(),
        })
    }

    pub fn client_id(&self) -> usize {
        self.client_id
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn val_idx(&self) -> &[usize] {
        &self.val_idx
    }

    pub(crate) fn with_client_id(mut self, id: usize) -> Self {
        self.client_id = id;
        self
    }
}

/// Generator name, parameters, and seed of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FederatedDataset {
    shards: Vec<Shard>,
    d_feat: usize,
    n_classes: usize,
    provenance: Provenance,
}

impl FederatedDataset {
    pub fn new(
        shards: Vec<Shard>,
        d_feat: usize,
        n_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, s) in shards.iter().enumerate() {
            if s.client_id != i {
                return Err(Error::invalid(format!(
                    "shard at position {i} has client_id {}",
                    s.client_id
                )));
            }
            if s.features.cols() != d_feat {
                return Err(Error::DimensionMismatch {
                    expected: d_feat,
                    got: s.features.cols(),
                });
            }
            if let Some(&label) = s.labels.iter().find(|&&l| l >= n_classes) {
                return Err(Error::LabelOutOfRange { label, n_classes });
            }
        }
        Ok(Self {
            shards,
            d_feat,
            n_classes,
            provenance,
        })
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn n_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn d_feat(&self) -> usize {
        self.d_feat
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Applies [`split_train_val`] to every shard.
    pub fn split_all(mut self, val_fraction: f64, seed: u64) -> Result<Self> {
        self.shards = self
            .shards
            .iter()
            .map(|s| split_train_val(s, val_fraction, seed))
            .collect::<Result<_>>()?;
        self.provenance
            .parameters
            .insert("val_fraction".into(), val_fraction.into());
        Ok(self)
    }

    /// Removes and returns shard `id`; remaining shards are renumbered densely.
    pub fn hold_out(mut self, id: usize) -> Result<(Self, Shard)> {
        if id >= self.shards.len() || self.shards.len() < 2 {
            return Err(Error::invalid(format!(
                "cannot hold out client {id} of {}",
                self.shards.len()
            )));
        }
        let held = self.shards.remove(id);
        self.shards = self
            .shards
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.with_client_id(i))
            .collect();
        self.provenance
            .parameters
            .insert("held_out_client".into(), id.into());
        Ok((self, held))
    }

    /// All rows of every shard, in client order.
    pub fn pooled(&self) -> (Matrix, Vec<usize>) {
        let total: usize = self.shards.iter().map(Shard::len).sum();
        let mut data = Vec::with_capacity(total * self.d_feat);
        let mut labels = Vec::with_capacity(total);
        for s in &self.shards {
            data.extend_from_slice(s.features.as_slice());
            labels.extend_from_slice(&s.labels);
        }
        (
            Matrix::from_vec(total, self.d_feat, data).expect("consistent widths"),
            labels,
        )
    }
}

/// Chooses `round(rows * val_fraction)` validation rows uniformly, clamped so
/// both sides keep at least one row.
pub fn split_train_val(shard: &Shard, val_fraction: f64, seed: u64) -> Result<Shard> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let rows = shard.len();
    if rows < 2 {
        return Err(Error::invalid(format!(
            "shard {} has {rows} rows; need at least 2 to split",
            shard.client_id
        )));
    }
    let n_val = ((rows as f64 * val_fraction).round() as usize).clamp(1, rows - 1);
    let mut rng = RngStream::derive(seed, StreamTag::Split, shard.client_id as u64);
    let mut val_idx = rand::seq::index::sample(&mut rng, rows, n_val).into_vec();
    val_idx.sort_unstable();
    let mut is_val = vec![false; rows];
    for &i in &val_idx {
        is_val[i] = true;
    }
    let train_idx = (0..rows).filter(|&i| !is_val[i]).collect();
    Ok(Shard {
        train_idx,
        val_idx,
        ..shard.clone()
    })
}

/// Normalized label histogram over `n_classes` bins.
pub fn label_histogram(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut h = vec![0.0; n_classes];
    for &l in labels {
        h[l] += 1.0;
    }
    if !labels.is_empty() {
        let n = labels.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
    }
    h
}

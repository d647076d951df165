//! Heterogeneous synthetic classification data.
//!
//! For client `i`:
//!
//! ```text
//! mu_i ~ N(0, gamma)          W_i[j][k] ~ N(mu_i, 1)    b_i[j] ~ N(mu_i, 1)
//! V_i  ~ N(0, beta)           nu_i[k]   ~ N(V_i, 1)
//! x    ~ N(nu_i, Sigma)       Sigma_kk = k^-1.2  (k = 1..d)
//! y    = argmax_j (W_i x + b_i)_j
//! ```
//!
//! `gamma` and `beta` are variances. Zero variance yields the mean exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{affine, argmax, gaussian_vector, Matrix, Mean, ParamVector, RngStream, StreamTag};

use super::{FederatedDataset, Provenance, Shard};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub gamma: f64,
    pub beta: f64,
    pub n_clients: usize,
    pub samples_per_client: usize,
    pub d_feat: usize,
    pub n_classes: usize,
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::invalid(format!(
                "gamma and beta must be >= 0, got ({}, {})",
                self.gamma, self.beta
            )));
        }
        if self.n_clients == 0 || self.samples_per_client == 0 || self.d_feat == 0 {
            return Err(Error::invalid(
                "n_clients, samples_per_client and d_feat must be positive",
            ));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid(format!(
                "n_classes must be >= 2, got {}",
                self.n_classes
            )));
        }
        Ok(())
    }
}

pub fn gen_synthetic(params: &SyntheticParams, seed: u64) -> Result<FederatedDataset> {
    gen_synthetic_with_truth(params, seed).map(|(ds, _)| ds)
}

/// Also returns each client's generating model, laid out as a multinomial
/// logistic parameter vector (`W` row-major by class, then `b`).
pub fn gen_synthetic_with_truth(
    params: &SyntheticParams,
    seed: u64,
) -> Result<(FederatedDataset, Vec<ParamVector>)> {
    params.validate()?;
    let d = params.d_feat;
    let c = params.n_classes;
    let input_sd: Vec<f64> = (1..=d).map(|k| (k as f64).powf(-1.2).sqrt()).collect();

    let mut shards = Vec::with_capacity(params.n_clients);
    let mut truths = Vec::with_capacity(params.n_clients);
    for i in 0..params.n_clients {
        let mut rng = RngStream::derive(seed, StreamTag::SyntheticClient, i as u64);
        let mu = gaussian_vector(&mut rng, 1, Mean::Scalar(0.0), params.gamma.sqrt())?.as_slice()[0];
        let w = gaussian_vector(&mut rng, c * d, Mean::Scalar(mu), 1.0)?;
        let b = gaussian_vector(&mut rng, c, Mean::Scalar(mu), 1.0)?;
        let v = gaussian_vector(&mut rng, 1, Mean::Scalar(0.0), params.beta.sqrt())?.as_slice()[0];
        let nu = gaussian_vector(&mut rng, d, Mean::Scalar(v), 1.0)?;

        let mut data = Vec::with_capacity(params.samples_per_client * d);
        let mut labels = Vec::with_capacity(params.samples_per_client);
        let mut logits = vec![0.0; c];
        for _ in 0..params.samples_per_client {
            let x: Vec<f64> = nu
                .as_slice()
                .iter()
                .zip(&input_sd)
                .map(|(m, s)| m + s * rng.standard_normal())
                .collect();
            affine(w.as_slice(), b.as_slice(), &x, &mut logits);
            labels.push(argmax(&logits));
            data.extend_from_slice(&x);
        }
        let features = Matrix::from_vec(params.samples_per_client, d, data)?;
        shards.push(Shard::new(i, features, labels)?);

        let mut truth = w.into_vec();
        truth.extend_from_slice(b.as_slice());
        truths.push(ParamVector::new(truth)?);
    }

    let parameters = match serde_json::to_value(params) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => unreachable!("SyntheticParams serializes to an object"),
    };
    let provenance = Provenance {
        generator: "synthetic".into(),
        parameters,
        seed,
    };
    Ok((FederatedDataset::new(shards, d, c, provenance)?, truths))
}

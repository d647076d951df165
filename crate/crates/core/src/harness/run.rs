//! Orchestration behind the CLI subcommands. All files are written here, on
//! the calling thread.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::datagen::{load_csv_dataset, split_train_val, write_csv_dataset, Shard};
use crate::diagnostics::{diagnose, DiagnoseOptions, DiversityReport};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::federation::{personalize_new_client, PersonalizeOptions, RunResult, Simulation};
use crate::models::val_batch;
use crate::numkit::ParamVector;

use super::config::{ExperimentConfig, Resolved};
use super::io::{read_models, write_metrics, write_models};
use super::provenance::{build_provenance, config_from_provenance, read_provenance, spec_from_provenance, write_provenance};

pub const METRICS_FILE: &str = "metrics.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const MODELS_FILE: &str = "models.bin";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// Runs the experiment. With `collect_trajectory` the server model after
/// every aggregation is returned as well.
pub fn execute(
    config: &ExperimentConfig,
    exec: Execution,
    collect_trajectory: bool,
) -> Result<(Resolved, RunResult, Vec<ParamVector>)> {
    let resolved = config.resolve()?;
    let mut sim = Simulation::new(&resolved.run, &resolved.spec, &resolved.dataset)?.with_execution(exec);
    let mut trajectory = Vec::new();
    while !sim.is_done() {
        sim.step()?;
        if collect_trajectory && (sim.iteration() % config.tau == 0 || sim.is_done()) {
            trajectory.push(sim.server().w.clone());
        }
    }
    let result = sim.run()?;
    Ok((resolved, result, trajectory))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `run`: writes metrics, provenance, the final global and personalized
/// models, and (when enabled) the diversity report into `out_dir`.
pub fn run_to_dir(config: &ExperimentConfig, out_dir: &Path, exec: Execution) -> Result<RunResult> {
    let (resolved, result, trajectory) = execute(config, exec, config.diagnostics)?;
    create_dir(out_dir)?;
    write_metrics(&out_dir.join(METRICS_FILE), &result.rows)?;
    write_provenance(&out_dir.join(PROVENANCE_FILE), &build_provenance(config, &resolved)?)?;
    let mut models = vec![result.final_global().clone()];
    models.extend(result.final_personalized().iter().cloned());
    write_models(&out_dir.join(MODELS_FILE), &models)?;
    if config.diagnostics {
        let options = DiagnoseOptions {
            seed: config.seed,
            ..Default::default()
        };
        let report = diagnose(&resolved.spec, &resolved.dataset, &trajectory, &options, exec)?;
        write_json(&out_dir.join(DIAGNOSTICS_FILE), &report)?;
    }
    Ok(result)
}

/// `diagnose`: rebuilds the run's dataset from its provenance and probes the
/// saved models.
pub fn diagnose_run(run_dir: &Path, exec: Execution) -> Result<DiversityReport> {
    let prov = read_provenance(&run_dir.join(PROVENANCE_FILE))?;
    let config = config_from_provenance(&prov)?;
    let resolved = config.resolve()?;
    let probes = read_models(&run_dir.join(MODELS_FILE))?;
    let options = DiagnoseOptions {
        seed: config.seed,
        ..Default::default()
    };
    diagnose(&resolved.spec, &resolved.dataset, &probes, &options, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonalizeSummary {
    pub train_rows: usize,
    pub val_rows: usize,
    pub global_val_acc: f64,
    pub personalized_val_acc: f64,
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
}

/// `personalize`: adapts the run's global model to a new client's CSV shard
/// and writes the result as a one-vector checkpoint.
pub fn personalize_run(
    run_dir: &Path,
    csv: &Path,
    alpha: f64,
    epochs: usize,
    lr: f64,
    out: &Path,
) -> Result<PersonalizeSummary> {
    let prov = read_provenance(&run_dir.join(PROVENANCE_FILE))?;
    let config = config_from_provenance(&prov)?;
    let spec = spec_from_provenance(&prov)?;
    let models = read_models(&run_dir.join(MODELS_FILE))?;
    let global = models
        .first()
        .ok_or_else(|| Error::Format("checkpoint holds no global model".into()))?;
    let (features, labels) = load_csv_dataset(csv)?;
    if features.cols() != spec.d_feat {
        return Err(Error::DimensionMismatch {
            expected: spec.d_feat,
            got: features.cols(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= spec.n_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            n_classes: spec.n_classes,
        });
    }
    let shard = split_train_val(&Shard::new(0, features, labels)?, config.val_fraction, config.seed)?;
    let options = PersonalizeOptions {
        alpha,
        epochs,
        lr,
        batch_size: config.batch_size,
        seed: config.seed,
    };
    let personalized = personalize_new_client(&spec, global, &shard, &options)?;
    write_models(out, std::slice::from_ref(&personalized))?;
    let val = val_batch(&shard);
    Ok(PersonalizeSummary {
        train_rows: shard.train_idx().len(),
        val_rows: shard.val_idx().len(),
        global_val_acc: spec.accuracy(global, &val)?,
        personalized_val_acc: spec.accuracy(&personalized, &val)?,
        alpha,
        epochs,
        lr,
    })
}

/// `gen-data`: writes one headerless `label,features...` file per client.
pub fn gen_data(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let dataset = config.build_dataset()?;
    create_dir(out_dir)?;
    let mut paths = Vec::with_capacity(dataset.n_clients());
    for shard in dataset.shards() {
        let path = out_dir.join(format!("client_{:04}.csv", shard.client_id()));
        write_csv_dataset(&path, shard.features(), shard.labels())?;
        paths.push(path);
    }
    write_json(&out_dir.join("dataset.json"), dataset.provenance())?;
    Ok(paths)
}

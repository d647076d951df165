//! Experiment configuration: TOML parsing, defaults, validation, and
//! resolution into the engine's inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{gen_synthetic, load_csv_dataset, partition_by_label, partition_iid, FederatedDataset, SyntheticParams};
use crate::error::{Error, Result};
use crate::federation::{AlphaCadence, AlphaMode, LrSchedule, Mode, RunConfig};
use crate::models::{ModelKind, ModelSpec, Objective, ShardObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "defaults::tau")]
    pub tau: usize,
    #[serde(rename = "T")]
    pub total_iterations: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub alpha: AlphaConfig,
    #[serde(default = "defaults::yes")]
    pub chain_rule: bool,
    #[serde(default = "defaults::cadence")]
    pub alpha_update_cadence: AlphaCadence,
    #[serde(default)]
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    #[serde(default = "defaults::val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub lr: LrConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::one")]
    pub eval_every: usize,
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub record_wallclock: bool,
}

mod defaults {
    use crate::federation::AlphaCadence;

    pub fn tau() -> usize {
        10
    }
    pub fn batch_size() -> usize {
        20
    }
    pub fn yes() -> bool {
        true
    }
    pub fn one() -> usize {
        1
    }
    pub fn cadence() -> AlphaCadence {
        AlphaCadence::PerRound
    }
    pub fn val_fraction() -> f64 {
        0.2
    }
    pub fn l2_reg() -> f64 {
        1e-2
    }
    pub fn hidden() -> Vec<usize> {
        vec![200, 200]
    }
    pub fn per_client() -> usize {
        200
    }
    pub fn d_feat() -> usize {
        60
    }
    pub fn n_classes() -> usize {
        10
    }
    pub fn eta0() -> f64 {
        0.1
    }
    pub fn decay() -> f64 {
        0.01
    }
    pub fn numerator() -> f64 {
        16.0
    }
    pub fn a_factor() -> f64 {
        128.0
    }
}

/// Exactly one of `fixed` or `adaptive` (the initial value). Absent means
/// the mode's natural value: 0 for FedAvg, 1 for local-only, 0.25 for APFL.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "logistic")]
    pub kind: ModelKind,
    #[serde(default = "defaults::l2_reg")]
    pub l2_reg: f64,
    #[serde(default = "defaults::hidden")]
    pub hidden_sizes: Vec<usize>,
}

fn logistic() -> ModelKind {
    ModelKind::Logistic
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Logistic,
            l2_reg: defaults::l2_reg(),
            hidden_sizes: defaults::hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub gamma: f64,
    pub beta: f64,
    #[serde(default = "defaults::per_client")]
    pub per_client: usize,
    #[serde(default = "defaults::d_feat")]
    pub d_feat: usize,
    #[serde(default = "defaults::n_classes")]
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Iid,
    ByLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    pub path: PathBuf,
    pub partition: PartitionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes_per_client: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrKind {
    Theory,
    Geometric,
    Constant,
}

/// Step sizes. `mu` and `kappa` of the theory schedule default to the
/// analytic curvature bounds of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrConfig {
    #[serde(default = "geometric")]
    pub kind: LrKind,
    #[serde(default = "defaults::eta0")]
    pub eta0: f64,
    #[serde(default = "defaults::decay")]
    pub decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "defaults::numerator")]
    pub numerator: f64,
    #[serde(default = "defaults::a_factor")]
    pub a_factor: f64,
}

fn geometric() -> LrKind {
    LrKind::Geometric
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            kind: LrKind::Geometric,
            eta0: defaults::eta0(),
            decay: defaults::decay(),
            eta: None,
            mu: None,
            kappa: None,
            numerator: defaults::numerator(),
            a_factor: defaults::a_factor(),
        }
    }
}

/// Parses and validates a TOML document. The mode-dependent alpha default is
/// written back so the returned config has no implicit fields.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    config.materialize_alpha();
    config.validate()?;
    Ok(config)
}

/// Reads a config file. A relative CSV path is taken relative to the file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut config = parse_config(&text)?;
    if let Some(csv) = &mut config.dataset.csv {
        if csv.path.is_relative() {
            if let Some(dir) = path.parent() {
                csv.path = dir.join(&csv.path);
            }
        }
    }
    Ok(config)
}

impl ExperimentConfig {
    fn materialize_alpha(&mut self) {
        if self.alpha.fixed.is_none() && self.alpha.adaptive.is_none() {
            self.alpha.fixed = Some(match self.mode {
                Mode::Apfl => 0.25,
                Mode::Fedavg => 0.0,
                Mode::LocalOnly => 1.0,
            });
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let (value, _) = self.alpha_setting()?;
        if !(0.0..=1.0).contains(&value) {
            let key = if self.alpha.fixed.is_some() { "alpha.fixed" } else { "alpha.adaptive" };
            return fail(format!("{key}={value} outside [0, 1]"));
        }
        match self.mode {
            Mode::Fedavg if self.alpha.adaptive.is_some() || value != 0.0 => {
                return fail(format!("mode=fedavg requires alpha.fixed = 0, got {value}"));
            }
            Mode::LocalOnly if self.alpha.adaptive.is_some() || value != 1.0 => {
                return fail(format!("mode=local_only requires alpha.fixed = 1, got {value}"));
            }
            _ => {}
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail(format!("val_fraction={} outside (0, 1)", self.val_fraction));
        }
        match (&self.dataset.synthetic, &self.dataset.csv) {
            (Some(_), Some(_)) | (None, None) => {
                return fail("exactly one of dataset.synthetic or dataset.csv is required".into());
            }
            (Some(s), None) => {
                if !(s.gamma >= 0.0 && s.beta >= 0.0) {
                    return fail(format!("dataset.synthetic gamma={} beta={} must be >= 0", s.gamma, s.beta));
                }
            }
            (None, Some(c)) => {
                if c.partition == PartitionKind::ByLabel && c.classes_per_client.is_none() {
                    return fail("dataset.csv.partition = by_label needs classes_per_client".into());
                }
            }
        }
        match self.lr.kind {
            LrKind::Constant if self.lr.eta.is_none() => return fail("lr.kind = constant needs lr.eta".into()),
            LrKind::Theory if self.model.kind != ModelKind::Logistic && self.lr.mu.is_none() => {
                return fail("lr.kind = theory needs lr.mu for a non-logistic model".into());
            }
            _ => {}
        }
        self.run_config(LrSchedule::Constant { eta: 1.0 })?.validate()
    }

    fn alpha_setting(&self) -> Result<(f64, AlphaMode)> {
        match (self.alpha.fixed, self.alpha.adaptive) {
            (Some(a), None) => Ok((a, AlphaMode::Fixed)),
            (None, Some(a)) => Ok((a, AlphaMode::Adaptive)),
            (None, None) => Ok((0.0, AlphaMode::Fixed)),
            (Some(_), Some(_)) => Err(Error::Config("set only one of alpha.fixed and alpha.adaptive".into())),
        }
    }

    fn run_config(&self, schedule: LrSchedule) -> Result<RunConfig> {
        let (alpha, alpha_mode) = self.alpha_setting()?;
        Ok(RunConfig {
            mode: self.mode,
            n: self.n,
            k: self.k,
            tau: self.tau,
            total_iterations: self.total_iterations,
            batch_size: self.batch_size,
            alpha,
            alpha_mode,
            chain_rule: self.chain_rule,
            alpha_update_cadence: self.alpha_update_cadence,
            schedule,
            seed: self.seed,
            eval_every: self.eval_every,
            record_wallclock: self.record_wallclock,
        })
    }

    /// Builds the federated dataset (already split into train/validation).
    pub fn build_dataset(&self) -> Result<FederatedDataset> {
        let dataset = if let Some(s) = &self.dataset.synthetic {
            let params = SyntheticParams {
                gamma: s.gamma,
                beta: s.beta,
                n_clients: self.n,
                samples_per_client: s.per_client,
                d_feat: s.d_feat,
                n_classes: s.n_classes,
            };
            gen_synthetic(&params, self.seed)?
        } else if let Some(c) = &self.dataset.csv {
            let (features, labels) = load_csv_dataset(&c.path)?;
            match c.partition {
                PartitionKind::Iid => partition_iid(&features, &labels, self.n, self.seed)?,
                PartitionKind::ByLabel => {
                    let cpc = c.classes_per_client.unwrap_or(1);
                    partition_by_label(&features, &labels, cpc, self.n, self.seed)?
                }
            }
        } else {
            return Err(Error::Config("no dataset configured".into()));
        };
        dataset.split_all(self.val_fraction, self.seed)
    }

    pub fn model_spec(&self, dataset: &FederatedDataset) -> ModelSpec {
        match self.model.kind {
            ModelKind::Logistic => ModelSpec::logistic(dataset.d_feat(), dataset.n_classes(), self.model.l2_reg),
            ModelKind::Mlp => ModelSpec::mlp(dataset.d_feat(), dataset.n_classes(), self.model.hidden_sizes.clone()),
        }
    }

    /// The concrete schedule, filling theory `mu`/`kappa` from the curvature
    /// bounds of the clients' training data.
    pub fn schedule(&self, spec: &ModelSpec, dataset: &FederatedDataset) -> Result<LrSchedule> {
        let lr = &self.lr;
        let schedule = match lr.kind {
            LrKind::Geometric => LrSchedule::Geometric {
                eta0: lr.eta0,
                decay: lr.decay,
            },
            LrKind::Constant => LrSchedule::Constant {
                eta: lr.eta.ok_or_else(|| Error::Config("lr.eta missing".into()))?,
            },
            LrKind::Theory => {
                let bounds = || {
                    let objectives: Vec<_> = dataset.shards().iter().map(|shard| ShardObjective { spec, shard }).collect();
                    crate::models::MeanObjective::new(&objectives)
                        .ok()
                        .and_then(|f| f.curvature())
                        .ok_or_else(|| Error::Config("theory schedule needs lr.mu and lr.kappa for this model".into()))
                };
                let (mu, kappa) = match (lr.mu, lr.kappa) {
                    (Some(mu), Some(kappa)) => (mu, kappa),
                    (mu, kappa) => {
                        let (m, l) = bounds()?;
                        let mu = mu.unwrap_or(m);
                        (mu, kappa.unwrap_or(l / mu))
                    }
                };
                LrSchedule::Theory {
                    mu,
                    kappa,
                    tau: self.tau,
                    numerator: lr.numerator,
                    a_factor: lr.a_factor,
                }
            }
        };
        schedule.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(schedule)
    }

    /// Everything the engine needs.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let dataset = self.build_dataset()?;
        if dataset.n_clients() != self.n {
            return Err(Error::Config(format!("dataset has {} clients, n={}", dataset.n_clients(), self.n)));
        }
        let spec = self.model_spec(&dataset);
        spec.validate()?;
        let schedule = self.schedule(&spec, &dataset)?;
        let run = self.run_config(schedule)?;
        Ok(Resolved { dataset, spec, run })
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub dataset: FederatedDataset,
    pub spec: ModelSpec,
    pub run: RunConfig,
}

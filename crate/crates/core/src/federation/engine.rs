//! The round engine.
//!
//! Iterations are numbered `t = 1..=T`. At every iteration each selected
//! client draws one minibatch from its own stream, optionally updates its
//! mixing weight, and takes a local step. Every `tau` iterations (and at `T`)
//! the server averages the selected clients' `w_local`, metrics are recorded,
//! and a new selection receives the averaged model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::FederatedDataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{train_batch, val_batch, Batch, ModelSpec};
use crate::numkit::{mean, mix, ParamVector, RngStream, StreamTag};

use super::client::{AlphaMode, ClientState};
use super::schedule::LrSchedule;
use super::server::{aggregate, select_and_broadcast, ServerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Apfl,
    /// APFL with the mixing weight pinned to 0.
    Fedavg,
    /// Every client trains alone every iteration; no aggregation.
    LocalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaCadence {
    PerStep,
    /// First iteration of each communication period.
    PerRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub n: usize,
    pub k: usize,
    pub tau: usize,
    pub total_iterations: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub alpha_mode: AlphaMode,
    pub chain_rule: bool,
    pub alpha_update_cadence: AlphaCadence,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Communication rounds between metric rows.
    pub eval_every: usize,
    pub record_wallclock: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return fail("n must be >= 1".into());
        }
        if self.k == 0 {
            return fail("K must be >= 1".into());
        }
        if self.k > self.n {
            return fail(format!("K={} > n={}", self.k, self.n));
        }
        if self.tau == 0 {
            return fail("tau must be >= 1".into());
        }
        if self.total_iterations < self.tau {
            return fail(format!("T={} < tau={}", self.total_iterations, self.tau));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha={} outside [0, 1]", self.alpha));
        }
        if self.eval_every == 0 {
            return fail("eval_every must be >= 1".into());
        }
        self.schedule.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Mode overrides: FedAvg pins alpha to 0, local-only pins it to 1 and
    /// selects every client.
    fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        match c.mode {
            Mode::Apfl => {}
            Mode::Fedavg => {
                c.alpha = 0.0;
                c.alpha_mode = AlphaMode::Fixed;
            }
            Mode::LocalOnly => {
                c.alpha = 1.0;
                c.alpha_mode = AlphaMode::Fixed;
                c.k = c.n;
            }
        }
        c
    }

    pub fn rounds(&self) -> usize {
        self.total_iterations.div_ceil(self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub iteration: usize,
    pub pers_train_loss: f64,
    pub pers_val_acc: f64,
    pub locglob_train_loss: f64,
    pub locglob_val_acc: f64,
    pub global_val_acc: f64,
    pub mean_alpha: f64,
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub rows: Vec<MetricsRow>,
    /// `p_t`-weighted average of the selected clients' mean `w_local`.
    pub global_avg: ParamVector,
    pub global_last: ParamVector,
    /// Per client `p_t`-weighted average of `alpha v + (1 - alpha) mean(w_j)`.
    pub personalized_avg: Vec<ParamVector>,
    pub personalized_last: Vec<ParamVector>,
    pub alphas: Vec<f64>,
    /// Smallest and largest mixing weight seen at any iteration.
    pub alpha_range: (f64, f64),
    pub weighted_output: bool,
}

impl RunResult {
    /// Weighted average under the theory schedule, last iterate otherwise.
    pub fn final_global(&self) -> &ParamVector {
        if self.weighted_output {
            &self.global_avg
        } else {
            &self.global_last
        }
    }

    pub fn final_personalized(&self) -> &[ParamVector] {
        if self.weighted_output {
            &self.personalized_avg
        } else {
            &self.personalized_last
        }
    }
}

/// Stream that drives client `id`'s minibatch draws.
pub fn client_rng(seed: u64, id: usize) -> RngStream {
    RngStream::derive(seed, StreamTag::ClientBatches, id as u64)
}

/// Uniform minibatch of `min(batch_size, rows.len())` distinct training rows.
pub fn draw_minibatch(rng: &mut RngStream, rows: &[usize], batch_size: usize) -> Vec<usize> {
    let take = batch_size.min(rows.len());
    rand::seq::index::sample(rng, rows.len(), take)
        .into_iter()
        .map(|i| rows[i])
        .collect()
}

/// Stepwise driver for one run. [`run_experiment`] runs it to completion.
pub struct Simulation<'a> {
    config: RunConfig,
    spec: &'a ModelSpec,
    dataset: &'a FederatedDataset,
    server: ServerState,
    clients: Vec<ClientState>,
    execution: Execution,
    rows: Vec<MetricsRow>,
    alpha_range: (f64, f64),
    started: Instant,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &RunConfig, spec: &'a ModelSpec, dataset: &'a FederatedDataset) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        if dataset.n_clients() != config.n {
            return Err(Error::Config(format!(
                "dataset has {} clients but n={}",
                dataset.n_clients(),
                config.n
            )));
        }
        if dataset.d_feat() != spec.d_feat || dataset.n_classes() > spec.n_classes {
            return Err(Error::Config(format!(
                "model ({} features, {} classes) does not fit dataset ({} features, {} classes)",
                spec.d_feat,
                spec.n_classes,
                dataset.d_feat(),
                dataset.n_classes()
            )));
        }
        if let Some(s) = dataset.shards().iter().find(|s| s.train_idx().is_empty()) {
            return Err(Error::Config(format!("client {} has no training rows", s.client_id())));
        }
        let config = config.effective();
        let init = spec.init_params(&mut RngStream::derive(config.seed, StreamTag::ModelInit, 0));
        let mut clients: Vec<ClientState> = (0..config.n)
            .map(|i| ClientState::new(i, init.clone(), config.alpha, config.alpha_mode, client_rng(config.seed, i)))
            .collect();
        let mut server = ServerState::new(init, RngStream::derive(config.seed, StreamTag::Selection, 0));
        select_and_broadcast(&mut server, &mut clients, config.k)?;
        Ok(Self {
            alpha_range: (config.alpha, config.alpha),
            config,
            spec,
            dataset,
            server,
            clients,
            execution: Execution::default(),
            rows: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn iteration(&self) -> usize {
        self.server.t
    }

    pub fn is_done(&self) -> bool {
        self.server.t >= self.config.total_iterations
    }

    /// Advances one iteration, including the synchronization boundary when
    /// one falls on it.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::invalid("run already complete"));
        }
        let t = self.server.t + 1;
        self.advance(t).map_err(|e| match e {
            Error::Numerical { .. } => e,
            other => Error::Numerical {
                iteration: t,
                source: Box::new(other),
            },
        })
    }

    fn advance(&mut self, t: usize) -> Result<()> {
        let cfg = &self.config;
        let eta = cfg.schedule.eta(t);
        let adapt = cfg.alpha_mode == AlphaMode::Adaptive
            && (cfg.alpha_update_cadence == AlphaCadence::PerStep || (t - 1).is_multiple_of(cfg.tau));
        let mut selected = vec![false; cfg.n];
        for &i in &self.server.current_selection {
            selected[i] = true;
        }

        let (spec, dataset, batch_size, chain_rule) = (self.spec, self.dataset, cfg.batch_size, cfg.chain_rule);
        let outcomes = self.execution.map_mut(&mut self.clients, |c| -> Result<()> {
            if !selected[c.id] {
                return Ok(());
            }
            let shard = &dataset.shards()[c.id];
            let rows = draw_minibatch(&mut c.rng, shard.train_idx(), batch_size);
            let batch = Batch::with_owned_rows(shard.features(), shard.labels(), rows);
            let grad = |p: &ParamVector| spec.grad(p, &batch);
            if adapt {
                c.update_alpha(eta, grad)?;
            }
            c.local_step(eta, chain_rule, grad)
        });
        outcomes.into_iter().collect::<Result<Vec<()>>>()?;
        self.server.t = t;

        for c in &self.clients {
            self.alpha_range.0 = self.alpha_range.0.min(c.alpha());
            self.alpha_range.1 = self.alpha_range.1.max(c.alpha());
        }

        let weight = self.config.schedule.weight(t);
        let mean_w = mean(self.server.current_selection.iter().map(|&i| &self.clients[i].w_local))?;
        self.server.out_acc_w.add(weight, mean_w.as_slice())?;
        let mean_w_ref = &mean_w;
        self.execution
            .map_mut(&mut self.clients, |c| -> Result<()> {
                let mixed = mix(c.alpha(), &c.v, mean_w_ref)?;
                c.out_acc_v.add(weight, mixed.as_slice())
            })
            .into_iter()
            .collect::<Result<Vec<()>>>()?;

        let boundary = t.is_multiple_of(self.config.tau) || t == self.config.total_iterations;
        if !boundary {
            return Ok(());
        }
        let communicates = self.config.mode != Mode::LocalOnly;
        if communicates {
            aggregate(&mut self.server, &self.clients)?;
        }
        let round = t.div_ceil(self.config.tau);
        if round.is_multiple_of(self.config.eval_every) || t == self.config.total_iterations {
            let mut row = evaluate(self.spec, self.dataset, &self.server, &self.clients, self.execution)?;
            row.round = round;
            row.iteration = t;
            if self.config.record_wallclock {
                row.wallclock_ms = self.started.elapsed().as_millis() as u64;
            }
            self.rows.push(row);
        }
        if communicates && t < self.config.total_iterations {
            select_and_broadcast(&mut self.server, &mut self.clients, self.config.k)?;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<RunResult> {
        while !self.is_done() {
            self.step()?;
        }
        self.finish()
    }

    fn finish(self) -> Result<RunResult> {
        let server_w = &self.server.w;
        let personalized_last = self
            .clients
            .iter()
            .map(|c| mix(c.alpha(), &c.v, server_w))
            .collect::<Result<Vec<_>>>()?;
        let personalized_avg = self
            .clients
            .iter()
            .map(|c| c.out_acc_v.finalize())
            .collect::<Result<Vec<_>>>()?;
        Ok(RunResult {
            rows: self.rows,
            global_avg: self.server.out_acc_w.finalize()?,
            global_last: self.server.w.clone(),
            personalized_avg,
            personalized_last,
            alphas: self.clients.iter().map(ClientState::alpha).collect(),
            alpha_range: self.alpha_range,
            weighted_output: self.config.schedule.uses_weighted_output(),
        })
    }
}

pub fn run_experiment(config: &RunConfig, spec: &ModelSpec, dataset: &FederatedDataset) -> Result<RunResult> {
    Simulation::new(config, spec, dataset)?.run()
}

/// Client-averaged metrics. Clients outside the current selection are scored
/// with the server model standing in for their local copy.
pub fn evaluate(
    spec: &ModelSpec,
    dataset: &FederatedDataset,
    server: &ServerState,
    clients: &[ClientState],
    execution: Execution,
) -> Result<MetricsRow> {
    let mut selected = vec![false; clients.len()];
    for &i in &server.current_selection {
        selected[i] = true;
    }
    let per_client = execution.map(clients, |c| -> Result<[f64; 5]> {
        let shard = &dataset.shards()[c.id];
        let train = train_batch(shard);
        let val = if shard.val_idx().is_empty() { train.clone() } else { val_batch(shard) };
        let local_global = if selected[c.id] { &c.w_local } else { &server.w };
        let personalized = mix(c.alpha(), &c.v, local_global)?;
        Ok([
            spec.loss(&personalized, &train)?,
            spec.accuracy(&personalized, &val)?,
            spec.loss(local_global, &train)?,
            spec.accuracy(local_global, &val)?,
            spec.accuracy(&server.w, &val)?,
        ])
    });
    let mut sums = [0.0; 5];
    for r in per_client {
        for (s, v) in sums.iter_mut().zip(r?) {
            *s += v;
        }
    }
    let n = clients.len() as f64;
    Ok(MetricsRow {
        round: 0,
        iteration: server.t,
        pers_train_loss: sums[0] / n,
        pers_val_acc: sums[1] / n,
        locglob_train_loss: sums[2] / n,
        locglob_val_acc: sums[3] / n,
        global_val_acc: sums[4] / n,
        mean_alpha: clients.iter().map(ClientState::alpha).sum::<f64>() / n,
        wallclock_ms: 0,
    })
}

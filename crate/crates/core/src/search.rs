//! Random search over the neural Cox hyperparameter space.

use std::io::{BufRead, Write};
use std::time::Instant;

use ndarray::ArrayView2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::OutcomeColumn;
use crate::metrics::concordance_index;
use crate::neural::{
    train, Activation, HyperConfig, NeuralCoxModel, Optimizer, Topology, TrainOptions, DROPOUT_RANGE,
    LEARNING_RATE_RANGE, MOMENTUM_RANGE, WEIGHT_DECAY_RANGE,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search budget must be at least 1")]
    EmptyBudget,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("all {} trials failed: {}", .trials.len(), summarize_failures(.trials))]
    AllTrialsFailed { trials: Vec<TrialRecord> },
    #[error("trial log: {0}")]
    Log(String),
}

fn summarize_failures(trials: &[TrialRecord]) -> String {
    trials
        .iter()
        .map(|t| format!("#{} {}", t.index, t.failure.as_deref().unwrap_or("?")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Categorical choices plus bounded continuous ranges. Fields are fixed at
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    activations: Vec<Activation>,
    topologies: Vec<Topology>,
    batch_norm: Vec<bool>,
    optimizers: Vec<Optimizer>,
    dropout: (f64, f64),
    weight_decay: (f64, f64),
    momentum: (f64, f64),
    /// Sampled log-uniformly.
    learning_rate: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            activations: Activation::ALL.to_vec(),
            topologies: Topology::all(),
            batch_norm: vec![true, false],
            optimizers: vec![Optimizer::Sgd, Optimizer::Adam],
            dropout: DROPOUT_RANGE,
            weight_decay: WEIGHT_DECAY_RANGE,
            momentum: MOMENTUM_RANGE,
            learning_rate: LEARNING_RATE_RANGE,
        }
    }
}

impl SearchSpace {
    /// Restricts the topology choices, e.g. to keep desk-scale runs short.
    /// Every topology must belong to the default space.
    pub fn with_topologies(topologies: Vec<Topology>) -> Result<Self, SearchError> {
        if topologies.is_empty() {
            return Err(SearchError::InvalidSpace("no topologies".into()));
        }
        if let Some(t) = topologies.iter().find(|t| !t.is_allowed()) {
            return Err(SearchError::InvalidSpace(format!("topology {t} is outside the search space")));
        }
        Ok(Self {
            topologies,
            ..Self::default()
        })
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn topologies(&self) -> &[Topology] {
        &self.topologies
    }

    pub fn dropout(&self) -> (f64, f64) {
        self.dropout
    }

    pub fn weight_decay(&self) -> (f64, f64) {
        self.weight_decay
    }

    pub fn momentum(&self) -> (f64, f64) {
        self.momentum
    }

    pub fn learning_rate(&self) -> (f64, f64) {
        self.learning_rate
    }
}

/// Draws every dimension independently.
pub fn sample_config<R: Rng>(space: &SearchSpace, rng: &mut R) -> HyperConfig {
    let uniform = |rng: &mut R, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
    let activation = *space.activations.choose(rng).expect("activations");
    let topology = space.topologies.choose(rng).expect("topologies").clone();
    let batch_norm = *space.batch_norm.choose(rng).expect("batch norm");
    let optimizer = *space.optimizers.choose(rng).expect("optimizers");
    let dropout = uniform(rng, space.dropout);
    let weight_decay = uniform(rng, space.weight_decay);
    let momentum = uniform(rng, space.momentum);
    let (lo, hi) = space.learning_rate;
    let learning_rate = uniform(rng, (lo.ln(), hi.ln())).exp().clamp(lo, hi);
    HyperConfig {
        activation,
        topology,
        dropout,
        weight_decay,
        batch_norm,
        optimizer,
        momentum,
        learning_rate,
    }
}

/// The first `budget` configurations of the stream for `seed`. A larger
/// budget extends a smaller one.
pub fn sample_configs(space: &SearchSpace, budget: usize, seed: u64) -> Vec<HyperConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..budget).map(|_| sample_config(space, &mut rng)).collect()
}

/// Training seed of trial `index`, independent of the budget.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + index as u64);
    rng.random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub config: HyperConfig,
    /// `None` when the trial failed; ranked as +infinity.
    pub val_loss: Option<f64>,
    pub val_cindex: Option<f64>,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    /// Seconds.
    pub wall_time: f64,
    pub failure: Option<String>,
}

impl TrialRecord {
    fn score(&self) -> f64 {
        self.val_loss.unwrap_or(f64::INFINITY)
    }
}

/// Train and validation splits.
#[derive(Debug, Clone, Copy)]
pub struct SearchData<'a> {
    pub train_x: ArrayView2<'a, f64>,
    pub train_y: &'a OutcomeColumn,
    pub val_x: ArrayView2<'a, f64>,
    pub val_y: &'a OutcomeColumn,
    pub input_columns: &'a [String],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub budget: usize,
    pub seed: u64,
    pub train: TrainOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            budget: 20,
            seed: 0,
            train: TrainOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_index: usize,
    pub best_model: NeuralCoxModel,
    pub trials: Vec<TrialRecord>,
}

impl SearchOutcome {
    pub fn best(&self) -> &TrialRecord {
        &self.trials[self.best_index]
    }
}

fn run_trial(index: usize, config: HyperConfig, data: &SearchData<'_>, options: &SearchOptions) -> (TrialRecord, Option<NeuralCoxModel>) {
    let start = Instant::now();
    let seed = trial_seed(options.seed, index);
    let train_options = TrainOptions {
        seed,
        ..options.train
    };
    let result = NeuralCoxModel::new(config.clone(), data.input_columns.to_vec(), seed)
        .and_then(|m| train(m, data.train_x, data.train_y, data.val_x, data.val_y, &train_options));
    let mut record = TrialRecord {
        index,
        seed,
        config,
        val_loss: None,
        val_cindex: None,
        epochs_run: 0,
        best_epoch: None,
        wall_time: 0.0,
        failure: None,
    };
    let model = match result {
        Ok(model) => {
            let best = model.best_epoch.and_then(|e| model.history.iter().find(|h| h.epoch == e));
            record.val_loss = best.map(|h| h.val_loss);
            record.epochs_run = model.history.len();
            record.best_epoch = model.best_epoch;
            let eta = model.network.predict(data.val_x);
            record.val_cindex = concordance_index(&eta, &data.val_y.duration, &data.val_y.event).ok();
            if record.val_loss.is_none() {
                record.failure = Some("no finite validation loss".into());
                None
            } else {
                Some(model)
            }
        }
        Err(e) => {
            log::warn!("trial {index} failed: {e}");
            record.failure = Some(e.to_string());
            None
        }
    };
    record.wall_time = start.elapsed().as_secs_f64();
    (record, model)
}

/// Trains one model per sampled configuration and keeps the one with the
/// lowest validation loss (ties go to the earlier trial).
pub fn search(space: &SearchSpace, data: &SearchData<'_>, options: &SearchOptions) -> Result<SearchOutcome, SearchError> {
    if options.budget == 0 {
        return Err(SearchError::EmptyBudget);
    }
    let configs = sample_configs(space, options.budget, options.seed);
    let results: Vec<(TrialRecord, Option<NeuralCoxModel>)> = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| run_trial(i, c, data, options))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (rec, model) in &results {
        if model.is_some() && best.is_none_or(|(_, b)| rec.score() < b) {
            best = Some((rec.index, rec.score()));
        }
    }
    let mut trials = Vec::with_capacity(results.len());
    let mut best_model = None;
    for (rec, model) in results {
        if best.is_some_and(|(i, _)| i == rec.index) {
            best_model = model;
        }
        trials.push(rec);
    }
    match (best, best_model) {
        (Some((best_index, _)), Some(best_model)) => {
            log::info!(
                "search: best trial {best_index} of {} (val loss {:.6})",
                trials.len(),
                trials[best_index].score()
            );
            Ok(SearchOutcome {
                best_index,
                best_model,
                trials,
            })
        }
        _ => Err(SearchError::AllTrialsFailed { trials }),
    }
}

/// Lowest validation loss among the first `k` trials, for each `k`.
pub fn running_best(trials: &[TrialRecord]) -> Vec<f64> {
    trials
        .iter()
        .scan(f64::INFINITY, |b, t| {
            *b = b.min(t.score());
            Some(*b)
        })
        .collect()
}

/// One JSON object per line.
pub fn write_trial_log<W: Write>(trials: &[TrialRecord], mut out: W) -> Result<(), SearchError> {
    for t in trials {
        let line = serde_json::to_string(t).map_err(|e| SearchError::Log(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| SearchError::Log(e.to_string()))?;
    }
    Ok(())
}

pub fn read_trial_log<R: BufRead>(input: R) -> Result<Vec<TrialRecord>, SearchError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| SearchError::Log(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SearchError::Log(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

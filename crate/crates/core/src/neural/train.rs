use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Optimizer;
use super::{HyperConfig, NeuralCoxModel, NeuralError};
use crate::cohort::OutcomeColumn;
use crate::cox::breslow_from_eta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    /// `None` trains full-batch. Minibatches use batch-local risk sets,
    /// which only approximates the full partial likelihood.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 512,
            patience: 10,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// First-order optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub enum OptimizerState {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl OptimizerState {
    pub fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => Self::Sgd { velocity: vec![0.0; n] },
            Optimizer::Adam => Self::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    /// SGD: `v = momentum * v + g; p -= lr * v`. Adam: bias-corrected moments.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], learning_rate: f64, momentum: f64) {
        match self {
            Self::Sgd { velocity } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *v = momentum * *v + g;
                    *p -= learning_rate * *v;
                }
            }
            Self::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for i in 0..params.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    params[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPSILON);
                }
            }
        }
    }
}

fn diverged(epoch: usize, config: &HyperConfig) -> NeuralError {
    NeuralError::Diverged {
        epoch,
        config: serde_json::to_string(config).unwrap_or_default(),
    }
}

/// Trains with early stopping on validation loss and returns the model at
/// its best validation epoch, with eval-mode batch-norm statistics and the
/// Breslow baseline computed on the training set.
pub fn train(
    mut model: NeuralCoxModel,
    train_x: ArrayView2<f64>,
    train_y: &OutcomeColumn,
    val_x: ArrayView2<f64>,
    val_y: &OutcomeColumn,
    options: &TrainOptions,
) -> Result<NeuralCoxModel, NeuralError> {
    model.check_input(&train_x)?;
    model.check_input(&val_x)?;
    if train_x.nrows() != train_y.len() || val_x.nrows() != val_y.len() {
        return Err(NeuralError::Dimension("design and outcome lengths differ".into()));
    }
    if train_y.n_events() == 0 {
        return Err(NeuralError::NoEvents("training split"));
    }
    if val_y.n_events() == 0 {
        return Err(NeuralError::NoEvents("validation split"));
    }
    let config = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut state = OptimizerState::new(config.optimizer, model.network.parameter_count());
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut stale = 0usize;

    for epoch in 1..=options.max_epochs {
        let batches: Vec<Vec<usize>> = match options.batch_size {
            None => vec![(0..train_y.len()).collect()],
            Some(size) => {
                let mut idx: Vec<usize> = (0..train_y.len()).collect();
                idx.shuffle(&mut rng);
                idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
            }
        };
        let mut loss_sum = 0.0;
        let mut used = 0usize;
        for rows in &batches {
            let (bx, by) = if batches.len() == 1 {
                (train_x.to_owned(), train_y.clone())
            } else {
                (train_x.select(Axis(0), rows), train_y.select(rows))
            };
            if by.n_events() == 0 {
                log::warn!("epoch {epoch}: batch without events skipped");
                continue;
            }
            let dropout_seed = (config.dropout > 0.0).then(|| rng.random::<u64>());
            let (loss, grad) = model.loss_and_gradients(bx.view(), &by, dropout_seed)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(epoch, &config));
            }
            let mut params = model.network.parameters();
            state.step(&mut params, &grad, config.learning_rate, config.momentum);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(diverged(epoch, &config));
            }
            model.network.set_parameters(&params);
            loss_sum += loss;
            used += 1;
        }
        if used == 0 {
            return Err(NeuralError::NoEvents("every training batch"));
        }
        model.network.refresh_batch_norm(train_x);
        let val_eta = model.network.predict(val_x);
        let val_loss = super::neg_partial_loglik_loss(&val_eta, val_y).ok_or(NeuralError::NoEvents("validation split"))?;
        if !val_loss.is_finite() {
            return Err(diverged(epoch, &config));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / used as f64,
            val_loss,
        });
        match &best {
            Some((b, _, _)) if val_loss >= *b => {
                stale += 1;
                if stale > options.patience {
                    break;
                }
            }
            _ => {
                best = Some((val_loss, epoch, model.network.parameters()));
                stale = 0;
            }
        }
    }
    if let Some((_, epoch, params)) = best {
        model.network.set_parameters(&params);
        model.best_epoch = Some(epoch);
    }
    model.network.refresh_batch_norm(train_x);
    let eta = model.network.predict(train_x);
    model.baseline_cumhaz = breslow_from_eta(&eta, train_y);
    model.history = history;
    Ok(model)
}

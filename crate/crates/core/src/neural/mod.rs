//! Neural Cox model: a feed-forward network whose scalar output replaces
//! the Cox linear predictor, trained on the Efron partial likelihood.

mod config;
mod loss;
mod network;
mod train;

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    Activation, HyperConfig, Optimizer, Topology, DROPOUT_RANGE, LEAKY_SLOPE, LEARNING_RATE_RANGE, MOMENTUM_RANGE,
    SELU_ALPHA, SELU_LAMBDA, TOPOLOGIES, WEIGHT_DECAY_RANGE,
};
pub use loss::cox_loss_and_grad;
pub use network::{BatchNorm, Dense, HiddenLayer, Network, BN_EPSILON};
pub use train::{train, EpochRecord, OptimizerState, TrainOptions};

use crate::cohort::OutcomeColumn;
use crate::cox::{risk_from_eta, RiskPrediction};
use crate::step::StepFunction;
use network::Pass;

pub const MODEL_KIND: &str = "neural_cox";

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid hyperparameter '{field}': {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite input")]
    NonFinite,
    #[error("no events in {0}")]
    NoEvents(&'static str),
    #[error("training diverged at epoch {epoch} (config {config})")]
    Diverged { epoch: usize, config: String },
    #[error("model document: {0}")]
    Document(String),
}

/// Train-mode passes use batch statistics and, given a seed, dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Eval,
    Train { dropout_seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralCoxModel {
    pub model_kind: String,
    pub config: HyperConfig,
    pub input_columns: Vec<String>,
    pub seed: u64,
    pub network: Network,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
    #[serde(default)]
    pub best_epoch: Option<usize>,
    pub baseline_cumhaz: StepFunction,
}

/// Initializes a network for `input_width` unnamed inputs.
pub fn build_network(config: &HyperConfig, input_width: usize, seed: u64) -> Result<NeuralCoxModel, NeuralError> {
    let names = (1..=input_width).map(|j| format!("x{j}")).collect();
    NeuralCoxModel::new(config.clone(), names, seed)
}

/// Negative Efron partial log likelihood per event; `None` without events.
pub fn neg_partial_loglik_loss(log_risks: &[f64], outcome: &OutcomeColumn) -> Option<f64> {
    cox_loss_and_grad(log_risks, outcome).map(|(l, _)| l)
}

impl NeuralCoxModel {
    pub fn new(config: HyperConfig, input_columns: Vec<String>, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        if input_columns.is_empty() {
            return Err(NeuralError::Dimension("input width must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Network::new(&config, input_columns.len(), &mut rng);
        Ok(Self {
            model_kind: MODEL_KIND.to_string(),
            config,
            input_columns,
            seed,
            network,
            history: Vec::new(),
            best_epoch: None,
            baseline_cumhaz: StepFunction::zero(0.0),
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_columns.len()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NeuralError> {
        if x.ncols() != self.input_width() {
            return Err(NeuralError::Dimension(format!(
                "expected {} input columns, got {}",
                self.input_width(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite);
        }
        Ok(())
    }

    /// Log-risk per row.
    pub fn forward(&self, x: ArrayView2<f64>, mode: ForwardMode) -> Result<Vec<f64>, NeuralError> {
        self.check_input(&x)?;
        Ok(match mode {
            ForwardMode::Eval => self.network.predict(x),
            ForwardMode::Train { dropout_seed: None } => self.network.forward::<ChaCha8Rng>(x, Pass::Train(None)).0,
            ForwardMode::Train {
                dropout_seed: Some(seed),
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                self.network.forward(x, Pass::Train(Some(&mut rng))).0
            }
        })
    }

    /// Penalized training loss and its exact gradient with respect to
    /// [`Network::parameters`], from a train-mode pass.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        outcome: &OutcomeColumn,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Vec<f64>), NeuralError> {
        self.check_input(&x)?;
        if x.nrows() != outcome.len() {
            return Err(NeuralError::Dimension("design and outcome lengths differ".into()));
        }
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let (eta, cache) = self.network.forward(x, Pass::Train(rng.as_mut()));
        let (loss, d_eta) = cox_loss_and_grad(&eta, outcome).ok_or(NeuralError::NoEvents("batch"))?;
        let mut grad = self.network.backward(&cache, &d_eta);
        let penalty = self.add_weight_decay(&mut grad);
        Ok((loss + penalty, grad))
    }

    /// Adds `weight_decay * w` to the gradient of every affine weight and
    /// returns the penalty `weight_decay / 2 * |w|^2`.
    fn add_weight_decay(&self, grad: &mut [f64]) -> f64 {
        let wd = self.config.weight_decay;
        if wd == 0.0 {
            return 0.0;
        }
        let params = self.network.parameters();
        let mut penalty = 0.0;
        for ((g, p), is_weight) in grad.iter_mut().zip(&params).zip(self.network.weight_mask()) {
            if is_weight {
                *g += wd * p;
                penalty += 0.5 * wd * p * p;
            }
        }
        penalty
    }

    pub fn predict_risk(&self, x: &[f64], horizon: f64) -> Result<RiskPrediction, NeuralError> {
        let row = ArrayView2::from_shape((1, x.len()), x).map_err(|e| NeuralError::Dimension(e.to_string()))?;
        let eta = self.forward(row, ForwardMode::Eval)?[0];
        Ok(risk_from_eta(&self.baseline_cumhaz, eta, horizon))
    }

    pub fn predict_risks(&self, x: ArrayView2<f64>, horizon: f64) -> Result<Vec<f64>, NeuralError> {
        Ok(self
            .forward(x, ForwardMode::Eval)?
            .into_iter()
            .map(|eta| risk_from_eta(&self.baseline_cumhaz, eta, horizon).risk)
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let model: Self = serde_json::from_str(text).map_err(|e| NeuralError::Document(e.to_string()))?;
        if model.model_kind != MODEL_KIND {
            return Err(NeuralError::Document(format!("model_kind '{}' is not {MODEL_KIND}", model.model_kind)));
        }
        model.config.validate()?;
        let expected = Network::new(&model.config, model.input_columns.len(), &mut ChaCha8Rng::seed_from_u64(0));
        let layer_shapes_match = expected.shapes() == model.network.shapes()
            && expected
                .hidden
                .iter()
                .zip(&model.network.hidden)
                .all(|(a, b)| a.batch_norm.is_some() == b.batch_norm.is_some());
        if !layer_shapes_match || expected.parameter_count() != model.network.parameter_count() {
            return Err(NeuralError::Document("parameter shapes disagree with topology and input width".into()));
        }
        let sizes_ok = model.network.hidden.iter().map(|l| &l.dense).chain([&model.network.head]).all(|d| {
            d.weights.len() == d.inputs * d.outputs && d.bias.len() == d.outputs
        });
        if !sizes_ok {
            return Err(NeuralError::Document("flattened parameter arrays have the wrong length".into()));
        }
        Ok(model)
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Relu,
    Selu,
}

pub const LEAKY_SLOPE: f64 = 0.01;
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::LeakyRelu, Activation::Relu, Activation::Selu];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Self::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Self::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Hidden-layer widths, written `32x32`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology(pub Vec<usize>);

/// The ten topologies of the search space.
pub const TOPOLOGIES: [&[usize]; 10] = [
    &[8],
    &[32],
    &[256],
    &[32, 32],
    &[64, 64],
    &[128, 128],
    &[64, 16],
    &[256, 32],
    &[32, 32, 32],
    &[64, 64, 64],
];

impl Topology {
    pub fn widths(&self) -> &[usize] {
        &self.0
    }

    pub fn is_allowed(&self) -> bool {
        TOPOLOGIES.contains(&self.0.as_slice())
    }

    pub fn all() -> Vec<Topology> {
        TOPOLOGIES.iter().map(|t| Topology(t.to_vec())).collect()
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl FromStr for Topology {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let widths = s
            .split(['x', 'X', '×'])
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| NeuralError::InvalidConfig {
                field: "topology",
                message: format!("cannot parse '{s}'"),
            })?;
        if widths.is_empty() || widths.contains(&0) {
            return Err(NeuralError::InvalidConfig {
                field: "topology",
                message: format!("'{s}' has an empty layer"),
            });
        }
        Ok(Topology(widths))
    }
}

impl Serialize for Topology {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub activation: Activation,
    pub topology: Topology,
    pub dropout: f64,
    pub weight_decay: f64,
    pub batch_norm: bool,
    pub optimizer: Optimizer,
    /// Only used by SGD.
    #[serde(default)]
    pub momentum: f64,
    pub learning_rate: f64,
}

pub const DROPOUT_RANGE: (f64, f64) = (0.0, 0.9);
pub const WEIGHT_DECAY_RANGE: (f64, f64) = (0.0, 20.0);
pub const MOMENTUM_RANGE: (f64, f64) = (0.0, 1.0);
pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-5, 1.0);

fn in_range(field: &'static str, v: f64, (lo, hi): (f64, f64)) -> Result<(), NeuralError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(NeuralError::InvalidConfig {
            field,
            message: format!("{v} outside [{lo}, {hi}]"),
        })
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if !self.topology.is_allowed() {
            return Err(NeuralError::InvalidConfig {
                field: "topology",
                message: format!("'{}' is not one of the searchable topologies", self.topology),
            });
        }
        in_range("dropout", self.dropout, DROPOUT_RANGE)?;
        in_range("weight_decay", self.weight_decay, WEIGHT_DECAY_RANGE)?;
        in_range("momentum", self.momentum, MOMENTUM_RANGE)?;
        in_range("learning_rate", self.learning_rate, LEARNING_RATE_RANGE)
    }

    /// Best reduced-feature configuration reported for the original study.
    pub fn reported_reduced() -> Self {
        Self {
            activation: Activation::Relu,
            topology: Topology(vec![32, 32]),
            dropout: 0.3338,
            weight_decay: 0.0596,
            batch_norm: true,
            optimizer: Optimizer::Adam,
            momentum: 0.0,
            learning_rate: 0.000309,
        }
    }

    /// A plain starting point: one ReLU layer, Adam.
    pub fn simple(topology: &[usize]) -> Self {
        Self {
            activation: Activation::Relu,
            topology: Topology(topology.to_vec()),
            dropout: 0.0,
            weight_decay: 0.0,
            batch_norm: false,
            optimizer: Optimizer::Adam,
            momentum: 0.0,
            learning_rate: 1e-3,
        }
    }
}

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Activation, HyperConfig};

pub const BN_EPSILON: f64 = 1e-5;

/// Affine map with `outputs x inputs` weights stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init<R: Rng>(inputs: usize, outputs: usize, weight_bound: f64, bias_bound: f64, rng: &mut R) -> Self {
        let draw = |b: f64, rng: &mut R| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| draw(weight_bound, rng)).collect(),
            bias: (0..outputs).map(|_| draw(bias_bound, rng)).collect(),
        }
    }

    pub fn weight_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.outputs, self.inputs), &self.weights).expect("dense shape")
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight_view().t());
        z += &ArrayView2::from_shape((1, self.outputs), &self.bias).expect("bias shape");
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Statistics used in eval mode.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub batch_norm: Option<BatchNorm>,
}

/// Feed-forward network with a single linear output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub activation: Activation,
    pub dropout: f64,
    pub hidden: Vec<HiddenLayer>,
    pub head: Dense,
}

struct LayerCache {
    input: Array2<f64>,
    /// Normalized pre-activations and inverse batch sd, with batch norm.
    normalized: Option<(Array2<f64>, Array1<f64>)>,
    pre_activation: Array2<f64>,
    mask: Option<Array2<f64>>,
}

pub(crate) struct ForwardCache {
    layers: Vec<LayerCache>,
    head_input: Array2<f64>,
}

/// How a forward pass treats batch norm and dropout.
pub(crate) enum Pass<'a, R: Rng> {
    /// Stored statistics, no dropout.
    Eval,
    /// Batch statistics; dropout drawn from the generator when given.
    Train(Option<&'a mut R>),
}

impl Network {
    /// Uniform fan-in initialization: weights and biases in
    /// `±1/sqrt(fan_in)`. SELU weights use `±sqrt(3/fan_in)` (unit-variance
    /// scaling) and zero biases so the self-normalizing fixed point holds.
    pub fn new<R: Rng>(config: &HyperConfig, input_width: usize, rng: &mut R) -> Self {
        let mut hidden = Vec::new();
        let mut fan_in = input_width;
        let bounds = |fan_in: usize| {
            let f = fan_in as f64;
            match config.activation {
                Activation::Selu => ((3.0 / f).sqrt(), 0.0),
                _ => (1.0 / f.sqrt(), 1.0 / f.sqrt()),
            }
        };
        for &width in config.topology.widths() {
            let (wb, bb) = bounds(fan_in);
            hidden.push(HiddenLayer {
                dense: Dense::init(fan_in, width, wb, bb, rng),
                batch_norm: config.batch_norm.then(|| BatchNorm::new(width)),
            });
            fan_in = width;
        }
        let (wb, bb) = bounds(fan_in);
        Self {
            activation: config.activation,
            dropout: config.dropout,
            hidden,
            head: Dense::init(fan_in, 1, wb, bb, rng),
        }
    }

    pub fn input_width(&self) -> usize {
        self.hidden.first().map_or(self.head.inputs, |l| l.dense.inputs)
    }

    /// `(inputs, outputs)` per affine layer, head last.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.hidden
            .iter()
            .map(|l| &l.dense)
            .chain(std::iter::once(&self.head))
            .map(|d| (d.inputs, d.outputs))
            .collect()
    }

    pub(crate) fn forward<R: Rng>(&self, x: ArrayView2<f64>, mut pass: Pass<'_, R>) -> (Vec<f64>, ForwardCache) {
        let mut current = x.to_owned();
        let mut layers = Vec::with_capacity(self.hidden.len());
        let train = matches!(pass, Pass::Train(_));
        for layer in &self.hidden {
            let z = layer.dense.apply(&current.view());
            let (pre, normalized) = match &layer.batch_norm {
                None => (z, None),
                Some(bn) => {
                    let (mean, var) = if train {
                        batch_moments(&z)
                    } else {
                        (Array1::from(bn.mean.clone()), Array1::from(bn.var.clone()))
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
                    let xhat = (&z - &mean.view().insert_axis(Axis(0))) * &inv_std.view().insert_axis(Axis(0));
                    let gamma = ArrayView2::from_shape((1, bn.gamma.len()), &bn.gamma).unwrap();
                    let beta = ArrayView2::from_shape((1, bn.beta.len()), &bn.beta).unwrap();
                    let y = &xhat * &gamma + &beta;
                    (y, Some((xhat, inv_std)))
                }
            };
            let mut out = pre.mapv(|v| self.activation.apply(v));
            let mut mask = None;
            if let Pass::Train(Some(rng)) = &mut pass {
                if self.dropout > 0.0 {
                    let keep = 1.0 - self.dropout;
                    let m = Array2::from_shape_fn(out.raw_dim(), |_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    out *= &m;
                    mask = Some(m);
                }
            }
            layers.push(LayerCache {
                input: std::mem::replace(&mut current, out),
                normalized,
                pre_activation: pre,
                mask,
            });
        }
        let eta = self.head.apply(&current.view()).column(0).to_vec();
        (
            eta,
            ForwardCache {
                layers,
                head_input: current,
            },
        )
    }

    /// Deterministic eval-mode output.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.forward::<rand_chacha::ChaCha8Rng>(x, Pass::Eval).0
    }

    /// Gradient of a scalar loss given its derivative with respect to the
    /// outputs of the cached forward pass. Flat layout as [`Self::parameters`].
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Vec<f64> {
        let n = d_out.len();
        let g = Array2::from_shape_vec((n, 1), d_out.to_vec()).unwrap();
        let mut grads: Vec<Vec<f64>> = Vec::new();
        // head
        let dw_head = g.t().dot(&cache.head_input);
        grads.push(vec![g.sum()]);
        grads.push(dw_head.iter().copied().collect());
        let mut d_act = g.dot(&self.head.weight_view());
        for (layer, lc) in self.hidden.iter().zip(&cache.layers).rev() {
            if let Some(m) = &lc.mask {
                d_act *= m;
            }
            let mut d_pre = d_act;
            d_pre.zip_mut_with(&lc.pre_activation, |d, &y| *d *= self.activation.derivative(y));
            let d_z = match (&layer.batch_norm, &lc.normalized) {
                (Some(bn), Some((xhat, inv_std))) => {
                    let rows = xhat.nrows() as f64;
                    let d_gamma = (&d_pre * xhat).sum_axis(Axis(0));
                    let d_beta = d_pre.sum_axis(Axis(0));
                    let gamma = ArrayView2::from_shape((1, bn.gamma.len()), &bn.gamma).unwrap();
                    let d_xhat = &d_pre * &gamma;
                    let sum_d = d_xhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let sum_dx = (&d_xhat * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let d_z = (&d_xhat * rows - &sum_d - &(xhat * &sum_dx)) * &(inv_std / rows).insert_axis(Axis(0));
                    grads.push(d_beta.to_vec());
                    grads.push(d_gamma.to_vec());
                    d_z
                }
                _ => d_pre,
            };
            grads.push(d_z.sum_axis(Axis(0)).to_vec());
            grads.push(d_z.t().dot(&lc.input).iter().copied().collect());
            d_act = d_z.dot(&layer.dense.weight_view());
        }
        grads.reverse();
        // pushed back to front, so reversing yields the parameter order
        grads.concat()
    }

    /// Every trainable value: per hidden layer weights, bias, then batch-norm
    /// gamma and beta; head weights and bias last.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.hidden {
            out.extend_from_slice(&l.dense.weights);
            out.extend_from_slice(&l.dense.bias);
            if let Some(bn) = &l.batch_norm {
                out.extend_from_slice(&bn.gamma);
                out.extend_from_slice(&bn.beta);
            }
        }
        out.extend_from_slice(&self.head.weights);
        out.extend_from_slice(&self.head.bias);
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count(), "parameter count");
        let mut at = 0;
        let mut take = |dst: &mut Vec<f64>| {
            let k = dst.len();
            dst.copy_from_slice(&values[at..at + k]);
            at += k;
        };
        for l in &mut self.hidden {
            take(&mut l.dense.weights);
            take(&mut l.dense.bias);
            if let Some(bn) = &mut l.batch_norm {
                take(&mut bn.gamma);
                take(&mut bn.beta);
            }
        }
        take(&mut self.head.weights);
        take(&mut self.head.bias);
    }

    pub fn parameter_count(&self) -> usize {
        self.weight_mask().len()
    }

    /// True at positions holding affine weights (the weight-decay targets).
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        let mut push = |len: usize, flag: bool| out.extend(std::iter::repeat_n(flag, len));
        for l in &self.hidden {
            push(l.dense.weights.len(), true);
            push(l.dense.bias.len(), false);
            if let Some(bn) = &l.batch_norm {
                push(bn.gamma.len() + bn.beta.len(), false);
            }
        }
        push(self.head.weights.len(), true);
        push(self.head.bias.len(), false);
        out
    }

    /// Sets the eval-mode batch-norm statistics to the exact moments of a
    /// dropout-free pass over `x`.
    pub fn refresh_batch_norm(&mut self, x: ArrayView2<f64>) {
        if self.hidden.iter().all(|l| l.batch_norm.is_none()) {
            return;
        }
        let mut current = x.to_owned();
        for layer in &mut self.hidden {
            let z = layer.dense.apply(&current.view());
            let pre = match &mut layer.batch_norm {
                None => z,
                Some(bn) => {
                    let (mean, var) = batch_moments(&z);
                    bn.mean = mean.to_vec();
                    bn.var = var.to_vec();
                    let mut y = z;
                    for mut row in y.rows_mut() {
                        for j in 0..row.len() {
                            row[j] = bn.gamma[j] * (row[j] - mean[j]) / (var[j] + BN_EPSILON).sqrt() + bn.beta[j];
                        }
                    }
                    y
                }
            };
            current = pre.mapv(|v| self.activation.apply(v));
        }
    }

    /// Post-activation outputs of every hidden layer in eval mode.
    pub fn hidden_activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let (_, cache) = self.forward::<rand_chacha::ChaCha8Rng>(x, Pass::Eval);
        let mut outs: Vec<Array2<f64>> = cache.layers.into_iter().skip(1).map(|l| l.input).collect();
        outs.push(cache.head_input);
        outs
    }
}

/// Per-column mean and biased variance.
fn batch_moments(z: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = z - &mean.view().insert_axis(Axis(0));
    let var = (&centered * &centered).mean_axis(Axis(0)).expect("non-empty batch");
    (mean, var)
}

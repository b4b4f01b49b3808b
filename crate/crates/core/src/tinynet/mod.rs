//! A small fully-connected ReLU network with hand-derived gradients.
//!
//! Layers are stored row-major (`weights[o * in_dim + i]`). Every hidden layer
//! applies ReLU; the last layer is linear and emits logits.

mod optim;

pub use optim::{AdamConfig, OptimizerState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::LabelLevel;
use crate::losses;
use crate::rng::{self, Domain};

pub const CHECKPOINT_FORMAT: &str = "skdlab-dense-v1";

/// `log σ(z/τ)`, computed with max subtraction.
pub fn log_softmax_temperature(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    losses::check_tau(tau)?;
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|z| (z - max) / tau).collect();
    let log_norm = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    Ok(scaled.into_iter().map(|s| s - log_norm).collect())
}

/// `σ(z/τ)`; `τ = 1` is the plain softmax.
pub fn softmax_temperature(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    losses::check_tau(tau)?;
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| ((z - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Weights and biases of one dense layer (also used for gradients and
/// optimizer moments, which share the shape).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layer_dims: Vec<usize>,
    layers: Vec<LayerParams>,
}

/// Per-parameter gradients, shape-congruent with a [`DenseNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerParams>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            layers: net.zero_layers(),
        }
    }

    /// All entries, layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[LayerParams]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect()
}

/// What a batch is trained against.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    /// Cross-entropy on hard labels.
    CrossEntropy { labels: &'a [usize] },
    /// Softened KL against frozen teacher logits.
    Distill {
        teacher_logits: &'a [&'a [f64]],
        tau: f64,
    },
    /// `λ·CE + (1 − λ)·KL`.
    Blend {
        labels: &'a [usize],
        teacher_logits: &'a [&'a [f64]],
        tau: f64,
        lambda: f64,
    },
}

impl LossSpec<'_> {
    fn check(&self, batch: usize, width: usize) -> Result<()> {
        let (labels, teacher) = match *self {
            LossSpec::CrossEntropy { labels } => (Some(labels), None),
            LossSpec::Distill { teacher_logits, tau } => {
                losses::check_tau(tau)?;
                (None, Some(teacher_logits))
            }
            LossSpec::Blend {
                labels,
                teacher_logits,
                tau,
                lambda,
            } => {
                losses::check_tau(tau)?;
                losses::check_lambda(lambda)?;
                (Some(labels), Some(teacher_logits))
            }
        };
        if let Some(labels) = labels {
            if labels.len() != batch {
                return Err(Error::shape(format!("{} labels for {batch} inputs", labels.len())));
            }
            if let Some(&y) = labels.iter().find(|&&y| y >= width) {
                return Err(Error::shape(format!("label {y} outside {width} outputs")));
            }
        }
        if let Some(teacher) = teacher {
            if teacher.len() != batch {
                return Err(Error::shape(format!(
                    "{} teacher rows for {batch} inputs",
                    teacher.len()
                )));
            }
            if let Some(t) = teacher.iter().find(|t| t.len() != width) {
                return Err(Error::shape(format!(
                    "teacher emits {} logits, student emits {width}",
                    t.len()
                )));
            }
        }
        Ok(())
    }

    /// Loss and logit gradient of sample `i`.
    fn sample_loss_grad(&self, i: usize, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
        match *self {
            LossSpec::CrossEntropy { labels } => losses::cross_entropy_logit_grad(logits, labels[i]),
            LossSpec::Distill { teacher_logits, tau } => {
                losses::softened_kl_logit_grad(teacher_logits[i], logits, tau)
            }
            LossSpec::Blend {
                labels,
                teacher_logits,
                tau,
                lambda,
            } => {
                let (ce, g_ce) = losses::cross_entropy_logit_grad(logits, labels[i])?;
                let (kl, g_kl) = losses::softened_kl_logit_grad(teacher_logits[i], logits, tau)?;
                let loss = losses::student_objective(ce, kl, lambda)?;
                let grad = g_ce
                    .iter()
                    .zip(&g_kl)
                    .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                    .collect();
                Ok((loss, grad))
            }
        }
    }
}

impl DenseNetwork {
    /// He-uniform initialization: weights ~ U(−√(6/fan_in), √(6/fan_in)),
    /// biases zero. Weights are drawn layer by layer in row-major order.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        Self::check_dims(layer_dims)?;
        let mut rng = rng::stream(seed, Domain::Init, 0);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                LayerParams {
                    weights: (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Builds a network from explicit parameters.
    pub fn from_layers(layer_dims: &[usize], layers: Vec<LayerParams>) -> Result<Self> {
        Self::check_dims(layer_dims)?;
        if layers.len() != layer_dims.len() - 1 {
            return Err(Error::shape(format!(
                "{} layers for {} dims",
                layers.len(),
                layer_dims.len()
            )));
        }
        for (k, (l, w)) in layers.iter().zip(layer_dims.windows(2)).enumerate() {
            if l.weights.len() != w[0] * w[1] || l.biases.len() != w[1] {
                return Err(Error::shape(format!("layer {k} does not match {}x{}", w[1], w[0])));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} parameters")));
            }
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 {
            return Err(Error::invalid(format!(
                "a network needs at least input and output dims, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("layer dims must be positive, got {dims:?}")));
        }
        Ok(())
    }

    fn zero_layers(&self) -> Vec<LayerParams> {
        self.layer_dims
            .windows(2)
            .map(|w| LayerParams::zeros(w[0], w[1]))
            .collect()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    /// Activations of every layer; `acts[0]` is the input, the last entry the logits.
    fn activations(&self, features: &[f64]) -> Result<Vec<Vec<f64>>> {
        if features.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, network expects {}",
                features.len(),
                self.input_dim()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("input features".into()));
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(features.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let in_dim = input.len();
            let out: Vec<f64> = layer
                .biases
                .iter()
                .enumerate()
                .map(|(o, &b)| {
                    let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                    let z = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                    if k < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        Ok(acts)
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.activations(features)?.pop().unwrap())
    }

    pub fn forward_batch<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<Vec<Vec<f64>>> {
        inputs.iter().map(|x| self.forward(x.as_ref())).collect()
    }

    /// Batch-mean loss and its exact gradient with respect to every parameter.
    pub fn backward<X: AsRef<[f64]>>(
        &self,
        inputs: &[X],
        loss: &LossSpec<'_>,
    ) -> Result<(f64, GradientSet)> {
        if inputs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        loss.check(inputs.len(), self.output_dim())?;
        let scale = 1.0 / inputs.len() as f64;
        let mut grads = GradientSet::zeros_like(self);
        let mut total = 0.0;
        for (i, x) in inputs.iter().enumerate() {
            let acts = self.activations(x.as_ref())?;
            let (l, mut delta) = loss.sample_loss_grad(i, acts.last().unwrap())?;
            total += l;
            for k in (0..self.layers.len()).rev() {
                let input = &acts[k];
                let in_dim = input.len();
                let g = &mut grads.layers[k];
                for (o, &d) in delta.iter().enumerate() {
                    let d = d * scale;
                    g.biases[o] += d;
                    for (gw, &xi) in g.weights[o * in_dim..(o + 1) * in_dim].iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if k == 0 {
                    break;
                }
                // Propagate through W and the ReLU of the layer below.
                let w = &self.layers[k].weights;
                delta = (0..in_dim)
                    .map(|i| {
                        if input[i] > 0.0 {
                            delta.iter().enumerate().map(|(o, &d)| d * w[o * in_dim + i]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        let loss_value = total * scale;
        if !loss_value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok((loss_value, grads))
    }

    /// Batch-mean loss without gradients.
    pub fn loss<X: AsRef<[f64]>>(&self, inputs: &[X], loss: &LossSpec<'_>) -> Result<f64> {
        if inputs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        loss.check(inputs.len(), self.output_dim())?;
        let mut total = 0.0;
        for (i, x) in inputs.iter().enumerate() {
            let logits = self.forward(x.as_ref())?;
            total += loss.sample_loss_grad(i, &logits)?.0;
        }
        Ok(total / inputs.len() as f64)
    }

    pub fn to_checkpoint(&self, label_level: Option<LabelLevel>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            label_level,
            layer_dims: self.layer_dims.clone(),
            layers: self.layers.clone(),
        }
    }
}

/// JSON model file. Floats use shortest round-trip decimals, so a saved
/// network reloads bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_level: Option<LabelLevel>,
    pub layer_dims: Vec<usize>,
    pub layers: Vec<LayerParams>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "unsupported checkpoint format '{}' (expected {CHECKPOINT_FORMAT})",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }

    pub fn network(&self) -> Result<DenseNetwork> {
        DenseNetwork::from_layers(&self.layer_dims, self.layers.clone())
    }
}

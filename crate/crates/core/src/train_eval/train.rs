use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::LabelLevel;
use crate::losses::{DistillConfig, StudentMode};
use crate::rng::{self, Domain};
use crate::tinynet::{AdamConfig, DenseNetwork, LossSpec, OptimizerState};

/// Optimization settings for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub seed: u64,
    /// Only read by [`train_student`].
    pub distill: DistillConfig,
}

impl TrainConfig {
    /// Teacher defaults: d–64–32–K, 40 epochs.
    pub fn teacher_default(seed: u64) -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 40,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 5e-4,
            lr_decay: 0.91,
            seed,
            distill: DistillConfig {
                tau: 1.0,
                lambda: 1.0,
                mode: StudentMode::Baseline,
            },
        }
    }

    /// Student defaults: d–8–K, 30 epochs, SKD at τ = 5, λ = 0.45.
    pub fn student_default(seed: u64) -> Self {
        Self {
            hidden: vec![8],
            epochs: 30,
            distill: DistillConfig {
                tau: 5.0,
                lambda: 0.45,
                mode: StudentMode::Skd,
            },
            ..Self::teacher_default(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay must lie in (0, 1]"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            lr_decay: self.lr_decay,
            ..AdamConfig::default()
        }
    }

    pub fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input);
        dims.extend(&self.hidden);
        dims.push(output);
        dims
    }
}

/// Loss before training and the mean minibatch loss of every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().unwrap_or(&self.initial_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: DenseNetwork,
    pub level: LabelLevel,
    pub trace: TrainTrace,
}

struct Targets {
    labels: Vec<usize>,
    teacher: Option<(Vec<Vec<f64>>, f64, f64)>,
}

impl Targets {
    fn spec<'a>(&'a self, labels: &'a [usize], teacher: &'a [&'a [f64]]) -> LossSpec<'a> {
        match self.teacher {
            None => LossSpec::CrossEntropy { labels },
            Some((_, tau, lambda)) => LossSpec::Blend {
                labels,
                teacher_logits: teacher,
                tau,
                lambda,
            },
        }
    }
}

fn fit(mut net: DenseNetwork, data: &Dataset, targets: &Targets, cfg: &TrainConfig) -> Result<(DenseNetwork, TrainTrace)> {
    let inputs: Vec<&[f64]> = data.samples().iter().map(|s| s.features.as_slice()).collect();
    let teacher_rows: Vec<&[f64]> = targets
        .teacher
        .as_ref()
        .map(|(t, _, _)| t.iter().map(Vec::as_slice).collect())
        .unwrap_or_default();

    let initial_loss = net.loss(&inputs, &targets.spec(&targets.labels, &teacher_rows))?;
    let mut opt = OptimizerState::new(&net, cfg.adam());
    let mut rng = rng::stream(cfg.seed, Domain::Shuffle, 0);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    let mut batch_x: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    let mut batch_t: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_t.clear();
            for &i in chunk {
                batch_x.push(inputs[i]);
                batch_y.push(targets.labels[i]);
                if !teacher_rows.is_empty() {
                    batch_t.push(teacher_rows[i]);
                }
            }
            let (loss, grads) = net.backward(&batch_x, &targets.spec(&batch_y, &batch_t))?;
            opt.step(&mut net, &grads)?;
            epoch_total += loss * chunk.len() as f64;
        }
        epoch_losses.push(epoch_total / data.len() as f64);
        opt.end_epoch();
    }
    Ok((
        net,
        TrainTrace {
            initial_loss,
            epoch_losses,
        },
    ))
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    Ok(())
}

/// Minibatch cross-entropy training on class or subclass labels.
pub fn train_teacher(data: &Dataset, cfg: &TrainConfig, level: LabelLevel) -> Result<TrainedModel> {
    cfg.validate()?;
    check_data(data)?;
    let width = data.hierarchy().width(level);
    let net = DenseNetwork::init(&cfg.layer_dims(data.feature_dim(), width), cfg.seed)?;
    let targets = Targets {
        labels: data.labels(level),
        teacher: None,
    };
    let (network, trace) = fit(net, data, &targets, cfg)?;
    Ok(TrainedModel { network, level, trace })
}

/// Trains a student per `cfg.distill.mode`, initialized from `cfg.seed`.
pub fn train_student(data: &Dataset, cfg: &TrainConfig, teacher: Option<&TrainedModel>) -> Result<TrainedModel> {
    cfg.validate()?;
    check_data(data)?;
    let width = data.hierarchy().width(cfg.distill.mode.level());
    let init = DenseNetwork::init(&cfg.layer_dims(data.feature_dim(), width), cfg.seed)?;
    train_student_from(init, data, cfg, teacher)
}

/// Like [`train_student`] but starting from the given network.
///
/// The teacher is only read; its logits on the training set are computed once.
pub fn train_student_from(
    init: DenseNetwork,
    data: &Dataset,
    cfg: &TrainConfig,
    teacher: Option<&TrainedModel>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    cfg.distill.validate()?;
    check_data(data)?;
    let mode = cfg.distill.mode;
    let level = mode.level();
    let width = data.hierarchy().width(level);
    if init.output_dim() != width || init.input_dim() != data.feature_dim() {
        return Err(Error::shape(format!(
            "student {:?} does not fit {}-dim inputs and {width} {level} outputs",
            init.layer_dims(),
            data.feature_dim()
        )));
    }
    let teacher_part = match (mode.needs_teacher(), teacher) {
        (false, _) => None,
        (true, None) => {
            return Err(Error::invalid(format!("student mode '{mode}' requires a teacher")));
        }
        (true, Some(t)) => {
            if t.level != level {
                return Err(Error::LevelMismatch(format!(
                    "mode '{mode}' needs a {level}-level teacher, got a {}-level one",
                    t.level
                )));
            }
            if t.network.output_dim() != width {
                return Err(Error::shape(format!(
                    "teacher emits {} logits, hierarchy has {width} {level} labels",
                    t.network.output_dim()
                )));
            }
            let logits = t.network.forward_batch(
                &data.samples().iter().map(|s| s.features.as_slice()).collect::<Vec<_>>(),
            )?;
            Some((logits, cfg.distill.tau, cfg.distill.lambda))
        }
    };
    let targets = Targets {
        labels: data.labels(level),
        teacher: teacher_part,
    };
    let (network, trace) = fit(init, data, &targets, cfg)?;
    Ok(TrainedModel { network, level, trace })
}

//! Distillation losses and subclass→class probability aggregation.
//!
//! Everything here is in nats. Batch losses are arithmetic means over
//! samples, so the task-balance weight λ does not depend on batch size.
//! No τ² factor is applied to the distillation term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{LabelHierarchy, LabelLevel};
use crate::tinynet::{log_softmax_temperature, softmax_temperature};

/// Probabilities are clamped to this floor before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-300;

/// How a student is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudentMode {
    /// Class labels, no teacher.
    Baseline,
    /// Subclass labels, no teacher.
    #[serde(rename = "subclass")]
    SubclassLabelsOnly,
    /// Class labels plus a class-level teacher's softened outputs.
    #[serde(rename = "kd")]
    ConventionalKd,
    /// Subclass labels plus a subclass-level teacher's softened outputs.
    Skd,
}

impl StudentMode {
    pub const ALL: [StudentMode; 4] = [
        StudentMode::Baseline,
        StudentMode::SubclassLabelsOnly,
        StudentMode::ConventionalKd,
        StudentMode::Skd,
    ];

    /// The label level of the student's outputs (and of its teacher, if any).
    pub fn level(self) -> LabelLevel {
        match self {
            StudentMode::Baseline | StudentMode::ConventionalKd => LabelLevel::Class,
            StudentMode::SubclassLabelsOnly | StudentMode::Skd => LabelLevel::Subclass,
        }
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, StudentMode::ConventionalKd | StudentMode::Skd)
    }

    pub fn name(self) -> &'static str {
        match self {
            StudentMode::Baseline => "baseline",
            StudentMode::SubclassLabelsOnly => "subclass",
            StudentMode::ConventionalKd => "kd",
            StudentMode::Skd => "skd",
        }
    }
}

impl fmt::Display for StudentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(StudentMode::Baseline),
            "subclass" => Ok(StudentMode::SubclassLabelsOnly),
            "kd" => Ok(StudentMode::ConventionalKd),
            "skd" => Ok(StudentMode::Skd),
            other => Err(Error::invalid(format!(
                "unknown student mode '{other}' (expected baseline, subclass, kd or skd)"
            ))),
        }
    }
}

/// Temperature, task balance and mode of a student run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub tau: f64,
    pub lambda: f64,
    pub mode: StudentMode,
}

impl DistillConfig {
    pub fn new(tau: f64, lambda: f64, mode: StudentMode) -> Result<Self> {
        let cfg = Self { tau, lambda, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        check_lambda(self.lambda)
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive, got {tau}")))
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")))
    }
}

/// `−ln p[target]` for a one-hot target vector.
pub fn cross_entropy(probabilities: &[f64], one_hot: &[f64]) -> Result<f64> {
    if probabilities.len() != one_hot.len() {
        return Err(Error::shape(format!(
            "{} probabilities vs {}-wide target",
            probabilities.len(),
            one_hot.len()
        )));
    }
    let ones = one_hot.iter().filter(|&&t| t == 1.0).count();
    let zeros = one_hot.iter().filter(|&&t| t == 0.0).count();
    if ones != 1 || zeros + 1 != one_hot.len() {
        return Err(Error::invalid("target is not one-hot"));
    }
    let target = one_hot.iter().position(|&t| t == 1.0).unwrap();
    cross_entropy_index(probabilities, target)
}

/// Cross-entropy against a class index.
pub fn cross_entropy_index(probabilities: &[f64], target: usize) -> Result<f64> {
    let p = *probabilities.get(target).ok_or_else(|| {
        Error::shape(format!(
            "target {target} outside {} probabilities",
            probabilities.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// `KL(p ‖ q) = Σ p_k ln(p_k / q_k)`, with `0·ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!("KL of {}- and {}-vectors", p.len(), q.len())));
    }
    let kl = p
        .iter()
        .zip(q)
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &qk)| pk * (pk.ln() - qk.max(PROB_FLOOR).ln()))
        .sum::<f64>();
    // Rounding can leave tiny negatives when p == q.
    Ok(kl.max(0.0))
}

/// Per-sample softened KL between teacher and student logits.
pub fn softened_kl(teacher_logits: &[f64], student_logits: &[f64], tau: f64) -> Result<f64> {
    if teacher_logits.len() != student_logits.len() {
        return Err(Error::shape(format!(
            "teacher emits {} logits, student {}",
            teacher_logits.len(),
            student_logits.len()
        )));
    }
    let log_p = log_softmax_temperature(teacher_logits, tau)?;
    let log_q = log_softmax_temperature(student_logits, tau)?;
    let kl = log_p
        .iter()
        .zip(&log_q)
        .map(|(&lp, &lq)| {
            let p = lp.exp();
            if p > 0.0 {
                p * (lp - lq)
            } else {
                0.0
            }
        })
        .sum::<f64>();
    Ok(kl.max(0.0))
}

fn batch_softened_kl<T: AsRef<[f64]>, S: AsRef<[f64]>>(
    teacher: &[T],
    student: &[S],
    tau: f64,
    width: usize,
    what: &str,
) -> Result<f64> {
    check_tau(tau)?;
    if teacher.len() != student.len() {
        return Err(Error::shape(format!(
            "{} teacher rows vs {} student rows",
            teacher.len(),
            student.len()
        )));
    }
    if teacher.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for (t, s) in teacher.iter().zip(student) {
        let (t, s) = (t.as_ref(), s.as_ref());
        if t.len() != width || s.len() != width {
            return Err(Error::shape(format!(
                "logit widths {}/{} do not match the {width} {what}",
                t.len(),
                s.len()
            )));
        }
        total += softened_kl(t, s, tau)?;
    }
    Ok(total / teacher.len() as f64)
}

/// Batch-mean `KL(σ(t/τ) ‖ σ(s/τ))` over subclass logits.
pub fn skd_loss<T: AsRef<[f64]>, S: AsRef<[f64]>>(
    teacher_logits: &[T],
    student_logits: &[S],
    tau: f64,
    hierarchy: &LabelHierarchy,
) -> Result<f64> {
    batch_softened_kl(
        teacher_logits,
        student_logits,
        tau,
        hierarchy.num_subclasses(),
        "subclasses",
    )
}

/// Hinton-style distillation over class logits; same form as [`skd_loss`].
pub fn conventional_kd_loss<T: AsRef<[f64]>, S: AsRef<[f64]>>(
    teacher_class_logits: &[T],
    student_class_logits: &[S],
    tau: f64,
    hierarchy: &LabelHierarchy,
) -> Result<f64> {
    batch_softened_kl(
        teacher_class_logits,
        student_class_logits,
        tau,
        hierarchy.num_classes(),
        "classes",
    )
}

/// `λ·ce + (1 − λ)·distill`.
pub fn student_objective(ce_term: f64, distill_term: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(lambda * ce_term + (1.0 - lambda) * distill_term)
}

/// Sums subclass probabilities within each class.
pub fn aggregate_class_probabilities(
    subclass_probs: &[f64],
    hierarchy: &LabelHierarchy,
) -> Result<Vec<f64>> {
    if subclass_probs.len() != hierarchy.num_subclasses() {
        return Err(Error::shape(format!(
            "{} subclass probabilities for {} subclasses",
            subclass_probs.len(),
            hierarchy.num_subclasses()
        )));
    }
    Ok((0..hierarchy.num_classes())
        .map(|c| subclass_probs[hierarchy.subclass_range(c)].iter().sum())
        .collect())
}

/// Gradient of `CE(σ(z), y)` with respect to `z`: `σ(z) − onehot(y)`.
pub fn cross_entropy_logit_grad(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let log_p = log_softmax_temperature(logits, 1.0)?;
    let loss = -log_p
        .get(target)
        .ok_or_else(|| Error::shape(format!("target {target} outside {} logits", logits.len())))?;
    let mut grad: Vec<f64> = log_p.iter().map(|lp| lp.exp()).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Gradient of `KL(σ(t/τ) ‖ σ(z/τ))` with respect to `z`: `(σ(z/τ) − σ(t/τ)) / τ`.
pub fn softened_kl_logit_grad(
    teacher_logits: &[f64],
    student_logits: &[f64],
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let loss = softened_kl(teacher_logits, student_logits, tau)?;
    let p = softmax_temperature(teacher_logits, tau)?;
    let q = softmax_temperature(student_logits, tau)?;
    let grad = q.iter().zip(&p).map(|(qk, pk)| (qk - pk) / tau).collect();
    Ok((loss, grad))
}

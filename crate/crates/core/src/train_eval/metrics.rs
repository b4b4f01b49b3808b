use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::LabelLevel;
use crate::losses::aggregate_class_probabilities;
use crate::tinynet::{argmax, softmax_temperature, DenseNetwork};

/// The class whose F1 is reported as the binary F1 score.
pub const POSITIVE_CLASS: usize = 0;

/// Class-level scores of one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// True class × predicted class.
    pub class_confusion: Vec<Vec<u64>>,
    /// True subclass × predicted subclass, for subclass-level models.
    pub subclass_confusion: Option<Vec<Vec<u64>>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub accuracy: f64,
    /// F1 of [`POSITIVE_CLASS`].
    pub binary_f1: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_confusion(
        class_confusion: Vec<Vec<u64>>,
        subclass_confusion: Option<Vec<Vec<u64>>>,
    ) -> Result<Self> {
        let k = class_confusion.len();
        if k == 0 || class_confusion.iter().any(|r| r.len() != k) {
            return Err(Error::shape("class confusion must be square and non-empty"));
        }
        let total: u64 = class_confusion.iter().flatten().sum();
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        for c in 0..k {
            let tp = class_confusion[c][c];
            let predicted: u64 = class_confusion.iter().map(|r| r[c]).sum();
            let actual: u64 = class_confusion[c].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        let trace: u64 = (0..k).map(|c| class_confusion[c][c]).sum();
        Ok(Self {
            accuracy: ratio(trace, total),
            binary_f1: f1[POSITIVE_CLASS],
            macro_f1: f1.iter().sum::<f64>() / k as f64,
            class_confusion,
            subclass_confusion,
            precision,
            recall,
            f1,
        })
    }
}

/// Predicted class and, for subclass-level models, predicted subclass.
///
/// Subclass models predict the class with the largest summed subclass probability.
pub fn predict(
    network: &DenseNetwork,
    features: &[f64],
    level: LabelLevel,
    hierarchy: &crate::hierarchy::LabelHierarchy,
) -> Result<(usize, Option<usize>)> {
    let logits = network.forward(features)?;
    match level {
        LabelLevel::Class => Ok((argmax(&logits), None)),
        LabelLevel::Subclass => {
            let probs = softmax_temperature(&logits, 1.0)?;
            let class_probs = aggregate_class_probabilities(&probs, hierarchy)?;
            Ok((argmax(&class_probs), Some(argmax(&probs))))
        }
    }
}

/// Evaluates a class- or subclass-level network on `data`.
pub fn evaluate(network: &DenseNetwork, data: &Dataset, level: LabelLevel) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let h = data.hierarchy();
    let width = h.width(level);
    if network.output_dim() != width {
        return Err(Error::LevelMismatch(format!(
            "network emits {} logits, {level}-level evaluation needs {width}",
            network.output_dim()
        )));
    }
    let k = h.num_classes();
    let n = h.num_subclasses();
    let mut class_conf = vec![vec![0u64; k]; k];
    let mut sub_conf = (level == LabelLevel::Subclass).then(|| vec![vec![0u64; n]; n]);
    for s in data.samples() {
        let (c, sub) = predict(network, &s.features, level, h)?;
        class_conf[s.class][c] += 1;
        if let (Some(m), Some(j)) = (sub_conf.as_mut(), sub) {
            m[s.subclass][j] += 1;
        }
    }
    Metrics::from_confusion(class_conf, sub_conf)
}

/// Divides every row of a count matrix by its sum.
pub fn confusion_to_row_stochastic(counts: &[Vec<u64>]) -> Result<Vec<Vec<f64>>> {
    if counts.is_empty() {
        return Err(Error::invalid("empty count matrix"));
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                Err(Error::invalid(format!("row {i} has no samples")))
            } else {
                Ok(row.iter().map(|&c| c as f64 / sum as f64).collect())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::hierarchy::LabelHierarchy;
    use crate::tinynet::LayerParams;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scores_from_confusion() {
        let m = Metrics::from_confusion(vec![vec![8, 2], vec![4, 16]], None).unwrap();
        assert_abs_diff_eq!(m.precision[0], 8.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.recall[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(m.binary_f1, 2.0 * 8.0 / (2.0 * 8.0 + 2.0 + 4.0), epsilon = 1e-15);
        assert_abs_diff_eq!(m.accuracy, 24.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.macro_f1, (m.f1[0] + m.f1[1]) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn undefined_f1_is_zero() {
        let m = Metrics::from_confusion(vec![vec![0, 5], vec![0, 5]], None).unwrap();
        assert_eq!(m.precision[0], 0.0);
        assert_eq!(m.f1[0], 0.0);
        assert_eq!(m.binary_f1, 0.0);
    }

    #[test]
    fn row_stochastic() {
        let w = confusion_to_row_stochastic(&[vec![3, 1], vec![0, 2]]).unwrap();
        assert_eq!(w, vec![vec![0.75, 0.25], vec![0.0, 1.0]]);
        assert!(confusion_to_row_stochastic(&[vec![0, 0]]).is_err());
    }

    #[test]
    fn subclass_model_predicts_through_aggregation() {
        // Subclass 0 alone is the argmax, but class 1 holds more total mass.
        let h = LabelHierarchy::new(vec![1, 2]).unwrap();
        let net = DenseNetwork::from_layers(
            &[1, 3],
            vec![LayerParams {
                weights: vec![0.0, 0.0, 0.0],
                biases: vec![0.45f64.ln(), 0.3f64.ln(), 0.25f64.ln()],
            }],
        )
        .unwrap();
        let (c, s) = predict(&net, &[1.0], LabelLevel::Subclass, &h).unwrap();
        assert_eq!((c, s), (1, Some(0)));

        let ds = Dataset::new(
            vec![Sample {
                features: vec![0.0],
                subclass: 2,
                class: 1,
            }],
            h,
            1,
        )
        .unwrap();
        let m = evaluate(&net, &ds, LabelLevel::Subclass).unwrap();
        assert_eq!(m.class_confusion, vec![vec![0, 0], vec![0, 1]]);
        assert_eq!(m.subclass_confusion.unwrap()[2], vec![1, 0, 0]);
        assert!(matches!(evaluate(&net, &ds, LabelLevel::Class), Err(Error::LevelMismatch(_))));
    }
}

//! Upper bounds on the label bits per sample a teacher can provide, split
//! into a class term and a sample-weighted subclass term.

use serde::{Deserialize, Serialize};

use super::capacity::{bac_capacity, qsc_capacity};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;

/// Class, subclass and total label bits per sample.
///
/// `total_bits` is always `class_bits + subclass_bits` as stored; an absent
/// subclass term (class labels only) counts as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitsBreakdown {
    class_bits: f64,
    subclass_bits: Option<f64>,
    total_bits: f64,
}

impl BitsBreakdown {
    pub fn new(class_bits: f64, subclass_bits: Option<f64>) -> Result<Self> {
        if !(class_bits >= 0.0) || subclass_bits.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::invalid("label bits must be non-negative"));
        }
        Ok(Self {
            class_bits,
            subclass_bits,
            total_bits: class_bits + subclass_bits.unwrap_or(0.0),
        })
    }

    pub fn class_bits(&self) -> f64 {
        self.class_bits
    }

    pub fn subclass_bits(&self) -> Option<f64> {
        self.subclass_bits
    }

    pub fn total_bits(&self) -> f64 {
        self.total_bits
    }
}

/// Inputs of the multi-class bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyBitsParams {
    pub hierarchy: LabelHierarchy,
    /// `P_C`: probability that the teacher predicts the class correctly.
    pub class_accuracy: f64,
    /// `P_{C_k}` per class; ignored for single-subclass classes.
    pub subclass_accuracy: Vec<f64>,
    /// `N_{S_kj}` per global subclass.
    pub subclass_counts: Vec<u64>,
}

/// Inputs of the binary detection bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub p_h0: f64,
    pub p_h1: f64,
    pub n_h0: u64,
    pub n_h1: u64,
    /// Number of subclasses of the alternative hypothesis.
    pub n_s: usize,
    pub p_s: f64,
}

fn check_unit(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {p} outside [0, 1]")))
    }
}

/// `Σ_k w_k · C_QSC(N_{C_k}, P_{C_k})` with `w_k` the share of samples in
/// class `k`. Single-subclass classes contribute nothing.
pub fn weighted_subclass_bits(
    hierarchy: &LabelHierarchy,
    subclass_accuracy: &[f64],
    subclass_counts: &[u64],
) -> Result<f64> {
    if subclass_accuracy.len() != hierarchy.num_classes() {
        return Err(Error::shape(format!(
            "{} subclass accuracies for {} classes",
            subclass_accuracy.len(),
            hierarchy.num_classes()
        )));
    }
    if subclass_counts.len() != hierarchy.num_subclasses() {
        return Err(Error::shape(format!(
            "{} subclass counts for {} subclasses",
            subclass_counts.len(),
            hierarchy.num_subclasses()
        )));
    }
    let total: u64 = subclass_counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("zero total sample count"));
    }
    let mut bits = 0.0;
    for (k, &n_sub) in hierarchy.subclasses_per_class().iter().enumerate() {
        if n_sub < 2 {
            continue;
        }
        check_unit("subclass accuracy", subclass_accuracy[k])?;
        let class_count: u64 = subclass_counts[hierarchy.subclass_range(k)].iter().sum();
        let weight = class_count as f64 / total as f64;
        bits += weight * qsc_capacity(n_sub, subclass_accuracy[k])?;
    }
    Ok(bits)
}

/// Multi-class bound: Q-ary symmetric capacity of the class labels plus the
/// weighted Q-ary symmetric capacities of the subclass labels within each class.
pub fn theorem1_bound(params: &HierarchyBitsParams) -> Result<BitsBreakdown> {
    check_unit("class accuracy", params.class_accuracy)?;
    let h = &params.hierarchy;
    let class_bits = if h.num_classes() >= 2 {
        qsc_capacity(h.num_classes(), params.class_accuracy)?
    } else {
        0.0
    };
    let subclass_bits =
        weighted_subclass_bits(h, &params.subclass_accuracy, &params.subclass_counts)?;
    BitsBreakdown::new(class_bits, Some(subclass_bits))
}

/// Detection bound: binary asymmetric capacity of the class labels plus the
/// alternative hypothesis' Q-ary symmetric subclass capacity, weighted by its
/// share of samples. The null hypothesis has a single subclass.
pub fn theorem2_bound(params: &DetectionParams) -> Result<BitsBreakdown> {
    let total = params.n_h0 + params.n_h1;
    if total == 0 {
        return Err(Error::invalid("N_H0 + N_H1 = 0"));
    }
    if params.n_s == 0 {
        return Err(Error::invalid("the alternative hypothesis needs at least one subclass"));
    }
    let class_bits = bac_capacity(params.p_h0, params.p_h1)?;
    let subclass_bits = if params.n_s == 1 || params.n_h1 == 0 {
        0.0
    } else {
        check_unit("P_S", params.p_s)?;
        params.n_h1 as f64 / total as f64 * qsc_capacity(params.n_s, params.p_s)?
    };
    BitsBreakdown::new(class_bits, Some(subclass_bits))
}

/// Symmetric-error fit of a confusion matrix: the sample-weighted mean of the
/// row-normalized diagonal, i.e. `Σ_i (n_i / n) · (c_ii / n_i) = trace / n`.
/// Rows without samples carry zero weight.
pub fn estimate_accuracy_params(confusion_counts: &[Vec<u64>]) -> Result<f64> {
    let n = confusion_counts.len();
    if n == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    if let Some(r) = confusion_counts.iter().position(|row| row.len() != n) {
        return Err(Error::shape(format!("confusion row {r} is not {n} wide")));
    }
    let total: u64 = confusion_counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::invalid("confusion matrix has no samples"));
    }
    let mut p = 0.0;
    for (i, row) in confusion_counts.iter().enumerate() {
        let row_sum: u64 = row.iter().sum();
        if row_sum > 0 {
            p += (row_sum as f64 / total as f64) * (row[i] as f64 / row_sum as f64);
        }
    }
    Ok(p)
}

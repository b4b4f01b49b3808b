//! Label bits: how much information a teacher's predictions can carry about
//! the true labels, modelled as a discrete memoryless channel from true to
//! predicted labels.
//!
//! All quantities in this module are in bits, with `0·log 0 = 0`.

mod bounds;
mod capacity;
mod matrix_io;
mod report;

pub use bounds::{
    estimate_accuracy_params, theorem1_bound, theorem2_bound, weighted_subclass_bits, BitsBreakdown,
    DetectionParams, HierarchyBitsParams,
};
pub use capacity::{
    bac_capacity, bac_is_singular, bac_optimal_input, blahut_arimoto, qsc_capacity,
    qsc_capacity_flagged, z_channel_capacity, BlahutArimoto, BA_MAX_ITERS, BA_TOL,
};
pub use matrix_io::{
    count_matrix_csv, load_channel_matrix, load_count_matrix, parse_channel_matrix, parse_count_matrix,
};
pub use report::{
    label_bits_report, within_class_confusions, BitsReport, BitsRow, EmpiricalCapacities, FittedParams,
    TaskConfusions,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const ROW_SUM_TOL: f64 = 1e-9;

/// `x·log₂x`, zero at zero.
pub(crate) fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// `H_b(x) = −x log₂x − (1−x) log₂(1−x)`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("binary entropy argument {x} outside [0, 1]")));
    }
    Ok(-(xlog2x(x) + xlog2x(1.0 - x)))
}

/// Shannon entropy of a probability vector.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    check_distribution(dist)?;
    Ok(-dist.iter().map(|&p| xlog2x(p)).sum::<f64>())
}

pub(crate) fn check_distribution(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    if dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("distribution entries must lie in [0, 1]"));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::invalid(format!("distribution sums to {sum}, not 1")));
    }
    Ok(())
}

/// A discrete memoryless channel: rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    transition: Vec<Vec<f64>>,
}

impl ChannelSpec {
    pub fn new(transition: Vec<Vec<f64>>) -> Result<Self> {
        let width = transition.first().map(Vec::len).unwrap_or(0);
        if transition.is_empty() || width == 0 {
            return Err(Error::invalid("channel needs at least one input and output"));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != width {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { transition })
    }

    /// Row-normalizes a count matrix (e.g. a confusion matrix).
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let rows = crate::train_eval::confusion_to_row_stochastic(counts)?;
        Self::new(rows)
    }

    /// Correct with probability `p`, errors spread evenly over the other `n − 1` symbols.
    pub fn q_ary_symmetric(n: usize, p: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("Q-ary symmetric channel needs n ≥ 2, got {n}")));
        }
        check_probability(p)?;
        let off = (1.0 - p) / (n - 1) as f64;
        Self::new(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { p } else { off }).collect())
                .collect(),
        )
    }

    /// Binary asymmetric channel: input 0 (null) is correct with `p_h0`,
    /// input 1 (alternative) with `p_h1`.
    pub fn binary_asymmetric(p_h0: f64, p_h1: f64) -> Result<Self> {
        check_probability(p_h0)?;
        check_probability(p_h1)?;
        Self::new(vec![vec![p_h0, 1.0 - p_h0], vec![1.0 - p_h1, p_h1]])
    }

    pub fn binary_symmetric(p_flip: f64) -> Result<Self> {
        Self::binary_asymmetric(1.0 - p_flip, 1.0 - p_flip)
    }

    /// Input 0 is noiseless; input 1 flips to output 0 with `p_flip`.
    pub fn z_channel(p_flip: f64) -> Result<Self> {
        Self::binary_asymmetric(1.0, 1.0 - p_flip)
    }

    pub fn input_size(&self) -> usize {
        self.transition.len()
    }

    pub fn output_size(&self) -> usize {
        self.transition[0].len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Output distribution `q = p·W`.
    pub fn output_distribution(&self, input: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.output_size()];
        for (px, row) in input.iter().zip(&self.transition) {
            for (qy, w) in q.iter_mut().zip(row) {
                *qy += px * w;
            }
        }
        q
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside [0, 1]")))
    }
}

/// `I(Y;Ŷ) = Σ_x Σ_y p(x) W(y|x) log₂(W(y|x)/q(y))`.
pub fn mutual_information(input: &[f64], channel: &ChannelSpec) -> Result<f64> {
    if input.len() != channel.input_size() {
        return Err(Error::shape(format!(
            "input distribution has {} entries, channel has {} inputs",
            input.len(),
            channel.input_size()
        )));
    }
    check_distribution(input)?;
    let q = channel.output_distribution(input);
    let mut mi = 0.0;
    for (&px, row) in input.iter().zip(channel.transition()) {
        if px == 0.0 {
            continue;
        }
        for (&w, &qy) in row.iter().zip(&q) {
            if w > 0.0 {
                mi += px * w * (w / qy).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

//! Channel capacities: the Blahut–Arimoto iteration and closed forms for the
//! Q-ary symmetric, binary asymmetric and Z channels.

use serde::{Deserialize, Serialize};

use super::{binary_entropy, check_probability, mutual_information, xlog2x, ChannelSpec};
use crate::error::{Error, Result};

pub const BA_TOL: f64 = 1e-10;
pub const BA_MAX_ITERS: usize = 100_000;

/// `|P_H0 + P_H1 − 1|` below this is treated as the singular BAC.
const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlahutArimoto {
    /// Mutual information achieved by `input`; within `tol` of capacity.
    pub capacity: f64,
    pub input: Vec<f64>,
    pub iterations: usize,
    /// Final width of the capacity bracket.
    pub gap: f64,
}

/// Alternating maximization from the uniform input, stopping once the
/// capacity bracket `[log₂ Σ p_x 2^{D_x}, max_x D_x]` is narrower than `tol`,
/// where `D_x = KL(W(·|x) ‖ q)`.
pub fn blahut_arimoto(channel: &ChannelSpec, tol: f64, max_iters: usize) -> Result<BlahutArimoto> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = channel.input_size();
    let w = channel.transition();
    let mut p = vec![1.0 / n as f64; n];
    let mut gap = f64::INFINITY;
    for iter in 1..=max_iters {
        let q = channel.output_distribution(&p);
        let d: Vec<f64> = w
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&q)
                    .filter(|(&wy, _)| wy > 0.0)
                    .map(|(&wy, &qy)| wy * (wy / qy).log2())
                    .sum::<f64>()
            })
            .collect();
        let upper = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Factor out 2^upper so the weights stay in (0, 1].
        let weights: Vec<f64> = p.iter().zip(&d).map(|(px, dx)| px * (dx - upper).exp2()).collect();
        let norm: f64 = weights.iter().sum();
        let lower = upper + norm.log2();
        gap = upper - lower;
        p = weights.into_iter().map(|v| v / norm).collect();
        if gap < tol {
            let capacity = mutual_information(&p, channel)?;
            return Ok(BlahutArimoto {
                capacity,
                input: p,
                iterations: iter,
                gap,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        gap,
    })
}

/// Capacity of the Q-ary symmetric channel, attained by the uniform input:
/// `log₂n + p log₂p + (1−p) log₂((1−p)/(n−1))`.
///
/// For `p < 1/n` (worse than chance) the expression is still the mutual
/// information at uniform input, but no longer the capacity; see
/// [`qsc_capacity_flagged`].
pub fn qsc_capacity(n: usize, p: f64) -> Result<f64> {
    Ok(qsc_capacity_flagged(n, p)?.0)
}

/// [`qsc_capacity`] plus a flag set when `p < 1/n`.
pub fn qsc_capacity_flagged(n: usize, p: f64) -> Result<(f64, bool)> {
    if n < 2 {
        return Err(Error::invalid(format!("Q-ary symmetric channel needs n ≥ 2, got {n}")));
    }
    check_probability(p)?;
    let nf = n as f64;
    let q = 1.0 - p;
    let err_term = if q > 0.0 { q * (q / (nf - 1.0)).log2() } else { 0.0 };
    let value = nf.log2() + xlog2x(p) + err_term;
    Ok((value.max(0.0), p < 1.0 / nf))
}

pub fn bac_is_singular(p_h0: f64, p_h1: f64) -> bool {
    (p_h0 + p_h1 - 1.0).abs() < SINGULAR_EPS
}

fn check_bac(p_h0: f64, p_h1: f64) -> Result<()> {
    for p in [p_h0, p_h1] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(format!("BAC accuracy {p} outside (0, 1]")));
        }
    }
    Ok(())
}

/// `K = (H_b(P_H1) − H_b(P_H0)) / (P_H0 + P_H1 − 1)`.
fn bac_k(p_h0: f64, p_h1: f64) -> f64 {
    let hb = |x: f64| binary_entropy(x).expect("validated probability");
    (hb(p_h1) - hb(p_h0)) / (p_h0 + p_h1 - 1.0)
}

/// `log₂(1 + 2^K)` without overflow.
fn log2_one_plus_exp2(k: f64) -> f64 {
    if k > 0.0 {
        k + (-k).exp2().ln_1p() / std::f64::consts::LN_2
    } else {
        k.exp2().ln_1p() / std::f64::consts::LN_2
    }
}

/// Capacity-achieving probability of the alternative hypothesis (input 1):
///
/// ```text
/// α* = [1/(2^K + 1) − (1 − P_H0)] / (P_H0 + P_H1 − 1)
/// ```
///
/// evaluated with inputs relabelled so that `P_H1 ≤ P_H0`, then mapped back.
pub fn bac_optimal_input(p_h0: f64, p_h1: f64) -> Result<f64> {
    check_bac(p_h0, p_h1)?;
    if bac_is_singular(p_h0, p_h1) {
        return Err(Error::Singular(format!(
            "P_H0 + P_H1 = 1 ({p_h0} + {p_h1}): output is independent of input, capacity 0"
        )));
    }
    let (hi, lo, swapped) = if p_h1 <= p_h0 {
        (p_h0, p_h1, false)
    } else {
        (p_h1, p_h0, true)
    };
    let k = bac_k(hi, lo);
    // 1/(2^K + 1) is the optimal output probability of symbol 1.
    let out1 = 1.0 / (k.exp2() + 1.0);
    let alpha = ((out1 - (1.0 - hi)) / (hi + lo - 1.0)).clamp(0.0, 1.0);
    Ok(if swapped { 1.0 - alpha } else { alpha })
}

/// `C = log₂(1 + 2^K) − P_H0·K − H_b(P_H0)`, with the singular channel
/// (`P_H0 + P_H1 = 1`) reported as zero capacity.
pub fn bac_capacity(p_h0: f64, p_h1: f64) -> Result<f64> {
    check_bac(p_h0, p_h1)?;
    if bac_is_singular(p_h0, p_h1) {
        return Ok(0.0);
    }
    let (hi, lo) = if p_h1 <= p_h0 { (p_h0, p_h1) } else { (p_h1, p_h0) };
    let k = bac_k(hi, lo);
    let c = log2_one_plus_exp2(k) - hi * k - binary_entropy(hi)?;
    Ok(c.clamp(0.0, 1.0))
}

/// Capacity of the Z channel whose input 1 flips with `p_flip`:
/// `log₂(1 + (1−p)·p^{p/(1−p)})`.
pub fn z_channel_capacity(p_flip: f64) -> Result<f64> {
    check_probability(p_flip)?;
    if p_flip == 1.0 {
        return Ok(0.0);
    }
    let p = p_flip;
    Ok((1.0 + (1.0 - p) * p.powf(p / (1.0 - p))).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ba(ch: &ChannelSpec) -> BlahutArimoto {
        blahut_arimoto(ch, BA_TOL, BA_MAX_ITERS).unwrap()
    }

    #[test]
    fn ba_identity_and_useless_channels() {
        for n in [2, 3, 5, 8] {
            let id = ChannelSpec::q_ary_symmetric(n, 1.0).unwrap();
            assert_abs_diff_eq!(ba(&id).capacity, (n as f64).log2(), epsilon = 1e-9);
        }
        let flat = ChannelSpec::new(vec![vec![0.2, 0.3, 0.5]; 4]).unwrap();
        let r = ba(&flat);
        assert_abs_diff_eq!(r.capacity, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ba_bsc() {
        let r = ba(&ChannelSpec::binary_symmetric(0.11).unwrap());
        assert_abs_diff_eq!(r.capacity, 0.500084, epsilon = 1e-6);
        assert_abs_diff_eq!(r.input[0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn ba_rejects_bad_tolerance_and_reports_non_convergence() {
        let ch = ChannelSpec::binary_asymmetric(0.9, 0.8).unwrap();
        assert!(blahut_arimoto(&ch, 0.0, 10).is_err());
        assert!(matches!(blahut_arimoto(&ch, 1e-15, 2), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn qsc_values() {
        assert_eq!(qsc_capacity(2, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(qsc_capacity(4, 0.25).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(qsc_capacity(4, 0.7).unwrap(), 0.643220, epsilon = 1e-6);
        let oracle = ba(&ChannelSpec::q_ary_symmetric(4, 0.7).unwrap()).capacity;
        assert_abs_diff_eq!(qsc_capacity(4, 0.7).unwrap(), oracle, epsilon = 1e-6);
        assert!(qsc_capacity(1, 1.0).is_err());
        let (_, flag) = qsc_capacity_flagged(4, 0.1).unwrap();
        assert!(flag);
        let (_, flag) = qsc_capacity_flagged(4, 0.25).unwrap();
        assert!(!flag);
    }

    #[test]
    fn bac_optimal_input_values() {
        assert_abs_diff_eq!(bac_optimal_input(0.8, 0.8).unwrap(), 0.5, epsilon = 1e-12);
        let a = bac_optimal_input(0.9, 0.8).unwrap();
        assert_abs_diff_eq!(a, 0.482445, epsilon = 1e-6);
        let ch = ChannelSpec::binary_asymmetric(0.9, 0.8).unwrap();
        let at = |x: f64| mutual_information(&[1.0 - x, x], &ch).unwrap();
        assert!(at(a + 1e-4) <= at(a));
        assert!(at(a - 1e-4) <= at(a));
        assert!(matches!(bac_optimal_input(0.6, 0.4), Err(Error::Singular(_))));
    }

    #[test]
    fn bac_capacity_values() {
        assert_abs_diff_eq!(bac_capacity(0.9, 0.9).unwrap(), 0.531004, epsilon = 1e-6);
        let oracle = ba(&ChannelSpec::binary_asymmetric(0.9, 0.8).unwrap()).capacity;
        assert_abs_diff_eq!(oracle, 0.397754, epsilon = 1e-6);
        assert_abs_diff_eq!(bac_capacity(0.9, 0.8).unwrap(), oracle, epsilon = 1e-9);
        assert_eq!(bac_capacity(0.6, 0.4).unwrap(), 0.0);
        assert!(bac_capacity(0.0, 0.5).is_err());
        assert!(bac_capacity(0.5, 1.2).is_err());
    }

    #[test]
    fn bac_below_chance_matches_oracle() {
        // Accuracies summing below one are a relabelled channel; the closed form still holds.
        for (a, b) in [(0.3, 0.2), (0.9, 0.05), (0.45, 0.35), (0.2, 0.7)] {
            let oracle = ba(&ChannelSpec::binary_asymmetric(a, b).unwrap());
            assert_abs_diff_eq!(bac_capacity(a, b).unwrap(), oracle.capacity, epsilon = 1e-7);
            assert_abs_diff_eq!(bac_optimal_input(a, b).unwrap(), oracle.input[1], epsilon = 1e-4);
        }
    }

    #[test]
    fn bac_swap_invariant() {
        for (a, b) in [(0.9, 0.7), (0.99, 0.6), (0.75, 0.55)] {
            assert_abs_diff_eq!(bac_capacity(a, b).unwrap(), bac_capacity(b, a).unwrap(), epsilon = 1e-15);
            assert_abs_diff_eq!(
                bac_optimal_input(a, b).unwrap(),
                1.0 - bac_optimal_input(b, a).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn z_channel_values() {
        assert_eq!(z_channel_capacity(0.0).unwrap(), 1.0);
        assert_eq!(z_channel_capacity(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(z_channel_capacity(0.5).unwrap(), 0.321928, epsilon = 1e-6);
        let oracle = ba(&ChannelSpec::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap()).capacity;
        assert_abs_diff_eq!(z_channel_capacity(0.5).unwrap(), oracle, epsilon = 1e-6);
        for p in [0.1, 0.3, 0.77] {
            assert_abs_diff_eq!(z_channel_capacity(p).unwrap(), bac_capacity(1.0, 1.0 - p).unwrap(), epsilon = 1e-9);
        }
        assert!(z_channel_capacity(1.5).is_err());
    }
}

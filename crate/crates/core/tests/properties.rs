use proptest::prelude::*;

use skdlab_core::info_bits::{
    bac_capacity, binary_entropy, blahut_arimoto, entropy, mutual_information, qsc_capacity,
    theorem1_bound, theorem2_bound, BitsBreakdown, ChannelSpec, DetectionParams, HierarchyBitsParams,
    BA_MAX_ITERS,
};
use skdlab_core::losses::{aggregate_class_probabilities, skd_loss, softened_kl};
use skdlab_core::tinynet::{argmax, softmax_temperature};
use skdlab_core::train_eval::Metrics;
use skdlab_core::{LabelHierarchy, TaskPreset};

// Near-singular channels converge slowly; a 1e-8 bracket still pins the
// capacity far inside the 1e-6 comparison.
const ORACLE_TOL: f64 = 1e-8;

fn logits(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, n)
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_filter_map("all zero", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
    })
}

fn stochastic(rows: usize, cols: usize) -> impl Strategy<Value = ChannelSpec> {
    prop::collection::vec(distribution(cols), rows).prop_map(|rows| ChannelSpec::new(rows).unwrap())
}

/// Accuracies in (0, 1], the domain of the binary asymmetric channel.
fn accuracy() -> impl Strategy<Value = f64> {
    prop_oneof![1e-9..=1.0f64, Just(1.0)]
}

fn hierarchy() -> impl Strategy<Value = LabelHierarchy> {
    prop::collection::vec(1..4usize, 1..5).prop_map(|c| LabelHierarchy::new(c).unwrap())
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in (1..8usize).prop_flat_map(logits), tau in 1e-3..1e9f64) {
        let p = softmax_temperature(&z, tau).unwrap();
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_argmax_ignores_temperature(z in (2..8usize).prop_flat_map(logits), tau in 0.05..200.0f64) {
        let p = softmax_temperature(&z, tau).unwrap();
        let q = softmax_temperature(&z, 1.0).unwrap();
        prop_assert_eq!(argmax(&p), argmax(&z));
        prop_assert_eq!(argmax(&q), argmax(&z));
    }

    #[test]
    fn softened_kl_is_non_negative(
        (t, s) in (2..6usize).prop_flat_map(|n| (logits(n), logits(n))),
        tau in prop::sample::select(vec![1.0, 5.0, 128.0]),
    ) {
        prop_assert!(softened_kl(&t, &s, tau).unwrap() >= 0.0);
    }

    #[test]
    fn skd_is_zero_on_identical_and_shifted_logits(
        z in logits(4),
        shift in -50.0..50.0f64,
        tau in prop::sample::select(vec![1.0, 5.0, 128.0]),
    ) {
        let h = TaskPreset::Sl22.hierarchy();
        let shifted: Vec<f64> = z.iter().map(|x| x + shift).collect();
        prop_assert_eq!(skd_loss(&[&z], &[&z], tau, &h).unwrap(), 0.0);
        prop_assert!(skd_loss(&[&z], &[&shifted], tau, &h).unwrap().abs() < 1e-12);
    }

    #[test]
    fn aggregation_preserves_mass_and_mixtures(
        (h, p, q) in hierarchy().prop_flat_map(|h| {
            let n = h.num_subclasses();
            (Just(h), distribution(n), distribution(n))
        }),
        a in 0.0..1.0f64,
    ) {
        let pc = aggregate_class_probabilities(&p, &h).unwrap();
        prop_assert_eq!(pc.len(), h.num_classes());
        prop_assert!((pc.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let qc = aggregate_class_probabilities(&q, &h).unwrap();
        let mc = aggregate_class_probabilities(&mix, &h).unwrap();
        for k in 0..h.num_classes() {
            prop_assert!((mc[k] - (a * pc[k] + (1.0 - a) * qc[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn qsc_matches_blahut_arimoto(n in 2..7usize, p in 0.0..1.0f64) {
        let p = 1.0 / n as f64 + p * (1.0 - 1.0 / n as f64);
        let ba = blahut_arimoto(&ChannelSpec::q_ary_symmetric(n, p).unwrap(), ORACLE_TOL, BA_MAX_ITERS).unwrap();
        prop_assert!((qsc_capacity(n, p).unwrap() - ba.capacity).abs() < 1e-6);
    }

    #[test]
    fn qsc_is_monotone_above_chance(n in 2..7usize, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let chance = 1.0 / n as f64;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo = chance + lo * (1.0 - chance);
        let hi = chance + hi * (1.0 - chance);
        prop_assert!(qsc_capacity(n, lo).unwrap() <= qsc_capacity(n, hi).unwrap() + 1e-12);
    }

    #[test]
    fn bac_matches_blahut_arimoto(p0 in accuracy(), p1 in accuracy()) {
        let ba = blahut_arimoto(&ChannelSpec::binary_asymmetric(p0, p1).unwrap(), ORACLE_TOL, BA_MAX_ITERS).unwrap();
        prop_assert!((bac_capacity(p0, p1).unwrap() - ba.capacity).abs() < 1e-6);
    }

    #[test]
    fn bac_is_symmetric_under_relabelling(p0 in accuracy(), p1 in accuracy()) {
        prop_assert!((bac_capacity(p0, p1).unwrap() - bac_capacity(p1, p0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bac_reduces_to_bsc(p in accuracy()) {
        prop_assert!((bac_capacity(p, p).unwrap() - (1.0 - binary_entropy(p).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_is_bounded(
        (input, channel) in (1..5usize, 1..5usize)
            .prop_flat_map(|(r, c)| (distribution(r), stochastic(r, c))),
    ) {
        let mi = mutual_information(&input, &channel).unwrap();
        let out = channel.output_size() as f64;
        prop_assert!(mi >= 0.0);
        prop_assert!(mi <= entropy(&input).unwrap() + 1e-9);
        prop_assert!(mi <= out.log2() + 1e-9);
    }

    #[test]
    fn breakdown_total_is_the_exact_sum(c in 0.0..10.0f64, s in prop::option::of(0.0..10.0f64)) {
        let b = BitsBreakdown::new(c, s).unwrap();
        prop_assert_eq!(b.total_bits(), c + s.unwrap_or(0.0));
    }

    #[test]
    fn theorem_totals_add_up(
        pc in 0.5..1.0f64,
        pk in prop::collection::vec(0.5..1.0f64, 2),
        counts in prop::collection::vec(0..500u64, 4),
        p0 in accuracy(),
        p1 in accuracy(),
        n_s in 1..5usize,
        n_h0 in 0..3000u64,
        n_h1 in 1..3000u64,
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let t1 = theorem1_bound(&HierarchyBitsParams {
            hierarchy: TaskPreset::Sl22.hierarchy(),
            class_accuracy: pc,
            subclass_accuracy: pk,
            subclass_counts: counts,
        }).unwrap();
        prop_assert_eq!(t1.total_bits(), t1.class_bits() + t1.subclass_bits().unwrap());
        let t2 = theorem2_bound(&DetectionParams { p_h0: p0, p_h1: p1, n_h0, n_h1, n_s, p_s: 0.75 }).unwrap();
        prop_assert_eq!(t2.total_bits(), t2.class_bits() + t2.subclass_bits().unwrap());
    }

    #[test]
    fn metrics_agree_with_their_confusion(m in prop::collection::vec(prop::collection::vec(0..50u64, 3), 3)) {
        prop_assume!(m.iter().flatten().sum::<u64>() > 0);
        let total: u64 = m.iter().flatten().sum();
        let metrics = Metrics::from_confusion(m.clone(), None).unwrap();
        prop_assert_eq!(metrics.class_confusion.iter().flatten().sum::<u64>(), total);
        for c in 0..3 {
            let tp = m[c][c] as f64;
            let fp = (0..3).filter(|&r| r != c).map(|r| m[r][c]).sum::<u64>() as f64;
            let fn_ = (0..3).filter(|&k| k != c).map(|k| m[c][k]).sum::<u64>() as f64;
            let f1 = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
            prop_assert!((metrics.f1[c] - f1).abs() < 1e-12);
        }
        prop_assert_eq!(metrics.binary_f1, metrics.f1[0]);
    }
}

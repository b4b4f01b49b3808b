use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skdlab_core::tinynet::{DenseNetwork, LossSpec};

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    CrossEntropy,
    Distill,
    Blend(f64),
}

/// One random network, batch and loss, checked against central differences.
pub struct GradCase {
    pub dims: Vec<usize>,
    pub mode: Mode,
    pub tau: f64,
    pub max_rel_err: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn gradient_case(case: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d0d ^ case);
    let input = rng.random_range(1..=4);
    let depth = rng.random_range(0..=2);
    let mut dims = vec![input];
    for _ in 0..depth {
        dims.push(rng.random_range(2..=6));
    }
    dims.push(rng.random_range(2..=4));
    let out = *dims.last().unwrap();

    let mode = match case % 5 {
        0 => Mode::CrossEntropy,
        1 => Mode::Distill,
        2 => Mode::Blend(0.0),
        3 => Mode::Blend(0.45),
        _ => Mode::Blend(1.0),
    };
    let tau = [1.0, 2.0, 5.0][rng.random_range(0..3)];

    let mut net = DenseNetwork::init(&dims, case).unwrap();
    // Non-zero biases keep ReLU units away from the all-dead corner.
    let params: Vec<f64> = net
        .parameters()
        .iter()
        .map(|w| w + rng.random_range(-0.1..0.1))
        .collect();
    net.set_parameters(&params).unwrap();

    let batch = rng.random_range(1..=5);
    let inputs: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..input).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..out)).collect();
    let teacher: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..out).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let teacher_refs: Vec<&[f64]> = teacher.iter().map(Vec::as_slice).collect();

    let spec = match mode {
        Mode::CrossEntropy => LossSpec::CrossEntropy { labels: &labels },
        Mode::Distill => LossSpec::Distill {
            teacher_logits: &teacher_refs,
            tau,
        },
        Mode::Blend(lambda) => LossSpec::Blend {
            labels: &labels,
            teacher_logits: &teacher_refs,
            tau,
            lambda,
        },
    };

    let (_, grads) = net.backward(&inputs, &spec).unwrap();
    let analytic = grads.flatten();
    let base = net.parameters();
    assert_eq!(analytic.len(), base.len());

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        probe.set_parameters(&p).unwrap();
        let up = probe.loss(&inputs, &spec).unwrap();
        p[i] = base[i] - FD_STEP;
        probe.set_parameters(&p).unwrap();
        let down = probe.loss(&inputs, &spec).unwrap();
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g, numeric));
    }
    GradCase {
        dims,
        mode,
        tau,
        max_rel_err: worst,
    }
}

mod common;

use common::{gradient_case, Mode};

#[test]
fn analytic_gradients_match_central_differences() {
    let cases: Vec<_> = (0..50).map(gradient_case).collect();
    for c in &cases {
        assert!(
            c.max_rel_err < 1e-4,
            "dims {:?}, {:?}, tau {}: relative error {:e}",
            c.dims,
            c.mode,
            c.tau,
            c.max_rel_err
        );
    }
    for mode in [Mode::CrossEntropy, Mode::Distill, Mode::Blend(0.0), Mode::Blend(0.45), Mode::Blend(1.0)] {
        assert!(cases.iter().any(|c| c.mode == mode), "{mode:?} not covered");
    }
}

mod common;

use delaylab_core::models::{backward, grad_check, gradcheck_spec, gradcheck_suite, gradcheck_tolerance, random_instance};
use delaylab_core::numerics::ParamVector;

#[test]
fn finite_differences_agree_for_every_kind() {
    for kind in ["linear_regression", "mlp_classifier", "gru_lm"] {
        let spec = gradcheck_spec(kind).unwrap();
        let errs = gradcheck_suite(&spec, 100, 20).unwrap();
        assert_eq!(errs.len(), 20);
        let worst = errs.iter().copied().fold(0.0, f64::max);
        assert!(worst <= gradcheck_tolerance(&spec), "{kind}: {worst:e}");
    }
}

#[test]
fn gradient_of_concatenation_is_sum_of_gradients() {
    for kind in ["linear_regression", "mlp_classifier", "gru_lm"] {
        let spec = gradcheck_spec(kind).unwrap();
        for seed in 0..10 {
            let (p, a) = random_instance(&spec, seed).unwrap();
            let (_, b) = random_instance(&spec, seed + 1000).unwrap();
            let ga = backward(&spec, &p, &a).unwrap();
            let gb = backward(&spec, &p, &b).unwrap();
            let gab = backward(&spec, &p, &a.concat(&b).unwrap()).unwrap();
            let sum = ParamVector::axpy(1.0, &ga.grad, &gb.grad).unwrap();
            assert!(common::rel_err(sum.as_slice(), gab.grad.as_slice()) <= 1e-12, "{kind} seed {seed}");
            assert!((ga.loss + gb.loss - gab.loss).abs() <= 1e-12 * gab.loss.abs());
            assert_eq!(ga.tokens + gb.tokens, gab.tokens);
        }
    }
}

#[test]
fn rare_misses_are_rounding_not_gradient_errors() {
    for kind in ["linear_regression", "mlp_classifier", "gru_lm"] {
        let spec = gradcheck_spec(kind).unwrap();
        let tol = gradcheck_tolerance(&spec);
        let errs = gradcheck_suite(&spec, 0, 1000).unwrap();
        let misses: Vec<u64> = (0..1000).filter(|&i| errs[i as usize] > tol).collect();
        assert!(misses.len() <= 2, "{kind}: {misses:?}");
        // A larger step shrinks rounding noise tenfold; a wrong gradient would not improve.
        for seed in misses {
            let (p, b) = random_instance(&spec, seed).unwrap();
            assert!(grad_check(&spec, &p, &b, 1e-3).unwrap() <= tol, "{kind} seed {seed}");
        }
    }
}

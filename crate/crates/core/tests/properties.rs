//! Invariants over randomly drawn specs and inputs.

use proptest::prelude::*;

use immse::gauss::{assemble_joint, exact_rhs, gaussian_mi, gaussian_mi_derivative};
use immse::identities::fd_derivative;
use immse::mc::{mi_nested_batch, mi_nested_samples, simulate};
use immse::model::{canonicalize_linear, InputMap};
use immse::stats::log_sum_exp;
use immse::LinearFeedbackSpec;

fn linear_spec(feedback: bool) -> impl Strategy<Value = LinearFeedbackSpec> {
    (1usize..=4).prop_flat_map(move |n| {
        let scale = if feedback { 1.0 } else { 0.0 };
        (
            prop::collection::vec(-1.5f64..1.5, n),
            prop::collection::vec(-1.0f64..1.0, n * n),
            0.1f64..2.0,
        )
            .prop_map(move |(a, b, rho)| LinearFeedbackSpec {
                n,
                message_dim: 1,
                message_cov: vec![vec![1.0]],
                input_map: InputMap {
                    a: a.iter().map(|&x| vec![x]).collect(),
                    b: (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| if j < i { scale * b[i * n + j] } else { 0.0 })
                                .collect()
                        })
                        .collect(),
                },
                rho,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn log_sum_exp_is_shift_equivariant(xs in prop::collection::vec(-50.0f64..50.0, 1..20), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&xs) - c).abs() < 1e-9);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(log_sum_exp(&xs) >= max);
    }

    #[test]
    fn richardson_is_exact_on_cubics(c in prop::array::uniform4(-3.0f64..3.0), x0 in 0.5f64..3.0) {
        let f = |x: f64| Ok(c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x);
        let d = fd_derivative(f, x0, 0.1, 3).unwrap();
        let exact = c[1] + 2.0 * c[2] * x0 + 3.0 * c[3] * x0 * x0;
        prop_assert!((d.value - exact).abs() < 1e-8 * (1.0 + exact.abs()));
    }

    #[test]
    fn correction_vanishes_without_feedback(spec in linear_spec(false)) {
        let rhs = exact_rhs(&assemble_joint(&spec).unwrap()).unwrap();
        prop_assert_eq!(rhs.correctional, 0.0);
        prop_assert!(rhs.mmse >= 0.0);
    }

    #[test]
    fn information_grows_with_rho(spec in linear_spec(true)) {
        let mut last = 0.0;
        for rho in [0.0, 0.5, 1.0, 2.0] {
            let mut s = spec.clone();
            s.rho = rho;
            let mi = gaussian_mi(&assemble_joint(&s).unwrap()).unwrap();
            prop_assert!(mi >= last - 1e-12, "rho {}: {} < {}", rho, mi, last);
            last = mi;
        }
    }

    #[test]
    fn information_derivative_equals_mmse_term(spec in linear_spec(true)) {
        let jg = assemble_joint(&spec).unwrap();
        let d = gaussian_mi_derivative(&jg).unwrap();
        let mmse = exact_rhs(&jg).unwrap().mmse;
        prop_assert!((d - mmse).abs() < 1e-9 * (1.0 + mmse), "{} vs {}", d, mmse);
    }

    #[test]
    fn simulated_outputs_reconstruct(spec in linear_spec(true), seed in any::<u64>()) {
        let sys = canonicalize_linear(&spec).unwrap();
        let batch = simulate(&sys, 64, seed).unwrap();
        prop_assert!(batch.reconstruction_error() < 1e-12);
        let again = simulate(&sys, 64, seed).unwrap();
        prop_assert_eq!(batch.paths, again.paths);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn batched_estimates_match_single_runs(spec in linear_spec(true), seed in any::<u64>()) {
        let sys = canonicalize_linear(&spec).unwrap();
        let other = sys.with_rho(sys.rho * 1.1);
        let batch = mi_nested_batch(&[sys.clone(), other.clone()], 30, &[16], seed).unwrap();
        prop_assert_eq!(&batch[0][0], &mi_nested_samples(&sys, 30, 16, seed).unwrap());
        prop_assert_eq!(&batch[1][0], &mi_nested_samples(&other, 30, 16, seed).unwrap());
    }
}

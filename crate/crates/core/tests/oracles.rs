//! Closed-form checks of the oracles and estimators through the public API.

use std::collections::BTreeMap;
use std::f64::consts::{E, LN_2, PI};

use approx::assert_abs_diff_eq;

use immse::builtins::{
    binary_input, ct_constant_message, debruijn_gaussian, linear_feedback, linear_feedback_n2,
    scalar_gaussian,
};
use immse::ctsim::{ct_rhs, girsanov_loglik, solve_em};
use immse::gauss::{assemble_joint, exact_rhs, gaussian_mi, gaussian_posterior};
use immse::identities::{check, fd_derivative, Budget, IdentityId, RoutePreference, Verdict};
use immse::mc::{
    density_grid, density_grid_debruijn, mi_nested, posterior, simulate, GridSpec, Integrand,
};
use immse::model::canonicalize_linear;
use immse::registry::drift;
use immse::{AnySpec, MessagePrior, SystemSpec};

#[test]
fn scalar_mi_and_mmse_match_closed_forms() {
    for rho in [0.5, 1.0, 2.0] {
        let jg = assemble_joint(&linear_feedback(0.0, rho)).unwrap();
        let snr = rho * rho;
        // Two looks at one message: I = ½ ln(1 + 2ρ²), posterior variance
        // 1/(1 + 2ρ²) at each use.
        assert_abs_diff_eq!(
            gaussian_mi(&jg).unwrap(),
            0.5 * (1.0 + 2.0 * snr).ln(),
            epsilon = 1e-12
        );
        let rhs = exact_rhs(&jg).unwrap();
        assert_abs_diff_eq!(rhs.mmse, 2.0 * rho / (1.0 + 2.0 * snr), epsilon = 1e-12);
        assert_eq!(rhs.correctional, 0.0);
    }
}

#[test]
fn output_variance_with_feedback() {
    let (alpha, rho) = (0.7, 1.3);
    let jg = assemble_joint(&linear_feedback(alpha, rho)).unwrap();
    let var = rho * rho * (1.0 + alpha * rho).powi(2) + rho * rho * alpha * alpha + 1.0;
    assert_abs_diff_eq!(jg.output_cov()[(1, 1)], var, epsilon = 1e-12);
}

#[test]
fn gaussian_posterior_mean_of_message() {
    let rho = 1.5;
    let jg = assemble_joint(&linear_feedback(0.0, rho)).unwrap();
    let post = gaussian_posterior(&jg, &[0.8, -0.2]).unwrap();
    // Two looks at W: E[W|Y] = ρ(y₁ + y₂)/(1 + 2ρ²).
    let expected = rho * (0.8 - 0.2) / (1.0 + 2.0 * rho * rho);
    assert_abs_diff_eq!(post.message_mean()[0], expected, epsilon = 1e-12);
}

#[test]
fn monte_carlo_posterior_agrees_with_conditioning() {
    let spec = linear_feedback_n2();
    let sys = canonicalize_linear(&spec).unwrap();
    let jg = assemble_joint(&spec).unwrap();
    let y = [0.4, 1.1];
    let exact = gaussian_posterior(&jg, &y).unwrap().message_mean()[0];
    let mc = posterior(
        &sys,
        &y,
        Integrand::Message {
            component: 0,
            power: 1,
        },
        10_000,
        3,
    )
    .unwrap();
    assert!(
        (mc.value - exact).abs() <= 3.0 * mc.std_error,
        "{} vs {exact}",
        mc.value
    );
}

#[test]
fn binary_posterior_is_symmetric_at_zero() {
    let spec = SystemSpec::new(
        1,
        drift("message", &BTreeMap::new()).unwrap(),
        MessagePrior::scalar_finite(&[1.0, -1.0], &[0.5, 0.5]),
        1.0,
    );
    let est = posterior(
        &spec,
        &[0.0],
        Integrand::Message {
            component: 0,
            power: 1,
        },
        1,
        0,
    )
    .unwrap();
    assert_eq!(est.value, 0.0);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn nested_mi_recovers_half_ln_two() {
    let sys = SystemSpec::new(
        1,
        drift("message", &BTreeMap::new()).unwrap(),
        MessagePrior::scalar_gaussian(0.0, 1.0),
        1.0,
    );
    let est = mi_nested(&sys, 4_000, 4_000, 11).unwrap();
    assert!(
        (est.value - 0.5 * LN_2).abs() < 0.03 * 0.5 * LN_2,
        "{}",
        est.value
    );
}

#[test]
fn simulated_paths_satisfy_the_channel_law() {
    let sys = canonicalize_linear(&linear_feedback_n2()).unwrap();
    let batch = simulate(&sys, 500, 2).unwrap();
    assert!(batch.reconstruction_error() < 1e-12);
}

#[test]
fn output_entropy_of_gaussian_channel() {
    let spec = scalar_gaussian();
    let table = density_grid(&spec, &GridSpec::for_channel(&spec)).unwrap();
    assert_abs_diff_eq!(table.entropy, 0.5 * (4.0 * PI * E).ln(), epsilon = 1e-8);
}

#[test]
fn heat_flow_fisher_information() {
    let spec = debruijn_gaussian();
    let table = density_grid_debruijn(&spec, &GridSpec::for_debruijn(&spec)).unwrap();
    assert_abs_diff_eq!(table.fisher, 0.5, epsilon = 1e-8);
}

#[test]
fn richardson_derivative_of_known_functions() {
    let d = fd_derivative(|x| Ok(x.sin()), 0.3, 0.1, 4).unwrap();
    assert_abs_diff_eq!(d.value, 0.3f64.cos(), epsilon = 1e-10);
    // Near zero the stencil turns one-sided.
    let d = fd_derivative(|x| Ok(x * x * x), 0.05, 0.1, 4).unwrap();
    assert!(d.one_sided);
    assert_abs_diff_eq!(d.value, 3.0 * 0.05 * 0.05, epsilon = 1e-10);
}

#[test]
fn heat_flow_derivative_through_harness() {
    let spec = AnySpec::DeBruijn(debruijn_gaussian());
    let report = check(IdentityId::Debruijn, &spec, &Budget::default()).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    assert_abs_diff_eq!(report.lhs.value, 0.25, epsilon = 1e-8);
}

#[test]
fn binary_channel_identity_on_grid() {
    let spec = AnySpec::Scalar(binary_input());
    let report = check(IdentityId::ImmseSnr, &spec, &Budget::default()).unwrap();
    assert_eq!(report.verdict, Verdict::Pass, "{report:?}");
}

#[test]
fn constant_message_ct_terms() {
    let spec = ct_constant_message();
    let rhs = ct_rhs(&spec, 2_000, 2_000, 4).unwrap();
    // ρ∫ E[(W − E[W|Y])²] ds over [0, 1] with ρ = 1 is 1/(1 + 1).
    assert!(
        (rhs.mmse.value - 0.5).abs() <= 3.0 * rhs.mmse.std_error + 1e-3,
        "{:?}",
        rhs.mmse
    );
    assert_eq!(rhs.correctional.value, 0.0);
}

#[test]
fn girsanov_likelihood_of_constant_message() {
    let spec = ct_constant_message();
    let batch = solve_em(&spec, 200, 8).unwrap();
    // With ρ = T = 1 and the true message, the log-likelihood ratio is
    // ½W² + W·B(T) pathwise.
    for p in 0..batch.len() {
        let w = batch.messages[(p, 0)];
        let b: f64 = batch.brownian.row(p).sum();
        let y = batch.y_paths.row(p).to_vec();
        let ll = girsanov_loglik(&spec, &y, &[w]).unwrap();
        assert_abs_diff_eq!(ll, 0.5 * w * w + w * b, epsilon = 1e-9);
    }
}

#[test]
fn extended_relation_without_feedback_holds() {
    let mut params = BTreeMap::new();
    params.insert("kappa".to_string(), 0.5);
    let sys = SystemSpec::new(
        2,
        drift("power_control", &params).unwrap(),
        MessagePrior::scalar_gaussian(0.0, 1.0),
        1.0,
    );
    let budget = Budget::monte_carlo(2_000, 2_000, 3);
    let report = check(IdentityId::DtExtended, &AnySpec::System(sys), &budget).unwrap();
    assert_eq!(report.verdict, Verdict::Pass, "{report:?}");
    assert!(report.rhs.correctional < 0.0);
}

#[test]
fn feedback_relation_tracks_the_mmse_term() {
    // For linear feedback the information derivative equals the mmse term
    // alone; the gap to the full right-hand side is the correction.
    let jg = assemble_joint(&linear_feedback_n2()).unwrap();
    let rhs = exact_rhs(&jg).unwrap();
    let budget = Budget {
        route: RoutePreference::Oracle,
        ..Budget::default()
    };
    let report = check(
        IdentityId::DtExtended,
        &AnySpec::Linear(linear_feedback_n2()),
        &budget,
    )
    .unwrap();
    assert_abs_diff_eq!(report.lhs.value, rhs.mmse, epsilon = 1e-8);
    assert_abs_diff_eq!(report.gap.absolute, rhs.correctional.abs(), epsilon = 1e-8);
}

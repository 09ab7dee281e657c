//! Monte Carlo engine for general discrete-time systems.
//!
//! Paths are simulated jointly with their pathwise `ρ`-sensitivities
//! `S_i = dY_i/dρ`. Posterior expectations given `Y_1^n` use the prior as
//! proposal with log-sum-exp weight normalization; finite message alphabets
//! are summed exactly.
//!
//! Path `p` always draws from substream `p` of the relevant purpose, so a
//! batch is bit-reproducible from `(spec, N, seed)` for any worker count,
//! and re-running at another `ρ` with the same seed reuses the same noise.

mod density;
mod mi;
mod pass;
mod posterior;
mod rhs;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{MessageSampler, SystemSpec, Validate};
use crate::rng::{purpose, substream};
use crate::{par, Error, Result};

pub use density::{
    density_grid, density_grid_debruijn, fisher_from_posterior, posterior_mean_scalar,
    DensityTable, FisherEstimate, GridSpec,
};
pub use mi::{mi_nested, mi_nested_batch, mi_nested_samples, MiEstimate, MiSamples};
pub use pass::{check_pass, CheckPass};
pub use posterior::{posterior, Integrand, PosteriorEstimate};
pub use rhs::{mmse_and_correction, mmse_and_correction_batch, MmseCorrection};

pub(crate) use posterior::posterior_weights;

/// Simulated outputs with per-path noise, messages, drifts and sensitivities.
#[derive(Clone, Debug)]
pub struct PathBatch {
    pub rho: f64,
    /// `N × n` outputs.
    pub paths: Array2<f64>,
    pub noises: Array2<f64>,
    /// `N × d` message draws.
    pub messages: Array2<f64>,
    /// Realized `g_i`.
    pub drifts: Array2<f64>,
    /// `S_i = dY_i/dρ`.
    pub sensitivities: Array2<f64>,
    /// Realized `dg_i/dρ`.
    pub drift_sens: Array2<f64>,
    pub seed: u64,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.paths.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest `|Y_i − ρ g_i − Z_i|` over the batch.
    pub fn reconstruction_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for ((y, g), z) in self.paths.iter().zip(&self.drifts).zip(&self.noises) {
            worst = worst.max((y - self.rho * g - z).abs());
        }
        worst
    }
}

/// One simulated path.
#[derive(Clone, Debug, Default)]
pub(crate) struct SimPath {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<f64>,
    pub s: Vec<f64>,
    pub dg: Vec<f64>,
}

/// Forward recursion `Y_i = ρ g_i + Z_i` run jointly with
/// `dg_i/dρ = ∂g_i/∂ρ + Σ_{j<i} (∂g_i/∂y_j) S_j` and `S_i = g_i + ρ dg_i/dρ`.
pub(crate) fn simulate_path<R: Rng + ?Sized>(
    spec: &SystemSpec,
    sampler: &MessageSampler,
    rng: &mut R,
    path: usize,
) -> Result<SimPath> {
    let n = spec.n;
    let rho = spec.rho;
    let w = sampler.sample(rng);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = SimPath {
        w,
        z,
        y: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        dg: Vec::with_capacity(n),
    };
    let mut jac = vec![0.0; n];
    let feedback = spec.drift.uses_outputs();
    for i in 0..n {
        let y_past = &out.y[..i];
        let g = spec.drift.eval(i, &out.w, y_past, rho);
        if !g.is_finite() {
            return Err(Error::DriftFailure {
                path,
                step: i,
                value: g,
            });
        }
        let mut dg = spec.drift.rho_partial(i, &out.w, y_past, rho);
        if feedback && i > 0 {
            spec.jacobian_row(i, &out.w, y_past, &mut jac);
            dg += jac[..i].iter().zip(&out.s).map(|(a, b)| a * b).sum::<f64>();
        }
        if !dg.is_finite() {
            return Err(Error::DriftFailure {
                path,
                step: i,
                value: dg,
            });
        }
        out.s.push(g + rho * dg);
        out.y.push(rho * g + out.z[i]);
        out.g.push(g);
        out.dg.push(dg);
    }
    Ok(out)
}

pub(crate) fn simulate_paths(spec: &SystemSpec, n_paths: usize, seed: u64) -> Result<Vec<SimPath>> {
    let sampler = spec.message_prior.sampler()?;
    par::try_map_indexed(n_paths, |p| {
        let mut rng = substream(seed, purpose::SIMULATE, p as u64);
        simulate_path(spec, &sampler, &mut rng, p)
    })
}

/// Simulates `n_paths` outputs of the system. Bit-reproducible per
/// `(spec, n_paths, seed)`.
pub fn simulate(spec: &SystemSpec, n_paths: usize, seed: u64) -> Result<PathBatch> {
    spec.validate().into_result()?;
    if n_paths == 0 {
        return Err(Error::Argument("path count must be at least 1".into()));
    }
    let sims = simulate_paths(spec, n_paths, seed)?;
    let n = spec.n;
    let d = spec.message_prior.dim();
    let fill = |cols: usize, f: &dyn Fn(&SimPath) -> &[f64]| {
        Array2::from_shape_fn((n_paths, cols), |(p, i)| f(&sims[p])[i])
    };
    Ok(PathBatch {
        rho: spec.rho,
        paths: fill(n, &|s| &s.y),
        noises: fill(n, &|s| &s.z),
        messages: fill(d, &|s| &s.w),
        drifts: fill(n, &|s| &s.g),
        sensitivities: fill(n, &|s| &s.s),
        drift_sens: fill(n, &|s| &s.dg),
        seed,
    })
}

const VALIDATION_PATHS: usize = 256;
const VALIDATION_SEED: u64 = 0x00c0_ffee;

/// Second moments of `g_i` and `dg_i/dρ` on a fixed validation batch;
/// returns a violation message when they are not finite.
pub(crate) fn moment_check(spec: &SystemSpec) -> Option<String> {
    let sampler = match spec.message_prior.sampler() {
        Ok(s) => s,
        Err(e) => return Some(format!("message prior unusable: {e}")),
    };
    let mut sum_g = 0.0;
    let mut sum_dg = 0.0;
    for p in 0..VALIDATION_PATHS {
        let mut rng = substream(VALIDATION_SEED, purpose::VALIDATION, p as u64);
        match simulate_path(spec, &sampler, &mut rng, p) {
            Ok(path) => {
                sum_g += path.g.iter().map(|g| g * g).sum::<f64>();
                sum_dg += path.dg.iter().map(|g| g * g).sum::<f64>();
            }
            Err(e) => return Some(format!("drift failed on validation batch: {e}")),
        }
    }
    if !(sum_g.is_finite() && sum_dg.is_finite()) {
        return Some("moment bound violated: second moments of g or dg/drho not finite".into());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::linear_feedback;
    use crate::gauss::assemble_joint;
    use crate::model::{canonicalize_linear, InputMap, LinearFeedbackSpec};
    use crate::registry;
    use std::collections::BTreeMap;

    fn random_linear(n: usize, seed: u64) -> LinearFeedbackSpec {
        let mut rng = substream(seed, 99, 0);
        let mut b = vec![vec![0.0; n]; n];
        for (i, row) in b.iter_mut().enumerate() {
            for v in row.iter_mut().take(i) {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        LinearFeedbackSpec {
            n,
            message_dim: 1,
            message_cov: vec![vec![1.3]],
            input_map: InputMap {
                a: (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect(),
                b,
            },
            rho: 0.9,
        }
    }

    #[test]
    fn no_feedback_has_zero_drift_sensitivity() {
        let sys = canonicalize_linear(&linear_feedback(0.0, 1.0)).unwrap();
        let batch = simulate(&sys, 50, 1).unwrap();
        assert!(batch.drift_sens.iter().all(|v| *v == 0.0));
        assert_eq!(batch.sensitivities, batch.drifts);
    }

    #[test]
    fn reconstruction_holds() {
        let sys = canonicalize_linear(&random_linear(4, 3)).unwrap();
        let batch = simulate(&sys, 200, 5).unwrap();
        assert!(batch.reconstruction_error() < 1e-14);
        for ((s, g), dg) in batch
            .sensitivities
            .iter()
            .zip(&batch.drifts)
            .zip(&batch.drift_sens)
        {
            assert!((s - (g + batch.rho * dg)).abs() < 1e-14);
        }
    }

    #[test]
    fn sensitivities_match_linear_oracle() {
        for n in 1..=4 {
            let spec = random_linear(n, n as u64);
            let jg = assemble_joint(&spec).unwrap();
            let sys = canonicalize_linear(&spec).unwrap();
            let batch = simulate(&sys, 20, 11).unwrap();
            for p in 0..batch.len() {
                let mut v = vec![batch.messages[(p, 0)]];
                v.extend(batch.noises.row(p).iter());
                for i in 0..n {
                    let expect: f64 = (0..v.len()).map(|c| jg.dl[(i, c)] * v[c]).sum();
                    assert!((batch.sensitivities[(p, i)] - expect).abs() < 1e-10);
                    let y: f64 = (0..v.len()).map(|c| jg.l[(i, c)] * v[c]).sum();
                    assert!((batch.paths[(p, i)] - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn sensitivities_match_common_random_number_differences() {
        let spec = random_linear(4, 8);
        let h = 1e-4;
        let sys = canonicalize_linear(&spec).unwrap();
        let base = simulate(&sys, 30, 2).unwrap();
        let up = simulate(&sys.with_rho(spec.rho + h), 30, 2).unwrap();
        let down = simulate(&sys.with_rho(spec.rho - h), 30, 2).unwrap();
        let fd = (&up.paths - &down.paths) / (2.0 * h);
        let worst = (&fd - &base.sensitivities)
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.abs()));
        assert!(worst < 1e-6, "worst {worst}");
    }

    #[test]
    fn nonlinear_sensitivity_uses_finite_difference_jacobian() {
        let mut p = BTreeMap::new();
        p.insert("alpha".to_string(), 0.8);
        let drift = registry::drift("tanh_feedback", &p).unwrap();
        let sys = SystemSpec::new(
            3,
            drift,
            crate::model::MessagePrior::scalar_gaussian(0.0, 1.0),
            0.7,
        );
        let h = 1e-4;
        let base = simulate(&sys, 25, 4).unwrap();
        let up = simulate(&sys.with_rho(0.7 + h), 25, 4).unwrap();
        let down = simulate(&sys.with_rho(0.7 - h), 25, 4).unwrap();
        let fd = (&up.paths - &down.paths) / (2.0 * h);
        let worst = (&fd - &base.sensitivities)
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.abs()));
        assert!(worst < 1e-6, "worst {worst}");
    }

    #[test]
    fn explicit_rho_dependence_enters_sensitivity() {
        let mut p = BTreeMap::new();
        p.insert("kappa".to_string(), 0.5);
        let sys = SystemSpec::new(
            2,
            registry::drift("power_control", &p).unwrap(),
            crate::model::MessagePrior::scalar_gaussian(0.0, 1.0),
            1.2,
        );
        let h = 1e-5;
        let base = simulate(&sys, 10, 4).unwrap();
        let up = simulate(&sys.with_rho(1.2 + h), 10, 4).unwrap();
        let down = simulate(&sys.with_rho(1.2 - h), 10, 4).unwrap();
        let fd = (&up.paths - &down.paths) / (2.0 * h);
        let worst = (&fd - &base.sensitivities)
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.abs()));
        assert!(worst < 1e-8, "worst {worst}");
    }

    #[test]
    fn batch_is_reproducible() {
        let sys = canonicalize_linear(&linear_feedback(0.5, 1.0)).unwrap();
        let a = simulate(&sys, 64, 9).unwrap();
        let b = simulate(&sys, 64, 9).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.sensitivities, b.sensitivities);
    }

    #[test]
    fn drift_failure_reports_path_and_step() {
        #[derive(Debug)]
        struct Blowup;
        impl crate::model::Drift for Blowup {
            fn describe(&self) -> String {
                "blowup".into()
            }
            fn eval(&self, i: usize, w: &[f64], _y: &[f64], _rho: f64) -> f64 {
                if i == 1 && w[0] > 0.0 {
                    f64::NAN
                } else {
                    w[0]
                }
            }
        }
        let sys = SystemSpec::new(
            2,
            std::sync::Arc::new(Blowup),
            crate::model::MessagePrior::scalar_finite(&[1.0], &[1.0]),
            1.0,
        );
        assert!(sys.validate().contains("drift failed"));
        let sampler = sys.message_prior.sampler().unwrap();
        let mut rng = substream(0, purpose::SIMULATE, 0);
        match simulate_path(&sys, &sampler, &mut rng, 7) {
            Err(Error::DriftFailure { path, step, .. }) => assert_eq!((path, step), (7, 1)),
            other => panic!("{other:?}"),
        }
    }
}

//! Continuous-time engine for `dY = ρ g(t, W, Y_0^t) dt + dB`.
//!
//! Paths live on the grid `t_k = kΔ`, `k = 0..=K`. Drifts see the grid
//! values `y(t_0..t_k)` (a piecewise-constant interpolant) and every
//! stochastic integral is evaluated at the left endpoint, so the Girsanov
//! exponent is an Itô sum.
//!
//! Path `p` draws its message and Brownian increments from substream `p`,
//! which makes batches reproducible for any worker count and couples runs
//! at different `ρ` through common random numbers.

mod estimators;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{CTSystemSpec, MessageSampler, Solver, Validate};
use crate::rng::{purpose, substream};
use crate::stats::Estimate;
use crate::{par, Error, Result};

pub use estimators::{
    ct_mi, ct_mi_samples, ct_rhs, CtMiEstimate, CtMiSamples, CtRhs, FILTER_INTERVALS,
};

/// Iteration cap used when an estimator solves its outer paths by Picard.
pub const PICARD_MAX_ITER: usize = 500;
pub const PICARD_TOL: f64 = 1e-12;

/// Solved paths with their Brownian drivers and sensitivities.
#[derive(Clone, Debug)]
pub struct CTPathBatch {
    /// `t_0..t_K`.
    pub times: Vec<f64>,
    /// `N × K` increments `ΔB_k`.
    pub brownian: Array2<f64>,
    /// `N × (K+1)`, first column zero.
    pub y_paths: Array2<f64>,
    /// `N × K` values `g(t_k)` along the solved path.
    pub drift_vals: Array2<f64>,
    /// `N × K` values `dg/dρ (t_k)`.
    pub drift_sens: Array2<f64>,
    /// `N × (K+1)` pathwise `dY/dρ`.
    pub sensitivities: Array2<f64>,
    pub messages: Array2<f64>,
    pub solver_tag: Solver,
    /// Picard iterations per path (all 1 for Euler–Maruyama).
    pub iterations: Vec<usize>,
    pub rho: f64,
    pub step: f64,
    pub seed: u64,
}

impl CTPathBatch {
    pub fn len(&self) -> usize {
        self.y_paths.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest `|Y(t_{k+1}) − Y(t_k) − ρ g(t_k) Δ − ΔB_k|`. Zero up to
    /// rounding for Euler–Maruyama batches; `O(Δ²)` for Picard batches,
    /// whose time integral uses the trapezoid rule.
    pub fn euler_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for p in 0..self.len() {
            for k in 0..self.brownian.ncols() {
                let r = self.y_paths[(p, k + 1)]
                    - self.y_paths[(p, k)]
                    - self.rho * self.drift_vals[(p, k)] * self.step
                    - self.brownian[(p, k)];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Pathwise sup-norm distance to another batch on the same grid.
    pub fn sup_distance(&self, other: &CTPathBatch) -> f64 {
        self.y_paths
            .iter()
            .zip(&other.y_paths)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// Drift, sensitivity and log-likelihood of message `w` along a fixed path.
#[derive(Clone, Debug)]
pub(crate) struct AlongPath {
    pub loglik: f64,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub s: Vec<f64>,
}

/// Evaluates `g(t_k, w, y_0..y_k)` for `k < K` along `y`, the Itô
/// log-likelihood, and (optionally) the sensitivity recursion
/// `S_{k+1} = S_k + (g_k + ρ dg_k) Δ` with
/// `dg_k = ∂g/∂ρ + Σ_j c_j S_j` from the path gradient.
pub(crate) fn along_path(
    spec: &CTSystemSpec,
    w: &[f64],
    y: &[f64],
    with_sens: bool,
    path: usize,
    grad: &mut [f64],
) -> Result<AlongPath> {
    let k_max = y.len() - 1;
    let rho = spec.rho;
    let dt = spec.step;
    let mut out = AlongPath {
        loglik: 0.0,
        g: Vec::with_capacity(k_max),
        dg: Vec::with_capacity(if with_sens { k_max } else { 0 }),
        s: Vec::with_capacity(if with_sens { k_max + 1 } else { 0 }),
    };
    if with_sens {
        out.s.push(0.0);
    }
    let mut stoch = 0.0;
    let mut energy = 0.0;
    for k in 0..k_max {
        let t = spec.time(k);
        let past = &y[..=k];
        let g = spec.drift.eval(k, t, w, past, rho);
        if !g.is_finite() {
            return Err(Error::DriftFailure {
                path,
                step: k,
                value: g,
            });
        }
        stoch += g * (y[k + 1] - y[k]);
        energy += g * g;
        if with_sens {
            let mut d = spec.drift.rho_partial(k, t, w, past, rho);
            if let Some(lo) = spec.drift.path_gradient(k, t, w, past, rho, grad) {
                d += grad[lo..=k]
                    .iter()
                    .zip(&out.s[lo..=k])
                    .map(|(c, s)| c * s)
                    .sum::<f64>();
            }
            if !d.is_finite() {
                return Err(Error::DriftFailure {
                    path,
                    step: k,
                    value: d,
                });
            }
            let next = out.s[k] + (g + rho * d) * dt;
            out.s.push(next);
            out.dg.push(d);
        }
        out.g.push(g);
    }
    out.loglik = rho * stoch - 0.5 * rho * rho * dt * energy;
    Ok(out)
}

/// Log Radon–Nikodym derivative of the output law given `W = w` with
/// respect to Wiener measure, evaluated on `y_path`:
/// `ρ Σ g_k (y_{k+1} − y_k) − (ρ² Δ / 2) Σ g_k²`.
pub fn girsanov_loglik(spec: &CTSystemSpec, y_path: &[f64], w: &[f64]) -> Result<f64> {
    if y_path.len() != spec.steps() + 1 {
        return Err(Error::Argument(format!(
            "path has {} points, grid has {}",
            y_path.len(),
            spec.steps() + 1
        )));
    }
    if w.len() != spec.message_prior.dim() {
        return Err(Error::Argument("message dimension mismatch".into()));
    }
    let mut grad = vec![0.0; y_path.len()];
    Ok(along_path(spec, w, y_path, false, 0, &mut grad)?.loglik)
}

/// Euler–Maruyama solution `y_{k+1} = y_k + ρ g(t_k) Δ + ΔB_k`, `y_0 = 0`.
pub fn em_path(spec: &CTSystemSpec, w: &[f64], increments: &[f64]) -> Result<Vec<f64>> {
    em_path_indexed(spec, w, increments, 0)
}

fn em_path_indexed(
    spec: &CTSystemSpec,
    w: &[f64],
    increments: &[f64],
    path: usize,
) -> Result<Vec<f64>> {
    let mut y = Vec::with_capacity(increments.len() + 1);
    y.push(0.0);
    for (k, db) in increments.iter().enumerate() {
        let g = spec.drift.eval(k, spec.time(k), w, &y, spec.rho);
        if !g.is_finite() {
            return Err(Error::DriftFailure {
                path,
                step: k,
                value: g,
            });
        }
        y.push(y[k] + spec.rho * g * spec.step + db);
    }
    Ok(y)
}

/// Picard iterates and their successive sup-norm changes.
#[derive(Clone, Debug, PartialEq)]
pub struct PicardTrace {
    pub y: Vec<f64>,
    /// `‖Y_(m+1) − Y_(m)‖_∞` for each update performed.
    pub residuals: Vec<f64>,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

/// Iterates `Y_(m+1)(t_k) = B(t_k) + ρ ∫_0^{t_k} g(s, W, Y_(m)) ds` from
/// `Y_(0) = B`, with the time integral by the trapezoid rule on the grid.
/// Stops once an update moves the path by less than `tol`.
pub fn picard_path(
    spec: &CTSystemSpec,
    w: &[f64],
    increments: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<PicardTrace> {
    picard_path_indexed(spec, w, increments, max_iter, tol, 0)
}

fn picard_path_indexed(
    spec: &CTSystemSpec,
    w: &[f64],
    increments: &[f64],
    max_iter: usize,
    tol: f64,
    path: usize,
) -> Result<PicardTrace> {
    let k_max = increments.len();
    let mut b = Vec::with_capacity(k_max + 1);
    b.push(0.0);
    for db in increments {
        b.push(b.last().unwrap() + db);
    }
    let mut y = b.clone();
    let mut g = vec![0.0; k_max + 1];
    let mut residuals = Vec::new();
    let half = 0.5 * spec.rho * spec.step;
    let feedback = spec.drift.uses_outputs();
    for _ in 0..max_iter {
        for (k, gk) in g.iter_mut().enumerate() {
            let v = spec.drift.eval(k, spec.time(k), w, &y[..=k], spec.rho);
            if !v.is_finite() {
                return Err(Error::DriftFailure {
                    path,
                    step: k,
                    value: v,
                });
            }
            *gk = v;
        }
        let mut next = Vec::with_capacity(k_max + 1);
        next.push(0.0);
        let mut integral = 0.0;
        for k in 0..k_max {
            integral += half * (g[k] + g[k + 1]);
            next.push(b[k + 1] + integral);
        }
        let change = next
            .iter()
            .zip(&y)
            .fold(0.0_f64, |a, (u, v)| a.max((u - v).abs()));
        residuals.push(change);
        y = next;
        // Without path dependence the first update is already the fixed point.
        if !feedback || change < tol {
            return Ok(PicardTrace { y, residuals });
        }
    }
    Err(Error::PicardNotConverged {
        iterations: max_iter,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Message and `√Δ`-scaled standard normal increments of outer path `p`.
pub(crate) fn draw_path_inputs(
    spec: &CTSystemSpec,
    sampler: &MessageSampler,
    seed: u64,
    p: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = substream(seed, purpose::CT_PATHS, p as u64);
    let w = sampler.sample(&mut rng);
    let sd = spec.step.sqrt();
    let db = (0..spec.steps())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (w, db)
}

/// One solved outer path.
#[derive(Clone, Debug)]
pub(crate) struct CtPath {
    pub w: Vec<f64>,
    pub db: Vec<f64>,
    pub y: Vec<f64>,
    pub along: AlongPath,
    pub iterations: usize,
}

pub(crate) fn solve_path(
    spec: &CTSystemSpec,
    sampler: &MessageSampler,
    seed: u64,
    p: usize,
    solver: Solver,
    max_iter: usize,
    tol: f64,
    with_sens: bool,
) -> Result<CtPath> {
    let (w, db) = draw_path_inputs(spec, sampler, seed, p);
    let (y, iterations) = match solver {
        Solver::EulerMaruyama => (em_path_indexed(spec, &w, &db, p)?, 1),
        Solver::Picard => {
            let tr = picard_path_indexed(spec, &w, &db, max_iter, tol, p)?;
            let it = tr.iterations();
            (tr.y, it)
        }
    };
    let mut grad = vec![0.0; y.len()];
    let along = along_path(spec, &w, &y, with_sens, p, &mut grad)?;
    Ok(CtPath {
        w,
        db,
        y,
        along,
        iterations,
    })
}

fn batch(
    spec: &CTSystemSpec,
    n_paths: usize,
    seed: u64,
    solver: Solver,
    max_iter: usize,
    tol: f64,
) -> Result<CTPathBatch> {
    spec.validate().into_result()?;
    if n_paths == 0 {
        return Err(Error::Argument("path count must be at least 1".into()));
    }
    let sampler = spec.message_prior.sampler()?;
    let paths = par::try_map_indexed(n_paths, |p| {
        solve_path(spec, &sampler, seed, p, solver, max_iter, tol, true)
    })?;
    let k = spec.steps();
    let d = spec.message_prior.dim();
    let fill = |cols: usize, f: &dyn Fn(&CtPath) -> &[f64]| {
        Array2::from_shape_fn((n_paths, cols), |(p, i)| f(&paths[p])[i])
    };
    Ok(CTPathBatch {
        times: (0..=k).map(|i| spec.time(i)).collect(),
        brownian: fill(k, &|c| &c.db),
        y_paths: fill(k + 1, &|c| &c.y),
        drift_vals: fill(k, &|c| &c.along.g),
        drift_sens: fill(k, &|c| &c.along.dg),
        sensitivities: fill(k + 1, &|c| &c.along.s),
        messages: fill(d, &|c| &c.w),
        solver_tag: solver,
        iterations: paths.iter().map(|c| c.iterations).collect(),
        rho: spec.rho,
        step: spec.step,
        seed,
    })
}

/// Euler–Maruyama batch with pathwise `ρ`-sensitivities.
pub fn solve_em(spec: &CTSystemSpec, n_paths: usize, seed: u64) -> Result<CTPathBatch> {
    batch(spec, n_paths, seed, Solver::EulerMaruyama, 0, 0.0)
}

/// Picard batch on the same messages and Brownian increments as
/// [`solve_em`] with the same seed.
pub fn solve_picard(
    spec: &CTSystemSpec,
    n_paths: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<CTPathBatch> {
    batch(spec, n_paths, seed, Solver::Picard, max_iter, tol)
}

/// Mean of `exp(girsanov_loglik(B, w))` over Brownian paths `B`; equals one
/// for any drift satisfying Novikov's condition.
pub fn girsanov_normalization(
    spec: &CTSystemSpec,
    w: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    spec.validate().into_result()?;
    if w.len() != spec.message_prior.dim() {
        return Err(Error::Argument("message dimension mismatch".into()));
    }
    let k_max = spec.steps();
    let sd = spec.step.sqrt();
    let vals = par::try_map_indexed(n_paths, |p| {
        let mut rng = substream(seed, purpose::CHECK, p as u64);
        let mut y = Vec::with_capacity(k_max + 1);
        y.push(0.0);
        for k in 0..k_max {
            y.push(y[k] + sd * rng.sample::<f64, _>(StandardNormal));
        }
        let mut grad = vec![0.0; k_max + 1];
        Ok::<_, Error>(along_path(spec, w, &y, false, p, &mut grad)?.loglik.exp())
    })?;
    Ok(Estimate::from_samples(&vals))
}

const VALIDATION_PATHS: usize = 32;
const VALIDATION_SEED: u64 = 0x00c0_ffee;
const DRIFT_BOUND: f64 = 1e12;

/// Solves a small validation batch and reports drifts that are not finite
/// or exceed a large bound.
pub(crate) fn boundedness_check(spec: &CTSystemSpec) -> Option<String> {
    let sampler = match spec.message_prior.sampler() {
        Ok(s) => s,
        Err(e) => return Some(format!("message prior unusable: {e}")),
    };
    let mut worst = 0.0_f64;
    for p in 0..VALIDATION_PATHS {
        let mut rng = substream(VALIDATION_SEED, purpose::VALIDATION, p as u64);
        let w = sampler.sample(&mut rng);
        let sd = spec.step.sqrt();
        let db: Vec<f64> = (0..spec.steps())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let run = em_path_indexed(spec, &w, &db, p).and_then(|y| {
            let mut grad = vec![0.0; y.len()];
            along_path(spec, &w, &y, true, p, &mut grad)
        });
        match run {
            Ok(a) => {
                worst = a.g.iter().chain(&a.dg).fold(worst, |m, v| m.max(v.abs()));
            }
            Err(e) => return Some(format!("drift failed on validation batch: {e}")),
        }
    }
    (worst > DRIFT_BOUND)
        .then(|| format!("drift not bounded on validation batch (max |g| = {worst:e})"))
}

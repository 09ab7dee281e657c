//! Girsanov-weighted estimators of `I(W; Y_0^T)` and of the MMSE and
//! correctional terms.
//!
//! Posteriors over the message use prior draws weighted by
//! `exp(girsanov_loglik)`; finite alphabets are summed exactly. When the
//! drift declares itself affine in the message along a fixed path, the
//! log-likelihood is a quadratic in `w` whose coefficients are path
//! statistics, and posterior means of `g` and `dg/dρ` are those of the
//! posterior-mean message. This turns the `O(M K)` inner loop into
//! `O(K + M)` without changing the estimator.

use serde::{Deserialize, Serialize};

use super::{along_path, solve_path, PICARD_MAX_ITER, PICARD_TOL};
use crate::mc::posterior_weights;
use crate::model::{CTSystemSpec, MessagePrior, MessageSampler, Validate};
use crate::rng::{purpose, substream};
use crate::stats::{log_sum_exp, pairwise_sum, Estimate};
use crate::{par, quad, Error, Result};

/// Number of subintervals of the coarse grid carrying the filtering form.
pub const FILTER_INTERVALS: usize = 20;

const LOW_ESS_FRACTION: f64 = 0.01;

/// `c0 + c1·w − ½ wᵀ Q w`.
#[derive(Clone, Debug)]
struct Quadratic {
    c0: f64,
    c1: Vec<f64>,
    q: Vec<f64>,
}

impl Quadratic {
    fn zero(d: usize) -> Self {
        Self {
            c0: 0.0,
            c1: vec![0.0; d],
            q: vec![0.0; d * d],
        }
    }

    fn eval(&self, w: &[f64]) -> f64 {
        let d = w.len();
        let mut v = self.c0;
        for i in 0..d {
            v += self.c1[i] * w[i];
            for j in 0..d {
                v -= 0.5 * w[i] * self.q[i * d + j] * w[j];
            }
        }
        v
    }
}

/// Affine decomposition of the drift along `y`: the full log-likelihood
/// quadratic and, at each checkpoint `k_j`, the partial quadratic over
/// `k < k_j` together with `(a_{k_j}, b_{k_j})`.
struct AffineTrack {
    full: Quadratic,
    checkpoints: Vec<(Quadratic, Vec<f64>, f64)>,
}

fn affine_track(spec: &CTSystemSpec, y: &[f64], marks: &[usize]) -> Option<AffineTrack> {
    let d = spec.message_prior.dim();
    let k_max = y.len() - 1;
    let rho = spec.rho;
    let dt = spec.step;
    let mut a = vec![0.0; d];
    let mut acc = Quadratic::zero(d);
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next_mark = 0;
    for k in 0..=k_max {
        let b = spec
            .drift
            .message_affine(k, spec.time(k), &y[..=k], rho, &mut a)?;
        while next_mark < marks.len() && marks[next_mark] == k {
            checkpoints.push((acc.clone(), a.clone(), b));
            next_mark += 1;
        }
        if k == k_max {
            break;
        }
        let dy = y[k + 1] - y[k];
        acc.c0 += rho * b * dy - 0.5 * rho * rho * dt * b * b;
        for i in 0..d {
            acc.c1[i] += rho * a[i] * dy - rho * rho * dt * b * a[i];
            for j in 0..d {
                acc.q[i * d + j] += rho * rho * dt * a[i] * a[j];
            }
        }
    }
    Some(AffineTrack {
        full: acc,
        checkpoints,
    })
}

fn is_affine(spec: &CTSystemSpec) -> bool {
    let mut a = vec![0.0; spec.message_prior.dim()];
    spec.drift
        .message_affine(0, 0.0, &[0.0], spec.rho, &mut a)
        .is_some()
}

/// Inner candidates for outer path `p` with their log prior masses.
fn inner_candidates(
    prior: &MessagePrior,
    sampler: &MessageSampler,
    seed: u64,
    p: usize,
    draws: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    match prior {
        MessagePrior::Finite { atoms, probs } => atoms
            .iter()
            .zip(probs)
            .filter(|(_, q)| **q > 0.0)
            .map(|(a, q)| (a.clone(), q.ln()))
            .unzip(),
        MessagePrior::Gaussian { .. } => {
            let mut rng = substream(seed, purpose::CT_INNER, p as u64);
            (
                (0..draws).map(|_| sampler.sample(&mut rng)).collect(),
                vec![0.0; draws],
            )
        }
    }
}

fn marks(k_max: usize) -> Vec<usize> {
    let j = FILTER_INTERVALS.min(k_max);
    (0..=j).map(|i| (i * k_max + j / 2) / j).collect()
}

/// Per-path contributions to the mutual information estimates; `None`
/// marks a path whose inner weights all underflowed.
#[derive(Clone, Debug, PartialEq)]
pub struct CtMiSamples {
    /// `E_post[ℓ(w)] − ln mean_m exp(ℓ_m)`.
    pub rao_blackwell: Vec<Option<f64>>,
    /// `(ρ²Δ/2) Σ g_k² − ln mean_m exp(ℓ_m)`.
    pub plain: Vec<Option<f64>>,
    /// `(ρ²/2) ∫ (g(s) − E[g(s)|Y_0^s])² ds` on the coarse grid; empty when
    /// not requested.
    pub filtering: Vec<Option<f64>>,
    pub inner_draws: usize,
    pub fast_path: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtMiEstimate {
    /// Rao-Blackwellized decomposition estimate, nats.
    pub value: f64,
    pub std_error: f64,
    pub plain: Estimate,
    /// Causal filtering form, an independent route to the same quantity.
    pub filtering: Option<Estimate>,
    pub paths: usize,
    pub inner_draws: usize,
    pub excluded: usize,
    pub inner_bias: String,
    pub fast_path: bool,
}

impl CtMiSamples {
    pub fn summarize(&self) -> CtMiEstimate {
        let rb: Vec<f64> = self.rao_blackwell.iter().flatten().copied().collect();
        let plain: Vec<f64> = self.plain.iter().flatten().copied().collect();
        let filt: Vec<f64> = self.filtering.iter().flatten().copied().collect();
        let est = Estimate::from_samples(&rb);
        CtMiEstimate {
            value: est.value,
            std_error: est.std_error,
            plain: Estimate::from_samples(&plain),
            filtering: (!self.filtering.is_empty()).then(|| Estimate::from_samples(&filt)),
            paths: self.rao_blackwell.len(),
            inner_draws: self.inner_draws,
            excluded: self.rao_blackwell.len() - rb.len(),
            inner_bias: "O(1/M)".into(),
            fast_path: self.fast_path,
        }
    }
}

fn check_budget(spec: &CTSystemSpec, n_paths: usize, inner_draws: usize) -> Result<()> {
    spec.validate().into_result()?;
    if n_paths < 2 || (inner_draws < 2 && !spec.message_prior.is_finite_alphabet()) {
        return Err(Error::Argument("need N, M >= 2".into()));
    }
    Ok(())
}

fn inner_count(prior: &MessagePrior, draws: usize) -> usize {
    match prior {
        MessagePrior::Finite { atoms, .. } => atoms.len(),
        MessagePrior::Gaussian { .. } => draws,
    }
}

/// Per-path decomposition (and optionally filtering) estimates of
/// `I(W; Y_0^T)`. Outer path `p` shares draws with [`super::solve_em`].
pub fn ct_mi_samples(
    spec: &CTSystemSpec,
    n_paths: usize,
    inner_draws: usize,
    seed: u64,
    filtering: bool,
) -> Result<CtMiSamples> {
    check_budget(spec, n_paths, inner_draws)?;
    let sampler = spec.message_prior.sampler()?;
    let fast = is_affine(spec);
    let k_max = spec.steps();
    let marks = marks(k_max);
    let mark_times: Vec<f64> = marks.iter().map(|&k| spec.time(k)).collect();
    let rho = spec.rho;
    let finite = spec.message_prior.is_finite_alphabet();
    let rows = par::try_map_indexed(
        n_paths,
        |p| -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
            let outer = solve_path(
                spec,
                &sampler,
                seed,
                p,
                spec.solver,
                PICARD_MAX_ITER,
                PICARD_TOL,
                false,
            )?;
            let (cands, log_prior) =
                inner_candidates(&spec.message_prior, &sampler, seed, p, inner_draws);
            let m = cands.len();
            // Log-likelihoods at the end and at each checkpoint, and g at checkpoints.
            let mut ll = Vec::with_capacity(m);
            let mut part: Vec<Vec<f64>> = Vec::new();
            let mut g_at: Vec<Vec<f64>> = Vec::new();
            let true_g_at: Vec<f64>;
            if fast {
                let track = affine_track(spec, &outer.y, &marks).expect("affine drift");
                for w in &cands {
                    ll.push(track.full.eval(w));
                    if filtering {
                        part.push(
                            track
                                .checkpoints
                                .iter()
                                .map(|(q, _, _)| q.eval(w))
                                .collect(),
                        );
                        g_at.push(
                            track
                                .checkpoints
                                .iter()
                                .map(|(_, a, b)| {
                                    a.iter().zip(w).map(|(x, y)| x * y).sum::<f64>() + b
                                })
                                .collect(),
                        );
                    }
                }
                true_g_at = track
                    .checkpoints
                    .iter()
                    .map(|(_, a, b)| a.iter().zip(&outer.w).map(|(x, y)| x * y).sum::<f64>() + b)
                    .collect();
            } else {
                let mut grad = vec![0.0; k_max + 1];
                let end_g = |w: &[f64]| spec.drift.eval(k_max, spec.time(k_max), w, &outer.y, rho);
                for w in &cands {
                    let a = along_path(spec, w, &outer.y, false, p, &mut grad)?;
                    ll.push(a.loglik);
                    if filtering {
                        let (pl, gs) = partial_logliks(spec, &a.g, &outer.y, &marks, end_g(w));
                        part.push(pl);
                        g_at.push(gs);
                    }
                }
                let mut t = outer.along.g.clone();
                t.push(end_g(&outer.w));
                true_g_at = marks.iter().map(|&k| t[k]).collect();
            }
            let logw: Vec<f64> = ll.iter().zip(&log_prior).map(|(l, q)| l + q).collect();
            let Some(weights) = posterior_weights(&logw) else {
                return Ok((None, None, None));
            };
            let lse = log_sum_exp(&logw);
            let log_norm = if finite { 0.0 } else { (m as f64).ln() };
            let post_ll = pairwise_sum(
                &weights
                    .iter()
                    .zip(&ll)
                    .map(|(w, l)| w * l)
                    .collect::<Vec<_>>(),
            );
            let energy = 0.5
                * rho
                * rho
                * spec.step
                * pairwise_sum(&outer.along.g.iter().map(|g| g * g).collect::<Vec<_>>());
            let rb = post_ll - lse + log_norm;
            let plain = energy - lse + log_norm;
            let filt = if filtering {
                let mut integrand = Vec::with_capacity(marks.len());
                for j in 0..marks.len() {
                    let lw: Vec<f64> = part.iter().zip(&log_prior).map(|(v, q)| v[j] + q).collect();
                    let Some(wj) = posterior_weights(&lw) else {
                        return Ok((Some(rb), Some(plain), None));
                    };
                    let est = pairwise_sum(
                        &wj.iter()
                            .zip(&g_at)
                            .map(|(w, g)| w * g[j])
                            .collect::<Vec<_>>(),
                    );
                    let r = true_g_at[j] - est;
                    integrand.push(r * r);
                }
                Some(0.5 * rho * rho * quad::trapezoid(&mark_times, &integrand))
            } else {
                None
            };
            Ok((Some(rb), Some(plain), filt))
        },
    )?;
    let mut out = CtMiSamples {
        rao_blackwell: Vec::with_capacity(n_paths),
        plain: Vec::with_capacity(n_paths),
        filtering: Vec::new(),
        inner_draws: inner_count(&spec.message_prior, inner_draws),
        fast_path: fast,
    };
    for (rb, plain, filt) in rows {
        out.rao_blackwell.push(rb);
        out.plain.push(plain);
        if filtering {
            out.filtering.push(filt);
        }
    }
    Ok(out)
}

/// Cumulative log-likelihood over `k < k_j` and `g(t_{k_j})` at each mark.
fn partial_logliks(
    spec: &CTSystemSpec,
    g: &[f64],
    y: &[f64],
    marks: &[usize],
    g_end: f64,
) -> (Vec<f64>, Vec<f64>) {
    let rho = spec.rho;
    let dt = spec.step;
    let mut out_l = Vec::with_capacity(marks.len());
    let mut out_g = Vec::with_capacity(marks.len());
    let (mut stoch, mut energy) = (0.0, 0.0);
    let mut next = 0;
    for k in 0..=g.len() {
        while next < marks.len() && marks[next] == k {
            out_l.push(rho * stoch - 0.5 * rho * rho * dt * energy);
            out_g.push(if k < g.len() { g[k] } else { g_end });
            next += 1;
        }
        if k < g.len() {
            stoch += g[k] * (y[k + 1] - y[k]);
            energy += g[k] * g[k];
        }
    }
    (out_l, out_g)
}

/// `I(W; Y_0^T)` in nats by the Radon–Nikodym decomposition, with the
/// filtering form attached as a cross-check.
pub fn ct_mi(
    spec: &CTSystemSpec,
    n_paths: usize,
    inner_draws: usize,
    seed: u64,
) -> Result<CtMiEstimate> {
    Ok(ct_mi_samples(spec, n_paths, inner_draws, seed, true)?.summarize())
}

/// Continuous-time MMSE and correctional terms with smoothing posteriors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtRhs {
    /// `ρ ∫ E[(g − E[g|Y_0^T])²] ds`.
    pub mmse: Estimate,
    /// `ρ² ∫ E[(g − E[g|Y_0^T]) dg/dρ] ds`.
    pub correctional: Estimate,
    /// `ρ² ∫ E[(g − E[g|Y_0^T])(dg/dρ − E[dg/dρ|Y_0^T])] ds`.
    pub correctional_symmetrized: Estimate,
    pub total: Estimate,
    pub total_symmetrized: Estimate,
    pub min_ess: f64,
    pub low_ess_paths: usize,
    pub excluded: usize,
    pub fast_path: bool,
}

/// Per-path `[mmse, correctional, symmetrized, ess, draws]`; `None` marks
/// degenerate weights.
pub(crate) fn ct_rhs_samples(
    spec: &CTSystemSpec,
    n_paths: usize,
    inner_draws: usize,
    seed: u64,
) -> Result<(Vec<Option<[f64; 5]>>, bool)> {
    check_budget(spec, n_paths, inner_draws)?;
    let sampler = spec.message_prior.sampler()?;
    let fast = is_affine(spec);
    let k_max = spec.steps();
    let rho = spec.rho;
    let dt = spec.step;
    let rows = par::try_map_indexed(n_paths, |p| -> Result<Option<[f64; 5]>> {
        let outer = solve_path(
            spec,
            &sampler,
            seed,
            p,
            spec.solver,
            PICARD_MAX_ITER,
            PICARD_TOL,
            true,
        )?;
        let (cands, log_prior) =
            inner_candidates(&spec.message_prior, &sampler, seed, p, inner_draws);
        let mut grad = vec![0.0; k_max + 1];
        let (g_hat, dg_hat, ess, draws) = if fast {
            let track = affine_track(spec, &outer.y, &[]).expect("affine drift");
            let logw: Vec<f64> = cands
                .iter()
                .zip(&log_prior)
                .map(|(w, q)| track.full.eval(w) + q)
                .collect();
            let Some(wts) = posterior_weights(&logw) else {
                return Ok(None);
            };
            let d = spec.message_prior.dim();
            let w_hat: Vec<f64> = (0..d)
                .map(|i| {
                    pairwise_sum(
                        &wts.iter()
                            .zip(&cands)
                            .map(|(a, w)| a * w[i])
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            let at = along_path(spec, &w_hat, &outer.y, true, p, &mut grad)?;
            (at.g, at.dg, ess_of(&wts), cands.len())
        } else {
            // Online weighted sums, rescaled whenever the running maximum moves.
            let mut max_l = f64::NEG_INFINITY;
            let mut total = 0.0;
            let mut total_sq = 0.0;
            let mut acc_g = vec![0.0; k_max];
            let mut acc_dg = vec![0.0; k_max];
            for (w, q) in cands.iter().zip(&log_prior) {
                let a = along_path(spec, w, &outer.y, true, p, &mut grad)?;
                let l = a.loglik + q;
                if l > max_l {
                    let r = if max_l.is_finite() {
                        (max_l - l).exp()
                    } else {
                        0.0
                    };
                    total *= r;
                    total_sq *= r * r;
                    acc_g.iter_mut().for_each(|v| *v *= r);
                    acc_dg.iter_mut().for_each(|v| *v *= r);
                    max_l = l;
                }
                let e = (l - max_l).exp();
                total += e;
                total_sq += e * e;
                for k in 0..k_max {
                    acc_g[k] += e * a.g[k];
                    acc_dg[k] += e * a.dg[k];
                }
            }
            if !max_l.is_finite() || total <= 0.0 {
                return Ok(None);
            }
            acc_g.iter_mut().for_each(|v| *v /= total);
            acc_dg.iter_mut().for_each(|v| *v /= total);
            (acc_g, acc_dg, total * total / total_sq, cands.len())
        };
        let g = &outer.along.g;
        let dg = &outer.along.dg;
        let mut terms = [
            Vec::with_capacity(k_max),
            Vec::with_capacity(k_max),
            Vec::with_capacity(k_max),
        ];
        for k in 0..k_max {
            let r = g[k] - g_hat[k];
            terms[0].push(r * r);
            terms[1].push(r * dg[k]);
            terms[2].push(r * (dg[k] - dg_hat[k]));
        }
        Ok(Some([
            rho * dt * pairwise_sum(&terms[0]),
            rho * rho * dt * pairwise_sum(&terms[1]),
            rho * rho * dt * pairwise_sum(&terms[2]),
            ess,
            draws as f64,
        ]))
    })?;
    Ok((rows, fast))
}

fn ess_of(w: &[f64]) -> f64 {
    1.0 / pairwise_sum(&w.iter().map(|v| v * v).collect::<Vec<_>>())
}

/// Estimates the MMSE and correctional terms with smoothing posteriors
/// conditioned on the whole path `Y_0^T`; time integrals are left-endpoint
/// sums on the solver grid.
pub fn ct_rhs(spec: &CTSystemSpec, n_paths: usize, inner_draws: usize, seed: u64) -> Result<CtRhs> {
    let (rows, fast) = ct_rhs_samples(spec, n_paths, inner_draws, seed)?;
    let ok: Vec<[f64; 5]> = rows.iter().flatten().copied().collect();
    let col = |k: usize| -> Vec<f64> { ok.iter().map(|r| r[k]).collect() };
    Ok(CtRhs {
        mmse: Estimate::from_samples(&col(0)),
        correctional: Estimate::from_samples(&col(1)),
        correctional_symmetrized: Estimate::from_samples(&col(2)),
        total: Estimate::from_samples(&ok.iter().map(|r| r[0] + r[1]).collect::<Vec<_>>()),
        total_symmetrized: Estimate::from_samples(
            &ok.iter().map(|r| r[0] + r[2]).collect::<Vec<_>>(),
        ),
        min_ess: ok.iter().map(|r| r[3]).fold(f64::INFINITY, f64::min),
        low_ess_paths: ok.iter().filter(|r| r[3] < LOW_ESS_FRACTION * r[4]).count(),
        excluded: rows.len() - ok.len(),
        fast_path: fast,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{ct_constant_message, ct_linear_feedback};
    use crate::registry::CtSaturatingFeedback;
    use std::sync::Arc;

    #[test]
    fn zero_gain_gives_zero_terms() {
        let spec = ct_constant_message().with_rho(0.0).with_step(1e-2);
        let r = ct_rhs(&spec, 20, 20, 1).unwrap();
        assert_eq!(r.mmse.value, 0.0);
        assert_eq!(r.correctional.value, 0.0);
        let mi = ct_mi(&spec, 200, 200, 1).unwrap();
        assert!(mi.value.abs() <= 3.0 * mi.std_error + 1e-12);
    }

    #[test]
    fn constant_message_mi_and_mmse() {
        let spec = ct_constant_message().with_step(1e-2);
        let mi = ct_mi(&spec, 3000, 1000, 2).unwrap();
        let truth = 0.5 * 2f64.ln();
        assert!(
            (mi.value - truth).abs() <= 4.0 * mi.std_error + 0.01,
            "{mi:?}"
        );
        let r = ct_rhs(&spec, 3000, 1000, 2).unwrap();
        assert!(
            (r.mmse.value - 0.5).abs() <= 4.0 * r.mmse.std_error + 0.01,
            "{r:?}"
        );
        assert_eq!(r.correctional.value, 0.0);
    }

    #[test]
    fn fast_path_matches_generic_loop() {
        // Same drift, once with and once without the affine declaration.
        #[derive(Debug)]
        struct Opaque;
        impl crate::model::CtDrift for Opaque {
            fn describe(&self) -> String {
                "opaque".into()
            }
            fn eval(&self, k: usize, _t: f64, w: &[f64], y: &[f64], _rho: f64) -> f64 {
                w[0] - y[k]
            }
            fn path_gradient(
                &self,
                k: usize,
                _t: f64,
                _w: &[f64],
                _y: &[f64],
                _rho: f64,
                out: &mut [f64],
            ) -> Option<usize> {
                out[k] = -1.0;
                Some(k)
            }
        }
        let fast = ct_linear_feedback().with_step(2e-2);
        let slow = CTSystemSpec {
            drift: Arc::new(Opaque),
            ..fast.clone()
        };
        let a = ct_mi(&fast, 40, 50, 3).unwrap();
        let b = ct_mi(&slow, 40, 50, 3).unwrap();
        assert!(a.fast_path && !b.fast_path);
        assert!((a.value - b.value).abs() < 1e-10);
        assert!((a.filtering.unwrap().value - b.filtering.unwrap().value).abs() < 1e-10);
        let ra = ct_rhs(&fast, 40, 50, 3).unwrap();
        let rb = ct_rhs(&slow, 40, 50, 3).unwrap();
        assert!((ra.mmse.value - rb.mmse.value).abs() < 1e-10);
        assert!((ra.correctional.value - rb.correctional.value).abs() < 1e-10);
        assert!(
            (ra.correctional_symmetrized.value - rb.correctional_symmetrized.value).abs() < 1e-10
        );
    }

    #[test]
    fn saturating_drift_runs_generic_loop() {
        let spec = CTSystemSpec {
            drift: Arc::new(CtSaturatingFeedback { gain: 1.0 }),
            ..ct_linear_feedback().with_step(5e-2)
        };
        let r = ct_rhs(&spec, 30, 30, 4).unwrap();
        assert!(!r.fast_path);
        assert!(r.mmse.value > 0.0);
    }
}

//! Nested Monte Carlo estimate of `I(W_1^n; Y_1^n)`.
//!
//! The outer loop simulates `(W, Y)`; the inner loop estimates the mixture
//! density `f(y) = E_w[f(y | w)]` from `M` prior draws (exact sums for
//! finite alphabets). Two per-path estimators are kept:
//!
//! * plain: `−ln f̂(Y) − (n/2) ln(2πe)`, i.e. `Ĥ(Y) − H(Z_1^n)`;
//! * Rao-Blackwellized: `E_post[ln f(Y|w)] − ln f̂(Y)`, which replaces the
//!   known `H(Y|W)` by its posterior-averaged estimate. Both have the same
//!   expectation; the second has lower variance and is the reported value.
//!
//! The inner log-mixture is biased by `O(1/M)`.

use serde::{Deserialize, Serialize};

use super::posterior::CandidateSet;
use super::simulate_paths;
use crate::model::{MessagePrior, SystemSpec, Validate};
use crate::rng::{purpose, substream};
use crate::stats::Estimate;
use crate::{par, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Rao-Blackwellized estimate, nats.
    pub value: f64,
    pub std_error: f64,
    /// `Ĥ(Y) − (n/2) ln(2πe)`.
    pub plain: Estimate,
    pub paths: usize,
    pub inner_draws: usize,
    /// Outer paths dropped because every inner kernel underflowed.
    pub excluded: usize,
    pub inner_bias: String,
}

/// Per-path contributions; `None` marks an excluded path.
#[derive(Clone, Debug, PartialEq)]
pub struct MiSamples {
    pub rao_blackwell: Vec<Option<f64>>,
    pub plain: Vec<Option<f64>>,
    pub inner_draws: usize,
}

impl MiSamples {
    pub fn summarize(&self) -> MiEstimate {
        let rb: Vec<f64> = self.rao_blackwell.iter().flatten().copied().collect();
        let plain: Vec<f64> = self.plain.iter().flatten().copied().collect();
        let est = Estimate::from_samples(&rb);
        MiEstimate {
            value: est.value,
            std_error: est.std_error,
            plain: Estimate::from_samples(&plain),
            paths: self.rao_blackwell.len(),
            inner_draws: self.inner_draws,
            excluded: self.rao_blackwell.len() - rb.len(),
            inner_bias: "O(1/M)".into(),
        }
    }
}

/// Running log-sum-exp of inner log-weights together with the
/// weight-averaged log-likelihood, for one outer path.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MiAccum {
    max: f64,
    sum: f64,
    weighted: f64,
    count: usize,
}

impl MiAccum {
    pub fn new() -> Self {
        MiAccum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            weighted: 0.0,
            count: 0,
        }
    }

    /// Starts from precomputed weights `e_j = exp(logw_j − max)`.
    pub fn from_weights(max: f64, e: &[f64], ll: &[f64]) -> Self {
        let (mut sum, mut weighted) = (0.0, 0.0);
        for (a, l) in e.iter().zip(ll) {
            sum += a;
            weighted += a * l;
        }
        MiAccum {
            max,
            sum,
            weighted,
            count: e.len(),
        }
    }

    /// Adds candidates with log-likelihoods `ll` and log-weights `logw`
    /// (log-likelihood plus log prior mass).
    pub fn extend(mut self, ll: &[f64], logw: &[f64]) -> Self {
        let max = logw.iter().copied().fold(self.max, f64::max);
        if max > self.max && self.count > 0 {
            let scale = (self.max - max).exp();
            self.sum *= scale;
            self.weighted *= scale;
        }
        if max.is_finite() {
            self.max = max;
            for (lw, l) in logw.iter().zip(ll) {
                let a = (lw - max).exp();
                self.sum += a;
                self.weighted += a * l;
            }
        }
        self.count += logw.len();
        self
    }

    /// Rao-Blackwellized and plain contributions; `None` when every weight
    /// underflows.
    pub fn finish(&self, finite: bool, half_n: f64) -> (Option<f64>, Option<f64>) {
        if !self.max.is_finite() {
            return (None, None);
        }
        let lse = self.max + self.sum.ln();
        let post_ll = self.weighted / self.sum;
        let log_norm = if finite {
            0.0
        } else {
            (self.count as f64).ln()
        };
        (
            Some(post_ll - lse + log_norm),
            Some(-lse + log_norm - half_n),
        )
    }
}

/// Contributions of one outer path from its inner candidates.
pub(crate) fn mi_terms(
    ll: &[f64],
    logw: &[f64],
    finite: bool,
    half_n: f64,
) -> (Option<f64>, Option<f64>) {
    MiAccum::new().extend(ll, logw).finish(finite, half_n)
}

/// Per-path nested estimates. Outer path `p` reuses the draws of
/// [`super::simulate`] and inner stream `p`, so evaluations at different
/// `ρ` share random numbers.
pub fn mi_nested_samples(
    spec: &SystemSpec,
    n_paths: usize,
    inner_draws: usize,
    seed: u64,
) -> Result<MiSamples> {
    let mut out = mi_nested_batch(std::slice::from_ref(spec), n_paths, &[inner_draws], seed)?;
    Ok(out.remove(0).remove(0))
}

/// [`mi_nested_samples`] for several specs differing only in `ρ`, and for
/// several inner budgets, in one pass.
///
/// Each outer path draws `max(budgets)` inner candidates once; budget `k`
/// uses the first `k` of them, which are exactly the draws a standalone
/// run with `k` inner draws would make. Result is indexed `[spec][budget]`.
pub fn mi_nested_batch(
    specs: &[SystemSpec],
    n_paths: usize,
    budgets: &[usize],
    seed: u64,
) -> Result<Vec<Vec<MiSamples>>> {
    let Some(first) = specs.first() else {
        return Err(Error::Argument("no specs to evaluate".into()));
    };
    for s in specs {
        s.validate().into_result()?;
        if s.n != first.n || s.message_prior != first.message_prior {
            return Err(Error::Argument(
                "batched specs must share n and the message prior".into(),
            ));
        }
    }
    let finite = first.message_prior.is_finite_alphabet();
    let smallest = budgets.iter().copied().min().unwrap_or(0);
    if n_paths < 2 || (smallest < 2 && !finite) {
        return Err(Error::Argument("nested estimator needs N, M >= 2".into()));
    }
    let total = budgets.iter().copied().max().unwrap_or(0);
    let sims = specs
        .iter()
        .map(|s| simulate_paths(s, n_paths, seed))
        .collect::<Result<Vec<_>>>()?;
    let sampler = first.message_prior.sampler()?;
    let half_n = 0.5 * first.n as f64;
    // rows[p][spec * budgets.len() + b] = (rao-blackwell, plain)
    let rows = par::try_map_indexed(n_paths, |p| -> Result<Vec<(Option<f64>, Option<f64>)>> {
        let mut rng = substream(seed, purpose::INNER, p as u64);
        let set = CandidateSet::draw(&first.message_prior, &sampler, total, &mut rng);
        let mut ll = vec![0.0; set.len()];
        let mut logw = vec![0.0; set.len()];
        let mut out = Vec::with_capacity(specs.len() * budgets.len());
        for (spec, sim) in specs.iter().zip(&sims) {
            let y = &sim[p].y;
            set.score(spec, y, 0, &mut ll, &mut logw)?;
            for &b in budgets {
                let k = set.prefix(b);
                out.push(mi_terms(&ll[..k], &logw[..k], finite, half_n));
            }
        }
        Ok(out)
    })?;
    let inner = |b: usize| match &first.message_prior {
        MessagePrior::Finite { atoms, .. } => atoms.len(),
        MessagePrior::Gaussian { .. } => b,
    };
    Ok((0..specs.len())
        .map(|k| {
            budgets
                .iter()
                .enumerate()
                .map(|(bi, &b)| {
                    let col = k * budgets.len() + bi;
                    MiSamples {
                        rao_blackwell: rows.iter().map(|r| r[col].0).collect(),
                        plain: rows.iter().map(|r| r[col].1).collect(),
                        inner_draws: inner(b),
                    }
                })
                .collect()
        })
        .collect())
}

/// Nested Monte Carlo mutual information in nats with its standard error.
pub fn mi_nested(
    spec: &SystemSpec,
    n_paths: usize,
    inner_draws: usize,
    seed: u64,
) -> Result<MiEstimate> {
    Ok(mi_nested_samples(spec, n_paths, inner_draws, seed)?.summarize())
}

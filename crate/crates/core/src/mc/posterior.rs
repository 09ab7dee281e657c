//! Self-normalized importance weighting with the prior as proposal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{MessagePrior, MessageSampler, SystemSpec, Validate};
use crate::rng::{purpose, substream};
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// ESS below this fraction of the draws flags weight degeneracy.
pub const LOW_ESS_FRACTION: f64 = 0.01;

/// Quantity whose posterior mean is requested (steps are 0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrand {
    Drift(usize),
    DriftSens(usize),
    /// `w[component]^power`.
    Message {
        component: usize,
        power: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `(Σw)² / Σw²`, in `(0, draws]`.
    pub ess: f64,
    pub draws: usize,
    pub low_ess: bool,
}

/// Inner candidates for one output path, stored row-major.
///
/// Prior draws carry zero log mass; a finite alphabet is enumerated once
/// with `ln p` per atom, so the draw count and the seed are ignored.
pub(crate) struct CandidateSet {
    dim: usize,
    w: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub exact: bool,
}

impl CandidateSet {
    pub fn draw<R: Rng + ?Sized>(
        prior: &MessagePrior,
        sampler: &MessageSampler,
        draws: usize,
        rng: &mut R,
    ) -> Self {
        let dim = prior.dim();
        match prior {
            MessagePrior::Finite { atoms, probs } => {
                let kept: Vec<(&Vec<f64>, f64)> = atoms
                    .iter()
                    .zip(probs)
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(a, p)| (a, p.ln()))
                    .collect();
                CandidateSet {
                    dim,
                    w: kept.iter().flat_map(|(a, _)| a.iter().copied()).collect(),
                    log_prior: kept.iter().map(|(_, l)| *l).collect(),
                    exact: true,
                }
            }
            MessagePrior::Gaussian { .. } => {
                let mut w = vec![0.0; draws * dim];
                for row in w.chunks_exact_mut(dim) {
                    sampler.sample_into(rng, row);
                }
                CandidateSet {
                    dim,
                    w,
                    log_prior: vec![0.0; draws],
                    exact: false,
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.log_prior.len()
    }

    /// Log-likelihoods of `y` and log-weights for candidates
    /// `start..start + ll.len()`.
    pub fn score(
        &self,
        spec: &SystemSpec,
        y: &[f64],
        start: usize,
        ll: &mut [f64],
        logw: &mut [f64],
    ) -> Result<()> {
        let rows = self.w[start * self.dim..].chunks_exact(self.dim);
        let lps = &self.log_prior[start..];
        for (((w, l), lw), lp) in rows.zip(ll.iter_mut()).zip(logw.iter_mut()).zip(lps) {
            *l = log_likelihood(spec, w, y)?;
            *lw = *l + lp;
        }
        Ok(())
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.w[j * self.dim..(j + 1) * self.dim]
    }

    /// Draw counts that are actually available for each requested prefix.
    pub fn prefix(&self, k: usize) -> usize {
        if self.exact {
            self.len()
        } else {
            k.min(self.len())
        }
    }
}

fn drift_failure(step: usize, value: f64) -> Error {
    Error::DriftFailure {
        path: 0,
        step,
        value,
    }
}

/// `−½ Σ (y_i − ρ g_i(w, y_1^{i-1}))²`.
#[inline]
pub(crate) fn log_likelihood(spec: &SystemSpec, w: &[f64], y: &[f64]) -> Result<f64> {
    let rho = spec.rho;
    let drift = &*spec.drift;
    let mut ll = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let gi = drift.eval(i, w, &y[..i], rho);
        if !gi.is_finite() {
            return Err(drift_failure(i, gi));
        }
        let r = yi - rho * gi;
        ll -= 0.5 * r * r;
    }
    Ok(ll)
}

/// Buffers for [`eval_with_sens`].
pub(crate) struct SensScratch {
    jac: Vec<f64>,
    s: Vec<f64>,
}

impl SensScratch {
    pub fn new(n: usize) -> Self {
        SensScratch {
            jac: vec![0.0; n],
            s: vec![0.0; n],
        }
    }
}

/// Log-likelihood of `y` under `w`, writing `g_i` and `dg_i/dρ` of the path
/// that `w` would have produced `y` along.
#[inline]
pub(crate) fn eval_with_sens(
    spec: &SystemSpec,
    w: &[f64],
    y: &[f64],
    scratch: &mut SensScratch,
    g: &mut [f64],
    dg: &mut [f64],
) -> Result<f64> {
    let rho = spec.rho;
    let drift = &*spec.drift;
    let feedback = drift.uses_outputs();
    let mut ll = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let gi = drift.eval(i, w, &y[..i], rho);
        if !gi.is_finite() {
            return Err(drift_failure(i, gi));
        }
        let r = yi - rho * gi;
        ll -= 0.5 * r * r;
        let mut d = drift.rho_partial(i, w, &y[..i], rho);
        if feedback && i > 0 {
            spec.jacobian_row(i, w, &y[..i], &mut scratch.jac);
            d += scratch.jac[..i]
                .iter()
                .zip(&scratch.s[..i])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        scratch.s[i] = gi + rho * d;
        g[i] = gi;
        dg[i] = d;
    }
    Ok(ll)
}

/// Unnormalized weights `exp(l − max l)` written into `out`, returning
/// `(max l, Σ weights)`, or `None` when every log-weight is `-inf`.
pub(crate) fn shifted_weights(log_w: &[f64], out: &mut Vec<f64>) -> Option<(f64, f64)> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    out.clear();
    out.extend(log_w.iter().map(|l| (l - max).exp()));
    Some((max, out.iter().sum()))
}

/// Normalized weights from log-weights.
pub(crate) struct Weights {
    pub w: Vec<f64>,
    pub ess: f64,
}

pub(crate) fn normalize(log_w: &[f64]) -> Result<Weights> {
    let max_log = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max_log.is_finite() {
        return Err(Error::PosteriorDegenerate {
            max_log_weight: max_log,
        });
    }
    let raw: Vec<f64> = log_w.iter().map(|l| (l - max_log).exp()).collect();
    let total = pairwise_sum(&raw);
    let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
    Ok(Weights {
        ess: 1.0 / pairwise_sum(&sq),
        w,
    })
}

/// Normalized weights, or `None` when every log-weight is `-inf`.
pub(crate) fn posterior_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    normalize(log_w).ok().map(|w| w.w)
}

/// Weighted mean and the delta-method standard error of a self-normalized
/// importance sampling estimate.
pub(crate) fn weighted(w: &[f64], phi: &[f64], exact: bool) -> (f64, f64) {
    let terms: Vec<f64> = w.iter().zip(phi).map(|(a, b)| a * b).collect();
    let mean = pairwise_sum(&terms);
    if exact {
        return (mean, 0.0);
    }
    let var: Vec<f64> = w
        .iter()
        .zip(phi)
        .map(|(a, b)| a * a * (b - mean) * (b - mean))
        .collect();
    (mean, pairwise_sum(&var).sqrt())
}

/// Estimates `E[φ | Y_1^n = y]`.
///
/// Finite alphabets are enumerated exactly (zero standard error, seed
/// ignored); otherwise `draws` prior samples are importance weighted by
/// `f(y | w)`.
pub fn posterior(
    spec: &SystemSpec,
    y: &[f64],
    phi: Integrand,
    draws: usize,
    seed: u64,
) -> Result<PosteriorEstimate> {
    spec.validate().into_result()?;
    if y.len() != spec.n || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument(format!(
            "output path must hold {} finite values",
            spec.n
        )));
    }
    let d = spec.message_prior.dim();
    match phi {
        Integrand::Drift(i) | Integrand::DriftSens(i) if i >= spec.n => {
            return Err(Error::Argument(format!("step {i} out of range")))
        }
        Integrand::Message { component, .. } if component >= d => {
            return Err(Error::Argument(format!(
                "message component {component} out of range"
            )))
        }
        _ => {}
    }
    if draws == 0 && !spec.message_prior.is_finite_alphabet() {
        return Err(Error::Argument("need at least one proposal draw".into()));
    }
    let sampler = spec.message_prior.sampler()?;
    let mut rng = substream(seed, purpose::POSTERIOR, 0);
    let set = CandidateSet::draw(&spec.message_prior, &sampler, draws, &mut rng);
    let mut scratch = SensScratch::new(spec.n);
    let (mut g, mut dg) = (vec![0.0; spec.n], vec![0.0; spec.n]);
    let mut logw = Vec::with_capacity(set.len());
    let mut values = Vec::with_capacity(set.len());
    for j in 0..set.len() {
        let w = set.get(j);
        let ll = eval_with_sens(spec, w, y, &mut scratch, &mut g, &mut dg)?;
        logw.push(ll + set.log_prior[j]);
        values.push(match phi {
            Integrand::Drift(i) => g[i],
            Integrand::DriftSens(i) => dg[i],
            Integrand::Message { component, power } => w[component].powi(power as i32),
        });
    }
    let weights = normalize(&logw)?;
    let exact = spec.message_prior.is_finite_alphabet();
    let (value, std_error) = weighted(&weights.w, &values, exact);
    let m = set.len();
    Ok(PosteriorEstimate {
        value,
        std_error,
        ess: weights.ess,
        draws: m,
        low_ess: weights.ess < LOW_ESS_FRACTION * m as f64,
    })
}

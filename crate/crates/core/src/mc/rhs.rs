//! Monte Carlo estimation-side terms of the extended I-MMSE relation.

use serde::{Deserialize, Serialize};

use super::posterior::{
    eval_with_sens, shifted_weights, CandidateSet, SensScratch, LOW_ESS_FRACTION,
};
use super::{simulate_paths, SimPath};
use crate::model::{SystemSpec, Validate};
use crate::rng::{purpose, substream};
use crate::stats::Estimate;
use crate::{par, Error, Result};

/// `ρ Σ E[(g_i − E[g_i|Y])²]`, `ρ² Σ E[(g_i − E[g_i|Y]) dg_i/dρ]` and the
/// symmetrized `ρ² Σ E[(g_i − E[g_i|Y])(dg_i/dρ − E[dg_i/dρ|Y])]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmseCorrection {
    pub mmse: Estimate,
    pub correctional: Estimate,
    pub correctional_symmetrized: Estimate,
    /// Per-path sum of the first two, so its error accounts for correlation.
    pub total: Estimate,
    /// Per-path sum of the MMSE and symmetrized terms.
    pub total_symmetrized: Estimate,
    /// Smallest per-path ESS seen.
    pub min_ess: f64,
    pub low_ess_paths: usize,
}

/// Per-path contributions `(mmse, correctional, symmetrized, ess, draws)`
/// for each inner budget, sharing one set of draws as in
/// [`super::mi_nested_batch`].
pub(crate) fn rhs_samples(
    spec: &SystemSpec,
    n_paths: usize,
    budgets: &[usize],
    seed: u64,
) -> Result<Vec<Vec<[f64; 5]>>> {
    let sims = simulate_paths(spec, n_paths, seed)?;
    let sampler = spec.message_prior.sampler()?;
    let rho = spec.rho;
    let n = spec.n;
    let total = budgets.iter().copied().max().unwrap_or(0);
    par::try_map_indexed(n_paths, |p| {
        let mut rng = substream(seed, purpose::INNER, p as u64);
        let sim = &sims[p];
        let set = CandidateSet::draw(&spec.message_prior, &sampler, total, &mut rng);
        let mut scratch = SensScratch::new(n);
        let mut g = vec![0.0; set.len() * n];
        let mut dg = vec![0.0; set.len() * n];
        let mut logw = vec![0.0; set.len()];
        for j in 0..set.len() {
            let rows = j * n..(j + 1) * n;
            let ll = eval_with_sens(
                spec,
                set.get(j),
                &sim.y,
                &mut scratch,
                &mut g[rows.clone()],
                &mut dg[rows],
            )?;
            logw[j] = ll + set.log_prior[j];
        }
        let mut acc = RhsScratch::new(n);
        budgets
            .iter()
            .map(|&b| {
                let k = set.prefix(b);
                acc.terms(rho, sim, &g[..k * n], &dg[..k * n], &logw[..k])
            })
            .collect()
    })
}

/// Buffers for the per-path estimation-side terms.
pub(crate) struct RhsScratch {
    /// `exp(logw − max)` from the last call to [`Self::terms`].
    pub e: Vec<f64>,
    pub max: f64,
    g_mean: Vec<f64>,
    dg_mean: Vec<f64>,
}

impl RhsScratch {
    pub fn new(n: usize) -> Self {
        RhsScratch {
            e: Vec::new(),
            max: f64::NEG_INFINITY,
            g_mean: vec![0.0; n],
            dg_mean: vec![0.0; n],
        }
    }

    /// `(mmse, correctional, symmetrized, ess, draws)` of one outer path from
    /// its candidates' row-major `g`, `dg` and log-weights.
    pub fn terms(
        &mut self,
        rho: f64,
        sim: &SimPath,
        g: &[f64],
        dg: &[f64],
        logw: &[f64],
    ) -> Result<[f64; 5]> {
        let n = self.g_mean.len();
        let (max, sum) = shifted_weights(logw, &mut self.e).ok_or(Error::PosteriorDegenerate {
            max_log_weight: f64::NEG_INFINITY,
        })?;
        self.max = max;
        self.g_mean.iter_mut().for_each(|v| *v = 0.0);
        self.dg_mean.iter_mut().for_each(|v| *v = 0.0);
        for ((ej, gj), dgj) in self.e.iter().zip(g.chunks_exact(n)).zip(dg.chunks_exact(n)) {
            for i in 0..n {
                self.g_mean[i] += ej * gj[i];
                self.dg_mean[i] += ej * dgj[i];
            }
        }
        let ess = sum * sum / self.e.iter().map(|v| v * v).sum::<f64>();
        let (mut m, mut c, mut s) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let r = sim.g[i] - self.g_mean[i] / sum;
            m += r * r;
            c += r * sim.dg[i];
            s += r * (sim.dg[i] - self.dg_mean[i] / sum);
        }
        Ok([
            rho * m,
            rho * rho * c,
            rho * rho * s,
            ess,
            logw.len() as f64,
        ])
    }
}

pub(crate) fn summarize(rows: &[[f64; 5]]) -> MmseCorrection {
    let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let low = rows
        .iter()
        .filter(|r| r[3] < LOW_ESS_FRACTION * r[4])
        .count();
    MmseCorrection {
        mmse: Estimate::from_samples(&col(0)),
        correctional: Estimate::from_samples(&col(1)),
        correctional_symmetrized: Estimate::from_samples(&col(2)),
        total: Estimate::from_samples(&rows.iter().map(|r| r[0] + r[1]).collect::<Vec<_>>()),
        total_symmetrized: Estimate::from_samples(
            &rows.iter().map(|r| r[0] + r[2]).collect::<Vec<_>>(),
        ),
        min_ess: rows.iter().map(|r| r[3]).fold(f64::INFINITY, f64::min),
        low_ess_paths: low,
    }
}

/// Estimates the MMSE and correctional terms by smoothing posteriors
/// conditioned on the full output block. Path `p` shares its draws with
/// [`super::simulate`] under the same seed.
pub fn mmse_and_correction(
    spec: &SystemSpec,
    n_paths: usize,
    inner_draws: usize,
    seed: u64,
) -> Result<MmseCorrection> {
    Ok(mmse_and_correction_batch(spec, n_paths, &[inner_draws], seed)?.remove(0))
}

/// [`mmse_and_correction`] at several inner budgets from one set of draws;
/// budget `k` reproduces a standalone run with `k` draws exactly.
pub fn mmse_and_correction_batch(
    spec: &SystemSpec,
    n_paths: usize,
    budgets: &[usize],
    seed: u64,
) -> Result<Vec<MmseCorrection>> {
    spec.validate().into_result()?;
    let smallest = budgets.iter().copied().min().unwrap_or(0);
    if n_paths < 2 || (smallest == 0 && !spec.message_prior.is_finite_alphabet()) {
        return Err(Error::Argument("need N >= 2 paths and M >= 1 draws".into()));
    }
    let rows = rhs_samples(spec, n_paths, budgets, seed)?;
    Ok((0..budgets.len())
        .map(|b| summarize(&rows.iter().map(|r| r[b]).collect::<Vec<_>>()))
        .collect())
}

//! One pass over the inner draws serving a whole derivative check.
//!
//! A Monte Carlo check needs the nested information estimate at every
//! finite-difference abscissa, the same estimate at `M` and `2M` inner draws
//! at the centre, and the estimation-side terms at the centre. All of them
//! condition on the same inner candidates of outer path `p`, so drawing those
//! once and evaluating every consumer against them removes the repeated
//! sampling. Each output equals the corresponding standalone estimator up to
//! the order of floating-point summation.

use super::mi::{mi_terms, MiAccum};
use super::posterior::{eval_with_sens, CandidateSet, SensScratch};
use super::rhs::{summarize, RhsScratch};
use super::{simulate_paths, MiSamples, MmseCorrection};
use crate::model::{MessagePrior, SystemSpec, Validate};
use crate::rng::{purpose, substream};
use crate::{par, Error, Result};

/// Outputs of [`check_pass`].
#[derive(Clone, Debug, PartialEq)]
pub struct CheckPass {
    /// Nested estimates at each stencil `ρ` with `M` inner draws.
    pub stencil: Vec<MiSamples>,
    /// Nested estimates at the centre, one per requested budget.
    pub center: Vec<MiSamples>,
    /// Estimation-side terms at the centre with `M` inner draws.
    pub rhs: MmseCorrection,
}

struct PathRow {
    stencil: Vec<(Option<f64>, Option<f64>)>,
    center: Vec<(Option<f64>, Option<f64>)>,
    rhs: [f64; 5],
}

/// Evaluates `spec` at each `ρ` in `stencil` and at its own `ρ`.
///
/// `inner_draws` is the `M` used by the stencil and the estimation side;
/// `center_budgets` lists the inner budgets for the centre information
/// estimate (typically `[M, 2M]`).
pub fn check_pass(
    spec: &SystemSpec,
    stencil: &[f64],
    n_paths: usize,
    inner_draws: usize,
    center_budgets: &[usize],
    seed: u64,
) -> Result<CheckPass> {
    spec.validate().into_result()?;
    let finite = spec.message_prior.is_finite_alphabet();
    let smallest = center_budgets
        .iter()
        .copied()
        .chain([inner_draws])
        .min()
        .unwrap_or(0);
    if n_paths < 2 || (smallest < 2 && !finite) {
        return Err(Error::Argument("nested estimator needs N, M >= 2".into()));
    }
    let specs: Vec<SystemSpec> = stencil.iter().map(|&r| spec.with_rho(r)).collect();
    let sims = specs
        .iter()
        .map(|s| simulate_paths(s, n_paths, seed))
        .collect::<Result<Vec<_>>>()?;
    let center_sims = simulate_paths(spec, n_paths, seed)?;
    let sampler = spec.message_prior.sampler()?;
    let n = spec.n;
    let half_n = 0.5 * n as f64;
    let total = center_budgets
        .iter()
        .copied()
        .chain([inner_draws])
        .max()
        .unwrap_or(0);
    let rows = par::try_map_indexed(n_paths, |p| -> Result<PathRow> {
        let mut rng = substream(seed, purpose::INNER, p as u64);
        let set = CandidateSet::draw(&spec.message_prior, &sampler, total, &mut rng);
        let m = set.prefix(inner_draws);
        let mut ll = vec![0.0; set.len()];
        let mut logw = vec![0.0; set.len()];

        let mut stencil_out = Vec::with_capacity(specs.len());
        for (s, sim) in specs.iter().zip(&sims) {
            let y = &sim[p].y;
            set.score(s, y, 0, &mut ll[..m], &mut logw[..m])?;
            stencil_out.push(mi_terms(&ll[..m], &logw[..m], finite, half_n));
        }

        // Centre: sensitivities for the first M candidates, likelihoods only
        // beyond.
        let sim = &center_sims[p];
        let mut scratch = SensScratch::new(n);
        let mut g = vec![0.0; m * n];
        let mut dg = vec![0.0; m * n];
        for (j, (gj, dgj)) in g
            .chunks_exact_mut(n)
            .zip(dg.chunks_exact_mut(n))
            .enumerate()
        {
            ll[j] = eval_with_sens(spec, set.get(j), &sim.y, &mut scratch, gj, dgj)?;
            logw[j] = ll[j] + set.log_prior[j];
        }
        let (head, tail) = (m, set.len());
        set.score(
            spec,
            &sim.y,
            head,
            &mut ll[head..tail],
            &mut logw[head..tail],
        )?;
        let mut acc = RhsScratch::new(n);
        let rhs = acc.terms(spec.rho, sim, &g, &dg, &logw[..m])?;
        // The estimation-side weights double as the centre information
        // weights; larger budgets extend them.
        let base = MiAccum::from_weights(acc.max, &acc.e, &ll[..m]);
        let center = center_budgets
            .iter()
            .map(|&b| {
                let k = set.prefix(b);
                if k >= m {
                    base.extend(&ll[m..k], &logw[m..k]).finish(finite, half_n)
                } else {
                    mi_terms(&ll[..k], &logw[..k], finite, half_n)
                }
            })
            .collect();
        Ok(PathRow {
            stencil: stencil_out,
            center,
            rhs,
        })
    })?;
    let inner = |b: usize| match &spec.message_prior {
        MessagePrior::Finite { atoms, .. } => atoms.len(),
        MessagePrior::Gaussian { .. } => b,
    };
    let collect = |pick: &dyn Fn(&PathRow) -> (Option<f64>, Option<f64>), b: usize| MiSamples {
        rao_blackwell: rows.iter().map(|r| pick(r).0).collect(),
        plain: rows.iter().map(|r| pick(r).1).collect(),
        inner_draws: inner(b),
    };
    Ok(CheckPass {
        stencil: (0..specs.len())
            .map(|k| collect(&|r| r.stencil[k], inner_draws))
            .collect(),
        center: center_budgets
            .iter()
            .enumerate()
            .map(|(k, &b)| collect(&|r| r.center[k], b))
            .collect(),
        rhs: summarize(&rows.iter().map(|r| r.rhs).collect::<Vec<_>>()),
    })
}

//! Scalar output densities on a grid, with score, entropy and Fisher
//! information, plus the posterior-score Fisher estimator.
//!
//! Both channel forms reduce to `Y = aX + sZ`: `a = ρ, s = 1` for the
//! I-MMSE channel and `a = 1, s = √t` for the heat-flow channel.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{DeBruijnSpec, Prior, ScalarChannelSpec, Validate};
use crate::rng::{purpose, substream};
use crate::stats::{log_sum_exp, Estimate};
use crate::{par, quad, Error, Result};

pub const MIN_GRID_POINTS: usize = 2048;
const MASS_FLOOR: f64 = 1.0 - 1e-8;

/// Uniform output grid `lo..=hi` with `points` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    /// Covers the prior's extent mapped through the channel, padded by 12
    /// noise standard deviations, with 4097 nodes.
    pub fn auto(prior: &Prior, amplitude: f64, noise_sd: f64) -> Self {
        let (xl, xh) = prior.extent();
        let (a, b) = (amplitude * xl, amplitude * xh);
        Self {
            lo: a.min(b) - 12.0 * noise_sd,
            hi: a.max(b) + 12.0 * noise_sd,
            points: 4097,
        }
    }

    pub fn for_channel(spec: &ScalarChannelSpec) -> Self {
        Self::auto(&spec.prior, spec.rho(), 1.0)
    }

    pub fn for_debruijn(spec: &DeBruijnSpec) -> Self {
        Self::auto(&spec.prior, 1.0, spec.t.sqrt())
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + h * i as f64).collect()
    }
}

/// Tabulated output law and its functionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub y: Vec<f64>,
    pub density: Vec<f64>,
    pub density_deriv: Vec<f64>,
    /// `E[X | Y = y]`.
    pub posterior_mean: Vec<f64>,
    /// Differential entropy `H(Y)` in nats.
    pub entropy: f64,
    /// `J(Y) = E[(f'/f)²]`.
    pub fisher: f64,
    /// `E[(X − E[X|Y])²]`.
    pub mmse: f64,
    /// `∫ f` over the grid.
    pub mass: f64,
    /// Probability mass outside the grid, `1 − mass`.
    pub tail_error: f64,
}

/// `(ln f(y), E[X | y])` for `Y = aX + sZ`.
fn point(prior: &Prior, a: f64, s: f64, y: f64) -> (f64, f64) {
    let norm = -(s * (2.0 * PI).sqrt()).ln();
    let s2 = s * s;
    match prior {
        Prior::Finite { points, probs } => {
            let logs: Vec<f64> = points
                .iter()
                .zip(probs)
                .map(|(x, p)| p.ln() - (y - a * x) * (y - a * x) / (2.0 * s2))
                .collect();
            let lse = log_sum_exp(&logs);
            let mean = points
                .iter()
                .zip(&logs)
                .map(|(x, l)| x * (l - lse).exp())
                .sum::<f64>();
            (lse + norm, mean)
        }
        Prior::Gaussian { mean, variance } => {
            if a == 0.0 {
                return (norm - y * y / (2.0 * s2), *mean);
            }
            let sd = variance.sqrt();
            let (pl, ph) = (mean - 12.0 * sd, mean + 12.0 * sd);
            let (ll, lh) = {
                let (u, v) = ((y - 12.0 * s) / a, (y + 12.0 * s) / a);
                (u.min(v), u.max(v))
            };
            let (lo, hi) = (pl.max(ll), ph.min(lh));
            if lo >= hi {
                return (f64::NEG_INFINITY, *mean);
            }
            // Factor out the peak of the integrand so tails keep relative accuracy.
            let log_kernel = |x: f64| {
                let zx = (x - mean) / sd;
                -0.5 * zx * zx - (y - a * x) * (y - a * x) / (2.0 * s2)
            };
            let post_var = 1.0 / (1.0 / variance + a * a / s2);
            let post_mode = post_var * (mean / variance + a * y / s2);
            let peak = log_kernel(post_mode.clamp(lo, hi));
            let (i0, _) =
                quad::integrate(|x| (log_kernel(x) - peak).exp(), lo, hi, 0.0, 1e-13, 400);
            let (i1, _) = quad::integrate(
                |x| x * (log_kernel(x) - peak).exp(),
                lo,
                hi,
                0.0,
                1e-13,
                400,
            );
            let log_f = peak + i0.ln() - (sd * (2.0 * PI).sqrt()).ln() + norm;
            (log_f, i1 / i0)
        }
        Prior::Grid { points, density } => {
            let logs: Vec<f64> = points
                .iter()
                .map(|x| -(y - a * x) * (y - a * x) / (2.0 * s2))
                .collect();
            let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let k0: Vec<f64> = density
                .iter()
                .zip(&logs)
                .map(|(d, l)| d * (l - peak).exp())
                .collect();
            let k1: Vec<f64> = k0.iter().zip(points).map(|(k, x)| k * x).collect();
            let mass = quad::trapezoid(points, density);
            let i0 = quad::trapezoid(points, &k0);
            let i1 = quad::trapezoid(points, &k1);
            if i0 <= 0.0 {
                return (f64::NEG_INFINITY, prior.mean());
            }
            (peak + (i0 / mass).ln() + norm, i1 / i0)
        }
    }
}

/// `E[X | Y = y]` for `Y = aX + sZ`, exact for finite priors and by
/// quadrature otherwise.
pub fn posterior_mean_scalar(prior: &Prior, amplitude: f64, noise_sd: f64, y: f64) -> f64 {
    point(prior, amplitude, noise_sd, y).1
}

fn tabulate(prior: &Prior, a: f64, s: f64, grid: &GridSpec) -> Result<DensityTable> {
    if grid.points < MIN_GRID_POINTS {
        return Err(Error::GridTooSmall(format!(
            "{} points, need at least {MIN_GRID_POINTS}",
            grid.points
        )));
    }
    let sd_y = (a * a * prior.variance() + s * s).sqrt();
    if !(grid.hi - grid.lo >= 8.0 * sd_y) {
        return Err(Error::GridTooSmall(format!(
            "width {} covers fewer than 8 output standard deviations ({sd_y})",
            grid.hi - grid.lo
        )));
    }
    let y = grid.nodes();
    let pts = par::map_indexed(y.len(), |i| point(prior, a, s, y[i]));
    let s2 = s * s;
    let density: Vec<f64> = pts.iter().map(|(lf, _)| lf.exp()).collect();
    let posterior_mean: Vec<f64> = pts.iter().map(|(_, m)| *m).collect();
    let score: Vec<f64> = y
        .iter()
        .zip(&posterior_mean)
        .map(|(y, m)| (a * m - y) / s2)
        .collect();
    let density_deriv: Vec<f64> = density.iter().zip(&score).map(|(f, sc)| f * sc).collect();
    let neg_f_log_f: Vec<f64> = pts
        .iter()
        .zip(&density)
        .map(|((lf, _), f)| if *f > 0.0 { -f * lf } else { 0.0 })
        .collect();
    let f_score2: Vec<f64> = density
        .iter()
        .zip(&score)
        .map(|(f, sc)| f * sc * sc)
        .collect();
    let f_mean2: Vec<f64> = density
        .iter()
        .zip(&posterior_mean)
        .map(|(f, m)| f * m * m)
        .collect();
    let mass = quad::trapezoid(&y, &density);
    if !(mass >= MASS_FLOOR) {
        return Err(Error::GridCoverage { mass });
    }
    Ok(DensityTable {
        entropy: quad::trapezoid(&y, &neg_f_log_f),
        fisher: quad::trapezoid(&y, &f_score2),
        mmse: prior.moment(2) - quad::trapezoid(&y, &f_mean2),
        mass,
        tail_error: (1.0 - mass).abs(),
        y,
        density,
        density_deriv,
        posterior_mean,
    })
}

/// Output law of `Y = ρX + Z` on `grid`.
pub fn density_grid(spec: &ScalarChannelSpec, grid: &GridSpec) -> Result<DensityTable> {
    spec.validate().into_result()?;
    tabulate(&spec.prior, spec.rho(), 1.0, grid)
}

/// Output law of `Y = X + √t Z` on `grid`.
pub fn density_grid_debruijn(spec: &DeBruijnSpec, grid: &GridSpec) -> Result<DensityTable> {
    spec.validate().into_result()?;
    tabulate(&spec.prior, 1.0, spec.t.sqrt(), grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    pub estimate: Estimate,
    /// Paths whose score could not be evaluated.
    pub failures: usize,
}

/// `J(Y)` as the mean squared score, with the score recovered from the
/// posterior mean as `(E[X|Y] − Y)/t`.
pub fn fisher_from_posterior(
    spec: &DeBruijnSpec,
    n_paths: usize,
    seed: u64,
) -> Result<FisherEstimate> {
    spec.validate().into_result()?;
    if n_paths < 2 {
        return Err(Error::Argument("need at least two paths".into()));
    }
    let t = spec.t;
    let sq = t.sqrt();
    let scores = par::map_indexed(n_paths, |p| {
        let mut rng = substream(seed, purpose::FISHER, p as u64);
        let x = spec.prior.sample(&mut rng);
        let z: f64 = rng.sample(StandardNormal);
        let y = x + sq * z;
        let post = match spec.prior {
            Prior::Gaussian { mean, variance } => mean + variance / (variance + t) * (y - mean),
            _ => posterior_mean_scalar(&spec.prior, 1.0, sq, y),
        };
        let score = (post - y) / t;
        score.is_finite().then_some(score * score)
    });
    let ok: Vec<f64> = scores.iter().flatten().copied().collect();
    Ok(FisherEstimate {
        estimate: Estimate::from_samples(&ok),
        failures: n_paths - ok.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelParam;

    #[test]
    fn gaussian_output_entropy() {
        let spec = ScalarChannelSpec::new(Prior::standard_gaussian(), ChannelParam::Snr(1.0));
        let t = density_grid(&spec, &GridSpec::for_channel(&spec)).unwrap();
        assert!((t.entropy - 0.5 * (4.0 * PI * 1f64.exp()).ln()).abs() < 1e-10);
        assert!((t.mmse - 0.5).abs() < 1e-10);
        assert!(t.tail_error < 1e-10);
    }

    #[test]
    fn gaussian_heat_flow_fisher() {
        let spec = DeBruijnSpec {
            prior: Prior::standard_gaussian(),
            t: 1.0,
        };
        let t = density_grid_debruijn(&spec, &GridSpec::for_debruijn(&spec)).unwrap();
        assert!((t.fisher - 0.5).abs() < 1e-10);
    }

    #[test]
    fn point_mass_gives_standard_normal() {
        let spec = ScalarChannelSpec::new(Prior::point_mass(0.0), ChannelParam::Snr(2.0));
        let t = density_grid(&spec, &GridSpec::for_channel(&spec)).unwrap();
        assert!((t.entropy - 0.5 * (2.0 * PI * 1f64.exp()).ln()).abs() < 1e-10);
        assert!((t.fisher - 1.0).abs() < 1e-10);
    }

    #[test]
    fn derivative_column_matches_finite_differences() {
        let spec = ScalarChannelSpec::new(Prior::binary(), ChannelParam::Rho(1.5));
        let t = density_grid(&spec, &GridSpec::for_channel(&spec)).unwrap();
        let h = t.y[1] - t.y[0];
        for i in (100..t.y.len() - 100).step_by(500) {
            let fd = (t.density[i + 1] - t.density[i - 1]) / (2.0 * h);
            assert!(
                (fd - t.density_deriv[i]).abs() < 1e-4,
                "{fd} vs {}",
                t.density_deriv[i]
            );
        }
    }

    #[test]
    fn grid_prior_matches_gaussian() {
        let points: Vec<f64> = (0..=2400).map(|i| -12.0 + 0.01 * i as f64).collect();
        let density: Vec<f64> = points
            .iter()
            .map(|x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt())
            .collect();
        let spec = ScalarChannelSpec::new(Prior::Grid { points, density }, ChannelParam::Snr(1.0));
        let t = density_grid(&spec, &GridSpec::for_channel(&spec)).unwrap();
        assert!((t.entropy - 0.5 * (4.0 * PI * 1f64.exp()).ln()).abs() < 1e-6);
    }

    #[test]
    fn narrow_or_coarse_grids_are_rejected() {
        let spec = ScalarChannelSpec::new(Prior::standard_gaussian(), ChannelParam::Snr(1.0));
        let coarse = GridSpec {
            lo: -20.0,
            hi: 20.0,
            points: 100,
        };
        assert!(matches!(
            density_grid(&spec, &coarse),
            Err(Error::GridTooSmall(_))
        ));
        let narrow = GridSpec {
            lo: -6.0,
            hi: 6.0,
            points: 4097,
        };
        assert!(matches!(
            density_grid(&spec, &narrow),
            Err(Error::GridCoverage { .. })
        ));
    }

    #[test]
    fn fisher_point_mass_is_inverse_t() {
        let spec = DeBruijnSpec {
            prior: Prior::point_mass(0.0),
            t: 2.0,
        };
        let f = fisher_from_posterior(&spec, 20_000, 1).unwrap();
        assert!((f.estimate.value - 0.5).abs() <= 3.0 * f.estimate.std_error);
        assert_eq!(f.failures, 0);
    }
}

//! Distribution descriptors for scalar channel inputs and for messages.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Law of a scalar channel input `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Finite support `points` with probabilities `probs`.
    Finite {
        points: Vec<f64>,
        probs: Vec<f64>,
    },
    /// Density tabulated on ascending `points`, linearly interpolated and
    /// renormalized by the trapezoidal rule.
    Grid {
        points: Vec<f64>,
        density: Vec<f64>,
    },
}

impl Prior {
    pub fn standard_gaussian() -> Self {
        Prior::Gaussian {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn binary() -> Self {
        Prior::Finite {
            points: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
        }
    }

    pub fn point_mass(x: f64) -> Self {
        Prior::Finite {
            points: vec![x],
            probs: vec![1.0],
        }
    }

    pub(crate) fn check(&self, out: &mut Vec<String>) {
        match self {
            Prior::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    out.push("prior mean not finite".into());
                }
                if !(variance.is_finite() && *variance > 0.0) {
                    out.push("prior variance not positive".into());
                }
            }
            Prior::Finite { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    out.push(
                        "finite prior: points and probs must be nonempty and equally long".into(),
                    );
                    return;
                }
                if points.iter().any(|p| !p.is_finite()) {
                    out.push("finite prior: support point not finite".into());
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    out.push("finite prior: negative or non-finite probability".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    out.push(format!("finite prior: probabilities sum to {total}, not 1"));
                }
            }
            Prior::Grid { points, density } => {
                if points.len() < 2 || points.len() != density.len() {
                    out.push("grid prior: need at least two points and matching densities".into());
                    return;
                }
                if points.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push("grid prior: points not strictly ascending".into());
                }
                if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                    out.push("grid prior: density negative or non-finite".into());
                }
                let mass = crate::quad::trapezoid(points, density);
                if !(mass > 0.0) {
                    out.push("grid prior: zero total mass".into());
                }
            }
        }
    }

    /// Trapezoidal mass of a grid prior (1 for the other kinds).
    fn grid_mass(&self) -> f64 {
        match self {
            Prior::Grid { points, density } => crate::quad::trapezoid(points, density),
            _ => 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(2) - m * m
    }

    /// Raw moment `E[X^k]` for k in {1, 2}.
    pub fn moment(&self, k: i32) -> f64 {
        match self {
            Prior::Gaussian { mean, variance } => match k {
                1 => *mean,
                2 => variance + mean * mean,
                _ => unimplemented!("only first and second moments"),
            },
            Prior::Finite { points, probs } => {
                points.iter().zip(probs).map(|(x, p)| p * x.powi(k)).sum()
            }
            Prior::Grid { points, density } => {
                let y: Vec<f64> = points
                    .iter()
                    .zip(density)
                    .map(|(x, d)| d * x.powi(k))
                    .collect();
                crate::quad::trapezoid(points, &y) / self.grid_mass()
            }
        }
    }

    /// Interval containing essentially all prior mass.
    pub fn extent(&self) -> (f64, f64) {
        match self {
            Prior::Gaussian { mean, variance } => {
                let s = variance.sqrt();
                (mean - 12.0 * s, mean + 12.0 * s)
            }
            Prior::Finite { points, .. } => {
                let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Prior::Grid { points, .. } => (points[0], points[points.len() - 1]),
        }
    }

    /// Normalized density, defined for the continuous kinds.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            Prior::Gaussian { mean, variance } => {
                let z = (x - mean) / variance.sqrt();
                Some((-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI * variance).sqrt())
            }
            Prior::Finite { .. } => None,
            Prior::Grid { points, density } => {
                if x < points[0] || x > points[points.len() - 1] {
                    return Some(0.0);
                }
                let j = points
                    .partition_point(|p| *p <= x)
                    .min(points.len() - 1)
                    .max(1);
                let (x0, x1) = (points[j - 1], points[j]);
                let u = (x - x0) / (x1 - x0);
                Some(((1.0 - u) * density[j - 1] + u * density[j]) / self.grid_mass())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Prior::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            Prior::Finite { points, probs } => points[pick(probs, rng.random::<f64>())],
            Prior::Grid { points, density } => {
                // Inverse CDF of the piecewise-linear density.
                let cells: Vec<f64> = points
                    .windows(2)
                    .zip(density.windows(2))
                    .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
                    .collect();
                let j = pick(&cells, rng.random::<f64>() * cells.iter().sum::<f64>());
                let j = j.min(cells.len() - 1);
                let (x0, x1, d0, d1) = (points[j], points[j + 1], density[j], density[j + 1]);
                let h = x1 - x0;
                let target = rng.random::<f64>() * cells[j];
                // Solve d0 s + (d1 - d0) s^2 / (2h) = target for s in [0, h].
                let a = (d1 - d0) / (2.0 * h);
                let s = if a.abs() < 1e-14 * (d0 + d1).max(1e-300) {
                    if d0 > 0.0 {
                        target / d0
                    } else {
                        0.5 * h
                    }
                } else {
                    let disc = (d0 * d0 + 4.0 * a * target).max(0.0);
                    (-d0 + disc.sqrt()) / (2.0 * a)
                };
                x0 + s.clamp(0.0, h)
            }
        }
    }
}

/// Index selected by `u` under unnormalized weights `w` (u in [0, Σw)).
fn pick(w: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in w.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    w.len() - 1
}

/// Law of the (finite-dimensional) message `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MessagePrior {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Finite {
        atoms: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
}

impl MessagePrior {
    pub fn scalar_gaussian(mean: f64, variance: f64) -> Self {
        MessagePrior::Gaussian {
            mean: vec![mean],
            cov: vec![vec![variance]],
        }
    }

    pub fn scalar_finite(points: &[f64], probs: &[f64]) -> Self {
        MessagePrior::Finite {
            atoms: points.iter().map(|p| vec![*p]).collect(),
            probs: probs.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MessagePrior::Gaussian { mean, .. } => mean.len(),
            MessagePrior::Finite { atoms, .. } => atoms.first().map_or(0, Vec::len),
        }
    }

    pub fn is_finite_alphabet(&self) -> bool {
        matches!(self, MessagePrior::Finite { .. })
    }

    pub(crate) fn check(&self, out: &mut Vec<String>) {
        match self {
            MessagePrior::Gaussian { mean, cov } => {
                let d = mean.len();
                if d == 0 {
                    out.push("message prior: empty mean".into());
                    return;
                }
                if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                    out.push("message prior: covariance shape does not match mean".into());
                    return;
                }
                if mean
                    .iter()
                    .chain(cov.iter().flatten())
                    .any(|v| !v.is_finite())
                {
                    out.push("message prior: non-finite parameter".into());
                    return;
                }
                if let Err(msg) = check_spd(cov) {
                    out.push(format!("message prior covariance {msg}"));
                }
            }
            MessagePrior::Finite { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    out.push(
                        "message prior: atoms and probs must be nonempty and equally long".into(),
                    );
                    return;
                }
                let d = atoms[0].len();
                if d == 0 || atoms.iter().any(|a| a.len() != d) {
                    out.push("message prior: atoms have inconsistent dimension".into());
                }
                if atoms.iter().flatten().any(|v| !v.is_finite()) {
                    out.push("message prior: non-finite atom".into());
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    out.push("message prior: negative or non-finite probability".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    out.push(format!(
                        "message prior: probabilities sum to {total}, not 1"
                    ));
                }
            }
        }
    }

    /// Sampler with the covariance factor precomputed.
    pub fn sampler(&self) -> Result<MessageSampler> {
        match self {
            MessagePrior::Gaussian { mean, cov } => {
                let d = mean.len();
                let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
                let chol = m.cholesky().ok_or(Error::Singular {
                    block: "message covariance",
                    ratio: 0.0,
                })?;
                Ok(MessageSampler::Gaussian {
                    mean: DVector::from_column_slice(mean),
                    factor: chol.l(),
                })
            }
            MessagePrior::Finite { atoms, probs } => Ok(MessageSampler::Finite {
                atoms: atoms.clone(),
                probs: probs.clone(),
            }),
        }
    }
}

/// Symmetric positive definite with min/max eigenvalue ratio above 1e-12.
pub(crate) fn check_spd(cov: &[Vec<f64>]) -> std::result::Result<(), String> {
    let d = cov.len();
    for i in 0..d {
        for j in 0..i {
            let scale = cov[i][j].abs().max(cov[j][i].abs()).max(1.0);
            if (cov[i][j] - cov[j][i]).abs() > 1e-12 * scale {
                return Err("not symmetric".into());
            }
        }
    }
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[i][j] + cov[j][i]));
    let eig = m.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(format!(
            "not positive definite (eigenvalues in [{min:e}, {max:e}])"
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum MessageSampler {
    Gaussian {
        mean: DVector<f64>,
        factor: DMatrix<f64>,
    },
    Finite {
        atoms: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
}

impl MessageSampler {
    pub fn dim(&self) -> usize {
        match self {
            MessageSampler::Gaussian { mean, .. } => mean.len(),
            MessageSampler::Finite { atoms, .. } => atoms[0].len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }

    /// Writes one draw into `out` (length [`Self::dim`]) without allocating.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            MessageSampler::Gaussian { mean, factor } if mean.len() == 1 => {
                let z: f64 = rng.sample(StandardNormal);
                out[0] = mean[0] + factor[(0, 0)] * z;
            }
            MessageSampler::Gaussian { mean, factor } => {
                let d = mean.len();
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
                // L is lower triangular, so fill from the bottom row up.
                for i in (0..d).rev() {
                    let mut acc = mean[i];
                    for j in 0..=i {
                        acc += factor[(i, j)] * out[j];
                    }
                    out[i] = acc;
                }
            }
            MessageSampler::Finite { atoms, probs } => {
                out.copy_from_slice(&atoms[pick(probs, rng.random::<f64>())]);
            }
        }
    }
}

//! Sampling-free oracle for linear feedback schemes.
//!
//! Every quantity is jointly Gaussian in the stacked innovations
//! `(W, Z_1..Z_n)`, so outputs, drifts and their `ρ`-derivatives are rows of
//! matrices acting on that vector. Information and estimation terms follow
//! from second moments and Schur complements.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::model::{LinearFeedbackSpec, Validate};
use crate::{Error, Result};

/// Below this min/max squared-pivot ratio a covariance counts as singular.
pub const CONDITION_FLOOR: f64 = 1e-12;

/// Exact joint law of `(W, Y_1^n)` for a linear feedback scheme.
#[derive(Clone, Debug)]
pub struct JointGaussian {
    pub n: usize,
    pub message_dim: usize,
    pub rho: f64,
    /// `Y = L (W, Z)`.
    pub l: DMatrix<f64>,
    /// `dL/dρ`.
    pub dl: DMatrix<f64>,
    /// Drift vector `g = G (W, Z)`.
    pub g: DMatrix<f64>,
    /// `dG/dρ`.
    pub dg: DMatrix<f64>,
    /// Block-diagonal covariance of `(W, Z)`; the `Z` block is the identity.
    pub cov_wz: DMatrix<f64>,
}

/// Unrolls the causal recursion `Y_i = ρ(a_iᵀM + Σ_{j<i} b_{ij} Y_j) + Z_i`
/// together with its `ρ`-derivative `dY_i = g_i + ρ Σ_{j<i} b_{ij} dY_j`.
pub fn assemble_joint(spec: &LinearFeedbackSpec) -> Result<JointGaussian> {
    spec.validate().into_result()?;
    let (n, d, rho) = (spec.n, spec.message_dim, spec.rho);
    let cols = d + n;
    let mut l = DMatrix::zeros(n, cols);
    let mut dl = DMatrix::zeros(n, cols);
    let mut g = DMatrix::zeros(n, cols);
    let mut dg = DMatrix::zeros(n, cols);
    for i in 0..n {
        for k in 0..d {
            g[(i, k)] = spec.input_map.a[i][k];
        }
        for j in 0..i {
            let b = spec.input_map.b[i][j];
            if b != 0.0 {
                for c in 0..cols {
                    g[(i, c)] += b * l[(j, c)];
                    dg[(i, c)] += b * dl[(j, c)];
                }
            }
        }
        for c in 0..cols {
            l[(i, c)] = rho * g[(i, c)];
            dl[(i, c)] = g[(i, c)] + rho * dg[(i, c)];
        }
        l[(i, d + i)] += 1.0;
    }
    let mut cov_wz = DMatrix::identity(cols, cols);
    for r in 0..d {
        for c in 0..d {
            cov_wz[(r, c)] = spec.message_cov[r][c];
        }
    }
    Ok(JointGaussian {
        n,
        message_dim: d,
        rho,
        l,
        dl,
        g,
        dg,
        cov_wz,
    })
}

fn factor(m: DMatrix<f64>, block: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let chol = sym
        .cholesky()
        .ok_or(Error::Singular { block, ratio: 0.0 })?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().fold(0.0_f64, |a, &b| a.max(b * b));
    let min = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    let ratio = min / max;
    if !(ratio >= CONDITION_FLOOR) {
        return Err(Error::Singular { block, ratio });
    }
    Ok(chol)
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
}

impl JointGaussian {
    /// `Σ_Y = L Σ Lᵀ`.
    pub fn output_cov(&self) -> DMatrix<f64> {
        &self.l * &self.cov_wz * self.l.transpose()
    }

    /// `Σ_{Y|W} = L_Z L_Zᵀ`, the noise-driven part of the outputs.
    pub fn conditional_output_cov(&self) -> DMatrix<f64> {
        let lz = self.l.columns(self.message_dim, self.n);
        lz * lz.transpose()
    }

    fn output_factor(&self) -> Result<Cholesky<f64, Dyn>> {
        factor(self.output_cov(), "output covariance")
    }

    /// Regression of the rows of `a` (acting on `(W, Z)`) onto `Y`:
    /// returns `A Σ Lᵀ Σ_Y^{-1}`.
    fn gain(&self, chol: &Cholesky<f64, Dyn>, a: &DMatrix<f64>) -> DMatrix<f64> {
        let cross = a * &self.cov_wz * self.l.transpose();
        chol.solve(&cross.transpose()).transpose()
    }
}

/// `I(W; Y_1^n) = ½ ln det Σ_Y − ½ ln det Σ_{Y|W}` in nats.
pub fn gaussian_mi(jg: &JointGaussian) -> Result<f64> {
    let full = jg.output_factor()?;
    let cond = factor(jg.conditional_output_cov(), "conditional output covariance")?;
    Ok(0.5 * (log_det(&full) - log_det(&cond)))
}

/// Analytic `dI/dρ = ½ tr(Σ_Y^{-1} dΣ_Y)`; `Σ_{Y|W}` has unit determinant
/// for every `ρ` because `L_Z` is unit lower triangular.
pub fn gaussian_mi_derivative(jg: &JointGaussian) -> Result<f64> {
    let chol = jg.output_factor()?;
    let half = &jg.dl * &jg.cov_wz * jg.l.transpose();
    let dsigma = &half + half.transpose();
    Ok(0.5 * chol.solve(&dsigma).trace())
}

/// Posterior of the stacked vector `(W, g_1..g_n, dg_1/dρ..dg_n/dρ)`.
#[derive(Clone, Debug)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub message_dim: usize,
    pub n: usize,
}

impl GaussianPosterior {
    pub fn message_mean(&self) -> &[f64] {
        &self.mean.as_slice()[..self.message_dim]
    }

    pub fn drift_mean(&self, i: usize) -> f64 {
        self.mean[self.message_dim + i]
    }

    pub fn drift_sens_mean(&self, i: usize) -> f64 {
        self.mean[self.message_dim + self.n + i]
    }

    pub fn message_cov(&self) -> DMatrix<f64> {
        let d = self.message_dim;
        self.cov.view((0, 0), (d, d)).into_owned()
    }
}

fn stacked_map(jg: &JointGaussian) -> DMatrix<f64> {
    let (d, n) = (jg.message_dim, jg.n);
    let cols = d + n;
    let mut t = DMatrix::zeros(d + 2 * n, cols);
    for k in 0..d {
        t[(k, k)] = 1.0;
    }
    t.view_mut((d, 0), (n, cols)).copy_from(&jg.g);
    t.view_mut((d + n, 0), (n, cols)).copy_from(&jg.dg);
    t
}

/// Conditions `(W, g, dg/dρ)` on `Y_1^n = y` by Schur complement. The
/// message is zero-mean, so the posterior mean is linear in `y`.
pub fn gaussian_posterior(jg: &JointGaussian, y: &[f64]) -> Result<GaussianPosterior> {
    if y.len() != jg.n {
        return Err(Error::Argument(format!(
            "output vector has length {}, expected {}",
            y.len(),
            jg.n
        )));
    }
    let chol = jg.output_factor()?;
    let t = stacked_map(jg);
    let k = jg.gain(&chol, &t);
    let mean = &k * DVector::from_column_slice(y);
    let prior = &t * &jg.cov_wz * t.transpose();
    let cross = &t * &jg.cov_wz * jg.l.transpose();
    let cov = prior - &k * cross.transpose();
    Ok(GaussianPosterior {
        mean,
        cov,
        message_dim: jg.message_dim,
        n: jg.n,
    })
}

/// Estimation-side terms, all in the `ρ` parameterization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactRhs {
    /// `ρ Σ_i E[(g_i − E[g_i|Y])²]`.
    pub mmse: f64,
    /// `ρ² Σ_i E[(g_i − E[g_i|Y]) dg_i/dρ]`.
    pub correctional: f64,
    /// Same with `dg_i/dρ` replaced by `dg_i/dρ − E[dg_i/dρ|Y]`.
    pub correctional_symmetrized: f64,
}

impl ExactRhs {
    pub fn total(&self) -> f64 {
        self.mmse + self.correctional
    }
}

/// Closed-form estimation terms from second moments of `(G, dG, L)`.
pub fn exact_rhs(jg: &JointGaussian) -> Result<ExactRhs> {
    let chol = jg.output_factor()?;
    let resid = &jg.g - jg.gain(&chol, &jg.g) * &jg.l;
    let resid_sens = &jg.dg - jg.gain(&chol, &jg.dg) * &jg.l;
    let rho = jg.rho;
    let mmse = rho * (&resid * &jg.cov_wz * resid.transpose()).trace();
    let corr = rho * rho * (&resid * &jg.cov_wz * jg.dg.transpose()).trace();
    let sym = rho * rho * (&resid * &jg.cov_wz * resid_sens.transpose()).trace();
    Ok(ExactRhs {
        mmse,
        correctional: corr,
        correctional_symmetrized: sym,
    })
}

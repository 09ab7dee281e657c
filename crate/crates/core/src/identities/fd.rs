//! Richardson-extrapolated finite differences.

use serde::{Deserialize, Serialize};

use crate::stats::{mean, Estimate};
use crate::{Error, Result};

/// Derivative estimate from a Richardson table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derivative {
    pub value: f64,
    /// `|T[L-1][L-1] − T[L-2][L-2]|`.
    pub error_bound: f64,
    /// Step sizes used, largest first.
    pub steps: Vec<f64>,
    /// Forward differences were used because `x₀ − h₀ < 0`.
    pub one_sided: bool,
}

/// Abscissae of the stencil at `h₀ 2^{-i}`: `x₀, x₀+h₀, x₀+h₁, …` for
/// forward differences (used when `x₀ − h₀ < 0`), else `x₀+h₀, x₀−h₀, …`.
pub(crate) struct Stencil {
    pub steps: Vec<f64>,
    pub one_sided: bool,
    pub points: Vec<f64>,
}

impl Stencil {
    pub fn new(x0: f64, h0: f64, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Argument(
                "finite differences need at least 2 levels".into(),
            ));
        }
        if !(h0 > 0.0 && h0.is_finite() && x0.is_finite()) {
            return Err(Error::Argument(format!("bad stencil x0={x0}, h0={h0}")));
        }
        let one_sided = x0 - h0 < 0.0;
        let steps: Vec<f64> = (0..levels).map(|i| h0 / f64::from(1u32 << i)).collect();
        let points = if one_sided {
            std::iter::once(x0)
                .chain(steps.iter().map(|h| x0 + h))
                .collect()
        } else {
            steps.iter().flat_map(|h| [x0 + h, x0 - h]).collect()
        };
        Ok(Stencil {
            steps,
            one_sided,
            points,
        })
    }

    /// Difference quotients from values at [`Self::points`]. Central
    /// quotients have an error series in even powers of `h`, forward ones
    /// in all powers.
    fn quotients<T: Quotient>(&self, values: Vec<T>) -> Result<Vec<T>> {
        for (v, &x) in values.iter().zip(&self.points) {
            v.check(x)?;
        }
        Ok(if self.one_sided {
            self.steps
                .iter()
                .enumerate()
                .map(|(i, &h)| values[i + 1].quotient(&values[0], h))
                .collect()
        } else {
            self.steps
                .iter()
                .enumerate()
                .map(|(i, &h)| values[2 * i].quotient(&values[2 * i + 1], 2.0 * h))
                .collect()
        })
    }
}

/// Evaluates `f` point by point, stopping at the first failure.
fn evaluate<T, F>(stencil: &Stencil, mut f: F) -> Result<Vec<T>>
where
    F: FnMut(f64) -> Result<T>,
    T: Quotient,
{
    stencil
        .points
        .iter()
        .map(|&x| {
            let v = f(x)?;
            v.check(x)?;
            Ok(v)
        })
        .collect()
}

trait Quotient: Sized {
    fn check(&self, x: f64) -> Result<()>;
    fn quotient(&self, other: &Self, h: f64) -> Self;
}

impl Quotient for f64 {
    fn check(&self, x: f64) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { x, value: *self })
        }
    }

    fn quotient(&self, other: &Self, h: f64) -> Self {
        (self - other) / h
    }
}

/// Per-path values; `None` entries (excluded paths) propagate as `NaN`.
impl Quotient for Vec<f64> {
    fn check(&self, _x: f64) -> Result<()> {
        Ok(())
    }

    fn quotient(&self, other: &Self, h: f64) -> Self {
        self.iter().zip(other).map(|(a, b)| (a - b) / h).collect()
    }
}

/// Richardson table over `d[i]`, returning the last two diagonal entries.
fn richardson<T: Clone>(d: Vec<T>, even: bool, combine: impl Fn(&T, &T, f64) -> T) -> (T, T) {
    let levels = d.len();
    let mut prev = d;
    let mut diag = vec![prev[0].clone()];
    for j in 1..levels {
        let p = if even { 2 * j } else { j } as i32;
        let factor = 2f64.powi(p) - 1.0;
        let row: Vec<T> = (j..levels)
            .map(|i| combine(&prev[i - j + 1], &prev[i - j], factor))
            .collect();
        diag.push(row[0].clone());
        prev = row;
    }
    let n = diag.len();
    (diag[n - 1].clone(), diag[n - 2].clone())
}

/// `f′(x₀)` by central differences at `h₀, h₀/2, …` (forward differences
/// when `x₀ − h₀ < 0`) with Richardson extrapolation.
pub fn fd_derivative<F>(f: F, x0: f64, h0: f64, levels: usize) -> Result<Derivative>
where
    F: FnMut(f64) -> Result<f64>,
{
    let stencil = Stencil::new(x0, h0, levels)?;
    let d = stencil.quotients(evaluate(&stencil, f)?)?;
    let (best, prev) = richardson(d, !stencil.one_sided, |fine, coarse, k| {
        fine + (fine - coarse) / k
    });
    Ok(Derivative {
        value: best,
        error_bound: (best - prev).abs(),
        steps: stencil.steps,
        one_sided: stencil.one_sided,
    })
}

/// Derivative of a Monte Carlo mean whose per-path values are evaluated
/// with common random numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDerivative {
    /// Mean of the per-path extrapolated derivatives, with their standard error.
    pub estimate: Estimate,
    /// Richardson bound on the mean.
    pub error_bound: f64,
    pub steps: Vec<f64>,
    pub one_sided: bool,
    /// Paths excluded at some abscissa.
    pub excluded: usize,
}

/// Applies [`fd_derivative`] to each path's value, so the spread of the
/// per-path derivatives yields a standard error for the derivative of the
/// mean.
pub fn fd_derivative_paths<F>(mut f: F, x0: f64, h0: f64, levels: usize) -> Result<PathDerivative>
where
    F: FnMut(f64) -> Result<Vec<Option<f64>>>,
{
    fd_derivative_paths_batch(|xs| xs.iter().map(|&x| f(x)).collect(), x0, h0, levels)
}

/// [`fd_derivative_paths`] with every abscissa requested in one call, so
/// the caller can share work across the stencil. `f` must return one
/// per-path vector per abscissa, in order.
pub fn fd_derivative_paths_batch<F>(f: F, x0: f64, h0: f64, levels: usize) -> Result<PathDerivative>
where
    F: FnOnce(&[f64]) -> Result<Vec<Vec<Option<f64>>>>,
{
    let stencil = Stencil::new(x0, h0, levels)?;
    let values = f(&stencil.points)?;
    if values.len() != stencil.points.len() {
        return Err(Error::Argument(
            "one value vector per abscissa expected".into(),
        ));
    }
    let width = values[0].len();
    if values.iter().any(|v| v.len() != width) {
        return Err(Error::Argument(
            "path count changed between evaluations".into(),
        ));
    }
    let values: Vec<Vec<f64>> = values
        .into_iter()
        .map(|v| v.into_iter().map(|o| o.unwrap_or(f64::NAN)).collect())
        .collect();
    let d = stencil.quotients(values)?;
    let (best, prev) = richardson(d, !stencil.one_sided, |fine, coarse, k| {
        fine.iter()
            .zip(coarse)
            .map(|(a, b)| a + (a - b) / k)
            .collect()
    });
    let keep: Vec<usize> = (0..best.len())
        .filter(|&i| best[i].is_finite() && prev[i].is_finite())
        .collect();
    let b: Vec<f64> = keep.iter().map(|&i| best[i]).collect();
    let p: Vec<f64> = keep.iter().map(|&i| prev[i]).collect();
    if b.is_empty() {
        return Err(Error::Argument("every path was excluded".into()));
    }
    Ok(PathDerivative {
        estimate: Estimate::from_samples(&b),
        error_bound: (mean(&b) - mean(&p)).abs(),
        steps: stencil.steps,
        one_sided: stencil.one_sided,
        excluded: best.len() - b.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let d = fd_derivative(|x| Ok(x * x), 3.0, 0.1, 3).unwrap();
        assert!((d.value - 6.0).abs() < 1e-10);
    }

    #[test]
    fn constant_has_zero_derivative() {
        let d = fd_derivative(|_| Ok(4.2), 1.0, 0.1, 4).unwrap();
        assert!(d.value.abs() < 1e-12);
    }

    #[test]
    fn gaussian_mi_in_snr() {
        let d = fd_derivative(|x| Ok(0.5 * (1.0 + x).ln()), 1.0, 0.1, 4).unwrap();
        assert!((d.value - 0.25).abs() < 1e-8, "{d:?}");
        assert!(d.error_bound < 1e-6);
    }

    #[test]
    fn one_sided_near_origin() {
        let d = fd_derivative(|x| Ok(x.exp()), 0.0, 0.1, 5).unwrap();
        assert!(d.one_sided);
        assert!((d.value - 1.0).abs() < 1e-8, "{d:?}");
    }

    #[test]
    fn non_finite_value_names_abscissa() {
        let err =
            fd_derivative(|x| Ok(if x > 1.05 { f64::NAN } else { x }), 1.0, 0.1, 2).unwrap_err();
        assert!(matches!(err, Error::NonFinite { x, .. } if (x - 1.1).abs() < 1e-12));
    }

    #[test]
    fn single_level_is_rejected() {
        assert!(fd_derivative(Ok, 1.0, 0.1, 1).is_err());
    }

    #[test]
    fn per_path_derivative_matches_scalar_on_each_path() {
        let r = fd_derivative_paths(|x| Ok(vec![Some(x * x), Some(x.sin()), None]), 1.0, 0.1, 4)
            .unwrap();
        assert_eq!(r.excluded, 1);
        assert!((r.estimate.value - 0.5 * (2.0 + 1f64.cos())).abs() < 1e-8);
    }
}

//! Drift callbacks for discrete-time and continuous-time systems.

use std::fmt::Debug;

/// Drift family `g_i(w, y_1^{i-1})` of a discrete-time system.
///
/// Steps are 0-based: `eval(i, ..)` receives `y_past = y[0..i]`.
pub trait Drift: Send + Sync + Debug {
    /// Stable identifier, including parameters; enters report fingerprints.
    fn describe(&self) -> String;

    fn eval(&self, i: usize, w: &[f64], y_past: &[f64], rho: f64) -> f64;

    /// Writes `∂g_i/∂y_j` for `j < i` into `out` and returns `true`, or
    /// returns `false` to request the finite-difference fallback.
    fn jacobian(
        &self,
        _i: usize,
        _w: &[f64],
        _y_past: &[f64],
        _rho: f64,
        _out: &mut [f64],
    ) -> bool {
        false
    }

    /// Explicit `∂g_i/∂ρ` for drifts that depend on `ρ` directly.
    fn rho_partial(&self, _i: usize, _w: &[f64], _y_past: &[f64], _rho: f64) -> f64 {
        0.0
    }

    /// `false` if no `g_i` reads the past outputs (no feedback).
    fn uses_outputs(&self) -> bool {
        true
    }

    /// Message dimension the drift expects, if it is fixed.
    fn message_dim(&self) -> Option<usize> {
        None
    }
}

/// Central-difference Jacobian row with step `max(1e-5, 1e-5 |y_j|)`.
pub fn fd_jacobian_row(
    drift: &dyn Drift,
    i: usize,
    w: &[f64],
    y_past: &[f64],
    rho: f64,
    out: &mut [f64],
) {
    let mut y = y_past.to_vec();
    for j in 0..i {
        let h = (1e-5 * y_past[j].abs()).max(1e-5);
        y[j] = y_past[j] + h;
        let up = drift.eval(i, w, &y, rho);
        y[j] = y_past[j] - h;
        let down = drift.eval(i, w, &y, rho);
        y[j] = y_past[j];
        out[j] = (up - down) / (2.0 * h);
    }
}

/// Drift functional `g(t_k, w, y_0..y_k)` of a continuous-time system on
/// its solver grid.
pub trait CtDrift: Send + Sync + Debug {
    fn describe(&self) -> String;

    /// `y_path` holds the grid values `y(t_0), .., y(t_k)`.
    fn eval(&self, k: usize, t: f64, w: &[f64], y_path: &[f64], rho: f64) -> f64;

    fn rho_partial(&self, _k: usize, _t: f64, _w: &[f64], _y_path: &[f64], _rho: f64) -> f64 {
        0.0
    }

    /// Path-gradient surrogate: weights `c_j` such that a perturbation `δy`
    /// of the path moves the drift by `Σ_j c_j δy(t_j)`. Writes
    /// `out[lo..=k]` and returns `Some(lo)`; entries below `lo` are treated
    /// as zero. `None` means no path dependence.
    fn path_gradient(
        &self,
        _k: usize,
        _t: f64,
        _w: &[f64],
        _y_path: &[f64],
        _rho: f64,
        _out: &mut [f64],
    ) -> Option<usize> {
        None
    }

    fn uses_outputs(&self) -> bool {
        true
    }

    /// Affine decomposition `g = coeffs·w + offset` along a fixed path.
    ///
    /// Implement only when `g` and `∂g/∂ρ` are affine in `w` and the path
    /// gradient does not depend on `w`; the estimators then replace per-draw
    /// path integrals with sufficient statistics.
    fn message_affine(
        &self,
        _k: usize,
        _t: f64,
        _y_path: &[f64],
        _rho: f64,
        _coeffs: &mut [f64],
    ) -> Option<f64> {
        None
    }

    fn message_dim(&self) -> Option<usize> {
        None
    }
}

//! Named drift callbacks available to config files.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::model::{CtDrift, Drift, MessageDrift};
use crate::{Error, Result};

pub const DRIFTS: &[(&str, &str)] = &[
    ("message", "g_i = w_0 (no feedback)"),
    ("linear_feedback", "g_1 = w_0, g_i = w_0 + alpha * y_{i-1}"),
    (
        "tanh_feedback",
        "g_1 = tanh(w_0), g_i = tanh(w_0 + alpha * y_{i-1}); finite-difference Jacobian",
    ),
    (
        "memory",
        "g_i = w_i + input_tap * w_{i-1} + output_tap * y_{i-1}; message dimension n",
    ),
    (
        "power_control",
        "g_i = w_0 / (1 + kappa * rho); explicit rho dependence",
    ),
];

pub const CT_DRIFTS: &[(&str, &str)] = &[
    ("constant_message", "g(s) = w_0"),
    ("linear_feedback", "g(s) = w_0 - gain * y(s)"),
    ("saturating_feedback", "g(s) = tanh(w_0 - gain * y(s))"),
];

fn take(params: &BTreeMap<String, f64>, allowed: &[(&str, f64)], drift: &str) -> Result<Vec<f64>> {
    if let Some(k) = params.keys().find(|k| !allowed.iter().any(|(a, _)| a == k)) {
        return Err(Error::Argument(format!(
            "drift `{drift}`: unknown parameter `{k}`"
        )));
    }
    allowed
        .iter()
        .map(|(name, default)| {
            let v = params.get(*name).copied().unwrap_or(*default);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Argument(format!(
                    "drift `{drift}`: parameter `{name}` not finite"
                )))
            }
        })
        .collect()
}

pub fn drift(name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn Drift>> {
    Ok(match name {
        "message" => {
            take(params, &[], name)?;
            Arc::new(MessageDrift)
        }
        "linear_feedback" => {
            let p = take(params, &[("alpha", 0.5)], name)?;
            Arc::new(FeedbackDrift { alpha: p[0] })
        }
        "tanh_feedback" => {
            let p = take(params, &[("alpha", 0.5)], name)?;
            Arc::new(TanhFeedback { alpha: p[0] })
        }
        "memory" => {
            let p = take(params, &[("input_tap", 0.5), ("output_tap", 0.0)], name)?;
            Arc::new(MemoryDrift {
                input_tap: p[0],
                output_tap: p[1],
            })
        }
        "power_control" => {
            let p = take(params, &[("kappa", 0.5)], name)?;
            Arc::new(PowerControl { kappa: p[0] })
        }
        _ => return Err(Error::UnknownDrift(name.to_string())),
    })
}

pub fn ct_drift(name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn CtDrift>> {
    Ok(match name {
        "constant_message" => {
            take(params, &[], name)?;
            Arc::new(CtConstantMessage)
        }
        "linear_feedback" => {
            let p = take(params, &[("gain", 1.0)], name)?;
            Arc::new(CtLinearFeedback { gain: p[0] })
        }
        "saturating_feedback" => {
            let p = take(params, &[("gain", 1.0)], name)?;
            Arc::new(CtSaturatingFeedback { gain: p[0] })
        }
        _ => return Err(Error::UnknownDrift(name.to_string())),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct FeedbackDrift {
    pub alpha: f64,
}

impl Drift for FeedbackDrift {
    fn describe(&self) -> String {
        format!("linear_feedback alpha={:?}", self.alpha)
    }

    fn eval(&self, i: usize, w: &[f64], y: &[f64], _rho: f64) -> f64 {
        if i == 0 {
            w[0]
        } else {
            w[0] + self.alpha * y[i - 1]
        }
    }

    fn jacobian(&self, i: usize, _w: &[f64], _y: &[f64], _rho: f64, out: &mut [f64]) -> bool {
        out[..i].fill(0.0);
        if i > 0 {
            out[i - 1] = self.alpha;
        }
        true
    }

    fn uses_outputs(&self) -> bool {
        self.alpha != 0.0
    }

    fn message_dim(&self) -> Option<usize> {
        Some(1)
    }
}

/// Bounded nonlinear feedback; relies on the finite-difference Jacobian.
#[derive(Clone, Copy, Debug)]
pub struct TanhFeedback {
    pub alpha: f64,
}

impl Drift for TanhFeedback {
    fn describe(&self) -> String {
        format!("tanh_feedback alpha={:?}", self.alpha)
    }

    fn eval(&self, i: usize, w: &[f64], y: &[f64], _rho: f64) -> f64 {
        let fb = if i == 0 { 0.0 } else { self.alpha * y[i - 1] };
        (w[0] + fb).tanh()
    }

    fn uses_outputs(&self) -> bool {
        self.alpha != 0.0
    }

    fn message_dim(&self) -> Option<usize> {
        Some(1)
    }
}

/// Intersymbol interference with output memory.
#[derive(Clone, Copy, Debug)]
pub struct MemoryDrift {
    pub input_tap: f64,
    pub output_tap: f64,
}

impl Drift for MemoryDrift {
    fn describe(&self) -> String {
        format!(
            "memory input_tap={:?} output_tap={:?}",
            self.input_tap, self.output_tap
        )
    }

    fn eval(&self, i: usize, w: &[f64], y: &[f64], _rho: f64) -> f64 {
        let mut g = w[i];
        if i > 0 {
            g += self.input_tap * w[i - 1] + self.output_tap * y[i - 1];
        }
        g
    }

    fn jacobian(&self, i: usize, _w: &[f64], _y: &[f64], _rho: f64, out: &mut [f64]) -> bool {
        out[..i].fill(0.0);
        if i > 0 {
            out[i - 1] = self.output_tap;
        }
        true
    }

    fn uses_outputs(&self) -> bool {
        self.output_tap != 0.0
    }
}

/// Input scaled down as the channel gain grows.
#[derive(Clone, Copy, Debug)]
pub struct PowerControl {
    pub kappa: f64,
}

impl Drift for PowerControl {
    fn describe(&self) -> String {
        format!("power_control kappa={:?}", self.kappa)
    }

    fn eval(&self, _i: usize, w: &[f64], _y: &[f64], rho: f64) -> f64 {
        w[0] / (1.0 + self.kappa * rho)
    }

    fn rho_partial(&self, _i: usize, w: &[f64], _y: &[f64], rho: f64) -> f64 {
        let d = 1.0 + self.kappa * rho;
        -self.kappa * w[0] / (d * d)
    }

    fn uses_outputs(&self) -> bool {
        false
    }

    fn message_dim(&self) -> Option<usize> {
        Some(1)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CtConstantMessage;

impl CtDrift for CtConstantMessage {
    fn describe(&self) -> String {
        "ct constant_message".into()
    }

    fn eval(&self, _k: usize, _t: f64, w: &[f64], _y: &[f64], _rho: f64) -> f64 {
        w[0]
    }

    fn uses_outputs(&self) -> bool {
        false
    }

    fn message_affine(
        &self,
        _k: usize,
        _t: f64,
        _y: &[f64],
        _rho: f64,
        coeffs: &mut [f64],
    ) -> Option<f64> {
        coeffs.fill(0.0);
        coeffs[0] = 1.0;
        Some(0.0)
    }

    fn message_dim(&self) -> Option<usize> {
        Some(1)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CtLinearFeedback {
    pub gain: f64,
}

impl CtDrift for CtLinearFeedback {
    fn describe(&self) -> String {
        format!("ct linear_feedback gain={:?}", self.gain)
    }

    fn eval(&self, k: usize, _t: f64, w: &[f64], y: &[f64], _rho: f64) -> f64 {
        w[0] - self.gain * y[k]
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
        out[k] = -self.gain;
        Some(k)
    }

    fn uses_outputs(&self) -> bool {
        self.gain != 0.0
    }

    fn message_affine(
        &self,
        k: usize,
        _t: f64,
        y: &[f64],
        _rho: f64,
        coeffs: &mut [f64],
    ) -> Option<f64> {
        coeffs.fill(0.0);
        coeffs[0] = 1.0;
        Some(-self.gain * y[k])
    }

    fn message_dim(&self) -> Option<usize> {
        Some(1)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CtSaturatingFeedback {
    pub gain: f64,
}

impl CtDrift for CtSaturatingFeedback {
    fn describe(&self) -> String {
        format!("ct saturating_feedback gain={:?}", self.gain)
    }

    fn eval(&self, k: usize, _t: f64, w: &[f64], y: &[f64], _rho: f64) -> f64 {
        (w[0] - self.gain * y[k]).tanh()
    }

    fn path_gradient(
        &self,
        k: usize,
        _t: f64,
        w: &[f64],
        y: &[f64],
        _rho: f64,
        out: &mut [f64],
    ) -> Option<usize> {
        let th = (w[0] - self.gain * y[k]).tanh();
        out[k] = -self.gain * (1.0 - th * th);
        Some(k)
    }

    fn uses_outputs(&self) -> bool {
        self.gain != 0.0
    }

    fn message_dim(&self) -> Option<usize> {
        Some(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_and_params_are_rejected() {
        assert!(matches!(
            drift("nope", &BTreeMap::new()),
            Err(Error::UnknownDrift(_))
        ));
        let mut p = BTreeMap::new();
        p.insert("beta".to_string(), 1.0);
        assert!(drift("linear_feedback", &p).is_err());
        assert!(ct_drift("constant_message", &p).is_err());
    }

    #[test]
    fn every_listed_drift_resolves() {
        for (name, _) in DRIFTS {
            drift(name, &BTreeMap::new()).unwrap();
        }
        for (name, _) in CT_DRIFTS {
            ct_drift(name, &BTreeMap::new()).unwrap();
        }
    }
}

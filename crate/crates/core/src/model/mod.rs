//! Declarative descriptions of every channel and system the laboratory can
//! instantiate, plus their validation.
//!
//! Internals are parameterized by `ρ`; `snr = ρ²` appears only at the
//! harness layer.

mod drift;
mod prior;
pub mod record;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use drift::{fd_jacobian_row, CtDrift, Drift};
pub use prior::{MessagePrior, MessageSampler, Prior};

use crate::{Error, Result};

/// Violated invariants of a specification; empty when valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            write!(f, "{}", self.violations.join("; "))
        }
    }
}

pub trait Validate {
    fn validate(&self) -> ValidationReport;
}

fn check_rho(rho: f64, out: &mut Vec<String>) {
    if !(rho.is_finite() && rho >= 0.0) {
        out.push(format!("rho must be finite and nonnegative (got {rho})"));
    }
}

/// Channel parameter, either `snr` or `ρ = √snr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelParam {
    Snr(f64),
    Rho(f64),
}

impl ChannelParam {
    pub fn rho(self) -> f64 {
        match self {
            ChannelParam::Snr(s) => s.sqrt(),
            ChannelParam::Rho(r) => r,
        }
    }

    pub fn snr(self) -> f64 {
        match self {
            ChannelParam::Snr(s) => s,
            ChannelParam::Rho(r) => r * r,
        }
    }

    fn raw(self) -> f64 {
        match self {
            ChannelParam::Snr(v) | ChannelParam::Rho(v) => v,
        }
    }
}

/// Memoryless scalar channel `Y = ρX + Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarChannelSpec {
    pub prior: Prior,
    pub snr_or_rho: ChannelParam,
}

impl ScalarChannelSpec {
    pub fn new(prior: Prior, snr_or_rho: ChannelParam) -> Self {
        Self { prior, snr_or_rho }
    }

    pub fn rho(&self) -> f64 {
        self.snr_or_rho.rho()
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            prior: self.prior.clone(),
            snr_or_rho: ChannelParam::Rho(rho),
        }
    }

    /// One-step system with `g_1(w) = w`.
    pub fn to_system(&self) -> Result<SystemSpec> {
        self.validate().into_result()?;
        let message_prior = match &self.prior {
            Prior::Gaussian { mean, variance } => MessagePrior::scalar_gaussian(*mean, *variance),
            Prior::Finite { points, probs } => MessagePrior::scalar_finite(points, probs),
            Prior::Grid { .. } => {
                return Err(Error::Argument(
                    "grid-sampled priors have no message-prior form; use the grid route".into(),
                ))
            }
        };
        Ok(SystemSpec::new(
            1,
            Arc::new(MessageDrift),
            message_prior,
            self.rho(),
        ))
    }

    /// Single-step linear scheme, available for Gaussian priors (the prior
    /// mean does not affect information or MMSE terms).
    pub fn to_linear(&self) -> Option<LinearFeedbackSpec> {
        match self.prior {
            Prior::Gaussian { variance, .. } => Some(LinearFeedbackSpec {
                n: 1,
                message_dim: 1,
                message_cov: vec![vec![variance]],
                input_map: InputMap {
                    a: vec![vec![1.0]],
                    b: vec![vec![0.0]],
                },
                rho: self.rho(),
            }),
            _ => None,
        }
    }
}

impl Validate for ScalarChannelSpec {
    fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        self.prior.check(&mut v);
        let p = self.snr_or_rho.raw();
        if !(p.is_finite() && p >= 0.0) {
            v.push(format!(
                "snr_or_rho must be finite and nonnegative (got {p})"
            ));
        }
        ValidationReport { violations: v }
    }
}

/// Discrete-time system `Y_i = ρ g_i(W, Y_1^{i-1}) + Z_i`, `i = 1..n`.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub n: usize,
    pub drift: Arc<dyn Drift>,
    pub message_prior: MessagePrior,
    pub rho: f64,
}

impl SystemSpec {
    pub fn new(n: usize, drift: Arc<dyn Drift>, message_prior: MessagePrior, rho: f64) -> Self {
        Self {
            n,
            drift,
            message_prior,
            rho,
        }
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            rho,
            ..self.clone()
        }
    }

    pub fn has_feedback(&self) -> bool {
        self.drift.uses_outputs()
    }

    /// `∂g_i/∂y_j` for `j < i`, from the drift or by central differences.
    pub fn jacobian_row(&self, i: usize, w: &[f64], y_past: &[f64], out: &mut [f64]) {
        if !self.drift.uses_outputs() {
            out[..i].fill(0.0);
            return;
        }
        if !self.drift.jacobian(i, w, y_past, self.rho, out) {
            fd_jacobian_row(self.drift.as_ref(), i, w, y_past, self.rho, out);
        }
    }

    fn descriptor(&self) -> String {
        format!(
            "system n={} rho={:?} drift={} prior={}",
            self.n,
            self.rho,
            self.drift.describe(),
            serde_json::to_string(&self.message_prior).unwrap_or_default()
        )
    }
}

impl Validate for SystemSpec {
    fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if self.n == 0 {
            v.push("horizon n must be positive".into());
        }
        check_rho(self.rho, &mut v);
        self.message_prior.check(&mut v);
        if let Some(d) = self.drift.message_dim() {
            if d != self.message_prior.dim() {
                v.push(format!(
                    "drift expects message dimension {d}, prior has {}",
                    self.message_prior.dim()
                ));
            }
        }
        if v.is_empty() {
            if let Some(msg) = crate::mc::moment_check(self) {
                v.push(msg);
            }
        }
        ValidationReport { violations: v }
    }
}

/// Coefficients of `X_i = a_iᵀM + Σ_{j<i} b_{i,j} Y_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputMap {
    /// `n × message_dim`.
    pub a: Vec<Vec<f64>>,
    /// `n × n`, zero on and above the diagonal.
    pub b: Vec<Vec<f64>>,
}

/// Linear feedback scheme with a zero-mean Gaussian message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFeedbackSpec {
    pub n: usize,
    pub message_dim: usize,
    pub message_cov: Vec<Vec<f64>>,
    pub input_map: InputMap,
    pub rho: f64,
}

impl LinearFeedbackSpec {
    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            rho,
            ..self.clone()
        }
    }

    pub fn has_feedback(&self) -> bool {
        self.input_map.b.iter().flatten().any(|b| *b != 0.0)
    }
}

impl Validate for LinearFeedbackSpec {
    fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let (n, d) = (self.n, self.message_dim);
        if n == 0 {
            v.push("horizon n must be positive".into());
        }
        if d == 0 {
            v.push("message_dim must be positive".into());
        }
        check_rho(self.rho, &mut v);
        if self.message_cov.len() != d || self.message_cov.iter().any(|r| r.len() != d) {
            v.push("message_cov shape does not match message_dim".into());
        } else if let Err(msg) = prior::check_spd(&self.message_cov) {
            v.push(format!("message_cov {msg}"));
        }
        let a = &self.input_map.a;
        if a.len() != n || a.iter().any(|r| r.len() != d) {
            v.push("input_map.a must be n × message_dim".into());
        }
        let b = &self.input_map.b;
        if b.len() != n || b.iter().any(|r| r.len() != n) {
            v.push("input_map.b must be n × n".into());
        } else {
            for (i, row) in b.iter().enumerate() {
                for (j, bij) in row.iter().enumerate() {
                    if j >= i && *bij != 0.0 {
                        v.push(format!(
                            "causality violation: b[{}][{}] = {bij} must vanish for j >= i",
                            i + 1,
                            j + 1
                        ));
                    }
                }
            }
        }
        if a.iter().chain(b.iter()).flatten().any(|x| !x.is_finite()) {
            v.push("input_map has non-finite coefficients".into());
        }
        ValidationReport { violations: v }
    }
}

/// `g_i = a_iᵀw + Σ_{j<i} b_{i,j} y_j` with its exact Jacobian.
#[derive(Clone, Debug)]
pub struct LinearDrift {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    feedback: bool,
}

impl LinearDrift {
    pub fn new(map: &InputMap) -> Self {
        let feedback = map.b.iter().flatten().any(|b| *b != 0.0);
        Self {
            a: map.a.clone(),
            b: map.b.clone(),
            feedback,
        }
    }
}

impl Drift for LinearDrift {
    fn describe(&self) -> String {
        format!("linear a={:?} b={:?}", self.a, self.b)
    }

    fn eval(&self, i: usize, w: &[f64], y_past: &[f64], _rho: f64) -> f64 {
        let msg: f64 = self.a[i].iter().zip(w).map(|(a, w)| a * w).sum();
        let fb: f64 = self.b[i][..i].iter().zip(y_past).map(|(b, y)| b * y).sum();
        msg + fb
    }

    fn jacobian(&self, i: usize, _w: &[f64], _y: &[f64], _rho: f64, out: &mut [f64]) -> bool {
        out[..i].copy_from_slice(&self.b[i][..i]);
        true
    }

    fn uses_outputs(&self) -> bool {
        self.feedback
    }

    fn message_dim(&self) -> Option<usize> {
        self.a.first().map(Vec::len)
    }
}

/// `g_i(w) = w_0` for every step.
#[derive(Clone, Copy, Debug)]
pub struct MessageDrift;

impl Drift for MessageDrift {
    fn describe(&self) -> String {
        "message".into()
    }

    fn eval(&self, _i: usize, w: &[f64], _y: &[f64], _rho: f64) -> f64 {
        w[0]
    }

    fn uses_outputs(&self) -> bool {
        false
    }
}

/// Embeds a linear scheme into the general system form, with the constant
/// Jacobian `b_{i,j}` attached.
pub fn canonicalize_linear(spec: &LinearFeedbackSpec) -> Result<SystemSpec> {
    spec.validate().into_result()?;
    let prior = MessagePrior::Gaussian {
        mean: vec![0.0; spec.message_dim],
        cov: spec.message_cov.clone(),
    };
    Ok(SystemSpec::new(
        spec.n,
        Arc::new(LinearDrift::new(&spec.input_map)),
        prior,
        spec.rho,
    ))
}

/// Additive-noise channel `Y = X + √t Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeBruijnSpec {
    pub prior: Prior,
    pub t: f64,
}

impl DeBruijnSpec {
    pub fn with_t(&self, t: f64) -> Self {
        Self {
            prior: self.prior.clone(),
            t,
        }
    }
}

impl Validate for DeBruijnSpec {
    fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        self.prior.check(&mut v);
        if !(self.t.is_finite() && self.t > 0.0) {
            v.push(format!("t must be strictly positive (got {})", self.t));
        }
        ValidationReport { violations: v }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    EulerMaruyama,
    Picard,
}

/// Continuous-time system `Y(t) = ρ∫_0^t g(s, W, Y_0^s) ds + B(t)` on a
/// uniform grid of step `step`.
#[derive(Clone, Debug)]
pub struct CTSystemSpec {
    pub horizon: f64,
    pub step: f64,
    pub drift: Arc<dyn CtDrift>,
    pub message_prior: MessagePrior,
    pub rho: f64,
    pub solver: Solver,
}

impl CTSystemSpec {
    /// Uses the default step `1e-3 · horizon`.
    pub fn new(
        horizon: f64,
        drift: Arc<dyn CtDrift>,
        message_prior: MessagePrior,
        rho: f64,
    ) -> Self {
        Self {
            horizon,
            step: 1e-3 * horizon,
            drift,
            message_prior,
            rho,
            solver: Solver::EulerMaruyama,
        }
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self {
            rho,
            ..self.clone()
        }
    }

    pub fn with_step(&self, step: f64) -> Self {
        Self {
            step,
            ..self.clone()
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn has_feedback(&self) -> bool {
        self.drift.uses_outputs()
    }

    fn descriptor(&self) -> String {
        format!(
            "ct horizon={:?} step={:?} rho={:?} solver={:?} drift={} prior={}",
            self.horizon,
            self.step,
            self.rho,
            self.solver,
            self.drift.describe(),
            serde_json::to_string(&self.message_prior).unwrap_or_default()
        )
    }
}

impl Validate for CTSystemSpec {
    fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            v.push(format!("horizon must be positive (got {})", self.horizon));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            v.push(format!("step must be positive (got {})", self.step));
        } else if self.step > self.horizon {
            v.push("step exceeds horizon".into());
        } else {
            let ratio = self.horizon / self.step;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                v.push(format!("horizon / step = {ratio} is not an integer"));
            }
        }
        check_rho(self.rho, &mut v);
        self.message_prior.check(&mut v);
        if let Some(d) = self.drift.message_dim() {
            if d != self.message_prior.dim() {
                v.push(format!(
                    "drift expects message dimension {d}, prior has {}",
                    self.message_prior.dim()
                ));
            }
        }
        if v.is_empty() {
            if let Some(msg) = crate::ctsim::boundedness_check(self) {
                v.push(msg);
            }
        }
        ValidationReport { violations: v }
    }
}

/// Any specification the harness can check.
#[derive(Clone, Debug)]
pub enum AnySpec {
    Scalar(ScalarChannelSpec),
    System(SystemSpec),
    Linear(LinearFeedbackSpec),
    DeBruijn(DeBruijnSpec),
    Ct(CTSystemSpec),
}

impl AnySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AnySpec::Scalar(_) => "scalar_channel",
            AnySpec::System(_) => "system",
            AnySpec::Linear(_) => "linear_feedback",
            AnySpec::DeBruijn(_) => "debruijn",
            AnySpec::Ct(_) => "ct_system",
        }
    }

    /// SHA-256 of a canonical descriptor, hex encoded.
    pub fn fingerprint(&self) -> String {
        let desc = match self {
            AnySpec::Scalar(s) => serde_json::to_string(s).unwrap_or_default(),
            AnySpec::Linear(s) => serde_json::to_string(s).unwrap_or_default(),
            AnySpec::DeBruijn(s) => serde_json::to_string(s).unwrap_or_default(),
            AnySpec::System(s) => s.descriptor(),
            AnySpec::Ct(s) => s.descriptor(),
        };
        let digest = Sha256::digest(format!("{}:{desc}", self.kind()).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Replaces the named scalar parameter (`rho`, `snr`, `t`, `step`).
    pub fn with_param(&self, name: &str, value: f64) -> Result<AnySpec> {
        let bad = || {
            Error::Argument(format!(
                "parameter `{name}` does not apply to a {} spec",
                self.kind()
            ))
        };
        let rho = match name {
            "rho" => value,
            "snr" => {
                if value < 0.0 {
                    return Err(Error::Argument(format!(
                        "snr must be nonnegative (got {value})"
                    )));
                }
                value.sqrt()
            }
            _ => f64::NAN,
        };
        Ok(match (self, name) {
            (AnySpec::Scalar(s), "rho") => AnySpec::Scalar(s.with_rho(rho)),
            (AnySpec::Scalar(s), "snr") => AnySpec::Scalar(ScalarChannelSpec::new(
                s.prior.clone(),
                ChannelParam::Snr(value),
            )),
            (AnySpec::System(s), "rho" | "snr") => AnySpec::System(s.with_rho(rho)),
            (AnySpec::Linear(s), "rho" | "snr") => AnySpec::Linear(s.with_rho(rho)),
            (AnySpec::Ct(s), "rho" | "snr") => AnySpec::Ct(s.with_rho(rho)),
            (AnySpec::Ct(s), "step") => AnySpec::Ct(s.with_step(value)),
            (AnySpec::DeBruijn(s), "t") => AnySpec::DeBruijn(s.with_t(value)),
            _ => return Err(bad()),
        })
    }
}

impl Validate for AnySpec {
    fn validate(&self) -> ValidationReport {
        match self {
            AnySpec::Scalar(s) => s.validate(),
            AnySpec::System(s) => s.validate(),
            AnySpec::Linear(s) => s.validate(),
            AnySpec::DeBruijn(s) => s.validate(),
            AnySpec::Ct(s) => s.validate(),
        }
    }
}

//! Report, budget and identity catalogue types.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Scale;
use crate::ctsim::CtMiEstimate;
use crate::mc::MiEstimate;
use crate::model::AnySpec;
use crate::stats::Estimate;
use crate::{Error, Result};

/// The identities the harness can check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IdentityId {
    /// `dI/dsnr = ½ mmse` for a memoryless channel.
    ImmseSnr,
    /// `dI/dρ = ρ mmse`.
    ImmseRho,
    /// `dH(X + √t Z)/dt = ½ J`.
    Debruijn,
    /// `dH/dt` against `(1/t²) E[(Y − E[X|Y])²]`.
    DebruijnRemark,
    /// Discrete-time extended relation in `ρ`.
    DtExtended,
    /// Same with the symmetrized correctional term.
    DtSymmetrized,
    /// Feedback channel, directed information in `snr`.
    DtFeedbackSnr,
    /// Channel with input and output memory, in `snr`.
    DtMemory,
    /// Continuous-time relation without feedback, in `snr`.
    CtNofeedback,
    /// Continuous-time extended relation in `ρ`.
    CtExtended,
    CtFeedbackSnr,
    CtMemory,
}

impl IdentityId {
    pub const ALL: [IdentityId; 12] = [
        IdentityId::ImmseSnr,
        IdentityId::ImmseRho,
        IdentityId::Debruijn,
        IdentityId::DebruijnRemark,
        IdentityId::DtExtended,
        IdentityId::DtSymmetrized,
        IdentityId::DtFeedbackSnr,
        IdentityId::DtMemory,
        IdentityId::CtNofeedback,
        IdentityId::CtExtended,
        IdentityId::CtFeedbackSnr,
        IdentityId::CtMemory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityId::ImmseSnr => "IMMSE_SNR",
            IdentityId::ImmseRho => "IMMSE_RHO",
            IdentityId::Debruijn => "DEBRUIJN",
            IdentityId::DebruijnRemark => "DEBRUIJN_REMARK",
            IdentityId::DtExtended => "DT_EXTENDED",
            IdentityId::DtSymmetrized => "DT_SYMMETRIZED",
            IdentityId::DtFeedbackSnr => "DT_FEEDBACK_SNR",
            IdentityId::DtMemory => "DT_MEMORY",
            IdentityId::CtNofeedback => "CT_NOFEEDBACK",
            IdentityId::CtExtended => "CT_EXTENDED",
            IdentityId::CtFeedbackSnr => "CT_FEEDBACK_SNR",
            IdentityId::CtMemory => "CT_MEMORY",
        }
    }

    pub(crate) fn scale(self) -> Scale {
        use IdentityId::*;
        match self {
            ImmseSnr | DtFeedbackSnr | DtMemory | CtNofeedback | CtFeedbackSnr | CtMemory => {
                Scale::Snr
            }
            ImmseRho | DtExtended | DtSymmetrized | CtExtended => Scale::Rho,
            Debruijn | DebruijnRemark => Scale::Time,
        }
    }

    /// Whether the right-hand side carries a correctional term.
    pub fn has_correction(self) -> bool {
        use IdentityId::*;
        matches!(
            self,
            DtExtended
                | DtSymmetrized
                | DtFeedbackSnr
                | DtMemory
                | CtExtended
                | CtFeedbackSnr
                | CtMemory
        )
    }

    pub fn is_continuous_time(self) -> bool {
        use IdentityId::*;
        matches!(self, CtNofeedback | CtExtended | CtFeedbackSnr | CtMemory)
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IdentityId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown identity `{s}`")))
    }
}

impl Scale {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Scale::Snr => "snr",
            Scale::Rho => "rho",
            Scale::Time => "t",
        }
    }
}

/// How a report's numbers were computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Closed-form linear-Gaussian oracle.
    Oracle,
    /// Deterministic quadrature on an output grid.
    Grid,
    MonteCarlo,
}

impl Route {
    pub fn default_h0(self) -> f64 {
        match self {
            Route::Oracle | Route::Grid => 0.05,
            Route::MonteCarlo => 0.1,
        }
    }

    pub fn default_levels(self) -> usize {
        match self {
            Route::Oracle | Route::Grid => 4,
            Route::MonteCarlo => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePreference {
    /// Oracle for Gaussian linear specs, grid for other scalar channels and
    /// heat-flow specs, Monte Carlo otherwise.
    #[default]
    Auto,
    Oracle,
    Grid,
    MonteCarlo,
}

/// Sampling and differencing budget of a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    /// Outer paths `N`.
    #[serde(alias = "N")]
    pub n_paths: usize,
    /// Inner proposal draws `M` (ignored for finite alphabets).
    #[serde(alias = "M")]
    pub inner_draws: usize,
    /// Overrides the continuous-time step `Δ`.
    pub step: Option<f64>,
    /// Largest finite-difference step, in the differentiation variable
    /// (`ρ` or `t`). Defaults depend on the route.
    pub h0: Option<f64>,
    pub levels: Option<usize>,
    pub seed: u64,
    pub route: RoutePreference,
    /// Re-run Monte Carlo terms at `2M` and mark the report inconclusive
    /// if they move by more than one standard error.
    pub stability_check: bool,
    /// Replaces the route's absolute tolerance floor.
    pub abs_floor: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            inner_draws: 10_000,
            step: None,
            h0: None,
            levels: None,
            seed: 0,
            route: RoutePreference::Auto,
            stability_check: true,
            abs_floor: None,
        }
    }
}

impl Budget {
    pub fn monte_carlo(n_paths: usize, inner_draws: usize, seed: u64) -> Self {
        Self {
            n_paths,
            inner_draws,
            seed,
            route: RoutePreference::MonteCarlo,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_paths < 2 {
            bad.push("n_paths must be at least 2".to_string());
        }
        if self.inner_draws < 1 {
            bad.push("inner_draws must be at least 1".to_string());
        }
        if let Some(s) = self.step {
            if !(s.is_finite() && s > 0.0) {
                bad.push(format!("step must be positive (got {s})"));
            }
        }
        if let Some(h) = self.h0 {
            if !(h.is_finite() && h > 0.0) {
                bad.push(format!("h0 must be positive (got {h})"));
            }
        }
        if let Some(l) = self.levels {
            if !(2..=12).contains(&l) {
                bad.push(format!("levels must be in 2..=12 (got {l})"));
            }
        }
        if let Some(f) = self.abs_floor {
            if !(f.is_finite() && f >= 0.0) {
                bad.push(format!("abs_floor must be nonnegative (got {f})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Argument(format!("budget: {}", bad.join("; "))))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The inner budget was not stable; the gap cannot be judged.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Derivative side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lhs {
    pub value: f64,
    /// Richardson error bound.
    pub fd_error: f64,
    /// Standard error over paths (zero on deterministic routes).
    pub std_error: f64,
}

/// Estimation side; `*_err` are standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rhs {
    pub mmse: f64,
    pub mmse_err: f64,
    pub correctional: f64,
    pub correctional_err: f64,
    pub total: f64,
    pub total_err: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub absolute: f64,
    pub relative: f64,
}

/// Everything needed to reproduce a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec_kind: String,
    pub spec_hash: String,
    pub seed: u64,
    pub n_paths: usize,
    pub inner_draws: usize,
    pub step: Option<f64>,
    pub h0: f64,
    pub levels: usize,
    pub fd_steps: Vec<f64>,
    pub one_sided: bool,
    pub route: Route,
}

impl Provenance {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        spec: &AnySpec,
        budget: &Budget,
        route: Route,
        step: &Option<f64>,
        fd_steps: Vec<f64>,
        one_sided: bool,
        h0: f64,
        levels: usize,
    ) -> Self {
        let mc = route == Route::MonteCarlo;
        Self {
            spec_kind: spec.kind().into(),
            spec_hash: spec.fingerprint(),
            seed: budget.seed,
            n_paths: if mc { budget.n_paths } else { 0 },
            inner_draws: if mc { budget.inner_draws } else { 0 },
            step: *step,
            h0,
            levels,
            fd_steps,
            one_sided,
            route,
        }
    }
}

pub const CSV_HEADER: &str =
    "identity_id,param,lhs,lhs_err,rhs_mmse,rhs_corr,rhs_total,rhs_err,gap,tol,verdict,seed";

/// One checked identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity_id: IdentityId,
    /// Name of the parameter the identity differentiates in.
    pub parameter: String,
    pub param: f64,
    pub route: Route,
    pub lhs: Lhs,
    pub rhs: Rhs,
    pub gap: Gap,
    /// `fd_error + 3 lhs.std_error + 3 rhs.total_err + floor`.
    pub tolerance: f64,
    pub floor: f64,
    pub verdict: Verdict,
    pub flags: Vec<String>,
    pub diagnostics: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

impl IdentityReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        identity_id: IdentityId,
        parameter: &str,
        param: f64,
        route: Route,
        lhs: Lhs,
        rhs: Rhs,
        floor: f64,
        unstable: bool,
        mut flags: Vec<String>,
        diagnostics: BTreeMap<String, f64>,
        provenance: Provenance,
    ) -> Self {
        let absolute = (lhs.value - rhs.total).abs();
        let denom = if rhs.total != 0.0 {
            rhs.total.abs()
        } else {
            lhs.value.abs()
        };
        let tolerance = lhs.fd_error + 3.0 * lhs.std_error + 3.0 * rhs.total_err + floor;
        let verdict = if unstable {
            flags.push("inner budget not stable under M -> 2M; increase inner_draws".into());
            Verdict::Inconclusive
        } else if absolute <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            identity_id,
            parameter: parameter.into(),
            param,
            route,
            lhs,
            rhs,
            gap: Gap {
                absolute,
                relative: if denom > 0.0 { absolute / denom } else { 0.0 },
            },
            tolerance,
            floor,
            verdict,
            flags,
            diagnostics,
            provenance,
        }
    }

    /// `lhs_err` and `rhs_err` are the three-sigma (plus Richardson)
    /// half-widths entering the tolerance.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.identity_id,
            self.param,
            self.lhs.value,
            self.lhs.fd_error + 3.0 * self.lhs.std_error,
            self.rhs.mmse,
            self.rhs.correctional,
            self.rhs.total,
            3.0 * self.rhs.total_err,
            self.gap.absolute,
            self.tolerance,
            self.verdict,
            self.provenance.seed
        )
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

impl From<MiEstimate> for Estimate {
    fn from(e: MiEstimate) -> Self {
        Estimate {
            value: e.value,
            std_error: e.std_error,
            samples: e.paths - e.excluded,
        }
    }
}

impl From<CtMiEstimate> for Estimate {
    fn from(e: CtMiEstimate) -> Self {
        Estimate {
            value: e.value,
            std_error: e.std_error,
            samples: e.paths - e.excluded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_names_round_trip() {
        for id in IdentityId::ALL {
            assert_eq!(id.name().parse::<IdentityId>().unwrap(), id);
            assert_eq!(
                serde_json::to_string(&id).unwrap(),
                format!("\"{}\"", id.name())
            );
        }
    }

    #[test]
    fn budget_rejects_unknown_keys() {
        assert!(serde_json::from_str::<Budget>(r#"{"n_paths": 10, "typo": 1}"#).is_err());
        let b: Budget = serde_json::from_str(r#"{"N": 100, "M": 50}"#).unwrap();
        assert_eq!((b.n_paths, b.inner_draws), (100, 50));
    }
}

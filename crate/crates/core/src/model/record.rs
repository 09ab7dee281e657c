//! Serializable spec records, as they appear in experiment config files.
//!
//! Drifts are referenced by registry name plus named parameters; see
//! [`crate::registry`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    AnySpec, CTSystemSpec, DeBruijnSpec, LinearFeedbackSpec, MessagePrior, ScalarChannelSpec,
    Solver, SystemSpec,
};
use crate::{registry, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemRecord {
    pub n: usize,
    pub drift: DriftRef,
    pub message_prior: MessagePrior,
    pub rho: f64,
}

impl SystemRecord {
    pub fn build(&self) -> Result<SystemSpec> {
        let drift = registry::drift(&self.drift.name, &self.drift.params)?;
        Ok(SystemSpec::new(
            self.n,
            drift,
            self.message_prior.clone(),
            self.rho,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtSystemRecord {
    pub horizon: f64,
    /// Defaults to `1e-3 · horizon`.
    #[serde(default)]
    pub step: Option<f64>,
    pub drift: DriftRef,
    pub message_prior: MessagePrior,
    pub rho: f64,
    #[serde(default)]
    pub solver: Solver,
}

impl CtSystemRecord {
    pub fn build(&self) -> Result<CTSystemSpec> {
        let drift = registry::ct_drift(&self.drift.name, &self.drift.params)?;
        let mut spec = CTSystemSpec::new(self.horizon, drift, self.message_prior.clone(), self.rho);
        if let Some(step) = self.step {
            spec.step = step;
        }
        spec.solver = self.solver;
        Ok(spec)
    }
}

/// Inline spec: exactly one of the fields is set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRecord {
    #[serde(default)]
    pub scalar_channel: Option<ScalarChannelSpec>,
    #[serde(default)]
    pub system: Option<SystemRecord>,
    #[serde(default)]
    pub linear_feedback: Option<LinearFeedbackSpec>,
    #[serde(default)]
    pub debruijn: Option<DeBruijnSpec>,
    #[serde(default)]
    pub ct_system: Option<CtSystemRecord>,
}

impl SpecRecord {
    pub fn build(&self) -> Result<AnySpec> {
        let mut built = Vec::new();
        if let Some(s) = &self.scalar_channel {
            built.push(AnySpec::Scalar(s.clone()));
        }
        if let Some(s) = &self.system {
            built.push(AnySpec::System(s.build()?));
        }
        if let Some(s) = &self.linear_feedback {
            built.push(AnySpec::Linear(s.clone()));
        }
        if let Some(s) = &self.debruijn {
            built.push(AnySpec::DeBruijn(s.clone()));
        }
        if let Some(s) = &self.ct_system {
            built.push(AnySpec::Ct(s.build()?));
        }
        match built.len() {
            1 => Ok(built.pop().expect("one spec")),
            0 => Err(Error::Argument("spec: no spec kind given".into())),
            k => Err(Error::Argument(format!(
                "spec: {k} spec kinds given, expected one"
            ))),
        }
    }
}

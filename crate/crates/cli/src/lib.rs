//! Config-driven experiment runner.
//!
//! An experiment names one or more identities, a spec (a builtin or an
//! inline record), a budget and a seed, and optionally sweeps one spec
//! parameter over a grid. Each check becomes one report; the run writes
//! all reports to `<out>.json` and one CSV row per report to `<out>.csv`.
//!
//! Check `k` of the experiment runs with seed `derive_seed(seed, k)`; all
//! points of a sweep share it, so neighbouring points use common random
//! numbers. Inside a check, path `p` draws from substream `p`.

use std::fs;
use std::path::{Path, PathBuf};

use immse::identities::{
    check, check_debruijn_remark, Budget, IdentityId, IdentityReport, Verdict, CSV_HEADER,
};
use immse::model::record::SpecRecord;
use immse::model::{DeBruijnSpec, LinearFeedbackSpec, ScalarChannelSpec, Validate};
use immse::rng::derive_seed;
use immse::{builtins, AnySpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exit status for malformed or invalid configs.
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("check failed: {0}")]
    Check(#[from] immse::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Check(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// `rho`, `snr`, `t` or `step`.
    pub param: String,
    pub grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub identity: Option<IdentityId>,
    #[serde(default)]
    pub identities: Vec<IdentityId>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

/// A named builtin or exactly one inline spec kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub scalar_channel: Option<ScalarChannelSpec>,
    #[serde(default)]
    pub system: Option<immse::model::record::SystemRecord>,
    #[serde(default)]
    pub linear_feedback: Option<LinearFeedbackSpec>,
    #[serde(default)]
    pub debruijn: Option<DeBruijnSpec>,
    #[serde(default)]
    pub ct_system: Option<immse::model::record::CtSystemRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub spec: SpecConfig,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("immse-report")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn identities(&self) -> Result<Vec<IdentityId>, CliError> {
        let mut ids = self.experiment.identities.clone();
        if let Some(id) = self.experiment.identity {
            ids.insert(0, id);
        }
        if ids.is_empty() {
            return Err(CliError::Invalid(
                "experiment: set `identity` or `identities`".into(),
            ));
        }
        Ok(ids)
    }

    /// Resolves the spec and checks every invariant the runner relies on.
    pub fn resolve_spec(&self) -> Result<AnySpec, CliError> {
        let s = &self.spec;
        let spec = match &s.builtin {
            Some(name) => {
                let inline = s.scalar_channel.is_some()
                    || s.system.is_some()
                    || s.linear_feedback.is_some()
                    || s.debruijn.is_some()
                    || s.ct_system.is_some();
                if inline {
                    return Err(CliError::Invalid(
                        "spec: give either `builtin` or an inline spec, not both".into(),
                    ));
                }
                builtins::by_name(name).ok_or_else(|| {
                    let known: Vec<&str> = builtins::NAMES.iter().map(|(n, _)| *n).collect();
                    CliError::Invalid(format!(
                        "spec.builtin: unknown builtin `{name}` (known: {})",
                        known.join(", ")
                    ))
                })?
            }
            None => SpecRecord {
                scalar_channel: s.scalar_channel.clone(),
                system: s.system.clone(),
                linear_feedback: s.linear_feedback.clone(),
                debruijn: s.debruijn.clone(),
                ct_system: s.ct_system.clone(),
            }
            .build()
            .map_err(|e| CliError::Invalid(e.to_string()))?,
        };
        let report = spec.validate();
        if !report.is_ok() {
            return Err(CliError::Invalid(format!("spec.{}: {report}", spec.kind())));
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(Vec<IdentityId>, Vec<(Option<f64>, AnySpec)>), CliError> {
        let ids = self.identities()?;
        let base = self.resolve_spec()?;
        self.budget
            .check()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let points = match &self.experiment.sweep {
            None => vec![(None, base)],
            Some(sw) => {
                if sw.grid.is_empty() {
                    return Err(CliError::Invalid(
                        "experiment.sweep.grid: must not be empty".into(),
                    ));
                }
                if sw.grid.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(CliError::Invalid(
                        "experiment.sweep.grid: must be strictly increasing".into(),
                    ));
                }
                let mut pts = Vec::with_capacity(sw.grid.len());
                for &v in &sw.grid {
                    let spec = base
                        .with_param(&sw.param, v)
                        .map_err(|e| CliError::Invalid(format!("experiment.sweep.param: {e}")))?;
                    let report = spec.validate();
                    if !report.is_ok() {
                        return Err(CliError::Invalid(format!(
                            "experiment.sweep: {} = {v}: {report}",
                            sw.param
                        )));
                    }
                    pts.push((Some(v), spec));
                }
                pts
            }
        };
        Ok((ids, points))
    }
}

/// Reports of a finished run and the process exit status they imply.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub reports: Vec<IdentityReport>,
}

impl RunOutcome {
    /// 0 if every check passed, 2 if any was inconclusive (and none
    /// failed), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.reports.iter().any(|r| r.verdict == Verdict::Fail) {
            1
        } else if self
            .reports
            .iter()
            .any(|r| r.verdict == Verdict::Inconclusive)
        {
            2
        } else {
            0
        }
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

/// One-line human summary of a report.
pub fn summary_line(r: &IdentityReport) -> String {
    format!(
        "{:<16} {}={:<8} {:<12} lhs={:.6e} rhs={:.6e} gap={:.3e} tol={:.3e} [{}]",
        r.identity_id.name(),
        r.parameter,
        r.param,
        r.verdict.to_string(),
        r.lhs.value,
        r.rhs.total,
        r.gap.absolute,
        r.tolerance,
        serde_json::to_value(r.route)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default()
    )
}

/// Runs every check of the experiment. `on_report` sees each report as
/// soon as it is ready.
pub fn run(
    config: &ExperimentConfig,
    mut on_report: impl FnMut(&IdentityReport),
) -> Result<RunOutcome, CliError> {
    let (ids, points) = config.validate()?;
    let mut reports = Vec::with_capacity(ids.len() * points.len());
    for (k, id) in ids.iter().enumerate() {
        let budget = Budget {
            seed: derive_seed(config.seed, k as u64),
            ..config.budget.clone()
        };
        for (_, spec) in &points {
            let report = match (id, spec) {
                (IdentityId::DebruijnRemark, AnySpec::DeBruijn(s)) => {
                    check_debruijn_remark(s, &budget)
                }
                _ => check(*id, spec, &budget),
            }
            .map_err(|e| match e {
                immse::Error::Mismatch { .. } | immse::Error::Invalid(_) => {
                    CliError::Invalid(e.to_string())
                }
                other => CliError::Check(other),
            })?;
            on_report(&report);
            reports.push(report);
        }
    }
    Ok(RunOutcome {
        seed: config.seed,
        reports,
    })
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<prefix>.json` and `<prefix>.csv`, creating parent directories.
pub fn write_outputs(outcome: &RunOutcome, prefix: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let json = with_suffix(prefix, "json");
    let csv = with_suffix(prefix, "csv");
    for (path, body) in [(&json, outcome.json()), (&csv, outcome.csv())] {
        fs::write(path, body).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok((json, csv))
}

/// Text printed by `--list-builtins`.
pub fn builtin_listing() -> String {
    let mut out = String::from("builtin specs:\n");
    for (name, desc) in builtins::NAMES {
        out.push_str(&format!("  {name:<22} {desc}\n"));
    }
    out.push_str("discrete-time drifts (spec.system.drift.name):\n");
    for (name, desc) in immse::registry::DRIFTS {
        out.push_str(&format!("  {name:<22} {desc}\n"));
    }
    out.push_str("continuous-time drifts (spec.ct_system.drift.name):\n");
    for (name, desc) in immse::registry::CT_DRIFTS {
        out.push_str(&format!("  {name:<22} {desc}\n"));
    }
    out.push_str("identities:\n");
    for id in IdentityId::ALL {
        out.push_str(&format!("  {id}\n"));
    }
    out
}

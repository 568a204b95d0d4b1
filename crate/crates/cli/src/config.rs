//! Experiment configuration: one JSON document per run, echoed verbatim
//! (after canonicalization) into every report for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use demethod::drift_system::{Domain, DriftSystem};
use demethod::envelope::TheoremParams;
use demethod::process::{BuiltinProcess, MatchingPolicy};
use demethod::systems;
use demethod::verifier::AuditMode;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freedman: Option<FreedmanConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<LambdaMinConfig>,
    /// Initial state for `envelope` when no process is configured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_side: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// ODE integration step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// `always`, `inside-envelope`, or `critical-window`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Built-in system name (`greedy-matching`, `linear-test`,
    /// `coupled-cooperative-2d`, `noncooperative-2d`, `zero-drift`).
    pub name: String,
    /// Replace the built-in domain box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    /// Override the declared Lipschitz constant (use with `domain`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    /// `greedy-matching`, `online-matching`, or `bounded-walk`.
    pub name: String,
    pub n: u64,
    /// Horizon in units of `n` (edge density `c` for the graph processes).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Alias for `c` that reads better for non-graph processes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
}

/// Theorem parameters; `dim`, `lipschitz`, and `drift_bound` come from the
/// configured system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub n: u64,
    pub beta: f64,
    pub second_moment: f64,
    pub lambda: f64,
    pub delta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub y0: Vec<f64>,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub z0: Vec<f64>,
    pub y0: Vec<f64>,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved_delta: Option<f64>,
    /// Constant slack subtracted from the z-drift.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allow_noncooperative: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreedmanConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub second_moment: f64,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tails: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaMinConfig {
    /// Target clamped failure probability.
    pub target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))
    }

    /// Canonical echo of the parsed configuration.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn system(&self) -> Result<DriftSystem, CliError> {
        let cfg = self
            .system
            .as_ref()
            .ok_or_else(|| CliError::config("missing 'system' section"))?;
        let mut system = systems::by_name(&cfg.name).map_err(CliError::config)?;
        if let Some(d) = &cfg.domain {
            let domain = Domain::new(d.lower.clone(), d.upper.clone())
                .map_err(|e| CliError::config(format!("bad domain: {e}")))?;
            system = system
                .with_domain(domain)
                .map_err(|e| CliError::config(format!("bad domain: {e}")))?;
        }
        if cfg.lipschitz.is_some() || cfg.bound.is_some() {
            let lipschitz = cfg.lipschitz.unwrap_or(system.lipschitz());
            let bound = cfg.bound.unwrap_or(system.bound());
            system = system.with_constants(lipschitz, bound);
        }
        Ok(system)
    }

    pub fn process(&self) -> Result<BuiltinProcess, CliError> {
        let cfg = self
            .process
            .as_ref()
            .ok_or_else(|| CliError::config("missing 'process' section"))?;
        let scale = cfg
            .c
            .or(cfg.sigma)
            .ok_or_else(|| CliError::config("process needs 'c' or 'sigma'"))?;
        let policy = match &cfg.policy {
            None => None,
            Some(name) => Some(MatchingPolicy::by_name(name).ok_or_else(|| {
                CliError::config(format!(
                    "unknown policy '{name}'; known: always-accept, always-reject, parity-thinned"
                ))
            })?),
        };
        if cfg.name == "online-matching" && policy.is_none() {
            return Err(CliError::config("online-matching needs a 'policy'"));
        }
        BuiltinProcess::by_name(&cfg.name, cfg.n, scale, policy, cfg.initial.unwrap_or(0.0))
            .ok_or_else(|| {
                CliError::config(format!(
                    "unknown process '{}'; known: greedy-matching, online-matching, bounded-walk",
                    cfg.name
                ))
            })
    }

    pub fn theorem_params(&self, system: &DriftSystem) -> Result<TheoremParams, CliError> {
        let cfg = self
            .params
            .as_ref()
            .ok_or_else(|| CliError::config("missing 'params' section"))?;
        Ok(TheoremParams {
            n: cfg.n,
            dim: system.dim(),
            beta: cfg.beta,
            second_moment: cfg.second_moment,
            lambda: cfg.lambda,
            delta: cfg.delta,
            sigma: cfg.sigma,
            lipschitz: system.lipschitz(),
            drift_bound: system.bound(),
        })
    }

    pub fn audit_mode(&self) -> Result<AuditMode, CliError> {
        match self.audit_mode.as_deref() {
            None | Some("always") => Ok(AuditMode::Always),
            Some("inside-envelope") => Ok(AuditMode::InsideEnvelope),
            Some("critical-window") => Ok(AuditMode::CriticalWindow),
            Some(other) => Err(CliError::config(format!(
                "unknown audit_mode '{other}'; known: always, inside-envelope, critical-window"
            ))),
        }
    }
}

//! Monte Carlo verification of the envelope theorems and numerical checking
//! of the deterministic comparison theorems.
//!
//! A verification run integrates the limit system once, builds the envelope,
//! replays `T` independent seeded traces, and counts the trials in which any
//! variable exits the envelope at any step up to `min{I, σn}`. Each trial is
//! also audited post hoc against the hypotheses the theorem assumes
//! (one-step bound, conditional second moment, trend inequality, domain
//! membership, initial condition): a trial that breaks the hypotheses cannot
//! count against the theorem, so audit failures and envelope violations are
//! reported separately. The verdict compares the empirical violation rate,
//! less a one-sided 99% Wilson half-width, against the theorem's clamped
//! probability bound plus the caller-supplied stopping slack `γ`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::drift_system::{CooperativityReport, DriftSystem};
use crate::envelope::{
    admissible_sigma, build_envelope, failure_probability, validate_params, Envelope,
    ParamValidation, ProbabilityBound, Side, TheoremParams,
};
use crate::martingale::ProcessTrace;
use crate::ode::{integrate, OdeError, Trajectory};
use crate::process::{run_trace, Process};

/// One-sided z-score for the 99% Wilson interval.
const WILSON_Z_99: f64 = 2.326_347_874_040_841;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("parameters fail validation: {0:?}")]
    InvalidParams(ParamValidation),
    #[error("system is not cooperative (checked over {} samples)", report.samples_used)]
    NotCooperative { report: CooperativityReport },
    #[error("solution left the domain; admissible horizon is {admissible}")]
    DomainExit { admissible: f64 },
    #[error("sigma {requested} exceeds the admissible two-sided horizon {admissible}")]
    SigmaInadmissible { requested: f64, admissible: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("z0[{variable}] = {z0} exceeds y0 + delta = {allowed}")]
    InitialGap {
        variable: usize,
        z0: f64,
        allowed: f64,
    },
    #[error("achieved perturbation {achieved} exceeds delta {delta}")]
    PerturbationTooLarge { achieved: f64, delta: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Envelope(#[from] crate::envelope::EnvelopeError),
}

/// Which steps the hypothesis audit covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditMode {
    /// Audit every executed step.
    Always,
    /// Audit only steps where every variable is still inside the envelope
    /// (the corollary weakening: conditions need only hold there).
    InsideEnvelope,
    /// Inside the envelope, and the trend check additionally requires the
    /// variable to sit at or above its center `n·y_j` — the critical strip
    /// where the one-sided argument actually consumes the hypothesis.
    CriticalWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    Initial,
    Boundedness,
    SecondMoment,
    Trend,
    DomainMembership,
}

/// First hypothesis failure seen in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditFailure {
    pub kind: AuditKind,
    pub step: usize,
    pub variable: usize,
    pub observed: f64,
    pub allowed: f64,
}

/// Step-level outcome of auditing one trace against Conditions 1–3.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConditionAudit {
    pub steps_checked: usize,
    /// Steps excluded by the audit mode's envelope gate.
    pub steps_skipped: usize,
    pub initial_failures: usize,
    pub boundedness_failures: usize,
    pub second_moment_failures: usize,
    pub trend_failures: usize,
    pub domain_failures: usize,
    /// False when the trace carries no exact drifts; the trend audit is
    /// then skipped and the run is only observational.
    pub trend_audited: bool,
    pub second_moment_audited: bool,
    pub first_failure: Option<AuditFailure>,
}

impl ConditionAudit {
    pub fn total_failures(&self) -> usize {
        self.initial_failures
            + self.boundedness_failures
            + self.second_moment_failures
            + self.trend_failures
            + self.domain_failures
    }

    pub fn is_clean(&self) -> bool {
        self.total_failures() == 0
    }

    fn record(&mut self, kind: AuditKind, step: usize, variable: usize, observed: f64, allowed: f64) {
        match kind {
            AuditKind::Initial => self.initial_failures += 1,
            AuditKind::Boundedness => self.boundedness_failures += 1,
            AuditKind::SecondMoment => self.second_moment_failures += 1,
            AuditKind::Trend => self.trend_failures += 1,
            AuditKind::DomainMembership => self.domain_failures += 1,
        }
        if self.first_failure.is_none() {
            self.first_failure = Some(AuditFailure {
                kind,
                step,
                variable,
                observed,
                allowed,
            });
        }
    }
}

/// Audit a trace against the theorem hypotheses.
///
/// Covers each executed step `i < min{I, σn}`: boundedness
/// `|ΔZ_j(i)| <= β`, conditional second moment `<= b` (when the process
/// supplies exact formulas), domain membership of `(i/n, Z(i)/n)`, and the
/// trend inequality — `drift <= f + δ` for the upper side,
/// `|drift - f| <= δ` for the two-sided method. The initial condition is
/// checked once at step 0.
pub fn audit_conditions(
    trace: &ProcessTrace,
    system: &DriftSystem,
    params: &TheoremParams,
    traj: &Trajectory,
    mode: AuditMode,
    side: Side,
) -> ConditionAudit {
    let a = trace.dim();
    let scale = params.n as f64;
    let mut audit = ConditionAudit {
        trend_audited: trace.drifts.is_some(),
        second_moment_audited: trace.second_moments.is_some(),
        ..ConditionAudit::default()
    };

    // Condition 3 at step 0.
    let y0 = traj.eval(0.0).expect("trajectory starts at 0");
    for (j, values) in trace.values.iter().enumerate() {
        let z0 = values[0];
        let center = scale * y0[j];
        let ok = match side {
            Side::TwoSided => (z0 - center).abs() <= params.lambda,
            _ => z0 <= center + params.lambda,
        };
        if !ok {
            audit.record(AuditKind::Initial, 0, j, z0, center + params.lambda);
        }
    }

    let recorded = trace.recorded_steps();
    let steps = recorded.min(params.steps());
    for i in 0..steps {
        let t = i as f64 / scale;
        let y = traj.eval(t).expect("trajectory covers the step grid");
        let width = 3.0 * params.lambda * (2.0 * params.lipschitz * t).exp();

        if mode != AuditMode::Always {
            let inside = (0..a).all(|j| {
                let dev = trace.values[j][i] - scale * y[j];
                match side {
                    Side::TwoSided => dev.abs() <= width,
                    _ => dev <= width,
                }
            });
            if !inside {
                audit.steps_skipped += 1;
                continue;
            }
        }
        audit.steps_checked += 1;

        for j in 0..a {
            let dz = trace.values[j][i + 1] - trace.values[j][i];
            if dz.abs() > params.beta {
                audit.record(AuditKind::Boundedness, i, j, dz.abs(), params.beta);
            }
        }
        if let Some(moments) = &trace.second_moments {
            for (j, m) in moments.iter().enumerate() {
                if m[i] > params.second_moment {
                    audit.record(AuditKind::SecondMoment, i, j, m[i], params.second_moment);
                }
            }
        }
        if let Some(drifts) = &trace.drifts {
            let state: Vec<f64> = (0..a).map(|j| trace.values[j][i] / scale).collect();
            match system.evaluate(t, &state) {
                Err(_) => {
                    audit.record(AuditKind::DomainMembership, i, 0, f64::NAN, f64::NAN);
                }
                Ok(f) => {
                    for j in 0..a {
                        if mode == AuditMode::CriticalWindow
                            && trace.values[j][i] < scale * y[j]
                        {
                            continue;
                        }
                        let drift = drifts[j][i];
                        let ok = match side {
                            Side::TwoSided => (drift - f[j]).abs() <= params.delta,
                            _ => drift <= f[j] + params.delta,
                        };
                        if !ok {
                            audit.record(AuditKind::Trend, i, j, drift, f[j] + params.delta);
                        }
                    }
                }
            }
        }
    }
    audit
}

/// Knobs for a verification run.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// ODE integration step.
    pub h: f64,
    /// Stopping-event failure probability added to the theoretical bound
    /// (supplied by the caller's own analysis, not estimated here).
    pub gamma: f64,
    pub audit_mode: AuditMode,
    /// Budget for the cooperativity spot-check when the system does not
    /// declare cooperativity analytically.
    pub coop_samples: usize,
    pub coop_seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            gamma: 0.0,
            audit_mode: AuditMode::Always,
            coop_samples: 2000,
            coop_seed: 0,
        }
    }
}

/// Aggregated audit counts across all trials of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditSummary {
    pub initial_failures: usize,
    pub boundedness_failures: usize,
    pub second_moment_failures: usize,
    pub trend_failures: usize,
    pub domain_failures: usize,
    pub steps_checked: usize,
    pub steps_skipped: usize,
    /// Earliest offending trial and its first failure, if any.
    pub first_failure_trial: Option<usize>,
    pub first_failure: Option<AuditFailure>,
}

/// Outcome of a Monte Carlo verification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub side: Side,
    pub trials: usize,
    /// Trials whose hypothesis audit came back clean; only these enter the
    /// bound comparison.
    pub audited_clean_trials: usize,
    /// Trials with at least one hypothesis-audit failure, excluded from the
    /// bound comparison.
    pub audit_failed_trials: usize,
    /// True when the process supplies no exact drifts, so the trend
    /// hypothesis could not be audited and the run is observational.
    pub hypotheses_unaudited: bool,
    /// Audit-clean trials in which some variable exited the envelope.
    pub violations: usize,
    pub empirical_rate: f64,
    /// One-sided 99% Wilson half-width at the clean-trial count.
    pub ci_half_width: f64,
    pub theoretical: ProbabilityBound,
    pub gamma: f64,
    /// `empirical_rate - ci_half_width <= theoretical.clamped + gamma`.
    pub verdict_pass: bool,
    /// Largest signed envelope margin seen in any clean trial (negative
    /// means strictly inside).
    pub worst_margin: f64,
    pub worst_margin_step: usize,
    /// Per-step worst margin across clean trials; `null` where no trial
    /// reached the step.
    pub per_step_worst_margin: Vec<Option<f64>>,
    pub audit: AuditSummary,
    pub params: TheoremParams,
    pub base_seed: u64,
    /// Recorded for two-sided runs.
    pub admissible_sigma: Option<f64>,
}

/// Verify the one-sided (upper-envelope) method on a process.
pub fn verify_one_sided<P: Process + Sync>(
    process: &P,
    system: &DriftSystem,
    params: &TheoremParams,
    trials: usize,
    base_seed: u64,
    opts: &VerifyOptions,
) -> Result<VerificationReport, VerifyError> {
    run_verification(process, system, params, trials, base_seed, opts, Side::Upper)
}

/// Verify the two-sided method; additionally requires the trajectory to
/// keep ℓ∞-clearance `g(t)/n` from the domain boundary up to `σ`.
pub fn verify_two_sided<P: Process + Sync>(
    process: &P,
    system: &DriftSystem,
    params: &TheoremParams,
    trials: usize,
    base_seed: u64,
    opts: &VerifyOptions,
) -> Result<VerificationReport, VerifyError> {
    run_verification(
        process,
        system,
        params,
        trials,
        base_seed,
        opts,
        Side::TwoSided,
    )
}

struct TrialOutcome {
    trial: usize,
    violated: bool,
    audit: ConditionAudit,
    /// Signed margin per step (index up to the trial's recorded steps).
    margins: Vec<f64>,
}

fn run_verification<P: Process + Sync>(
    process: &P,
    system: &DriftSystem,
    params: &TheoremParams,
    trials: usize,
    base_seed: u64,
    opts: &VerifyOptions,
    side: Side,
) -> Result<VerificationReport, VerifyError> {
    if process.dim() != params.dim || system.dim() != params.dim {
        return Err(VerifyError::ShapeMismatch(format!(
            "process dim {}, system dim {}, params dim {}",
            process.dim(),
            system.dim(),
            params.dim
        )));
    }
    if process.n() != params.n || process.horizon() != params.steps() {
        return Err(VerifyError::ShapeMismatch(format!(
            "process n={} horizon={}, params n={} steps={}",
            process.n(),
            process.horizon(),
            params.n,
            params.steps()
        )));
    }
    let validation = validate_params(params);
    if !validation.is_ok() {
        return Err(VerifyError::InvalidParams(validation));
    }
    match system.declared_cooperative() {
        Some(true) => {}
        Some(false) => {
            return Err(VerifyError::NotCooperative {
                report: CooperativityReport {
                    cooperative: false,
                    witness: None,
                    samples_used: 0,
                },
            })
        }
        None => {
            let report = system.check_cooperative(opts.coop_samples, opts.coop_seed);
            if !report.cooperative {
                return Err(VerifyError::NotCooperative { report });
            }
        }
    }

    let traj = match integrate(system, &process.limit_initial(), params.sigma, opts.h) {
        Ok(t) => t,
        Err(OdeError::LeftDomain { partial, .. }) => {
            return Err(VerifyError::DomainExit {
                admissible: partial.end(),
            })
        }
        Err(e) => return Err(e.into()),
    };

    let mut admissible = None;
    if side == Side::TwoSided {
        let adm = admissible_sigma(system, &traj, params)?;
        if adm < params.sigma {
            return Err(VerifyError::SigmaInadmissible {
                requested: params.sigma,
                admissible: adm,
            });
        }
        admissible = Some(adm);
    }

    let envelope = build_envelope(&traj, params, side)?;
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trace = run_trace(process, base_seed.wrapping_add(trial as u64));
            let audit = audit_conditions(&trace, system, params, &traj, opts.audit_mode, side);
            let margins = envelope_margins(&trace, &envelope);
            TrialOutcome {
                trial,
                violated: margins.iter().any(|&m| m > 0.0),
                audit,
                margins,
            }
        })
        .collect();

    let steps = envelope.steps();
    let mut per_step_worst: Vec<Option<f64>> = vec![None; steps + 1];
    let mut violations = 0usize;
    let mut audit_failed = 0usize;
    let mut summary = AuditSummary::default();
    let mut hypotheses_unaudited = false;
    for outcome in &outcomes {
        summary.initial_failures += outcome.audit.initial_failures;
        summary.boundedness_failures += outcome.audit.boundedness_failures;
        summary.second_moment_failures += outcome.audit.second_moment_failures;
        summary.trend_failures += outcome.audit.trend_failures;
        summary.domain_failures += outcome.audit.domain_failures;
        summary.steps_checked += outcome.audit.steps_checked;
        summary.steps_skipped += outcome.audit.steps_skipped;
        hypotheses_unaudited |= !outcome.audit.trend_audited;
        if !outcome.audit.is_clean() {
            audit_failed += 1;
            if summary.first_failure_trial.is_none() {
                summary.first_failure_trial = Some(outcome.trial);
                summary.first_failure = outcome.audit.first_failure;
            }
            continue;
        }
        if outcome.violated {
            violations += 1;
        }
        for (i, &m) in outcome.margins.iter().enumerate() {
            per_step_worst[i] = Some(match per_step_worst[i] {
                Some(cur) => cur.max(m),
                None => m,
            });
        }
    }

    let clean = trials - audit_failed;
    let (worst_margin, worst_margin_step) = per_step_worst
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|v| (v, i)))
        .fold((f64::NEG_INFINITY, 0), |acc, (v, i)| {
            if v > acc.0 {
                (v, i)
            } else {
                acc
            }
        });
    let rate = if clean == 0 {
        0.0
    } else {
        violations as f64 / clean as f64
    };
    let ci = wilson_half_width(rate, clean.max(1));
    let theoretical = failure_probability(params);
    let verdict_pass = rate - ci <= theoretical.clamped + opts.gamma;

    Ok(VerificationReport {
        side,
        trials,
        audited_clean_trials: clean,
        audit_failed_trials: audit_failed,
        hypotheses_unaudited,
        violations,
        empirical_rate: rate,
        ci_half_width: ci,
        theoretical,
        gamma: opts.gamma,
        verdict_pass,
        worst_margin,
        worst_margin_step,
        per_step_worst_margin: per_step_worst,
        audit: summary,
        params: params.clone(),
        base_seed,
        admissible_sigma: admissible,
    })
}

/// Signed containment margin per step: positive means the trace exited the
/// envelope at that step.
fn envelope_margins(trace: &ProcessTrace, envelope: &Envelope) -> Vec<f64> {
    let steps = trace.recorded_steps().min(envelope.steps());
    let a = trace.dim();
    (0..=steps)
        .map(|i| {
            (0..a)
                .map(|j| {
                    let z = trace.values[j][i];
                    let mut m = f64::NEG_INFINITY;
                    if envelope.has_upper() {
                        m = m.max(z - envelope.upper(i, j));
                    }
                    if envelope.has_lower() {
                        m = m.max(envelope.lower(i, j) - z);
                    }
                    m
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Half-width of the one-sided 99% Wilson score interval.
fn wilson_half_width(rate: f64, n: usize) -> f64 {
    let z = WILSON_Z_99;
    let n = n as f64;
    let z2 = z * z;
    z * (rate * (1.0 - rate) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Settings for a deterministic comparison run.
#[derive(Clone)]
pub struct ComparisonOptions {
    pub sigma: f64,
    pub h: f64,
    /// Slack allowed by the hypothesis `z' <= f(t, z) + delta`,
    /// `z(0) <= y(0) + delta`.
    pub delta: f64,
    /// Perturbation actually applied to the z-drift; defaults to `delta`.
    pub achieved_delta: Option<f64>,
    /// Nonnegative schedule subtracted from the z-drift, e.g. a constant
    /// handicap. Defaults to zero.
    pub slack: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    pub tolerance: f64,
    /// Run even when the cooperativity check fails, to reproduce
    /// counterexamples; the report then records `cooperative: false`.
    pub allow_noncooperative: bool,
    pub coop_samples: usize,
    pub coop_seed: u64,
}

impl ComparisonOptions {
    pub fn new(sigma: f64, h: f64) -> Self {
        Self {
            sigma,
            h,
            delta: 0.0,
            achieved_delta: None,
            slack: None,
            tolerance: 1e-9,
            allow_noncooperative: false,
            coop_samples: 2000,
            coop_seed: 0,
        }
    }
}

/// Outcome of [`check_comparison`].
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `max_{grid, j} (z_j(t) - y_j(t))`.
    pub max_gap: f64,
    /// `max_{grid, j} (z_j(t) - y_j(t) - delta·e^{Lt})` — the excess over
    /// the permitted bound; equals `max_gap` when `delta = 0`.
    pub max_margin: f64,
    pub tolerance: f64,
    /// `max_margin <= tolerance`.
    pub holds: bool,
    pub cooperative: bool,
    pub grid_points: usize,
    /// Per-node worst gap `max_j (z_j - y_j)` along the shared grid.
    pub per_node_gap: Vec<f64>,
}

/// Integrate `y' = f(t, y)` from `y0` and the perturbed
/// `z' = f(t, z) - s(t) + δ'` from `z0`, then check the comparison
/// conclusion `z_j(t) <= y_j(t) + delta·e^{Lt} + tol` on the grid. With
/// `delta = 0` and `z0 <= y0` this is the plain conclusion `z <= y`.
///
/// Cooperativity is required (checked or declared); a non-cooperative
/// system is refused unless `allow_noncooperative` is set, in which case
/// the run proceeds so counterexamples can be exhibited.
pub fn check_comparison(
    system: &DriftSystem,
    z0: &[f64],
    y0: &[f64],
    opts: &ComparisonOptions,
) -> Result<ComparisonReport, VerifyError> {
    let a = system.dim();
    if z0.len() != a || y0.len() != a {
        return Err(VerifyError::ShapeMismatch(format!(
            "system dim {a}, z0 len {}, y0 len {}",
            z0.len(),
            y0.len()
        )));
    }
    for (j, (&z, &y)) in z0.iter().zip(y0).enumerate() {
        if z > y + opts.delta {
            return Err(VerifyError::InitialGap {
                variable: j,
                z0: z,
                allowed: y + opts.delta,
            });
        }
    }
    let achieved = opts.achieved_delta.unwrap_or(opts.delta);
    if achieved > opts.delta {
        return Err(VerifyError::PerturbationTooLarge {
            achieved,
            delta: opts.delta,
        });
    }
    let cooperative = match system.declared_cooperative() {
        Some(c) => c,
        None => {
            system
                .check_cooperative(opts.coop_samples, opts.coop_seed)
                .cooperative
        }
    };
    if !cooperative && !opts.allow_noncooperative {
        return Err(VerifyError::NotCooperative {
            report: system.check_cooperative(opts.coop_samples, opts.coop_seed),
        });
    }

    let y_traj = integrate(system, y0, opts.sigma, opts.h)?;
    let slack = opts.slack.clone();
    let z_system = system.shifted(Arc::new(move |t| {
        achieved - slack.as_ref().map_or(0.0, |s| s(t))
    }));
    let z_traj = integrate(&z_system, z0, opts.sigma, opts.h)?;

    let lipschitz = system.lipschitz();
    let mut max_gap = f64::NEG_INFINITY;
    let mut max_margin = f64::NEG_INFINITY;
    let mut per_node_gap = Vec::with_capacity(y_traj.grid().len());
    for (k, &t) in y_traj.grid().iter().enumerate() {
        let y = &y_traj.values()[k];
        let z = &z_traj.values()[k];
        let gap = (0..a)
            .map(|j| z[j] - y[j])
            .fold(f64::NEG_INFINITY, f64::max);
        per_node_gap.push(gap);
        max_gap = max_gap.max(gap);
        max_margin = max_margin.max(gap - opts.delta * (lipschitz * t).exp());
    }
    Ok(ComparisonReport {
        max_gap,
        max_margin,
        tolerance: opts.tolerance,
        holds: max_margin <= opts.tolerance,
        cooperative,
        grid_points: y_traj.grid().len(),
        per_node_gap,
    })
}

//! Deviation envelopes and failure-probability bounds.
//!
//! Around a limiting solution `y` the method asserts containment bands of
//! the form `n·y_j(i/n) ± g(i/n)` with width `g(t) = 3λ e^{2Lt}`, holding
//! with probability at least `1 - 2a·exp(-λ² / (2(bσn + 2βλ)))` provided the
//! parameters satisfy `λ >= max{β + B, (L + BL + δn) / (3L)}`. This module
//! validates the parameter constraint, evaluates the width and probability
//! expressions, builds per-step envelopes on the integer grid
//! `i = 0..⌊σn⌋`, and computes the largest horizon over which a two-sided
//! envelope stays clear of the domain boundary.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drift_system::DriftSystem;
use crate::ode::{fmt_f64, Trajectory};

/// Parameters of the deviation theorem for one experiment.
///
/// `lipschitz` and `drift_bound` mirror the drift system's declared `L` and
/// `B`; `beta` bounds one-step changes, `second_moment` bounds
/// `E[(ΔZ_j)² | history]`, `delta` is the trend slack, and `sigma` the time
/// horizon (so the process runs for `⌊sigma·n⌋` steps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    pub n: u64,
    pub dim: usize,
    pub beta: f64,
    pub second_moment: f64,
    pub lambda: f64,
    pub delta: f64,
    pub sigma: f64,
    pub lipschitz: f64,
    pub drift_bound: f64,
}

impl TheoremParams {
    /// Number of process steps `m = ⌊sigma·n⌋`.
    pub fn steps(&self) -> usize {
        (self.sigma * self.n as f64).floor() as usize
    }
}

/// Outcome of [`validate_params`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ParamValidation {
    Ok,
    /// λ below the admissible minimum; the minimum is reported.
    LambdaTooSmall { minimal_lambda: f64 },
    /// `L = 0` with `δ > 0`: the constraint `λ >= (L + BL + δn)/(3L)`
    /// degenerates and no finite λ qualifies.
    ZeroLipschitzPositiveSlack,
    /// A field is non-finite or out of its legal range.
    BadField { field: &'static str },
}

impl ParamValidation {
    pub fn is_ok(&self) -> bool {
        matches!(self, ParamValidation::Ok)
    }

    /// Minimal admissible λ, when one exists.
    pub fn minimal_lambda(&self) -> Option<f64> {
        match self {
            ParamValidation::LambdaTooSmall { minimal_lambda } => Some(*minimal_lambda),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("parameters fail validation: {0:?}")]
    InvalidParams(ParamValidation),
    #[error("t = {t} outside [0, {sigma}]")]
    OutOfRange { t: f64, sigma: f64 },
    #[error("trajectory spans [{start}, {end}] but [0, {sigma}] is required")]
    TrajectoryNotCovering { start: f64, end: f64, sigma: f64 },
    #[error("trajectory has {traj_dim} variables, params declare {param_dim}")]
    DimensionMismatch { traj_dim: usize, param_dim: usize },
}

/// Check the λ constraint `λ >= max{β + B, (L + BL + δn) / (3L)}`.
///
/// With `L = 0` the second branch vanishes when `δ = 0` (the width is then
/// constant and the comparison argument loses its `Lg(t)` terms); `δ > 0`
/// with `L = 0` leaves no admissible λ and is reported as such.
pub fn validate_params(p: &TheoremParams) -> ParamValidation {
    for (field, value) in [
        ("beta", p.beta),
        ("second_moment", p.second_moment),
        ("delta", p.delta),
        ("lipschitz", p.lipschitz),
        ("drift_bound", p.drift_bound),
    ] {
        if !value.is_finite() || value < 0.0 {
            return ParamValidation::BadField { field };
        }
    }
    if !p.lambda.is_finite() || p.lambda <= 0.0 {
        return ParamValidation::BadField { field: "lambda" };
    }
    if !p.sigma.is_finite() || p.sigma <= 0.0 {
        return ParamValidation::BadField { field: "sigma" };
    }
    if p.n == 0 {
        return ParamValidation::BadField { field: "n" };
    }
    if p.dim == 0 {
        return ParamValidation::BadField { field: "dim" };
    }
    match minimal_lambda(p) {
        None => ParamValidation::ZeroLipschitzPositiveSlack,
        Some(minimal) if p.lambda >= minimal => ParamValidation::Ok,
        Some(minimal) => ParamValidation::LambdaTooSmall {
            minimal_lambda: minimal,
        },
    }
}

/// Smallest admissible λ for the given parameters (ignoring `p.lambda`);
/// `None` when `L = 0` with `δ > 0`, where no finite λ qualifies.
pub fn minimal_lambda(p: &TheoremParams) -> Option<f64> {
    let first = p.beta + p.drift_bound;
    if p.lipschitz > 0.0 {
        let second = (p.lipschitz + p.drift_bound * p.lipschitz + p.delta * p.n as f64)
            / (3.0 * p.lipschitz);
        Some(first.max(second))
    } else if p.delta == 0.0 {
        Some(first)
    } else {
        None
    }
}

/// Envelope width `g(t) = 3λ e^{2Lt}`.
pub fn envelope_width(p: &TheoremParams, t: f64) -> Result<f64, EnvelopeError> {
    if t < 0.0 || t > p.sigma {
        return Err(EnvelopeError::OutOfRange { t, sigma: p.sigma });
    }
    Ok(width_unchecked(p, t))
}

fn width_unchecked(p: &TheoremParams, t: f64) -> f64 {
    3.0 * p.lambda * (2.0 * p.lipschitz * t).exp()
}

/// The theorem's failure-probability bound with its raw and clamped values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    /// `2a·exp(-λ² / (2(bσn + 2βλ)))`, possibly above 1.
    pub raw: f64,
    /// `min(1, raw)` — the value to quote as a probability.
    pub clamped: f64,
    pub lambda_sq: f64,
    /// `b·σ·n`.
    pub variance_term: f64,
    /// `β·λ`.
    pub beta_lambda: f64,
}

/// Failure-probability bound `2a·exp(-λ² / (2(bσn + 2βλ)))`.
///
/// The raw value is retained (it can exceed 1 and is then vacuous);
/// monotone decreasing in λ and increasing in each of `b, β, σ, n, a`.
pub fn failure_probability(p: &TheoremParams) -> ProbabilityBound {
    let lambda_sq = p.lambda * p.lambda;
    let variance_term = p.second_moment * p.sigma * p.n as f64;
    let beta_lambda = p.beta * p.lambda;
    let denom = 2.0 * (variance_term + 2.0 * beta_lambda);
    let raw = if denom > 0.0 {
        2.0 * p.dim as f64 * (-lambda_sq / denom).exp()
    } else {
        0.0
    };
    ProbabilityBound {
        raw,
        clamped: raw.min(1.0),
        lambda_sq,
        variance_term,
        beta_lambda,
    }
}

/// Largest grid time `σ' <= sigma` such that every trajectory point before
/// `σ'` keeps ℓ∞-distance at least `g(t)/n` from the domain boundary
/// (state coordinates only). This is the horizon admissible for the
/// two-sided method; checked on the trajectory grid.
pub fn admissible_sigma(
    system: &DriftSystem,
    traj: &Trajectory,
    p: &TheoremParams,
) -> Result<f64, EnvelopeError> {
    if traj.start() > 0.0 || traj.end() < p.sigma {
        return Err(EnvelopeError::TrajectoryNotCovering {
            start: traj.start(),
            end: traj.end(),
            sigma: p.sigma,
        });
    }
    let scale = p.n as f64;
    for (&t, value) in traj.grid().iter().zip(traj.values()) {
        if t > p.sigma {
            break;
        }
        let clearance = system.domain().state_boundary_distance(value);
        if clearance < width_unchecked(p, t) / scale {
            return Ok(t);
        }
    }
    Ok(p.sigma)
}

/// Which bounds an envelope carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// `Z_j(i) <= n·y_j(i/n) + g(i/n)` (one-sided method).
    Upper,
    /// `|Z_j(i) - n·y_j(i/n)| <= g(i/n)` (two-sided method).
    TwoSided,
    /// `Z_j(i) >= n·y_j(i/n) - g(i/n)` (competitive sign-flip reduction).
    Lower,
}

/// Per-step containment bounds on the integer grid `i = 0..⌊σn⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    side: Side,
    n: u64,
    times: Vec<f64>,
    /// `center[i][j] = n·y_j(t_i)`.
    center: Vec<Vec<f64>>,
    /// `width[i] = g(t_i)`.
    width: Vec<f64>,
}

impl Envelope {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Last step index `m = ⌊σn⌋`; valid steps are `0..=m`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.center[0].len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn center(&self, i: usize, j: usize) -> f64 {
        self.center[i][j]
    }

    pub fn width(&self, i: usize) -> f64 {
        self.width[i]
    }

    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.center[i][j] + self.width[i]
    }

    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.center[i][j] - self.width[i]
    }

    pub fn has_upper(&self) -> bool {
        matches!(self.side, Side::Upper | Side::TwoSided)
    }

    pub fn has_lower(&self) -> bool {
        matches!(self.side, Side::Lower | Side::TwoSided)
    }

    /// CSV with header `i,t,center_j,upper_j[,lower_j]` per variable.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "i,t")?;
        for j in 1..=self.dim() {
            write!(out, ",center_{j}")?;
            if self.has_upper() {
                write!(out, ",upper_{j}")?;
            }
            if self.has_lower() {
                write!(out, ",lower_{j}")?;
            }
        }
        writeln!(out)?;
        for i in 0..=self.steps() {
            write!(out, "{i},{}", fmt_f64(self.times[i]))?;
            for j in 0..self.dim() {
                write!(out, ",{}", fmt_f64(self.center(i, j)))?;
                if self.has_upper() {
                    write!(out, ",{}", fmt_f64(self.upper(i, j)))?;
                }
                if self.has_lower() {
                    write!(out, ",{}", fmt_f64(self.lower(i, j)))?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Evaluate the envelope on the step grid from a solution trajectory.
pub fn build_envelope(
    traj: &Trajectory,
    p: &TheoremParams,
    side: Side,
) -> Result<Envelope, EnvelopeError> {
    let validation = validate_params(p);
    if !validation.is_ok() {
        return Err(EnvelopeError::InvalidParams(validation));
    }
    if traj.dim() != p.dim {
        return Err(EnvelopeError::DimensionMismatch {
            traj_dim: traj.dim(),
            param_dim: p.dim,
        });
    }
    let m = p.steps();
    let last_t = m as f64 / p.n as f64;
    if traj.start() > 0.0 || traj.end() < last_t {
        return Err(EnvelopeError::TrajectoryNotCovering {
            start: traj.start(),
            end: traj.end(),
            sigma: last_t,
        });
    }
    let scale = p.n as f64;
    let mut times = Vec::with_capacity(m + 1);
    let mut center = Vec::with_capacity(m + 1);
    let mut width = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let t = i as f64 / scale;
        let y = traj.eval(t).expect("coverage checked above");
        times.push(t);
        center.push(y.iter().map(|&v| scale * v).collect());
        width.push(width_unchecked(p, t));
    }
    Ok(Envelope {
        side,
        n: p.n,
        times,
        center,
        width,
    })
}

//! Doob decomposition of observed traces and Freedman-type deviation bounds.
//!
//! For a trace `Z` and an upper envelope `n·y + g`, the shifted process
//! `S_j(i) = Z_j(i) - (n·y_j(t_i) + g(t_i))` splits as `S = X + M` where
//! `X_j(i) = Σ_{k<i} E[ΔS_j(k) | H_k]` is the predictable compensator and
//! `M` the martingale noise. Both parts are accumulated independently here,
//! so `X + M = S` holds only up to floating-point roundoff — which makes the
//! reconstruction identity a meaningful numerical check rather than a
//! tautology.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::envelope::Envelope;
use crate::ode::fmt_f64;

#[derive(Debug, Error)]
pub enum MartingaleError {
    #[error("trace has {trace_dim} variables over {trace_steps} steps, envelope has {env_dim} over {env_steps}")]
    ShapeMismatch {
        trace_dim: usize,
        trace_steps: usize,
        env_dim: usize,
        env_steps: usize,
    },
    #[error("trace records no conditional drifts; Doob decomposition needs them")]
    MissingDrifts,
    #[error("step {upto} outside the recorded range 0..={max}")]
    OutOfRange { upto: usize, max: usize },
}

/// One realization of a discrete process: observed values, the exact
/// conditional drifts `E[ΔZ_j(i) | H_i]` supplied by the process while it
/// ran, and the stopping step.
///
/// `values[j]` has one more entry than `drifts[j]`: drifts are recorded
/// before each executed step. Processes without exact drift formulas leave
/// `drifts` empty (`None`), which downgrades hypothesis audits to
/// "unaudited".
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessTrace {
    pub n: u64,
    /// Nominal horizon `m = ⌊σn⌋`.
    pub horizon: usize,
    /// `values[j][i] = Z_j(i)` for `i = 0..=recorded_steps()`.
    pub values: Vec<Vec<f64>>,
    /// `drifts[j][i] = E[ΔZ_j(i) | H_i]` for `i < recorded_steps()`.
    pub drifts: Option<Vec<Vec<f64>>>,
    /// `E[(ΔZ_j(i))² | H_i]` when the process has an exact formula.
    pub second_moments: Option<Vec<Vec<f64>>>,
    /// First step at which the stopping condition held; `horizon` if never.
    pub stop_step: usize,
    /// Set when the process aborted early (e.g. ran out of edges).
    pub diagnostic: Option<String>,
}

impl ProcessTrace {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Number of executed steps `min{I, m}` (values run `0..=recorded`).
    pub fn recorded_steps(&self) -> usize {
        self.values[0].len() - 1
    }

    /// CSV with header `i,Z_1..Z_a,drift_1..drift_a,stopped`; drift cells on
    /// the final row are empty (no step was taken from it).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let a = self.dim();
        write!(out, "i")?;
        for j in 1..=a {
            write!(out, ",Z_{j}")?;
        }
        for j in 1..=a {
            write!(out, ",drift_{j}")?;
        }
        writeln!(out, ",stopped")?;
        let recorded = self.recorded_steps();
        for i in 0..=recorded {
            write!(out, "{i}")?;
            for j in 0..a {
                write!(out, ",{}", fmt_f64(self.values[j][i]))?;
            }
            for j in 0..a {
                match &self.drifts {
                    Some(d) if i < d[j].len() => write!(out, ",{}", fmt_f64(d[j][i]))?,
                    _ => write!(out, ",")?,
                }
            }
            let stopped = i == self.stop_step && self.stop_step < self.horizon;
            writeln!(out, ",{}", u8::from(stopped))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Compensator and martingale parts of the shifted process `S = X + M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoobParts {
    /// `S_j(i) = Z_j(i) - (n·y_j(t_i) + g(t_i))`.
    pub shifted: Vec<Vec<f64>>,
    /// Compensator, `X_j(0) = 0`.
    pub compensator: Vec<Vec<f64>>,
    /// Martingale part, `M_j(0) = S_j(0)`.
    pub martingale: Vec<Vec<f64>>,
}

impl DoobParts {
    pub fn dim(&self) -> usize {
        self.shifted.len()
    }

    pub fn steps(&self) -> usize {
        self.shifted[0].len() - 1
    }

    /// CSV with header `i,S_j,X_j,M_j` per variable.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "i")?;
        for j in 1..=self.dim() {
            write!(out, ",S_{j},X_{j},M_{j}")?;
        }
        writeln!(out)?;
        for i in 0..=self.steps() {
            write!(out, "{i}")?;
            for j in 0..self.dim() {
                write!(
                    out,
                    ",{},{},{}",
                    fmt_f64(self.shifted[j][i]),
                    fmt_f64(self.compensator[j][i]),
                    fmt_f64(self.martingale[j][i])
                )?;
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

/// Doob decomposition of `S_j(i) = Z_j(i) - (n·y_j(t_i) + g(t_i))` against
/// an upper envelope.
///
/// `ΔX_j(i) = drift_j(i) - Δ(n·y_j) - Δg` uses the envelope's exact center
/// and width differences (`Δg` is the exact exponential difference, not a
/// derivative approximation). `M` accumulates the residuals `ΔS - ΔX`
/// separately, starting from `S_j(0)`.
pub fn doob_decompose(
    trace: &ProcessTrace,
    envelope: &Envelope,
) -> Result<DoobParts, MartingaleError> {
    let drifts = trace.drifts.as_ref().ok_or(MartingaleError::MissingDrifts)?;
    let a = trace.dim();
    let recorded = trace.recorded_steps();
    if a != envelope.dim() || recorded > envelope.steps() || trace.n != envelope.n() {
        return Err(MartingaleError::ShapeMismatch {
            trace_dim: a,
            trace_steps: recorded,
            env_dim: envelope.dim(),
            env_steps: envelope.steps(),
        });
    }
    let mut shifted = vec![Vec::with_capacity(recorded + 1); a];
    let mut compensator = vec![Vec::with_capacity(recorded + 1); a];
    let mut martingale = vec![Vec::with_capacity(recorded + 1); a];
    for j in 0..a {
        let s0 = trace.values[j][0] - envelope.upper(0, j);
        shifted[j].push(s0);
        compensator[j].push(0.0);
        martingale[j].push(s0);
        for i in 0..recorded {
            let s_next = trace.values[j][i + 1] - envelope.upper(i + 1, j);
            let ds = s_next - shifted[j][i];
            let dx = drifts[j][i]
                - (envelope.center(i + 1, j) - envelope.center(i, j))
                - (envelope.width(i + 1) - envelope.width(i));
            let x_prev = compensator[j][i];
            let m_prev = martingale[j][i];
            shifted[j].push(s_next);
            compensator[j].push(x_prev + dx);
            martingale[j].push(m_prev + (ds - dx));
        }
    }
    Ok(DoobParts {
        shifted,
        compensator,
        martingale,
    })
}

/// Freedman's inequality: `tails · exp(-ε² / (2(bm + βε)))` bounds the
/// probability that a martingale with increments bounded by `β` and
/// conditional second moments bounded by `b` deviates by `ε` anywhere in
/// `m` steps (also under an adapted stopping time). `tails = 2` for the
/// two-sided statement.
pub fn freedman_bound(epsilon: f64, beta: f64, b: f64, m: usize, tails: u32) -> f64 {
    let denom = 2.0 * (b * m as f64 + beta * epsilon);
    if denom <= 0.0 {
        return 0.0;
    }
    tails as f64 * (-epsilon * epsilon / denom).exp()
}

/// `max_{0 <= i <= upto} max_j |M_j(i) - M_j(0)|`.
pub fn max_deviation(parts: &DoobParts, upto: usize) -> Result<f64, MartingaleError> {
    if upto > parts.steps() {
        return Err(MartingaleError::OutOfRange {
            upto,
            max: parts.steps(),
        });
    }
    let mut best = 0.0_f64;
    for m in &parts.martingale {
        for i in 0..=upto {
            best = best.max((m[i] - m[0]).abs());
        }
    }
    Ok(best)
}

/// Diagnostic for the empirical martingale property across trials.
///
/// Buckets every martingale increment `ΔM_j(i)` by an `H_i`-measurable
/// predicate (the sign of `M_j(i) - M_j(0)` and the parity of `i`) and
/// returns, per bucket, the mean increment together with the reference
/// scale `4·sqrt(b / count)`. With exact drifts the means should sit inside
/// the reference scale up to finite-sample noise; this is reported, never
/// asserted, since no finite sample proves the property.
#[derive(Debug, Clone, Serialize)]
pub struct IncrementBucket {
    pub label: &'static str,
    pub count: usize,
    pub mean: f64,
    /// `4·sqrt(b / count)`.
    pub reference: f64,
}

pub fn increment_mean_diagnostic(trials: &[DoobParts], second_moment: f64) -> Vec<IncrementBucket> {
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for parts in trials {
        for m in &parts.martingale {
            for i in 0..m.len() - 1 {
                let above = m[i] - m[0] >= 0.0;
                let bucket = 2 * usize::from(above) + i % 2;
                sums[bucket] += m[i + 1] - m[i];
                counts[bucket] += 1;
            }
        }
    }
    const LABELS: [&str; 4] = [
        "below-start/even-step",
        "below-start/odd-step",
        "above-start/even-step",
        "above-start/odd-step",
    ];
    (0..4)
        .map(|b| IncrementBucket {
            label: LABELS[b],
            count: counts[b],
            mean: if counts[b] == 0 { 0.0 } else { sums[b] / counts[b] as f64 },
            reference: if counts[b] == 0 {
                0.0
            } else {
                4.0 * (second_moment / counts[b] as f64).sqrt()
            },
        })
        .collect()
}

/// Largest relative reconstruction defect `|X + M - S| / max(1, |S|)` over
/// all variables and steps; the decomposition invariant keeps this at
/// floating-point roundoff scale.
pub fn reconstruction_defect(parts: &DoobParts) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..parts.dim() {
        for i in 0..=parts.steps() {
            let s = parts.shifted[j][i];
            let defect = (parts.compensator[j][i] + parts.martingale[j][i] - s).abs()
                / s.abs().max(1.0);
            worst = worst.max(defect);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{build_envelope, Side, TheoremParams};
    use crate::ode::integrate;
    use crate::systems;

    fn trace_from(values: Vec<f64>, drifts: Vec<f64>, n: u64, horizon: usize) -> ProcessTrace {
        ProcessTrace {
            n,
            horizon,
            values: vec![values],
            drifts: Some(vec![drifts]),
            second_moments: None,
            stop_step: horizon,
            diagnostic: None,
        }
    }

    fn walk_envelope(n: u64, m: usize, lambda: f64) -> crate::envelope::Envelope {
        let sys = systems::zero_drift();
        let sigma = m as f64 / n as f64;
        let traj = integrate(&sys, &[0.0], sigma, sigma / 64.0).unwrap();
        let p = TheoremParams {
            n,
            dim: 1,
            beta: 1.0,
            second_moment: 1.0,
            lambda,
            delta: 0.0,
            sigma,
            lipschitz: 0.0,
            drift_bound: 0.0,
        };
        build_envelope(&traj, &p, Side::Upper).unwrap()
    }

    #[test]
    fn zero_drift_constant_width_gives_flat_compensator() {
        // Fair coin-flip walk under y = 0, L = 0, lambda = 1: g is the
        // constant 3, so X = 0 and M = Z - 3.
        let env = walk_envelope(100, 6, 1.0);
        let z = vec![0.0, 1.0, 0.0, -1.0, -2.0, -1.0, 0.0];
        let trace = trace_from(z.clone(), vec![0.0; 6], 100, 6);
        let parts = doob_decompose(&trace, &env).unwrap();
        assert!(parts.compensator[0].iter().all(|&x| x == 0.0));
        for (i, &zi) in z.iter().enumerate() {
            assert_eq!(parts.martingale[0][i], zi - 3.0);
            assert_eq!(parts.shifted[0][i], zi - 3.0);
        }
    }

    #[test]
    fn perfect_tracking_gives_constant_shifted_process() {
        // Z(i) = i with drift 1 against y(t) = t scaled by n = 10 and a
        // constant width: S and M stay at S(0), X stays 0.
        let n = 10;
        let m = 5;
        let f: crate::drift_system::DriftFn = std::sync::Arc::new(|_, _| 1.0);
        let domain =
            crate::drift_system::Domain::new(vec![0.0, -0.5], vec![1.0, 1.5]).unwrap();
        let sys = crate::drift_system::DriftSystem::new(vec![f], domain, 0.0, 1.0).unwrap();
        let traj = integrate(&sys, &[0.0], 0.5, 0.05).unwrap();
        let p = TheoremParams {
            n,
            dim: 1,
            beta: 1.0,
            second_moment: 1.0,
            lambda: 2.0,
            delta: 0.0,
            sigma: 0.5,
            lipschitz: 0.0,
            drift_bound: 1.0,
        };
        let env = build_envelope(&traj, &p, Side::Upper).unwrap();
        let values: Vec<f64> = (0..=m).map(|i| i as f64).collect();
        let trace = trace_from(values, vec![1.0; m], n, m);
        let parts = doob_decompose(&trace, &env).unwrap();
        let s0 = parts.shifted[0][0];
        assert_eq!(s0, -6.0);
        for i in 0..=m {
            assert!((parts.shifted[0][i] - s0).abs() < 1e-9);
            assert!((parts.martingale[0][i] - s0).abs() < 1e-9);
            assert!(parts.compensator[0][i].abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_drift_spot_value_feeds_compensator() {
        // n = 10, Y = 2, i = 3: drift = C(6,2) / (C(10,2) - 3) = 15/42.
        let drift = crate::process::greedy_exact_drift(10, 2, 3);
        assert!((drift - 5.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn freedman_examples() {
        let v = freedman_bound(100.0, 1.0, 1.0, 1000, 2);
        assert!((v - 0.021230692923953355).abs() < 1e-15, "got {v}");
        // Vanishing epsilon: the bound degenerates to `tails`.
        assert!((freedman_bound(1e-300, 1.0, 1.0, 1000, 2) - 2.0).abs() < 1e-12);
        // In the bm-dominated regime, doubling b halves the exponent.
        let e1 = -(freedman_bound(10.0, 0.0, 1.0, 1000, 1)).ln();
        let e2 = -(freedman_bound(10.0, 0.0, 2.0, 1000, 1)).ln();
        assert!((e1 / e2 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn freedman_depends_on_b_and_m_through_product() {
        let a = freedman_bound(7.0, 0.5, 2.0, 500, 2);
        let b = freedman_bound(7.0, 0.5, 1.0, 1000, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn max_deviation_hand_cases() {
        let mk = |m: Vec<f64>| DoobParts {
            shifted: vec![m.clone()],
            compensator: vec![vec![0.0; m.len()]],
            martingale: vec![m],
        };
        let constant = mk(vec![4.0; 5]);
        assert_eq!(max_deviation(&constant, 4).unwrap(), 0.0);

        let parts = mk(vec![5.0, 7.0, 4.0, 5.0]);
        assert_eq!(max_deviation(&parts, 3).unwrap(), 2.0);

        let parts = mk(vec![0.0, -3.0, 1.0]);
        assert_eq!(max_deviation(&parts, 2).unwrap(), 3.0);
        assert!(matches!(
            max_deviation(&parts, 5),
            Err(MartingaleError::OutOfRange { .. })
        ));
    }

    #[test]
    fn max_deviation_monotone_in_upto() {
        let parts = DoobParts {
            shifted: vec![vec![0.0, 1.0, -2.0, 3.0, -1.0]],
            compensator: vec![vec![0.0; 5]],
            martingale: vec![vec![0.0, 1.0, -2.0, 3.0, -1.0]],
        };
        let mut last = 0.0;
        for upto in 0..=4 {
            let d = max_deviation(&parts, upto).unwrap();
            assert!(d >= last);
            last = d;
        }
    }

    #[test]
    fn decompose_rejects_shape_mismatch() {
        let env = walk_envelope(100, 6, 1.0);
        let trace = trace_from(vec![0.0; 9], vec![0.0; 8], 100, 8);
        assert!(matches!(
            doob_decompose(&trace, &env),
            Err(MartingaleError::ShapeMismatch { .. })
        ));
        let no_drift = ProcessTrace {
            drifts: None,
            ..trace_from(vec![0.0; 3], vec![0.0; 2], 100, 2)
        };
        assert!(matches!(
            doob_decompose(&no_drift, &env),
            Err(MartingaleError::MissingDrifts)
        ));
    }

    #[test]
    fn doob_csv_shape() {
        let env = walk_envelope(100, 4, 1.0);
        let trace = trace_from(vec![0.0, 1.0, 2.0, 1.0, 0.0], vec![0.0; 4], 100, 4);
        let parts = doob_decompose(&trace, &env).unwrap();
        let csv = parts.to_csv_string();
        assert_eq!(csv.lines().next().unwrap(), "i,S_1,X_1,M_1");
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn increment_diagnostic_stays_near_zero_for_fair_walk() {
        // Diagnostic only: print the bucket means; assert mere sanity.
        let env = walk_envelope(1000, 50, 2.0);
        let walk = crate::process::BoundedWalk {
            n: 1000,
            sigma: 0.05,
            initial: 0.0,
        };
        let trials: Vec<DoobParts> = (0..200u64)
            .map(|k| {
                let trace = crate::process::run_trace(&walk, 60_000 + k);
                doob_decompose(&trace, &env).unwrap()
            })
            .collect();
        let buckets = increment_mean_diagnostic(&trials, 1.0);
        for b in &buckets {
            println!(
                "increment diagnostic {}: mean {:+.4} over {} (reference {:.4})",
                b.label, b.mean, b.count, b.reference
            );
            assert!(b.mean.is_finite());
            assert!(b.count > 0);
        }
    }

    #[test]
    fn trace_csv_marks_stop_and_skips_final_drift() {
        let mut trace = trace_from(vec![0.0, 1.0, 2.0], vec![0.5, 0.5], 100, 10);
        trace.stop_step = 2;
        let csv = trace.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i,Z_1,drift_1,stopped");
        assert!(lines[1].ends_with(",0"));
        assert!(lines[3].starts_with("2,"));
        assert!(lines[3].contains(",,1"), "final row has empty drift and stop flag");
    }
}

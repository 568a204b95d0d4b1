//! Command implementations: each produces one JSON or CSV artifact on
//! stdout, optional file artifacts under `--out`, and an exit status.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use demethod::envelope::{
    build_envelope, failure_probability, minimal_lambda, validate_params, Side, TheoremParams,
};
use demethod::martingale::freedman_bound;
use demethod::ode::integrate;
use demethod::process::run_trace;
use demethod::verifier::{
    check_comparison, verify_one_sided, verify_two_sided, ComparisonOptions, VerifyOptions,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Flag/env/config-merged run settings.
pub struct Settings {
    pub config: ExperimentConfig,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub dump_traces: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub struct Outcome {
    pub stdout: String,
    pub exit: u8,
}

fn ok(stdout: String) -> Result<Outcome, CliError> {
    Ok(Outcome { stdout, exit: 0 })
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn default_h(explicit: Option<f64>) -> f64 {
    explicit.unwrap_or(1e-3)
}

pub fn solve(s: &Settings) -> Result<Outcome, CliError> {
    let system = s.config.system()?;
    let cfg = s
        .config
        .solve
        .as_ref()
        .ok_or_else(|| CliError::config("missing 'solve' section"))?;
    let h = default_h(cfg.h.or(s.config.h));
    let traj = integrate(&system, &cfg.y0, cfg.sigma, h)?;
    let csv = traj.to_csv_string();
    if let Some(dir) = &s.out {
        write_artifact(dir, "trajectory.csv", &csv)?;
    }
    match s.format {
        Format::Csv => ok(csv),
        Format::Json => ok(json!({
            "config": s.config.echo(),
            "grid": traj.grid(),
            "values": traj.values(),
        })
        .to_string()),
    }
}

pub fn envelope(s: &Settings) -> Result<Outcome, CliError> {
    let system = s.config.system()?;
    let params = s.config.theorem_params(&system)?;
    let side = match s.config.envelope_side.as_deref() {
        None | Some("upper") => Side::Upper,
        Some("two-sided") => Side::TwoSided,
        Some("lower") => Side::Lower,
        Some(other) => {
            return Err(CliError::config(format!(
                "unknown envelope_side '{other}'; known: upper, two-sided, lower"
            )))
        }
    };
    let y0 = match &s.config.y0 {
        Some(y0) => y0.clone(),
        None => vec![0.0; system.dim()],
    };
    let h = default_h(s.config.h);
    let traj = integrate(&system, &y0, params.sigma, h)?;
    let env = build_envelope(&traj, &params, side)?;
    let bound = failure_probability(&params);
    let csv = env.to_csv_string();
    let probability = json!({ "config": s.config.echo(), "probability": bound });
    if let Some(dir) = &s.out {
        write_artifact(dir, "envelope.csv", &csv)?;
        write_artifact(dir, "probability.json", &probability.to_string())?;
    }
    match s.format {
        Format::Csv => ok(csv),
        Format::Json => ok(probability.to_string()),
    }
}

pub fn simulate(s: &Settings) -> Result<Outcome, CliError> {
    let process = s.config.process()?;
    let dir = s
        .out
        .as_ref()
        .ok_or_else(|| CliError::config("simulate needs --out for trace CSVs"))?;
    let mut stopped = 0usize;
    for k in 0..s.trials {
        let trace = run_trace(&process, s.seed.wrapping_add(k as u64));
        if trace.stop_step < trace.horizon {
            stopped += 1;
        }
        write_artifact(dir, &format!("trace_{k:04}.csv"), &trace.to_csv_string())?;
    }
    ok(json!({
        "config": s.config.echo(),
        "trials": s.trials,
        "seed": s.seed,
        "stopped_trials": stopped,
        "out": dir.display().to_string(),
    })
    .to_string())
}

pub fn verify(s: &Settings, side: Side) -> Result<Outcome, CliError> {
    let system = s.config.system()?;
    let process = s.config.process()?;
    let params = s.config.theorem_params(&system)?;
    let opts = VerifyOptions {
        h: default_h(s.config.h),
        gamma: s.config.gamma.unwrap_or(0.0),
        audit_mode: s.config.audit_mode()?,
        ..VerifyOptions::default()
    };
    let report = match side {
        Side::TwoSided => verify_two_sided(&process, &system, &params, s.trials, s.seed, &opts)?,
        _ => verify_one_sided(&process, &system, &params, s.trials, s.seed, &opts)?,
    };
    let document = json!({ "config": s.config.echo(), "report": report });
    let text = document.to_string();
    if let Some(dir) = &s.out {
        write_artifact(dir, "report.json", &text)?;
        if s.dump_traces {
            for k in 0..s.trials {
                let trace = run_trace(&process, s.seed.wrapping_add(k as u64));
                write_artifact(dir, &format!("trace_{k:04}.csv"), &trace.to_csv_string())?;
            }
        }
    }
    Ok(Outcome {
        stdout: text,
        exit: u8::from(!report.verdict_pass),
    })
}

pub fn compare(s: &Settings) -> Result<Outcome, CliError> {
    let system = s.config.system()?;
    let cfg = s
        .config
        .compare
        .as_ref()
        .ok_or_else(|| CliError::config("missing 'compare' section"))?;
    let mut opts = ComparisonOptions::new(cfg.sigma, default_h(cfg.h.or(s.config.h)));
    opts.delta = cfg.delta.unwrap_or(0.0);
    opts.achieved_delta = cfg.achieved_delta;
    if let Some(slack) = cfg.slack {
        if slack < 0.0 {
            return Err(CliError::config("slack must be nonnegative"));
        }
        opts.slack = Some(std::sync::Arc::new(move |_| slack));
    }
    if let Some(tol) = cfg.tolerance {
        opts.tolerance = tol;
    }
    opts.allow_noncooperative = cfg.allow_noncooperative.unwrap_or(false);
    let report = check_comparison(&system, &cfg.z0, &cfg.y0, &opts)?;
    let holds = report.holds;
    let text = json!({ "config": s.config.echo(), "report": report }).to_string();
    if let Some(dir) = &s.out {
        write_artifact(dir, "comparison.json", &text)?;
    }
    Ok(Outcome {
        stdout: text,
        exit: u8::from(!holds),
    })
}

pub fn freedman(s: &Settings) -> Result<Outcome, CliError> {
    let cfg = s
        .config
        .freedman
        .as_ref()
        .ok_or_else(|| CliError::config("missing 'freedman' section"))?;
    let tails = cfg.tails.unwrap_or(2);
    let value = freedman_bound(cfg.epsilon, cfg.beta, cfg.second_moment, cfg.steps, tails);
    let text = json!({
        "config": s.config.echo(),
        "value": value,
        "epsilon": cfg.epsilon,
        "beta": cfg.beta,
        "second_moment": cfg.second_moment,
        "steps": cfg.steps,
        "tails": tails,
    })
    .to_string();
    if let Some(dir) = &s.out {
        write_artifact(dir, "freedman.json", &text)?;
    }
    ok(text)
}

/// Bisection for the smallest valid λ whose clamped failure bound meets a
/// target. A convenience around the monotone bound, not a theorem claim.
pub fn lambda_min(s: &Settings) -> Result<Outcome, CliError> {
    let system = s.config.system()?;
    let params = s.config.theorem_params(&system)?;
    let cfg = s
        .config
        .lambda_min
        .as_ref()
        .ok_or_else(|| CliError::config("missing 'lambda_min' section"))?;
    if !cfg.target.is_finite() || cfg.target <= 0.0 {
        return Err(CliError::config("lambda_min.target must be positive"));
    }
    let floor = minimal_lambda(&params).ok_or_else(|| CliError {
        kind: "invalid-params",
        message: "no admissible lambda: zero Lipschitz constant with positive slack".into(),
        minimal_lambda: None,
        admissible_sigma: None,
    })?;
    let bound_at = |lambda: f64| {
        failure_probability(&TheoremParams {
            lambda,
            ..params.clone()
        })
        .clamped
    };
    let mut lo = floor.max(f64::MIN_POSITIVE);
    let answer = if bound_at(lo) <= cfg.target {
        lo
    } else {
        let mut hi = cfg.hi.unwrap_or(lo.max(1.0) * 2.0);
        let mut doublings = 0;
        while bound_at(hi) > cfg.target {
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 {
                return Err(CliError::config(
                    "lambda_min target unreachable within 2^200 of the floor",
                ));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if bound_at(mid) <= cfg.target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let achieved = failure_probability(&TheoremParams {
        lambda: answer,
        ..params.clone()
    });
    let check = validate_params(&TheoremParams {
        lambda: answer,
        ..params.clone()
    });
    debug_assert!(check.is_ok());
    let text = json!({
        "config": s.config.echo(),
        "lambda": answer,
        "minimal_valid_lambda": floor,
        "target": cfg.target,
        "bound_raw": achieved.raw,
        "bound_clamped": achieved.clamped,
    })
    .to_string();
    if let Some(dir) = &s.out {
        write_artifact(dir, "lambda_min.json", &text)?;
    }
    ok(text)
}

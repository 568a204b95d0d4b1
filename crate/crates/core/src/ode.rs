//! Fixed-step classical Runge–Kutta integration of `y_j' = f_j(t, y)` with
//! linear dense output.
//!
//! The envelope machinery evaluates solutions on the uniform step grid
//! `t_i = i/n`, so a fixed step keeps the error analysis simple and the
//! output reproducible: identical inputs produce bit-identical trajectories.
//! For smooth right-hand sides the global error is `O(h^4)`; the
//! convergence order (and uniqueness of the solution being approximated)
//! rests on the system's declared Lipschitz condition and is not certified
//! here.

use std::io::{self, Write};

use thiserror::Error;

use crate::drift_system::DriftSystem;

#[derive(Debug, Error)]
pub enum OdeError {
    /// An integration step exited the system domain before `sigma`. Carries
    /// the partial trajectory so the caller can shrink the horizon.
    #[error("solution left the domain at t = {t}; partial trajectory ends at {}", partial.end())]
    LeftDomain { t: f64, partial: Trajectory },
    #[error("t = {t} outside the trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("initial point (0, {y0:?}) outside the system domain")]
    InitialOutsideDomain { y0: Vec<f64> },
    #[error("step h = {h} and horizon sigma = {sigma} must be positive with h <= sigma")]
    BadStep { h: f64, sigma: f64 },
    #[error("drift evaluated to a non-finite value at t = {t}")]
    NonFinite { t: f64 },
}

/// Dense numerical solution on `[0, sigma]`: a strictly increasing grid with
/// one state vector per node and linear interpolation in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn from_parts(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        assert_eq!(grid.len(), values.len());
        assert!(!grid.is_empty());
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        Self { grid, values }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Linear interpolation between the bracketing grid nodes; exact at the
    /// nodes themselves.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        if t < self.start() || t > self.end() {
            return Err(OdeError::OutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let idx = self.grid.partition_point(|&g| g <= t);
        let k = idx - 1; // grid[k] <= t, and t < grid[k+1] unless t == end
        if self.grid[k] == t {
            return Ok(self.values[k].clone());
        }
        let theta = (t - self.grid[k]) / (self.grid[k + 1] - self.grid[k]);
        Ok(self.values[k]
            .iter()
            .zip(&self.values[k + 1])
            .map(|(&a, &b)| a + theta * (b - a))
            .collect())
    }

    /// Max over consecutive nodes of `‖Δvalues‖_∞ / Δt` — the observed
    /// Lipschitz constant of the solution, at most `B + O(h)` for a valid
    /// system since `|y_j'| = |f_j| <= B`.
    pub fn max_slope(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| {
                let dv = v[0]
                    .iter()
                    .zip(&v[1])
                    .map(|(&a, &b)| (b - a).abs())
                    .fold(0.0_f64, f64::max);
                dv / (t[1] - t[0])
            })
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,y_1,...,y_a`, one row per grid node, 17
    /// significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t")?;
        for j in 1..=self.dim() {
            write!(out, ",y_{j}")?;
        }
        writeln!(out)?;
        for (t, value) in self.grid.iter().zip(&self.values) {
            write!(out, "{}", fmt_f64(*t))?;
            for v in value {
                write!(out, ",{}", fmt_f64(*v))?;
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

/// 17 significant digits: enough to round-trip any f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Classical fourth-order Runge–Kutta with fixed step `h` (final step
/// shortened to land exactly on `sigma`).
///
/// Every accepted grid point and every stage point must lie inside the
/// system domain; otherwise integration stops with [`OdeError::LeftDomain`]
/// carrying the prefix computed so far.
pub fn integrate(
    system: &DriftSystem,
    y0: &[f64],
    sigma: f64,
    h: f64,
) -> Result<Trajectory, OdeError> {
    if !h.is_finite() || !sigma.is_finite() || h <= 0.0 || sigma <= 0.0 || h > sigma {
        return Err(OdeError::BadStep { h, sigma });
    }
    if !system.domain().contains(0.0, y0) {
        return Err(OdeError::InitialOutsideDomain { y0: y0.to_vec() });
    }
    let full_steps = (sigma / h).floor() as usize;
    let mut grid = Vec::with_capacity(full_steps + 2);
    let mut values = Vec::with_capacity(full_steps + 2);
    grid.push(0.0);
    values.push(y0.to_vec());

    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k = 0usize;
    while t < sigma {
        let t_next = if k < full_steps {
            (k + 1) as f64 * h
        } else {
            sigma
        };
        let step = t_next - t;
        if step <= 0.0 {
            break; // sigma was an exact multiple of h
        }
        let y_next = match rk4_step(system, t, &y, step) {
            Ok(v) => v,
            Err(bad_t) => {
                return Err(OdeError::LeftDomain {
                    t: bad_t,
                    partial: Trajectory::from_parts(grid, values),
                })
            }
        };
        if !system.domain().contains(t_next, &y_next) {
            return Err(OdeError::LeftDomain {
                t: t_next,
                partial: Trajectory::from_parts(grid, values),
            });
        }
        t = t_next;
        y = y_next;
        k += 1;
        grid.push(t);
        values.push(y.clone());
    }
    Ok(Trajectory::from_parts(grid, values))
}

/// One RK4 step; `Err(t)` reports the stage time at which the state left
/// the domain or the drift turned non-finite.
fn rk4_step(system: &DriftSystem, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, f64> {
    let eval = |ts: f64, ys: &[f64]| -> Result<Vec<f64>, f64> {
        if !system.domain().contains(ts, ys) {
            return Err(ts);
        }
        let f = system.evaluate_unchecked(ts, ys);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(ts);
        }
        Ok(f)
    };
    let shift = |base: &[f64], dir: &[f64], c: f64| -> Vec<f64> {
        base.iter().zip(dir).map(|(&b, &d)| b + c * d).collect()
    };
    let k1 = eval(t, y)?;
    let k2 = eval(t + h / 2.0, &shift(y, &k1, h / 2.0))?;
    let k3 = eval(t + h / 2.0, &shift(y, &k2, h / 2.0))?;
    let k4 = eval(t + h, &shift(y, &k3, h))?;
    Ok(y.iter()
        .enumerate()
        .map(|(j, &yj)| yj + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift_system::{Domain, DriftFn, DriftSystem};
    use crate::systems;
    use std::sync::Arc;

    fn greedy_closed_form(t: f64) -> f64 {
        t / (1.0 + 2.0 * t)
    }

    fn constant_system(c: f64) -> DriftSystem {
        let f: DriftFn = Arc::new(move |_, _| c);
        let domain = Domain::new(vec![0.0, -1.0], vec![4.0, 4.0]).unwrap();
        DriftSystem::new(vec![f], domain, 0.0, c.abs()).unwrap()
    }

    #[test]
    fn greedy_matches_closed_form() {
        let traj = integrate(&systems::greedy_matching(), &[0.0], 1.0, 1e-3).unwrap();
        let y1 = traj.eval(1.0).unwrap()[0];
        assert!((y1 - 1.0 / 3.0).abs() <= 1e-8, "y(1) = {y1}");
    }

    #[test]
    fn zero_drift_stays_constant() {
        let traj = integrate(&constant_system(0.0), &[0.7], 3.0, 0.1).unwrap();
        assert!(traj.values().iter().all(|v| v[0] == 0.7));
    }

    #[test]
    fn unit_drift_is_exact() {
        let traj = integrate(&constant_system(1.0), &[0.0], 2.0, 0.125).unwrap();
        assert_eq!(traj.eval(2.0).unwrap()[0], 2.0);
    }

    #[test]
    fn final_partial_step_lands_on_sigma() {
        let traj = integrate(&constant_system(1.0), &[0.0], 1.05, 0.1).unwrap();
        assert_eq!(traj.end(), 1.05);
        assert_eq!(traj.grid().len(), 12);
        let gaps: Vec<f64> = traj.grid().windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps[..10].iter().all(|&g| (g - 0.1).abs() < 1e-12));
        assert!((gaps[10] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn eval_midpoint_and_grid_identity() {
        let traj = Trajectory::from_parts(vec![0.0, 1.0], vec![vec![0.0], vec![2.0]]);
        assert_eq!(traj.eval(0.5).unwrap()[0], 1.0);
        assert_eq!(traj.eval(0.0).unwrap()[0], 0.0);
        assert_eq!(traj.eval(1.0).unwrap()[0], 2.0);
        assert!(matches!(traj.eval(1.5), Err(OdeError::OutOfRange { .. })));
    }

    #[test]
    fn eval_greedy_interior_point() {
        let traj = integrate(&systems::greedy_matching(), &[0.0], 1.0, 1e-3).unwrap();
        let y = traj.eval(0.5).unwrap()[0];
        assert!((y - 0.25).abs() < 1e-6, "y(0.5) = {y}");
    }

    #[test]
    fn eval_exact_on_every_grid_node() {
        let traj = integrate(&systems::greedy_matching(), &[0.0], 0.25, 0.01).unwrap();
        for (k, &t) in traj.grid().iter().enumerate() {
            assert_eq!(traj.eval(t).unwrap(), traj.values()[k]);
        }
    }

    #[test]
    fn max_slope_examples() {
        let flat = integrate(&constant_system(0.0), &[0.5], 1.0, 0.1).unwrap();
        assert_eq!(flat.max_slope(), 0.0);

        let unit = integrate(&constant_system(1.0), &[0.0], 1.0, 0.1).unwrap();
        assert!((unit.max_slope() - 1.0).abs() < 1e-12);

        // Greedy slope is maximal at t = 0 where y' = 1.
        let greedy = integrate(&systems::greedy_matching(), &[0.0], 1.0, 1e-3).unwrap();
        assert!((greedy.max_slope() - 1.0).abs() < 0.01);
        assert!(greedy.max_slope() <= 1.0 + 1e-9);
    }

    #[test]
    fn fourth_order_convergence_on_greedy() {
        let max_err = |h: f64| {
            let traj = integrate(&systems::greedy_matching(), &[0.0], 1.0, h).unwrap();
            traj.grid()
                .iter()
                .zip(traj.values())
                .map(|(&t, v)| (v[0] - greedy_closed_form(t)).abs())
                .fold(0.0_f64, f64::max)
        };
        let coarse = max_err(0.02);
        let fine = max_err(0.01);
        assert!(
            coarse / fine >= 8.0,
            "convergence ratio {} below 8",
            coarse / fine
        );
    }

    #[test]
    fn integration_is_deterministic() {
        let a = integrate(&systems::greedy_matching(), &[0.0], 1.0, 1e-3).unwrap();
        let b = integrate(&systems::greedy_matching(), &[0.0], 1.0, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn domain_exit_returns_partial_prefix() {
        // z' = z from 0.5 reaches the box edge z = 1 at t = ln 2.
        let err = integrate(&systems::linear_test(), &[0.5], 1.0, 1e-3).unwrap_err();
        match err {
            OdeError::LeftDomain { t, partial } => {
                assert!((t - std::f64::consts::LN_2).abs() < 0.01, "exit at {t}");
                assert!(partial.end() < std::f64::consts::LN_2);
                assert!(partial.end() > 0.68);
                let last = partial.eval(partial.end()).unwrap()[0];
                assert!(last <= 1.0);
            }
            other => panic!("expected LeftDomain, got {other:?}"),
        }
    }

    #[test]
    fn initial_point_must_be_inside() {
        assert!(matches!(
            integrate(&systems::greedy_matching(), &[0.9], 1.0, 0.1),
            Err(OdeError::InitialOutsideDomain { .. })
        ));
    }

    #[test]
    fn cooperative_systems_preserve_initial_order() {
        // Discrete analogue of the comparison theorem with delta = 0.
        let sys = systems::coupled_cooperative_2d();
        let lo = integrate(&sys, &[0.0, 0.1], 1.0, 1e-3).unwrap();
        let hi = integrate(&sys, &[0.05, 0.2], 1.0, 1e-3).unwrap();
        for (a, b) in lo.values().iter().zip(hi.values()) {
            for j in 0..2 {
                assert!(a[j] <= b[j] + 1e-9);
            }
        }
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let traj = integrate(&systems::greedy_matching(), &[0.0], 0.01, 0.005).unwrap();
        let csv = traj.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,y_1");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0].parse::<f64>().unwrap(), 0.0);
        // Round-trips exactly.
        let last = csv.lines().last().unwrap();
        let y: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(y, traj.values().last().unwrap()[0]);
    }
}

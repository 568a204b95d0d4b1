//! Drift systems: the right-hand sides `f_j` of a limiting ODE system,
//! restricted to a bounded box domain, together with their declared
//! Lipschitz and magnitude constants.
//!
//! A system is *cooperative* when every `f_j(t, y_1, …, y_a)` is
//! nondecreasing in each variable except possibly `t` and its own `y_j`.
//! Cooperativity is what makes multi-dimensional comparison arguments
//! (and the one-sided envelope machinery built on them) sound, so this
//! module provides a randomized spot-check for it alongside sampled
//! estimators for the Lipschitz constant `L` and the bound `B`.
//!
//! The estimators are sanity checks, not certificates: they sample finite
//! difference quotients and magnitudes, so they only ever produce *lower*
//! estimates of the true constants. Declared constants stay authoritative.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::ode::Trajectory;
use crate::rng;

/// A drift component: maps `(t, y)` with `y` of length `a` to a real.
pub type DriftFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum DriftSystemError {
    #[error("point ({t}, {y:?}) lies outside the system domain")]
    PointOutsideDomain { t: f64, y: Vec<f64> },
    #[error("domain needs lower[k] < upper[k] for every coordinate, got {lower} >= {upper} at k={index}")]
    DegenerateBox { index: usize, lower: f64, upper: f64 },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("trajectory spans [{start}, {end}] but [0, {sigma}] is required")]
    TrajectoryNotCovering { start: f64, end: f64, sigma: f64 },
}

/// Axis-aligned closed box in `(t, y_1, …, y_a)`-space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    /// Box with the given corners; `lower[k] < upper[k]` is required.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DriftSystemError> {
        if lower.len() != upper.len() {
            return Err(DriftSystemError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (k, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(DriftSystemError::DegenerateBox {
                    index: k,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Number of state variables `a` (one less than the box dimension).
    pub fn state_dim(&self) -> usize {
        self.lower.len() - 1
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Closed-box membership for a full `(t, y…)` coordinate vector.
    pub fn contains_point(&self, point: &[f64]) -> bool {
        point.len() == self.lower.len()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    pub fn contains(&self, t: f64, y: &[f64]) -> bool {
        if y.len() + 1 != self.lower.len() {
            return false;
        }
        if t < self.lower[0] || t > self.upper[0] {
            return false;
        }
        y.iter()
            .zip(self.lower[1..].iter().zip(&self.upper[1..]))
            .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    /// ℓ∞-distance from `(t, y)` to the boundary, measured over the state
    /// coordinates only. The time coordinate is excluded: a trajectory point
    /// always sits exactly at its own time, so only the state directions
    /// constrain how much room a perturbed process has.
    pub fn state_boundary_distance(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(self.lower[1..].iter().zip(&self.upper[1..]))
            .map(|(&x, (&lo, &hi))| (x - lo).min(hi - x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform point in the box.
    pub fn sample(&self, rng: &mut rng::TrialRng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + rng.gen::<f64>() * (hi - lo))
            .collect()
    }
}

/// The drift functions `f_1..f_a` with their domain and declared constants.
///
/// Immutable after construction; clones share the component closures and can
/// be handed to concurrent trial workers freely.
#[derive(Clone)]
pub struct DriftSystem {
    components: Vec<DriftFn>,
    domain: Domain,
    lipschitz: f64,
    bound: f64,
    declared_cooperative: Option<bool>,
}

impl fmt::Debug for DriftSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSystem")
            .field("dim", &self.dim())
            .field("domain", &self.domain)
            .field("lipschitz", &self.lipschitz)
            .field("bound", &self.bound)
            .field("declared_cooperative", &self.declared_cooperative)
            .finish()
    }
}

impl DriftSystem {
    /// `lipschitz` is the declared ℓ∞ Lipschitz constant `L`, `bound` the
    /// declared magnitude bound `B` with `|f_j| <= B` on the domain.
    pub fn new(
        components: Vec<DriftFn>,
        domain: Domain,
        lipschitz: f64,
        bound: f64,
    ) -> Result<Self, DriftSystemError> {
        if components.len() != domain.state_dim() {
            return Err(DriftSystemError::DimensionMismatch {
                expected: domain.state_dim(),
                got: components.len(),
            });
        }
        Ok(Self {
            components,
            domain,
            lipschitz,
            bound,
            declared_cooperative: None,
        })
    }

    /// Record an analytic cooperativity claim so verifiers can skip the
    /// sampling check (for example when partial-derivative signs are known).
    pub fn with_declared_cooperative(mut self, cooperative: bool) -> Self {
        self.declared_cooperative = Some(cooperative);
        self
    }

    /// Same components and constants on a different domain, e.g. the tube
    /// produced by [`DriftSystem::restrict_to_tube`].
    pub fn with_domain(&self, domain: Domain) -> Result<Self, DriftSystemError> {
        if domain.state_dim() != self.dim() {
            return Err(DriftSystemError::DimensionMismatch {
                expected: self.dim(),
                got: domain.state_dim(),
            });
        }
        Ok(Self {
            components: self.components.clone(),
            domain,
            lipschitz: self.lipschitz,
            bound: self.bound,
            declared_cooperative: self.declared_cooperative,
        })
    }

    /// Same system with different declared constants, e.g. after
    /// re-estimating them on a restricted domain.
    pub fn with_constants(mut self, lipschitz: f64, bound: f64) -> Self {
        self.lipschitz = lipschitz;
        self.bound = bound;
        self
    }

    /// System with every component replaced by `f_j(t, y) + shift(t)`,
    /// on the same domain and with the same declared constants. Used to
    /// integrate perturbed comparison solutions `z' = f(t, z) - s(t) + δ'`.
    pub fn shifted(&self, shift: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Self {
        let components = self
            .components
            .iter()
            .map(|f| {
                let f = Arc::clone(f);
                let shift = Arc::clone(&shift);
                let g: DriftFn = Arc::new(move |t, y| f(t, y) + shift(t));
                g
            })
            .collect();
        Self {
            components,
            domain: self.domain.clone(),
            lipschitz: self.lipschitz,
            bound: self.bound,
            declared_cooperative: self.declared_cooperative,
        }
    }

    /// Number of variables `a`.
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn declared_cooperative(&self) -> Option<bool> {
        self.declared_cooperative
    }

    /// Evaluate `(f_1(t,y), …, f_a(t,y))`.
    pub fn evaluate(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, DriftSystemError> {
        if !self.domain.contains(t, y) {
            return Err(DriftSystemError::PointOutsideDomain { t, y: y.to_vec() });
        }
        Ok(self.evaluate_unchecked(t, y))
    }

    /// Evaluation without the membership check, for callers that already
    /// know the point is inside (samplers, integrator stages).
    pub(crate) fn evaluate_unchecked(&self, t: f64, y: &[f64]) -> Vec<f64> {
        self.components.iter().map(|f| f(t, y)).collect()
    }

    fn component(&self, j: usize, point: &[f64]) -> f64 {
        (self.components[j])(point[0], &point[1..])
    }

    /// Randomized spot-check of cooperativity.
    ///
    /// Samples perturbation pairs across the domain: a base point, a
    /// component index `j`, and an off-diagonal variable `j' != j`, then
    /// compares `f_j` at two values of `y_{j'}`. A decrease is a
    /// counterexample and is returned as a witness. `cooperative = true`
    /// means no violation was found within the budget — evidence, not proof.
    /// Deterministic for a fixed seed. One-dimensional systems are
    /// cooperative by definition and short-circuit.
    pub fn check_cooperative(&self, sample_budget: usize, seed: u64) -> CooperativityReport {
        let a = self.dim();
        if a == 1 {
            return CooperativityReport {
                cooperative: true,
                witness: None,
                samples_used: 0,
            };
        }
        let mut rng = rng::seeded(seed);
        for sample in 0..sample_budget {
            let mut point = self.domain.sample(&mut rng);
            let j = rng.gen_range(0..a);
            let mut var = rng.gen_range(0..a - 1);
            if var >= j {
                var += 1;
            }
            let coord = var + 1; // slot in (t, y_1..y_a)
            let lo = self.domain.lower[coord];
            let hi = self.domain.upper[coord];
            let other = lo + rng.gen::<f64>() * (hi - lo);
            if other == point[coord] {
                continue;
            }
            let mut alt = point.clone();
            alt[coord] = other;
            if point[coord] < alt[coord] {
                std::mem::swap(&mut point, &mut alt);
            }
            // point has the larger y_var; cooperativity demands f_j(point) >= f_j(alt).
            let value_high = self.component(j, &point);
            let value_low = self.component(j, &alt);
            if value_high < value_low {
                return CooperativityReport {
                    cooperative: false,
                    witness: Some(CooperativityWitness {
                        component: j,
                        variable: var,
                        point_high: point,
                        point_low: alt,
                        value_high,
                        value_low,
                    }),
                    samples_used: sample + 1,
                };
            }
        }
        CooperativityReport {
            cooperative: true,
            witness: None,
            samples_used: sample_budget,
        }
    }

    /// Sampled lower estimate of the ℓ∞ Lipschitz constant.
    ///
    /// Alternates box-wide point pairs with short single-coordinate
    /// perturbations and returns the largest difference quotient
    /// `max_j |f_j(p) - f_j(q)| / ‖p - q‖_∞` seen. Deterministic for a
    /// fixed seed, and monotone in the budget since samples are drawn as a
    /// prefix-extending stream.
    pub fn estimate_lipschitz(&self, sample_budget: usize, seed: u64) -> f64 {
        let mut rng = rng::seeded(seed);
        let mut best = 0.0_f64;
        let dims = self.domain.lower.len();
        for sample in 0..sample_budget {
            let p = self.domain.sample(&mut rng);
            let q = if sample % 2 == 0 {
                self.domain.sample(&mut rng)
            } else {
                // Local probe: nudge one coordinate by 1e-4 of its extent.
                let k = rng.gen_range(0..dims);
                let span = self.domain.upper[k] - self.domain.lower[k];
                let mut q = p.clone();
                q[k] += 1e-4 * span;
                if q[k] > self.domain.upper[k] {
                    q[k] = p[k] - 1e-4 * span;
                }
                q
            };
            let dist = p
                .iter()
                .zip(&q)
                .map(|(&x, &y)| (x - y).abs())
                .fold(0.0_f64, f64::max);
            if dist == 0.0 {
                continue;
            }
            let fp = self.evaluate_unchecked(p[0], &p[1..]);
            let fq = self.evaluate_unchecked(q[0], &q[1..]);
            let df = fp
                .iter()
                .zip(&fq)
                .map(|(&x, &y)| (x - y).abs())
                .fold(0.0_f64, f64::max);
            best = best.max(df / dist);
        }
        best
    }

    /// Sampled lower estimate of the magnitude bound `B = sup |f_j|`.
    pub fn estimate_bound(&self, sample_budget: usize, seed: u64) -> f64 {
        let mut rng = rng::seeded(seed);
        let mut best = 0.0_f64;
        for _ in 0..sample_budget {
            let p = self.domain.sample(&mut rng);
            let f = self.evaluate_unchecked(p[0], &p[1..]);
            best = best.max(f.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs())));
        }
        best
    }

    /// Bounding box of the tube `{(t, z) : 0 <= t <= sigma,
    /// y_j(t) <= z_j <= y_j(t) + width(t)/n}` around a solution trajectory.
    ///
    /// Constants only have to hold on this set for the envelope argument, so
    /// it serves as a reduced domain for the estimators (`with_domain`).
    pub fn restrict_to_tube(
        &self,
        trajectory: &Trajectory,
        n: u64,
        sigma: f64,
        width: impl Fn(f64) -> f64,
    ) -> Result<Domain, DriftSystemError> {
        if trajectory.start() > 0.0 || trajectory.end() < sigma {
            return Err(DriftSystemError::TrajectoryNotCovering {
                start: trajectory.start(),
                end: trajectory.end(),
                sigma,
            });
        }
        let a = trajectory.dim();
        let mut lower = vec![f64::INFINITY; a];
        let mut upper = vec![f64::NEG_INFINITY; a];
        let scale = n as f64;
        for (&t, value) in trajectory.grid().iter().zip(trajectory.values()) {
            if t > sigma {
                break;
            }
            let w = width(t) / scale;
            for j in 0..a {
                lower[j] = lower[j].min(value[j]);
                upper[j] = upper[j].max(value[j] + w);
            }
        }
        let mut lo = vec![0.0];
        lo.extend(lower);
        let mut hi = vec![sigma];
        hi.extend(upper);
        Domain::new(lo, hi)
    }
}

/// Counterexample to cooperativity: `f_{component}` decreases when
/// `y_{variable}` increases (indices 0-based, `variable != component`).
#[derive(Debug, Clone, serde::Serialize)]
pub struct CooperativityWitness {
    pub component: usize,
    pub variable: usize,
    /// Full `(t, y…)` coordinates with the larger `y_{variable}`.
    pub point_high: Vec<f64>,
    pub point_low: Vec<f64>,
    /// `f_{component}(point_high)`, strictly below `value_low`.
    pub value_high: f64,
    pub value_low: f64,
}

/// Outcome of [`DriftSystem::check_cooperative`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct CooperativityReport {
    pub cooperative: bool,
    pub witness: Option<CooperativityWitness>,
    pub samples_used: usize,
}

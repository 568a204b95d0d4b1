//! # demethod
//!
//! The differential equation method for discrete stochastic processes, in
//! both its one-sided and two-sided forms: when a process `Z(i)` has
//! one-step expected changes bounded by (or close to) drift functions
//! `f_j(t, y)`, its scaled trajectory tracks the solution of
//! `y_j' = f_j(t, y)` inside explicit deviation envelopes
//! `n*y_j(i/n) +/- 3 lambda e^{2L i/n}`, with a failure probability
//! controlled by a Freedman-type martingale bound.
//!
//! The crate solves the limiting systems, constructs the envelopes and
//! probability bounds, and verifies both against Monte Carlo simulation:
//!
//! * [`drift_system`] — drift functions on a box domain, cooperativity
//!   spot-checks, and sampled Lipschitz/magnitude estimators.
//! * [`ode`] — fixed-step RK4 integration with linear dense output.
//! * [`envelope`] — parameter validation, envelope curves, failure
//!   probabilities, and the two-sided horizon condition.
//! * [`martingale`] — Doob decomposition of observed traces and the
//!   Freedman deviation bound.
//! * [`process`] — seeded processes with exact conditional drifts: greedy
//!   and online matching on the random graph process, and a ±1 walk.
//! * [`verifier`] — Monte Carlo envelope verification with hypothesis
//!   audits, and deterministic comparison checks.
//! * [`systems`] — built-in drift systems addressable by name.
//!
//! Everything is deterministic given a seed; trials share nothing and
//! parallelize freely.

pub mod drift_system;
pub mod envelope;
pub mod martingale;
pub mod ode;
pub mod process;
pub mod rng;
pub mod systems;
pub mod verifier;

pub use drift_system::{Domain, DriftSystem};
pub use envelope::{Envelope, Side, TheoremParams};
pub use martingale::{DoobParts, ProcessTrace};
pub use ode::Trajectory;
pub use process::Process;
pub use verifier::{ComparisonReport, VerificationReport};

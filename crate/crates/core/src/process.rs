//! Discrete stochastic processes with exact conditional drifts.
//!
//! Every process reports, at each state, the exact conditional expectation
//! of its next one-step change as a function of the realized history only —
//! that adaptedness is what makes the Doob compensator and the hypothesis
//! audits meaningful. Built-ins:
//!
//! * [`GreedyMatching`] — greedy matching on the uniform random graph
//!   process: edge `e_{i+1}` is drawn uniformly from the unseen pairs and
//!   matched iff both endpoints are still free. Exact drift
//!   `C(n-2Y, 2) / (C(n, 2) - i)`.
//! * [`OnlineMatching`] — the same edge stream with an accept/reject policy
//!   applied to matchable edges; for any policy the drift is at most the
//!   greedy drift.
//! * [`BoundedWalk`] — centered ±1 walk, the clean fixture for deviation
//!   bounds (drift 0, one-step bound 1, second moment 1).
//!
//! Trial `k` of an experiment draws from the stream seeded with
//! `base_seed + k`; identical `(process, seed)` pairs reproduce traces
//! bit-for-bit.

use std::collections::HashSet;

use rand::Rng;
use thiserror::Error;

use crate::martingale::ProcessTrace;
use crate::rng::{self, TrialRng};

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("all {total} vertex pairs already present after {drawn} draws")]
    ExhaustedEdges { total: u64, drawn: usize },
}

/// Behavioral contract for a process the verifier can drive.
///
/// `observe` returns the current `Z_j`; `exact_drift` and
/// `exact_second_moment` return `E[ΔZ_j | H_i]` and `E[(ΔZ_j)² | H_i]` at
/// the current state when the process has exact formulas (`None` switches
/// the verifier to unaudited mode). `stop` is the stopping condition: the
/// first state where it holds truncates the trace.
pub trait Process {
    type State;

    /// Number of tracked variables `a`.
    fn dim(&self) -> usize;

    /// Scaling parameter `n`.
    fn n(&self) -> u64;

    /// Nominal number of steps `m = ⌊σn⌋`.
    fn horizon(&self) -> usize;

    /// Initial condition of the limit system, `ỹ_j = lim Z_j(0)/n`.
    fn limit_initial(&self) -> Vec<f64>;

    fn init(&self, rng: &mut TrialRng) -> Self::State;

    fn step(&self, state: &mut Self::State, rng: &mut TrialRng) -> Result<(), ProcessError>;

    fn observe(&self, state: &Self::State) -> Vec<f64>;

    fn exact_drift(&self, state: &Self::State) -> Option<Vec<f64>>;

    fn exact_second_moment(&self, state: &Self::State) -> Option<Vec<f64>>;

    fn stop(&self, _state: &Self::State) -> bool {
        false
    }
}

/// Run one seeded realization: step until the stopping condition or the
/// horizon, recording observations and exact drifts along the way. Process
/// errors truncate the trace and leave a diagnostic instead of failing.
pub fn run_trace<P: Process>(process: &P, seed: u64) -> ProcessTrace {
    let mut stream = rng::seeded(seed);
    let a = process.dim();
    let m = process.horizon();
    let mut state = process.init(&mut stream);

    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(m + 1); a];
    let mut drifts: Vec<Vec<f64>> = vec![Vec::with_capacity(m); a];
    let mut moments: Vec<Vec<f64>> = vec![Vec::with_capacity(m); a];
    let mut have_drifts = true;
    let mut have_moments = true;
    let mut stop_step = m;
    let mut diagnostic = None;

    let z0 = process.observe(&state);
    for j in 0..a {
        values[j].push(z0[j]);
    }
    for i in 0..m {
        if process.stop(&state) {
            stop_step = i;
            break;
        }
        match process.exact_drift(&state) {
            Some(d) => {
                for j in 0..a {
                    drifts[j].push(d[j]);
                }
            }
            None => have_drifts = false,
        }
        match process.exact_second_moment(&state) {
            Some(s) => {
                for j in 0..a {
                    moments[j].push(s[j]);
                }
            }
            None => have_moments = false,
        }
        if let Err(e) = process.step(&mut state, &mut stream) {
            // Roll back the drift recorded for the step that never ran.
            for j in 0..a {
                if have_drifts {
                    drifts[j].pop();
                }
                if have_moments {
                    moments[j].pop();
                }
            }
            diagnostic = Some(e.to_string());
            stop_step = i;
            break;
        }
        let z = process.observe(&state);
        for j in 0..a {
            values[j].push(z[j]);
        }
    }
    ProcessTrace {
        n: process.n(),
        horizon: m,
        values,
        drifts: have_drifts.then_some(drifts),
        second_moments: have_moments.then_some(moments),
        stop_step,
        diagnostic,
    }
}

/// Evolving state of a random graph process with an online matching.
#[derive(Debug, Clone)]
pub struct GraphProcessState {
    pub vertex_count: u32,
    /// Present edges as normalized `(min, max)` pairs; `|edges| = step`.
    pub edges: HashSet<(u32, u32)>,
    pub step: usize,
    pub matched: Vec<bool>,
    /// Matching size (`Y` for greedy, `Z` for online variants).
    pub matching_size: u64,
}

impl GraphProcessState {
    fn empty(vertex_count: u32) -> Self {
        Self {
            vertex_count,
            edges: HashSet::new(),
            step: 0,
            matched: vec![false; vertex_count as usize],
            matching_size: 0,
        }
    }

    /// Draw a uniform unseen pair by rejection against the present-edge
    /// set; O(1) expected retries at the linear edge densities used here.
    fn draw_unseen_edge(&self, rng: &mut TrialRng) -> Result<(u32, u32), ProcessError> {
        let n = self.vertex_count;
        let total = n as u64 * (n as u64 - 1) / 2;
        if self.step as u64 >= total {
            return Err(ProcessError::ExhaustedEdges {
                total,
                drawn: self.step,
            });
        }
        loop {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if !self.edges.contains(&e) {
                return Ok(e);
            }
        }
    }

}

/// Exact greedy drift `C(n-2Y, 2) / (C(n, 2) - i)`: among the unseen pairs,
/// exactly `C(n-2Y, 2)` join two free vertices (every pair of free vertices
/// is unseen — a seen pair of free vertices would have been matched).
pub fn greedy_exact_drift(n: u64, matching_size: u64, step: usize) -> f64 {
    let free = n - 2 * matching_size;
    let favorable = free * free.saturating_sub(1);
    let pool = n * (n - 1) - 2 * step as u64;
    favorable as f64 / pool as f64
}

/// Greedy matching on the uniform random graph process over `⌊c·n⌋` steps.
#[derive(Debug, Clone)]
pub struct GreedyMatching {
    pub n: u64,
    /// Horizon in units of `n`: the process draws `m = ⌊c·n⌋` edges.
    pub c: f64,
}

impl Process for GreedyMatching {
    type State = GraphProcessState;

    fn dim(&self) -> usize {
        1
    }

    fn n(&self) -> u64 {
        self.n
    }

    fn horizon(&self) -> usize {
        (self.c * self.n as f64).floor() as usize
    }

    fn limit_initial(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn init(&self, _rng: &mut TrialRng) -> GraphProcessState {
        GraphProcessState::empty(self.n as u32)
    }

    fn step(&self, state: &mut GraphProcessState, rng: &mut TrialRng) -> Result<(), ProcessError> {
        let (u, v) = state.draw_unseen_edge(rng)?;
        state.edges.insert((u, v));
        state.step += 1;
        if !state.matched[u as usize] && !state.matched[v as usize] {
            state.matched[u as usize] = true;
            state.matched[v as usize] = true;
            state.matching_size += 1;
        }
        Ok(())
    }

    fn observe(&self, state: &GraphProcessState) -> Vec<f64> {
        vec![state.matching_size as f64]
    }

    fn exact_drift(&self, state: &GraphProcessState) -> Option<Vec<f64>> {
        Some(vec![greedy_exact_drift(
            self.n,
            state.matching_size,
            state.step,
        )])
    }

    /// `ΔY ∈ {0, 1}`, so the conditional second moment equals the drift.
    fn exact_second_moment(&self, state: &GraphProcessState) -> Option<Vec<f64>> {
        self.exact_drift(state)
    }
}

/// Accept/reject rule for matchable edges.
///
/// Policies are adapted: the always-accept and always-reject rules are
/// functions of the step alone, and the thinned rule draws one auxiliary
/// fair bit per matchable edge from the trial's seeded stream, which
/// formally extends the history the process is adapted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchingPolicy {
    /// Take every matchable edge — reproduces greedy exactly.
    AlwaysAccept,
    /// Take nothing; `Z ≡ 0`.
    AlwaysReject,
    /// Take a matchable edge iff an auxiliary seeded bit is even, thinning
    /// the greedy drift by exactly 1/2.
    ParityThinned,
}

impl MatchingPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            MatchingPolicy::AlwaysAccept => "always-accept",
            MatchingPolicy::AlwaysReject => "always-reject",
            MatchingPolicy::ParityThinned => "parity-thinned",
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "always-accept" => Some(MatchingPolicy::AlwaysAccept),
            "always-reject" => Some(MatchingPolicy::AlwaysReject),
            "parity-thinned" => Some(MatchingPolicy::ParityThinned),
            _ => None,
        }
    }

    /// Drift multiplier relative to greedy.
    fn thinning(&self) -> f64 {
        match self {
            MatchingPolicy::AlwaysAccept => 1.0,
            MatchingPolicy::AlwaysReject => 0.0,
            MatchingPolicy::ParityThinned => 0.5,
        }
    }
}

/// An online matching algorithm on the same edge stream as greedy: each
/// arriving edge is irrevocably accepted or rejected by the policy. For any
/// policy the exact drift is the greedy drift times the acceptance
/// thinning, hence never above it.
#[derive(Debug, Clone)]
pub struct OnlineMatching {
    pub n: u64,
    pub c: f64,
    pub policy: MatchingPolicy,
}

impl Process for OnlineMatching {
    type State = GraphProcessState;

    fn dim(&self) -> usize {
        1
    }

    fn n(&self) -> u64 {
        self.n
    }

    fn horizon(&self) -> usize {
        (self.c * self.n as f64).floor() as usize
    }

    fn limit_initial(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn init(&self, _rng: &mut TrialRng) -> GraphProcessState {
        GraphProcessState::empty(self.n as u32)
    }

    fn step(&self, state: &mut GraphProcessState, rng: &mut TrialRng) -> Result<(), ProcessError> {
        let (u, v) = state.draw_unseen_edge(rng)?;
        state.edges.insert((u, v));
        state.step += 1;
        let matchable = !state.matched[u as usize] && !state.matched[v as usize];
        if matchable {
            let accept = match self.policy {
                MatchingPolicy::AlwaysAccept => true,
                MatchingPolicy::AlwaysReject => false,
                MatchingPolicy::ParityThinned => rng.gen::<u32>() % 2 == 0,
            };
            if accept {
                state.matched[u as usize] = true;
                state.matched[v as usize] = true;
                state.matching_size += 1;
            }
        }
        Ok(())
    }

    fn observe(&self, state: &GraphProcessState) -> Vec<f64> {
        vec![state.matching_size as f64]
    }

    fn exact_drift(&self, state: &GraphProcessState) -> Option<Vec<f64>> {
        let greedy = greedy_exact_drift(self.n, state.matching_size, state.step);
        Some(vec![self.policy.thinning() * greedy])
    }

    fn exact_second_moment(&self, state: &GraphProcessState) -> Option<Vec<f64>> {
        self.exact_drift(state)
    }
}

/// Centered ±1 random walk over `⌊σn⌋` steps.
#[derive(Debug, Clone)]
pub struct BoundedWalk {
    pub n: u64,
    pub sigma: f64,
    pub initial: f64,
}

impl Process for BoundedWalk {
    type State = f64;

    fn dim(&self) -> usize {
        1
    }

    fn n(&self) -> u64 {
        self.n
    }

    fn horizon(&self) -> usize {
        (self.sigma * self.n as f64).floor() as usize
    }

    fn limit_initial(&self) -> Vec<f64> {
        vec![self.initial / self.n as f64]
    }

    fn init(&self, _rng: &mut TrialRng) -> f64 {
        self.initial
    }

    fn step(&self, state: &mut f64, rng: &mut TrialRng) -> Result<(), ProcessError> {
        *state += if rng.gen::<bool>() { 1.0 } else { -1.0 };
        Ok(())
    }

    fn observe(&self, state: &f64) -> Vec<f64> {
        vec![*state]
    }

    fn exact_drift(&self, _state: &f64) -> Option<Vec<f64>> {
        Some(vec![0.0])
    }

    fn exact_second_moment(&self, _state: &f64) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }
}

/// A built-in process selected by name, as the CLI config does.
#[derive(Debug, Clone)]
pub enum BuiltinProcess {
    Greedy(GreedyMatching),
    Online(OnlineMatching),
    Walk(BoundedWalk),
}

#[derive(Debug, Clone)]
pub enum BuiltinState {
    Graph(GraphProcessState),
    Walk(f64),
}

impl BuiltinProcess {
    /// Construct from a CLI-style name: `greedy-matching`,
    /// `online-matching` (with a policy), or `bounded-walk`.
    pub fn by_name(
        name: &str,
        n: u64,
        horizon_scale: f64,
        policy: Option<MatchingPolicy>,
        initial: f64,
    ) -> Option<Self> {
        match name {
            "greedy-matching" => Some(BuiltinProcess::Greedy(GreedyMatching {
                n,
                c: horizon_scale,
            })),
            "online-matching" => Some(BuiltinProcess::Online(OnlineMatching {
                n,
                c: horizon_scale,
                policy: policy?,
            })),
            "bounded-walk" => Some(BuiltinProcess::Walk(BoundedWalk {
                n,
                sigma: horizon_scale,
                initial,
            })),
            _ => None,
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            BuiltinProcess::Greedy($p) => $body,
            BuiltinProcess::Online($p) => $body,
            BuiltinProcess::Walk($p) => $body,
        }
    };
}

impl Process for BuiltinProcess {
    type State = BuiltinState;

    fn dim(&self) -> usize {
        dispatch!(self, p => p.dim())
    }

    fn n(&self) -> u64 {
        dispatch!(self, p => p.n())
    }

    fn horizon(&self) -> usize {
        dispatch!(self, p => p.horizon())
    }

    fn limit_initial(&self) -> Vec<f64> {
        dispatch!(self, p => p.limit_initial())
    }

    fn init(&self, rng: &mut TrialRng) -> BuiltinState {
        match self {
            BuiltinProcess::Greedy(p) => BuiltinState::Graph(p.init(rng)),
            BuiltinProcess::Online(p) => BuiltinState::Graph(p.init(rng)),
            BuiltinProcess::Walk(p) => BuiltinState::Walk(p.init(rng)),
        }
    }

    fn step(&self, state: &mut BuiltinState, rng: &mut TrialRng) -> Result<(), ProcessError> {
        match (self, state) {
            (BuiltinProcess::Greedy(p), BuiltinState::Graph(s)) => p.step(s, rng),
            (BuiltinProcess::Online(p), BuiltinState::Graph(s)) => p.step(s, rng),
            (BuiltinProcess::Walk(p), BuiltinState::Walk(s)) => p.step(s, rng),
            _ => unreachable!("state constructed by init"),
        }
    }

    fn observe(&self, state: &BuiltinState) -> Vec<f64> {
        match (self, state) {
            (BuiltinProcess::Greedy(p), BuiltinState::Graph(s)) => p.observe(s),
            (BuiltinProcess::Online(p), BuiltinState::Graph(s)) => p.observe(s),
            (BuiltinProcess::Walk(p), BuiltinState::Walk(s)) => p.observe(s),
            _ => unreachable!("state constructed by init"),
        }
    }

    fn exact_drift(&self, state: &BuiltinState) -> Option<Vec<f64>> {
        match (self, state) {
            (BuiltinProcess::Greedy(p), BuiltinState::Graph(s)) => p.exact_drift(s),
            (BuiltinProcess::Online(p), BuiltinState::Graph(s)) => p.exact_drift(s),
            (BuiltinProcess::Walk(p), BuiltinState::Walk(s)) => p.exact_drift(s),
            _ => unreachable!("state constructed by init"),
        }
    }

    fn exact_second_moment(&self, state: &BuiltinState) -> Option<Vec<f64>> {
        match (self, state) {
            (BuiltinProcess::Greedy(p), BuiltinState::Graph(s)) => p.exact_second_moment(s),
            (BuiltinProcess::Online(p), BuiltinState::Graph(s)) => p.exact_second_moment(s),
            (BuiltinProcess::Walk(p), BuiltinState::Walk(s)) => p.exact_second_moment(s),
            _ => unreachable!("state constructed by init"),
        }
    }
}

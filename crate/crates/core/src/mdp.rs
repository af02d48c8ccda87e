//! Finite MDP representation, grid-world generation, and policy/occupancy
//! algebra.
//!
//! Occupancies are discounted state-action visitation measures: for initial
//! distribution `rho`, policy `pi` and discount `gamma`, the occupancy of a
//! pair `(s, a)` is `sum_t gamma^t P(s_t = s, a_t = a)`. They satisfy the
//! Bellman flow equations
//! `sum_a mu(s,a) - gamma * sum_{s',a} T(s | s', a) mu(s', a) = rho(s)`
//! and carry total mass `1 / (1 - gamma)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::linalg::{self, Matrix};
use crate::math;
use crate::perspective::FeatureMap;

/// Tolerance for probability rows summing to one.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance for occupancy mass matching `1 / (1 - gamma)`.
pub const MASS_TOL: f64 = 1e-8;
/// Tolerance for the Bellman flow residual of an occupancy.
pub const FLOW_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MdpError {
    /// Requested objects do not leave an empty cell in the grid.
    Capacity,
    /// A count or parameter is out of range.
    InvalidParam(&'static str),
    /// A distribution fails its normalization or range invariant.
    InvalidDistribution(&'static str),
    /// Dimensions of two arguments disagree.
    DimensionMismatch,
    /// The linear flow system could not be solved.
    SingularSystem,
    /// A candidate occupancy violates mass or flow invariants.
    InvalidOccupancy(&'static str),
}

impl fmt::Display for MdpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpError::Capacity => write!(f, "objects do not fit in the grid"),
            MdpError::InvalidParam(what) => write!(f, "invalid parameter: {what}"),
            MdpError::InvalidDistribution(what) => write!(f, "invalid distribution: {what}"),
            MdpError::DimensionMismatch => write!(f, "dimension mismatch"),
            MdpError::SingularSystem => write!(f, "linear flow system is singular"),
            MdpError::InvalidOccupancy(what) => write!(f, "invalid occupancy: {what}"),
        }
    }
}

impl core::error::Error for MdpError {}

/// A finite discounted MDP with dense transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Flattened `[s][a][s']`.
    transitions: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::InvalidParam("state/action counts must be positive"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(MdpError::InvalidParam("discount must lie in (0,1)"));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(MdpError::DimensionMismatch);
        }
        if initial_dist.len() != n_states {
            return Err(MdpError::DimensionMismatch);
        }
        for chunk in transitions.chunks(n_states) {
            let mut sum = 0.0;
            for &p in chunk {
                if !((-PROB_TOL..=1.0 + PROB_TOL).contains(&p)) {
                    return Err(MdpError::InvalidDistribution("transition probability out of [0,1]"));
                }
                sum += p;
            }
            if math::abs(sum - 1.0) > PROB_TOL {
                return Err(MdpError::InvalidDistribution("transition row does not sum to 1"));
            }
        }
        let rho_sum: f64 = initial_dist.iter().sum();
        if math::abs(rho_sum - 1.0) > PROB_TOL
            || initial_dist.iter().any(|&p| !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p))
        {
            return Err(MdpError::InvalidDistribution("initial distribution"));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            initial_dist,
            discount,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of state-action pairs, the length of occupancy vectors.
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    #[inline]
    pub fn pair_index(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    #[inline]
    pub fn transition(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions[(state * self.n_actions + action) * self.n_states + next]
    }

    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let base = (state * self.n_actions + action) * self.n_states;
        &self.transitions[base..base + self.n_states]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }
}

/// A stationary stochastic policy, stored row-major `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if probs.len() != n_states * n_actions {
            return Err(MdpError::DimensionMismatch);
        }
        for row in probs.chunks(n_actions) {
            let mut sum = 0.0;
            for &p in row {
                if p < -PROB_TOL {
                    return Err(MdpError::InvalidDistribution("negative action probability"));
                }
                sum += p;
            }
            if math::abs(sum - 1.0) > PROB_TOL {
                return Err(MdpError::InvalidDistribution("policy row does not sum to 1"));
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic policy taking `actions[s]` in state `s`.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { n_states, n_actions, probs }
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// A discounted state-action occupancy measure, validated against the MDP it
/// was produced for.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    mu: Vec<f64>,
    n_states: usize,
    n_actions: usize,
    discount: f64,
}

impl Occupancy {
    /// Validates mass and flow invariants; entries in `[-1e-9, 0)` are
    /// clamped to zero to absorb solver roundoff.
    pub fn new(mdp: &TabularMdp, mut mu: Vec<f64>) -> Result<Self, MdpError> {
        if mu.len() != mdp.n_pairs() {
            return Err(MdpError::DimensionMismatch);
        }
        for v in mu.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-9 {
                    return Err(MdpError::InvalidOccupancy("negative entry"));
                }
                *v = 0.0;
            }
        }
        let mass: f64 = mu.iter().sum();
        let target = 1.0 / (1.0 - mdp.discount);
        if math::abs(mass - target) > MASS_TOL {
            return Err(MdpError::InvalidOccupancy("mass differs from 1/(1-gamma)"));
        }
        if flow_residual(mdp, &mu) > FLOW_TOL {
            return Err(MdpError::InvalidOccupancy("flow residual too large"));
        }
        Ok(Self {
            mu,
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            discount: mdp.discount,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mass(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }
}

/// Max-norm residual of the Bellman flow equations for a candidate occupancy.
pub fn flow_residual(mdp: &TabularMdp, mu: &[f64]) -> f64 {
    let mut inflow = vec![0.0; mdp.n_states];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let m = mu[mdp.pair_index(s, a)];
            if m == 0.0 {
                continue;
            }
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p != 0.0 {
                    inflow[next] += p * m;
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for s in 0..mdp.n_states {
        let out: f64 = (0..mdp.n_actions).map(|a| mu[mdp.pair_index(s, a)]).sum();
        let resid = math::abs(out - mdp.discount * inflow[s] - mdp.initial_dist[s]);
        worst = worst.max(resid);
    }
    worst
}

/// A generated object-collection grid world with linear rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorldInstance {
    grid_side: usize,
    object_types: usize,
    objects_per_type: usize,
    /// `(cell index, type index)` pairs, type-major in placement order.
    objects: Vec<(usize, usize)>,
    reward_weights: Vec<f64>,
    mdp: TabularMdp,
    features: FeatureMap,
}

impl GridWorldInstance {
    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn object_types(&self) -> usize {
        self.object_types
    }

    pub fn objects_per_type(&self) -> usize {
        self.objects_per_type
    }

    pub fn objects(&self) -> &[(usize, usize)] {
        &self.objects
    }

    pub fn reward_weights(&self) -> &[f64] {
        &self.reward_weights
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Object type present at `cell`, if any.
    pub fn object_type_at(&self, cell: usize) -> Option<usize> {
        self.objects.iter().find(|&&(c, _)| c == cell).map(|&(_, t)| t)
    }

    /// Replaces the reward weights, keeping layout and dynamics fixed.
    pub fn set_reward_weights(&mut self, weights: Vec<f64>) -> Result<(), MdpError> {
        if weights.len() != self.object_types {
            return Err(MdpError::DimensionMismatch);
        }
        if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(MdpError::InvalidParam("reward weights must lie in [0,1]"));
        }
        self.reward_weights = weights;
        Ok(())
    }

    /// Ground-truth reward over state-action pairs:
    /// `r(s, a) = <w*, phi(s)>`, identical across actions.
    pub fn reward_vector(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.mdp.n_pairs()];
        for &(cell, ty) in &self.objects {
            let w = self.reward_weights[ty];
            for a in 0..self.mdp.n_actions() {
                r[self.mdp.pair_index(cell, a)] = w;
            }
        }
        r
    }
}

/// Builds a random grid world: four deterministic cardinal moves clipped at
/// walls; acting in an object cell collects the object's reward and
/// teleports the agent to a uniformly random empty cell; the start
/// distribution is uniform over empty cells.
pub fn build_gridworld(
    grid_side: usize,
    object_types: usize,
    objects_per_type: usize,
    discount: f64,
    rng: &mut impl Rng,
) -> Result<GridWorldInstance, MdpError> {
    if grid_side == 0 || object_types == 0 || objects_per_type == 0 {
        return Err(MdpError::InvalidParam("grid parameters must be positive"));
    }
    let n_cells = grid_side * grid_side;
    let n_objects = object_types * objects_per_type;
    if n_objects >= n_cells {
        return Err(MdpError::Capacity);
    }

    let mut occupied = vec![false; n_cells];
    let mut objects = Vec::with_capacity(n_objects);
    for ty in 0..object_types {
        for _ in 0..objects_per_type {
            let cell = loop {
                let c = rng.random_range(0..n_cells);
                if !occupied[c] {
                    break c;
                }
            };
            occupied[cell] = true;
            objects.push((cell, ty));
        }
    }
    let reward_weights: Vec<f64> = (0..object_types).map(|_| rng.random::<f64>()).collect();

    let empty_cells: Vec<usize> = (0..n_cells).filter(|&c| !occupied[c]).collect();
    let n_empty = empty_cells.len();
    let teleport_p = 1.0 / n_empty as f64;

    let n_actions = 4;
    let mut transitions = vec![0.0; n_cells * n_actions * n_cells];
    for cell in 0..n_cells {
        let row = cell / grid_side;
        let col = cell % grid_side;
        for action in 0..n_actions {
            let base = (cell * n_actions + action) * n_cells;
            if occupied[cell] {
                for &e in &empty_cells {
                    transitions[base + e] = teleport_p;
                }
            } else {
                let (nr, nc) = match action {
                    0 => (row.saturating_sub(1), col),
                    1 => ((row + 1).min(grid_side - 1), col),
                    2 => (row, col.saturating_sub(1)),
                    _ => (row, (col + 1).min(grid_side - 1)),
                };
                transitions[base + nr * grid_side + nc] = 1.0;
            }
        }
    }

    let mut initial_dist = vec![0.0; n_cells];
    for &e in &empty_cells {
        initial_dist[e] = teleport_p;
    }

    let mdp = TabularMdp::new(n_cells, n_actions, transitions, initial_dist, discount)?;
    let features = FeatureMap::indicator(&mdp, object_types, &objects);
    Ok(GridWorldInstance {
        grid_side,
        object_types,
        objects_per_type,
        objects,
        reward_weights,
        mdp,
        features,
    })
}

/// Solves the linear flow system for the occupancy induced by `policy`.
pub fn occupancy_of_policy(mdp: &TabularMdp, policy: &Policy) -> Result<Occupancy, MdpError> {
    if policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions {
        return Err(MdpError::DimensionMismatch);
    }
    let n = mdp.n_states;
    // m[s][s'] = delta(s, s') - gamma * P_pi(s' -> s)
    let mut m = Matrix::identity(n);
    for from in 0..n {
        for a in 0..mdp.n_actions {
            let pa = policy.prob(from, a);
            if pa == 0.0 {
                continue;
            }
            for (to, &p) in mdp.transition_row(from, a).iter().enumerate() {
                if p != 0.0 {
                    m[(to, from)] -= mdp.discount * pa * p;
                }
            }
        }
    }
    let d = linalg::lu_solve(&m, mdp.initial_dist()).ok_or(MdpError::SingularSystem)?;
    let mut mu = vec![0.0; mdp.n_pairs()];
    for s in 0..n {
        for a in 0..mdp.n_actions {
            mu[mdp.pair_index(s, a)] = d[s] * policy.prob(s, a);
        }
    }
    Occupancy::new(mdp, mu)
}

/// Recovers the policy realizing an occupancy. Rows with visitation below
/// `1e-12` fall back to the uniform policy.
pub fn extract_policy(mu: &Occupancy) -> Policy {
    let n_states = mu.n_states();
    let n_actions = mu.n_actions();
    let mut probs = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        let total: f64 = (0..n_actions).map(|a| mu.mu()[s * n_actions + a]).sum();
        if total > 1e-12 {
            for a in 0..n_actions {
                probs[s * n_actions + a] = mu.mu()[s * n_actions + a] / total;
            }
        } else {
            for a in 0..n_actions {
                probs[s * n_actions + a] = 1.0 / n_actions as f64;
            }
        }
    }
    Policy {
        n_states,
        n_actions,
        probs,
    }
}

/// Expected discounted return `<reward, mu>`.
pub fn policy_value(mu: &Occupancy, reward: &[f64]) -> f64 {
    assert_eq!(reward.len(), mu.mu().len(), "reward dimension mismatch");
    linalg::dot(reward, mu.mu())
}

//! Executable checks of the two core results: a soundness report for the
//! matching-error bound, and the exact five-state counterexample showing
//! that per-perspective feature-trajectory distributions can be identical
//! across policies whose values differ.
//!
//! The counterexample uses exact rational arithmetic throughout: all of its
//! probabilities are dyadic, so "equals one half" is assertable without
//! tolerances.


use alloc::vec::Vec;
use core::fmt;

use num_rational::Rational64;

use crate::linalg;
use crate::lp::LpError;
use crate::math;
use crate::mdp::{GridWorldInstance, Occupancy};
use crate::perspective::{self, PerspectiveError, PerspectiveSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TheoryError {
    /// The stacked perspective matrix is zero; no bound can be evaluated.
    DegenerateStack,
    InvalidPolicy,
    Lp(LpError),
    DimensionMismatch,
}

impl fmt::Display for TheoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TheoryError::DegenerateStack => write!(f, "stacked perspective matrix is zero"),
            TheoryError::InvalidPolicy => write!(f, "policy probability outside [0,1]"),
            TheoryError::Lp(e) => write!(f, "lp failure: {e}"),
            TheoryError::DimensionMismatch => write!(f, "dimension mismatch"),
        }
    }
}

impl core::error::Error for TheoryError {}

impl From<LpError> for TheoryError {
    fn from(e: LpError) -> Self {
        TheoryError::Lp(e)
    }
}

impl From<PerspectiveError> for TheoryError {
    fn from(e: PerspectiveError) -> Self {
        match e {
            PerspectiveError::DegenerateStack => TheoryError::DegenerateStack,
            _ => TheoryError::DimensionMismatch,
        }
    }
}

const N_STATES: usize = 5;

/// The five-state, two-action, horizon-two MDP of the non-linear-reward
/// counterexample. The start state branches uniformly: "left" reaches the
/// states with features `[1,1]` and `[0,0]`, "right" the states with
/// `[0,1]` and `[1,0]`. Reward is 1 exactly on the `[1,1]` state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterexampleMdp {
    features: [[i64; 2]; N_STATES],
    /// `transition[action][next]`, rows sum to one.
    transition: [[Rational64; N_STATES]; 2],
    horizon: usize,
}

/// Action indices of the counterexample.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// A start-state policy mixing "left" with probability `p_left`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixedPolicy {
    p_left: Rational64,
}

impl MixedPolicy {
    pub fn new(p_left: Rational64) -> Result<Self, TheoryError> {
        if p_left < Rational64::new(0, 1) || p_left > Rational64::new(1, 1) {
            return Err(TheoryError::InvalidPolicy);
        }
        Ok(Self { p_left })
    }

    pub fn always_left() -> Self {
        Self { p_left: Rational64::new(1, 1) }
    }

    pub fn always_right() -> Self {
        Self { p_left: Rational64::new(0, 1) }
    }

    pub fn p_left(&self) -> Rational64 {
        self.p_left
    }
}

/// One row of a per-dimension trajectory table: the probability of seeing
/// the feature value pair `(at t=0, at t=1)` in that dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalEntry {
    pub first: i64,
    pub second: i64,
    pub probability: Rational64,
}

/// Exact per-dimension distribution over length-two feature trajectories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionMarginals {
    pub dimension: usize,
    pub entries: Vec<MarginalEntry>,
}

pub fn build_counterexample() -> CounterexampleMdp {
    let zero = Rational64::new(0, 1);
    let half = Rational64::new(1, 2);
    let mut transition = [[zero; N_STATES]; 2];
    transition[LEFT][1] = half;
    transition[LEFT][2] = half;
    transition[RIGHT][3] = half;
    transition[RIGHT][4] = half;
    CounterexampleMdp {
        features: [[2, 2], [1, 1], [0, 0], [0, 1], [1, 0]],
        transition,
        horizon: 2,
    }
}

impl CounterexampleMdp {
    pub fn features(&self) -> &[[i64; 2]; N_STATES] {
        &self.features
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition_probability(&self, action: usize, next: usize) -> Rational64 {
        self.transition[action][next]
    }

    fn reward(&self, state: usize) -> Rational64 {
        if self.features[state] == [1, 1] {
            Rational64::new(1, 1)
        } else {
            Rational64::new(0, 1)
        }
    }

    /// Probability of ending the episode in each state under the policy.
    fn second_state_distribution(&self, policy: &MixedPolicy) -> [Rational64; N_STATES] {
        let p = policy.p_left;
        let q = Rational64::new(1, 1) - p;
        let mut dist = [Rational64::new(0, 1); N_STATES];
        for next in 0..N_STATES {
            dist[next] = p * self.transition[LEFT][next] + q * self.transition[RIGHT][next];
        }
        dist
    }

    /// Exact expected cumulative reward over the two-step episode.
    pub fn value(&self, policy: &MixedPolicy) -> Rational64 {
        let mut total = self.reward(0);
        for (next, &p) in self.second_state_distribution(policy).iter().enumerate() {
            total += p * self.reward(next);
        }
        total
    }

    /// Exact per-dimension distributions of the length-two feature
    /// trajectories `(phi(S_{t=0})_d, phi(S_{t=1})_d)`.
    pub fn marginals(&self, policy: &MixedPolicy) -> Vec<DimensionMarginals> {
        let dist = self.second_state_distribution(policy);
        let mut out = Vec::with_capacity(2);
        for d in 0..2 {
            let first = self.features[0][d];
            let mut entries: Vec<MarginalEntry> = Vec::new();
            for next in 0..N_STATES {
                if dist[next] == Rational64::new(0, 1) {
                    continue;
                }
                let second = self.features[next][d];
                match entries.iter_mut().find(|e| e.first == first && e.second == second) {
                    Some(e) => e.probability += dist[next],
                    None => entries.push(MarginalEntry {
                        first,
                        second,
                        probability: dist[next],
                    }),
                }
            }
            entries.sort_by_key(|e| (e.first, e.second));
            out.push(DimensionMarginals { dimension: d, entries });
        }
        out
    }
}

/// Instantiated evaluation of the matching-error bound
/// `|<w*, delta Psi>| <= eps / sigma + rho * diam`.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// Smallest epsilon making the per-perspective matching premise true:
    /// `|V| * max_v |A_v (Psi_E - Psi_L)|_2`.
    pub epsilon: f64,
    pub sigma: f64,
    pub rho: f64,
    pub diam_bound: f64,
    pub bound_value: f64,
    pub actual_gap: f64,
    pub holds: bool,
}

/// Builds the report for a pair of occupancies on a grid world: measures the
/// matching precision actually achieved, evaluates the bound with the
/// LP-based diameter upper bound, and checks the conclusion.
pub fn theorem1_report(
    instance: &GridWorldInstance,
    perspectives: &PerspectiveSet,
    mu_e: &Occupancy,
    mu_l: &Occupancy,
) -> Result<Theorem1Report, TheoryError> {
    let features = instance.features();
    if perspectives.feature_dim() != features.feature_dim() {
        return Err(TheoryError::DimensionMismatch);
    }
    let psi_e = features.psi(mu_e.mu());
    let psi_l = features.psi(mu_l.mu());
    let delta = linalg::sub(&psi_e, &psi_l);

    let mut worst = 0.0f64;
    for p in perspectives.iter() {
        worst = worst.max(linalg::norm2(&p.apply(&delta)));
    }
    let epsilon = perspectives.len() as f64 * worst;

    let diam_bound = perspective::diam_upper_bound(instance.mdp(), features)?;
    let analysis = perspective::analyze_stack(perspectives, instance.reward_weights(), diam_bound)?;

    let bound_value = epsilon / analysis.sigma() + analysis.rho() * diam_bound;
    let actual_gap = math::abs(linalg::dot(instance.reward_weights(), &delta));
    Ok(Theorem1Report {
        epsilon,
        sigma: analysis.sigma(),
        rho: analysis.rho(),
        diam_bound,
        bound_value,
        actual_gap,
        holds: actual_gap <= bound_value + 1e-6,
    })
}

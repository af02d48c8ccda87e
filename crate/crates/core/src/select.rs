//! Perspective selection strategies: round-robin, greedy log-det design,
//! similarity-based sampling over the known transformation matrices,
//! dissimilarity sampling over tracked feature estimates, and a residual
//! UCB rule.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::demo::sample_categorical;
use crate::linalg::{self, Matrix};
use crate::lp::MatchResult;
use crate::math;
use crate::perspective::{Perspective, PerspectiveSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectError {
    InvalidParam(&'static str),
    DimensionMismatch,
}

impl fmt::Display for SelectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectError::InvalidParam(what) => write!(f, "invalid parameter: {what}"),
            SelectError::DimensionMismatch => write!(f, "dimension mismatch"),
        }
    }
}

impl core::error::Error for SelectError {}

/// Per-run bookkeeping shared by the selection strategies: selection counts,
/// the accumulated ridge design matrix, exponentially weighted feature
/// estimates, and the latest matching residuals.
#[derive(Debug, Clone)]
pub struct SelectionState {
    counts: Vec<u64>,
    v: Matrix,
    lambda: f64,
    alpha: f64,
    ewa: Vec<Option<Vec<f64>>>,
    last_residuals: Vec<Option<f64>>,
    t: u64,
}

impl SelectionState {
    pub fn new(
        feature_dim: usize,
        n_perspectives: usize,
        lambda: f64,
        alpha: f64,
    ) -> Result<Self, SelectError> {
        if !(lambda > 0.0) {
            return Err(SelectError::InvalidParam("lambda must be positive"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SelectError::InvalidParam("alpha must lie in [0,1]"));
        }
        let mut v = Matrix::zeros(feature_dim, feature_dim);
        for i in 0..feature_dim {
            v[(i, i)] = lambda;
        }
        Ok(Self {
            counts: vec![0; n_perspectives],
            v,
            lambda,
            alpha,
            ewa: vec![None; n_perspectives],
            last_residuals: vec![None; n_perspectives],
            t: 0,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn design_matrix(&self) -> &Matrix {
        &self.v
    }

    pub fn log_det_v(&self) -> f64 {
        linalg::logdet_spd(&self.v).expect("V stays positive definite for lambda > 0")
    }

    pub fn ewa(&self, idx: usize) -> Option<&[f64]> {
        self.ewa[idx].as_deref()
    }

    pub fn last_residual(&self, idx: usize) -> Option<f64> {
        self.last_residuals[idx]
    }

    /// Books a selection: increments the count and adds `A^T A` to the
    /// design matrix.
    pub fn record_selection(&mut self, idx: usize, perspective: &Perspective) {
        self.counts[idx] += 1;
        self.t += 1;
        self.v.add_gram(perspective.matrix());
    }

    /// Exponentially weighted update of a perspective's feature estimate:
    /// first write sets the estimate, later writes apply
    /// `ewa <- alpha * ewa + (1 - alpha) * value`.
    pub fn update_ewa(&mut self, idx: usize, value: &[f64]) {
        match &mut self.ewa[idx] {
            Some(current) => {
                for (m, &v) in current.iter_mut().zip(value) {
                    *m = self.alpha * *m + (1.0 - self.alpha) * v;
                }
            }
            slot @ None => *slot = Some(value.to_vec()),
        }
    }

    /// Stores the residuals of the latest matching result.
    pub fn set_residuals(&mut self, result: &MatchResult) {
        for (slot, r) in self.last_residuals.iter_mut().zip(&result.residuals) {
            if r.is_some() {
                *slot = *r;
            }
        }
    }
}

/// Round-robin selection: perspective `t mod K`.
pub fn next_uniform(state: &SelectionState) -> usize {
    (state.t % state.counts.len() as u64) as usize
}

/// Greedy D-optimal pick: the perspective maximizing
/// `log det(V + A^T A)`, ties broken by lowest index.
pub(crate) fn argmax_logdet(v: &Matrix, perspectives: &PerspectiveSet) -> usize {
    let mut best_idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, p) in perspectives.iter().enumerate() {
        let mut candidate = v.clone();
        candidate.add_gram(p.matrix());
        let ld = linalg::logdet_spd(&candidate)
            .expect("V + A^T A stays positive definite");
        if ld > best + 1e-12 {
            best = ld;
            best_idx = i;
        }
    }
    best_idx
}

/// Variance-minimizing strategy over known transformations.
pub fn next_active_var(state: &SelectionState, perspectives: &PerspectiveSet) -> usize {
    argmax_logdet(&state.v, perspectives)
}

/// Selection probabilities of the similarity strategy: pairwise cosine
/// similarity of the flattened transformation matrices, scores are inverse
/// summed similarities, floored to stay finite.
pub fn active_sim_probabilities(perspectives: &PerspectiveSet, floor: f64) -> Vec<f64> {
    let k = perspectives.len();
    let norms: Vec<f64> = perspectives.iter().map(|p| p.matrix().frobenius_norm()).collect();
    let mut scores = vec![0.0; k];
    for i in 0..k {
        let mut total = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let denom = (norms[i] * norms[j]).max(floor);
            let sim = perspectives[i].matrix().frobenius_dot(perspectives[j].matrix()) / denom;
            total += sim.max(floor);
        }
        scores[i] = 1.0 / total.max(floor);
    }
    let sum: f64 = scores.iter().sum();
    scores.iter().map(|s| s / sum).collect()
}

/// Samples a perspective with probability inversely proportional to its
/// summed similarity to all other perspectives.
pub fn next_active_sim(
    perspectives: &PerspectiveSet,
    floor: f64,
    rng: &mut impl Rng,
) -> usize {
    sample_categorical(rng, &active_sim_probabilities(perspectives, floor))
}

/// Pearson correlation of two equal-length vectors with floored standard
/// deviations; zero when lengths differ or variances degenerate.
fn floored_correlation(x: &[f64], y: &[f64], floor: f64) -> f64 {
    if x.len() != y.len() || x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    let denom = (math::sqrt(vx / n) * math::sqrt(vy / n)).max(floor);
    (cov / n / denom).clamp(-1.0, 1.0)
}

/// Selection probabilities of dissimilarity sampling once every perspective
/// has an estimate: similarities are correlations of the tracked feature
/// estimates mapped to `[0, 1]` via `(corr + 1) / 2`.
pub fn dissimilarity_probabilities(state: &SelectionState, floor: f64) -> Vec<f64> {
    let k = state.counts.len();
    let mut scores = vec![0.0; k];
    for i in 0..k {
        let mut total = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let corr = match (state.ewa(i), state.ewa(j)) {
                (Some(a), Some(b)) => floored_correlation(a, b, floor),
                _ => 0.0,
            };
            total += (corr + 1.0) / 2.0;
        }
        scores[i] = 1.0 / total.max(floor);
    }
    let sum: f64 = scores.iter().sum();
    scores.iter().map(|s| s / sum).collect()
}

/// Dissimilarity sampling: sweeps unselected perspectives first, then
/// samples inversely to summed feature-estimate correlation. The caller
/// updates the estimates via [`SelectionState::update_ewa`] after the step.
pub fn next_dissimilarity(state: &SelectionState, floor: f64, rng: &mut impl Rng) -> usize {
    if let Some(idx) = state.counts.iter().position(|&c| c == 0) {
        return idx;
    }
    sample_categorical(rng, &dissimilarity_probabilities(state, floor))
}

/// Residual UCB: sweeps unselected perspectives first, then picks
/// `argmax eps_i + c * sqrt(log t / N_i)`, ties broken by lowest index.
pub fn next_ucb_residual(state: &SelectionState, c: f64) -> usize {
    if let Some(idx) = state.counts.iter().position(|&n| n == 0) {
        return idx;
    }
    let t = state.t.max(1) as f64;
    let mut best_idx = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..state.counts.len() {
        let eps = state.last_residuals[i].unwrap_or(0.0);
        let bonus = c * math::sqrt(math::ln(t) / state.counts[i] as f64);
        let score = eps + bonus;
        if score > best + 1e-15 {
            best = score;
            best_idx = i;
        }
    }
    best_idx
}

//! Expert demonstration sampling and per-perspective observation
//! bookkeeping. One demonstration is a truncated rollout; its discounted
//! feature sum is what a perspective observes.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::mdp::{Policy, TabularMdp};
use crate::perspective::{FeatureMap, Perspective, PerspectiveSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DemoError {
    DimensionMismatch,
}

impl fmt::Display for DemoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemoError::DimensionMismatch => write!(f, "dimension mismatch"),
        }
    }
}

impl core::error::Error for DemoError {}

/// Draws an index from a probability vector using a single uniform draw.
pub(crate) fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A truncated state-action trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    states: Vec<usize>,
    actions: Vec<usize>,
}

impl Demonstration {
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// Rolls out `horizon` steps from the MDP's initial distribution.
pub fn rollout(
    mdp: &TabularMdp,
    policy: &Policy,
    horizon: usize,
    rng: &mut impl Rng,
) -> Demonstration {
    assert!(horizon >= 1);
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut state = sample_categorical(rng, mdp.initial_dist());
    for _ in 0..horizon {
        let action = sample_categorical(rng, policy.row(state));
        states.push(state);
        actions.push(action);
        state = sample_categorical(rng, mdp.transition_row(state, action));
    }
    Demonstration { states, actions }
}

/// Discounted feature sum of one truncated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    psi: Vec<f64>,
}

impl FeatureSample {
    pub fn new(psi: Vec<f64>) -> Self {
        Self { psi }
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
}

/// Computes the discounted feature sum of a demonstration.
pub fn features_of(
    mdp: &TabularMdp,
    features: &FeatureMap,
    demo: &Demonstration,
) -> FeatureSample {
    let mut psi = vec![0.0; features.feature_dim()];
    let mut discount = 1.0;
    for (&s, &a) in demo.states().iter().zip(demo.actions()) {
        let pair = mdp.pair_index(s, a);
        for j in 0..features.feature_dim() {
            psi[j] += discount * features.matrix()[(j, pair)];
        }
        discount *= mdp.discount();
    }
    FeatureSample { psi }
}

/// Samples one demonstration and returns its discounted feature sum
/// `sum_t gamma^t phi(s_t, a_t)`.
pub fn sample_demonstration(
    mdp: &TabularMdp,
    policy: &Policy,
    features: &FeatureMap,
    horizon: usize,
    rng: &mut impl Rng,
) -> FeatureSample {
    let demo = rollout(mdp, policy, horizon, rng);
    features_of(mdp, features, &demo)
}

/// Observation of a feature sample through a perspective: `A psi`.
pub fn observe(sample: &FeatureSample, perspective: &Perspective) -> Result<Vec<f64>, DemoError> {
    if sample.psi().len() != perspective.feature_dim() {
        return Err(DemoError::DimensionMismatch);
    }
    Ok(perspective.apply(sample.psi()))
}

/// Running mean of observed vectors per perspective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStore {
    counts: Vec<u64>,
    means: Vec<Vec<f64>>,
}

impl ObservationStore {
    pub fn new(perspectives: &PerspectiveSet) -> Self {
        Self {
            counts: vec![0; perspectives.len()],
            means: perspectives.iter().map(|p| vec![0.0; p.output_dim()]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    /// Mean observation for a perspective, defined only once observed.
    pub fn mean(&self, idx: usize) -> Option<&[f64]> {
        (self.counts[idx] > 0).then(|| self.means[idx].as_slice())
    }

    /// Records an observation by the incremental-mean rule.
    pub fn record(&mut self, idx: usize, observation: &[f64]) -> Result<(), DemoError> {
        if observation.len() != self.means[idx].len() {
            return Err(DemoError::DimensionMismatch);
        }
        self.counts[idx] += 1;
        let n = self.counts[idx] as f64;
        for (m, &o) in self.means[idx].iter_mut().zip(observation) {
            *m += (o - *m) / n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::mdp::TabularMdp;
    use crate::perspective::{basis_perspectives, ConstructionTag, Perspective, PerspectiveSet};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_state(gamma: f64) -> (TabularMdp, FeatureMap) {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], gamma).unwrap();
        let f = FeatureMap::new(Matrix::from_rows(&[&[1.0]]));
        (mdp, f)
    }

    #[test]
    fn single_state_feature_sum_approaches_geometric_limit() {
        let (mdp, f) = single_state(0.3);
        let pi = Policy::uniform(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sample = sample_demonstration(&mdp, &pi, &f, 30, &mut rng);
        assert_abs_diff_eq!(sample.psi()[0], 1.0 / 0.7, epsilon = 1e-12);
    }

    #[test]
    fn horizon_one_returns_first_feature() {
        let (mdp, f) = single_state(0.3);
        let pi = Policy::uniform(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sample = sample_demonstration(&mdp, &pi, &f, 1, &mut rng);
        assert_eq!(sample.psi(), [1.0]);
    }

    #[test]
    fn observe_projects_through_perspective() {
        let psi = FeatureSample::new(vec![0.1, 0.5, 0.0, 0.0]);
        let set = basis_perspectives(4, 0);
        assert_eq!(observe(&psi, &set[1]).unwrap(), vec![0.5]);

        let zero = FeatureSample::new(vec![0.0; 4]);
        assert_eq!(observe(&zero, &set[1]).unwrap(), vec![0.0]);

        let identity = Perspective::new(Matrix::identity(4), "id".into(), ConstructionTag::Custom);
        assert_eq!(observe(&psi, &identity).unwrap(), psi.psi());

        let short = FeatureSample::new(vec![1.0, 2.0]);
        assert_eq!(observe(&short, &set[0]).unwrap_err(), DemoError::DimensionMismatch);
    }

    #[test]
    fn store_tracks_running_mean() {
        let set = PerspectiveSet::new(vec![Perspective::from_row(
            &[1.0],
            "p".into(),
            ConstructionTag::Custom,
        )])
        .unwrap();
        let mut store = ObservationStore::new(&set);
        assert_eq!(store.mean(0), None);
        store.record(0, &[2.0]).unwrap();
        assert_eq!(store.count(0), 1);
        assert_eq!(store.mean(0).unwrap(), [2.0]);

        let mut store2 = ObservationStore::new(&set);
        store2.record(0, &[1.0]).unwrap();
        store2.record(0, &[3.0]).unwrap();
        assert_eq!(store2.count(0), 2);
        assert_abs_diff_eq!(store2.mean(0).unwrap()[0], 2.0, epsilon = 1e-15);

        assert_eq!(store2.record(0, &[1.0, 2.0]).unwrap_err(), DemoError::DimensionMismatch);
    }

    #[test]
    fn rollout_respects_dynamics_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gw = crate::mdp::build_gridworld(4, 2, 1, 0.3, &mut rng).unwrap();
        let pi = Policy::uniform(16, 4);
        let demo = rollout(gw.mdp(), &pi, 50, &mut rng);
        assert_eq!(demo.horizon(), 50);
        for t in 0..49 {
            let s = demo.states()[t];
            let a = demo.actions()[t];
            let next = demo.states()[t + 1];
            assert!(gw.mdp().transition(s, a, next) > 0.0);
        }
    }
}

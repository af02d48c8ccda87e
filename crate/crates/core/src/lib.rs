//! Tabular laboratory for active third-person imitation learning.
//!
//! A learner watches an LP-planned expert act in randomly generated
//! object-collection grid worlds, but only through *perspectives*: linear
//! transformations of the ground-truth features. Before each demonstration
//! the learner picks which perspective to observe; it then imitates by
//! matching feature expectations across all observed perspectives with a
//! linear program over the occupancy polytope.
//!
//! The crate provides:
//!
//! * [`mdp`] — finite MDPs, grid-world generation, occupancy algebra;
//! * [`perspective`] — feature maps, perspective construction, spectral
//!   analysis of stacked transformations;
//! * [`demo`] — demonstration sampling and observation bookkeeping;
//! * [`lp`] — a dense simplex solver, expert planning, feature matching;
//! * [`select`] — perspective-selection strategies;
//! * [`warmup`] — the stylized ridge estimator with greedy log-det design;
//! * [`theory`] — executable checks of the matching-error bound and the
//!   exact non-linear-reward counterexample.
//!
//! `no_std`-compatible with `alloc`: disable default features and enable
//! `libm` instead.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;

pub mod demo;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod perspective;
pub mod select;
pub mod theory;
pub mod warmup;

pub use demo::{observe, rollout, sample_demonstration, Demonstration, FeatureSample, ObservationStore};
pub use lp::{match_features, solve_lp, solve_optimal_policy, LinearProgram, LpSolution, LpSolver, MatchResult};
pub use mdp::{
    build_gridworld, extract_policy, occupancy_of_policy, policy_value, GridWorldInstance,
    Occupancy, Policy, TabularMdp,
};
pub use perspective::{
    analyze_stack, basis_perspectives, diam_upper_bound, random_perspectives, FeatureMap,
    Perspective, PerspectiveSet, StackAnalysis,
};
pub use select::SelectionState;
pub use theory::{build_counterexample, theorem1_report, CounterexampleMdp, MixedPolicy, Theorem1Report};
pub use warmup::RidgeState;

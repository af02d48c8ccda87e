//! Experiment execution: per-seed worlds, expert planning, the
//! observe-match-evaluate loop, and strategy dispatch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use tpil_core::demo::{observe, sample_demonstration, ObservationStore};
use tpil_core::lp::{match_features, solve_optimal_policy};
use tpil_core::mdp::{build_gridworld, extract_policy, policy_value, GridWorldInstance};
use tpil_core::perspective::{basis_perspectives, random_perspectives, PerspectiveSet};
use tpil_core::select::{
    next_active_sim, next_active_var, next_dissimilarity, next_ucb_residual, next_uniform,
    SelectionState,
};

use crate::aggregate::{aggregate, AggregateCurve};
use crate::config::{ExperimentConfig, ExperimentKind, PerspectiveSpec, StrategyKind};

/// Stream identifiers carving independent substreams out of one seed.
mod stream {
    pub const WORLD: u64 = 0;
    pub const PERSPECTIVES: u64 = 1;
    pub const DEMOS: u64 = 0x100;
    pub const STRATEGY: u64 = 0x200;
    pub const LEARNER: u64 = 0x300;
    pub const NOISE: u64 = 0x400;
}

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One logged step of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub strategy: String,
    pub t: usize,
    pub perspective: usize,
    pub normalized_reward: f64,
    #[serde(skip)]
    pub residuals: Vec<Option<f64>>,
}

/// A run that failed, kept for the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunFailure {
    pub seed: u64,
    pub strategy: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub curves: Vec<AggregateCurve>,
    pub failures: Vec<RunFailure>,
}

/// What one run variant does: which perspective family it sees and how it
/// selects among them.
#[derive(Debug, Clone)]
struct RunSpec {
    label: String,
    set: SetSpec,
    strategy: StrategyKind,
}

#[derive(Debug, Clone)]
enum SetSpec {
    FromConfig,
    /// First `i` one-hot feature rows.
    Subset(usize),
    /// `i` dense random rows.
    Random(usize),
}

fn build_set(
    spec: &SetSpec,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> PerspectiveSet {
    let k = config.grid.object_types;
    match spec {
        SetSpec::FromConfig => match &config.perspectives {
            PerspectiveSpec::Basis => basis_perspectives(k, 0),
            PerspectiveSpec::DuplicatedBasis { duplicates } => basis_perspectives(k, *duplicates),
            PerspectiveSpec::RandomThresholded { count, threshold } => {
                random_perspectives(k, *count, Some(*threshold), rng)
            }
            PerspectiveSpec::RandomUniform { count } => random_perspectives(k, *count, None, rng),
        },
        SetSpec::Subset(i) => basis_perspectives(k, 0)
            .truncated(*i)
            .expect("subset size is validated against k"),
        SetSpec::Random(i) => random_perspectives(k, *i, None, rng),
    }
}

fn run_specs(config: &ExperimentConfig) -> Vec<RunSpec> {
    match config.kind {
        ExperimentKind::ValidateThm1 => {
            let k = config.grid.object_types;
            let mut specs = Vec::new();
            for i in 1..=k {
                specs.push(RunSpec {
                    label: format!("subset-{i}"),
                    set: SetSpec::Subset(i),
                    strategy: StrategyKind::Uniform,
                });
            }
            for i in 1..=k {
                specs.push(RunSpec {
                    label: format!("random-{i}"),
                    set: SetSpec::Random(i),
                    strategy: StrategyKind::Uniform,
                });
            }
            specs
        }
        _ => config
            .strategies
            .iter()
            .map(|s| RunSpec {
                label: s.label().to_string(),
                set: SetSpec::FromConfig,
                strategy: *s,
            })
            .collect(),
    }
}

fn select_next(
    strategy: StrategyKind,
    state: &SelectionState,
    set: &PerspectiveSet,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> usize {
    match strategy {
        StrategyKind::Uniform => next_uniform(state),
        StrategyKind::ActiveVar => next_active_var(state, set),
        StrategyKind::ActiveSim => next_active_sim(set, config.params.similarity_floor, rng),
        StrategyKind::ActiveCorr => next_dissimilarity(state, config.params.similarity_floor, rng),
        StrategyKind::Ucb => next_ucb_residual(state, config.params.c),
    }
}

/// World shared by all variants of one seed.
fn build_world(config: &ExperimentConfig, seed: u64) -> anyhow::Result<GridWorldInstance> {
    let mut rng = substream(seed, stream::WORLD);
    Ok(build_gridworld(
        config.grid.side,
        config.grid.object_types,
        config.grid.objects_per_type,
        config.gamma,
        &mut rng,
    )?)
}

/// Executes one (seed, variant) run: plan the expert, then alternate
/// perspective selection, one expert demonstration, feature matching with
/// count weights, and evaluation of the matched occupancy under the true
/// reward.
fn run_single(
    config: &ExperimentConfig,
    spec: &RunSpec,
    spec_index: usize,
    seed: u64,
) -> anyhow::Result<Vec<RunRecord>> {
    let gw = build_world(config, seed)?;
    let reward = gw.reward_vector();
    let (mu_star, j_star) = solve_optimal_policy(gw.mdp(), &reward)?;
    let expert = extract_policy(&mu_star);

    let mut persp_rng = substream(seed, stream::PERSPECTIVES);
    let set = build_set(&spec.set, config, &mut persp_rng);

    let mut demo_rng = substream(seed, stream::DEMOS + spec_index as u64);
    let mut strat_rng = substream(seed, stream::STRATEGY + spec_index as u64);
    let mut learner_rng = substream(seed, stream::LEARNER + spec_index as u64);

    let mut state = SelectionState::new(
        set.feature_dim(),
        set.len(),
        config.params.lambda,
        config.params.alpha,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut store = ObservationStore::new(&set);
    let mut records = Vec::with_capacity(config.budget);

    for t in 1..=config.budget {
        let idx = select_next(spec.strategy, &state, &set, config, &mut strat_rng);
        let sample = sample_demonstration(gw.mdp(), &expert, gw.features(), config.horizon, &mut demo_rng);
        let obs = observe(&sample, &set[idx]).map_err(|e| anyhow::anyhow!("{e}"))?;
        store.record(idx, &obs).map_err(|e| anyhow::anyhow!("{e}"))?;
        state.record_selection(idx, &set[idx]);

        let weights: Vec<f64> = (0..set.len()).map(|i| store.count(i) as f64).collect();
        let matched = match_features(gw.mdp(), gw.features(), &set, &store, &weights)?;
        state.set_residuals(&matched);

        let value = policy_value(&matched.occupancy, &reward);
        let normalized = value / j_star;
        debug_assert!(normalized <= 1.0 + 1e-5, "normalized reward {normalized}");

        // Dissimilarity tracks the learner's own observed features; one
        // learner rollout through the selected perspective updates the
        // exponentially weighted estimate.
        if spec.strategy == StrategyKind::ActiveCorr {
            let learner = extract_policy(&matched.occupancy);
            let own = sample_demonstration(
                gw.mdp(),
                &learner,
                gw.features(),
                config.horizon,
                &mut learner_rng,
            );
            let own_obs = observe(&own, &set[idx]).map_err(|e| anyhow::anyhow!("{e}"))?;
            state.update_ewa(idx, &own_obs);
        }

        records.push(RunRecord {
            seed,
            strategy: spec.label.clone(),
            t,
            perspective: idx,
            normalized_reward: normalized,
            residuals: matched.residuals.clone(),
        });
    }
    Ok(records)
}

/// Runs every (variant, seed) pair, in parallel over pairs, and aggregates
/// per-step curves with bootstrap confidence intervals. Failed runs are
/// collected rather than aborting the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> anyhow::Result<ExperimentOutput> {
    let specs = run_specs(config);
    let seeds = config.seeds.resolve();
    let jobs: Vec<(usize, u64)> = specs
        .iter()
        .enumerate()
        .flat_map(|(si, _)| seeds.iter().map(move |&s| (si, s)))
        .collect();

    let results: Vec<(usize, u64, anyhow::Result<Vec<RunRecord>>)> = jobs
        .into_par_iter()
        .map(|(si, seed)| (si, seed, run_single(config, &specs[si], si, seed)))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (si, seed, result) in results {
        match result {
            Ok(mut r) => records.append(&mut r),
            Err(e) => failures.push(RunFailure {
                seed,
                strategy: specs[si].label.clone(),
                error: e.to_string(),
            }),
        }
    }
    records.sort_by(|a, b| {
        (a.strategy.as_str(), a.seed, a.t).cmp(&(b.strategy.as_str(), b.seed, b.t))
    });
    let curves = aggregate(&records, config.bootstrap_resamples);
    Ok(ExperimentOutput { records, curves, failures })
}

/// Installs a rayon pool honoring `config.parallel` and runs `f` inside it.
pub fn with_thread_pool<T: Send>(
    parallel: usize,
    f: impl FnOnce() -> T + Send,
) -> anyhow::Result<T> {
    if parallel == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()?;
    Ok(pool.install(f))
}

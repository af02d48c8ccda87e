//! Cross-module checks against independent oracles: Monte-Carlo returns,
//! value iteration, sampled feature expectations, and the matching-error
//! bound on randomized instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tpil_core::demo::{observe, sample_demonstration, ObservationStore};
use tpil_core::linalg::{dot, norm2, Matrix};
use tpil_core::lp::{match_features, solve_lp, solve_optimal_policy, LinearProgram};
use tpil_core::mdp::{build_gridworld, occupancy_of_policy, policy_value, Policy, TabularMdp};
use tpil_core::perspective::{basis_perspectives, diam_upper_bound, random_perspectives};
use tpil_core::theory::theorem1_report;

/// Independent planner: value iteration to a fixed point, returning the
/// optimal value under the initial distribution.
fn value_iteration(mdp: &TabularMdp, reward: &[f64]) -> f64 {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    loop {
        let mut next = vec![f64::NEG_INFINITY; n];
        for s in 0..n {
            for a in 0..mdp.n_actions() {
                let q = reward[mdp.pair_index(s, a)]
                    + mdp.discount() * dot(mdp.transition_row(s, a), &v);
                next[s] = next[s].max(q);
            }
        }
        let delta = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        v = next;
        if delta < 1e-13 {
            return dot(mdp.initial_dist(), &v);
        }
    }
}

/// Discounted return of one truncated rollout.
fn rollout_return(
    mdp: &TabularMdp,
    policy: &Policy,
    reward: &[f64],
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let sample_cat = |rng: &mut ChaCha8Rng, probs: &[f64]| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    };
    let mut state = sample_cat(rng, mdp.initial_dist());
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        let action = sample_cat(rng, policy.row(state));
        total += discount * reward[mdp.pair_index(state, action)];
        discount *= mdp.discount();
        state = sample_cat(rng, mdp.transition_row(state, action));
    }
    total
}

#[test]
fn occupancy_value_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let gw = build_gridworld(10, 4, 2, 0.3, &mut rng).unwrap();
    let reward = gw.reward_vector();
    let policy = Policy::uniform(100, 4);
    let occ = occupancy_of_policy(gw.mdp(), &policy).unwrap();
    let exact = policy_value(&occ, &reward);

    let mut mc_rng = ChaCha8Rng::seed_from_u64(9);
    let n = 100_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let r = rollout_return(gw.mdp(), &policy, &reward, 30, &mut mc_rng);
        sum += r;
        sum_sq += r * r;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let se = (var / n as f64).sqrt();
    assert!(
        (exact - mean).abs() <= 3.0 * se + 1e-12,
        "exact {exact} vs MC {mean} (se {se})"
    );
}

#[test]
fn demonstration_mean_matches_feature_expectations() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let gw = build_gridworld(10, 4, 2, 0.3, &mut rng).unwrap();
    let (mu_star, _) = solve_optimal_policy(gw.mdp(), &gw.reward_vector()).unwrap();
    let expert = tpil_core::mdp::extract_policy(&mu_star);
    let psi_true = gw.features().psi(mu_star.mu());

    let n = 10_000;
    let k = 4;
    let mut sums = vec![0.0; k];
    let mut sums_sq = vec![0.0; k];
    for _ in 0..n {
        let s = sample_demonstration(gw.mdp(), &expert, gw.features(), 30, &mut rng);
        for j in 0..k {
            sums[j] += s.psi()[j];
            sums_sq[j] += s.psi()[j] * s.psi()[j];
        }
    }
    for j in 0..k {
        let mean = sums[j] / n as f64;
        let var = (sums_sq[j] / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - psi_true[j]).abs() <= 3.0 * se + 1e-9,
            "coordinate {j}: mean {mean} vs exact {} (se {se})",
            psi_true[j]
        );
    }
}

#[test]
fn observation_store_mean_converges_to_projected_expectations() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let gw = build_gridworld(8, 3, 2, 0.3, &mut rng).unwrap();
    let (mu_star, _) = solve_optimal_policy(gw.mdp(), &gw.reward_vector()).unwrap();
    let expert = tpil_core::mdp::extract_policy(&mu_star);
    let set = random_perspectives(3, 2, None, &mut rng);
    let truth = set[0].apply(&gw.features().psi(mu_star.mu()));

    let mut store = ObservationStore::new(&set);
    let n = 1000;
    let mut sum_sq = 0.0;
    let mut sum = 0.0;
    for _ in 0..n {
        let s = sample_demonstration(gw.mdp(), &expert, gw.features(), 30, &mut rng);
        let o = observe(&s, &set[0]).unwrap();
        sum += o[0];
        sum_sq += o[0] * o[0];
        store.record(0, &o).unwrap();
    }
    let mean = store.mean(0).unwrap()[0];
    assert!((mean - sum / n as f64).abs() < 1e-10, "incremental mean is exact");
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let se = (var / n as f64).sqrt();
    assert!((mean - truth[0]).abs() <= 3.0 * se + 1e-9);
}

#[test]
fn lp_planner_matches_value_iteration_on_random_instances() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let side = 4 + (seed % 4) as usize;
        let gw = build_gridworld(side, 3, 2, 0.3, &mut rng).unwrap();
        let reward = gw.reward_vector();
        let (_, j_lp) = solve_optimal_policy(gw.mdp(), &reward).unwrap();
        let j_vi = value_iteration(gw.mdp(), &reward);
        assert!(
            (j_lp - j_vi).abs() <= 1e-6,
            "seed {seed}: LP {j_lp} vs VI {j_vi}"
        );
    }
}

#[test]
fn expert_value_dominates_uniform_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let gw = build_gridworld(10, 4, 2, 0.3, &mut rng).unwrap();
    let reward = gw.reward_vector();
    let (_, j_star) = solve_optimal_policy(gw.mdp(), &reward).unwrap();
    let uniform = occupancy_of_policy(gw.mdp(), &Policy::uniform(100, 4)).unwrap();
    assert!(j_star >= policy_value(&uniform, &reward) - 1e-9);
}

#[test]
fn diam_bound_dominates_sampled_occupancy_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let gw = build_gridworld(10, 4, 2, 0.3, &mut rng).unwrap();
    let bound = diam_upper_bound(gw.mdp(), gw.features()).unwrap();

    let random_policy = |rng: &mut ChaCha8Rng| {
        let mut probs = vec![0.0; 400];
        for row in probs.chunks_mut(4) {
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = rng.random::<f64>() + 1e-3;
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Policy::new(100, 4, probs).unwrap()
    };
    for _ in 0..10 {
        let a = occupancy_of_policy(gw.mdp(), &random_policy(&mut rng)).unwrap();
        let b = occupancy_of_policy(gw.mdp(), &random_policy(&mut rng)).unwrap();
        let pa = gw.features().psi(a.mu());
        let pb = gw.features().psi(b.mu());
        let dist = norm2(&tpil_core::linalg::sub(&pa, &pb));
        assert!(dist <= bound + 1e-7, "sampled pair distance {dist} exceeds bound {bound}");
    }

    // crude dominating bound: 2 sqrt(k) max column norm / (1 - gamma)
    let f = gw.features().matrix();
    let mut max_col = 0.0f64;
    for p in 0..f.cols() {
        let col_norm = (0..f.rows()).map(|r| f[(r, p)] * f[(r, p)]).sum::<f64>().sqrt();
        max_col = max_col.max(col_norm);
    }
    let crude = 2.0 * (4.0f64).sqrt() * max_col / 0.7;
    assert!(bound <= crude + 1e-9);
}

#[test]
fn diam_bound_is_zero_when_features_are_constant() {
    // single state, one action: the feature expectation is the same for
    // every policy, so every coordinate range collapses
    let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.3).unwrap();
    let f = tpil_core::perspective::FeatureMap::new(Matrix::from_rows(&[&[1.0]]));
    let bound = diam_upper_bound(&mdp, &f).unwrap();
    assert!(bound.abs() <= 1e-7, "bound {bound}");
}

/// Worst-case value gap over occupancies forced to match the expert's
/// feature expectations exactly in every perspective of a set: the spread
/// `max <w, F mu> - min <w, F mu>` over that face of the flow polytope.
fn worst_case_gap(
    gw: &tpil_core::mdp::GridWorldInstance,
    set: &tpil_core::perspective::PerspectiveSet,
    psi_star: &[f64],
) -> f64 {
    let mdp = gw.mdp();
    let n_mu = mdp.n_pairs();
    let f = gw.features().matrix();
    let w = gw.reward_weights();
    let value_row: Vec<f64> = (0..n_mu)
        .map(|p| (0..f.rows()).map(|j| w[j] * f[(j, p)]).sum())
        .collect();

    let mut solve_one = |maximize: bool| -> f64 {
        let sign = if maximize { -1.0 } else { 1.0 };
        let mut lp = LinearProgram::new(value_row.iter().map(|&c| sign * c).collect());
        let mut eq_rows: Vec<Vec<f64>> = Vec::new();
        let mut eq_rhs: Vec<f64> = Vec::new();
        // flow equalities
        let (flow, rhs) = {
            // rebuilt here from public pieces to stay independent of
            // match_features internals
            let mut m = Matrix::zeros(mdp.n_states(), n_mu);
            for s in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    let pair = mdp.pair_index(s, a);
                    m[(s, pair)] += 1.0;
                    for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                        if p != 0.0 {
                            m[(next, pair)] -= mdp.discount() * p;
                        }
                    }
                }
            }
            (m, mdp.initial_dist().to_vec())
        };
        for r in 0..flow.rows() {
            eq_rows.push(flow.row(r).to_vec());
            eq_rhs.push(rhs[r]);
        }
        // exact matching equalities per perspective output
        for p in set.iter() {
            let targets = p.apply(psi_star);
            for d in 0..p.output_dim() {
                let a_row = p.matrix().row(d);
                let af: Vec<f64> = (0..n_mu)
                    .map(|c| (0..f.rows()).map(|j| a_row[j] * f[(j, c)]).sum())
                    .collect();
                eq_rows.push(af);
                eq_rhs.push(targets[d]);
            }
        }
        let refs: Vec<&[f64]> = eq_rows.iter().map(|r| r.as_slice()).collect();
        lp.eq = Matrix::from_rows(&refs);
        lp.eq_rhs = eq_rhs;
        let sol = solve_lp(&lp).unwrap();
        sign * sol.objective
    };
    solve_one(true) - solve_one(false)
}

#[test]
fn exact_information_is_monotone_over_nested_sets() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let gw = build_gridworld(6, 4, 1, 0.3, &mut rng).unwrap();
        let (mu_star, _) = solve_optimal_policy(gw.mdp(), &gw.reward_vector()).unwrap();
        let psi_star = gw.features().psi(mu_star.mu());
        let full = basis_perspectives(4, 0);
        let mut prev = f64::INFINITY;
        for n in 1..=4 {
            let set = full.truncated(n).unwrap();
            let gap = worst_case_gap(&gw, &set, &psi_star);
            assert!(
                gap <= prev + 1e-6,
                "seed {seed}: gap grew from {prev} to {gap} adding perspective {n}"
            );
            prev = gap;
        }
    }
}

#[test]
fn matching_bound_report_holds_on_randomized_pairs() {
    let mut outer = ChaCha8Rng::seed_from_u64(401);
    for trial in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + trial);
        let mut gw = build_gridworld(6, 4, 1, 0.3, &mut rng).unwrap();
        // the bound's premise asks for reward weights of norm at most one
        let w: Vec<f64> = gw.reward_weights().to_vec();
        let norm = norm2(&w);
        if norm > 1.0 {
            gw.set_reward_weights(w.iter().map(|v| v / norm).collect()).unwrap();
        }
        let reward = gw.reward_vector();
        let (mu_e, _) = solve_optimal_policy(gw.mdp(), &reward).unwrap();
        let expert = tpil_core::mdp::extract_policy(&mu_e);

        let n_persp = 1 + outer.random_range(0..4);
        let set = if outer.random::<bool>() {
            basis_perspectives(4, 0).truncated(n_persp).unwrap()
        } else {
            random_perspectives(4, n_persp, None, &mut rng)
        };
        let mut store = ObservationStore::new(&set);
        let mut weights = vec![0.0; set.len()];
        for i in 0..set.len() {
            for _ in 0..3 {
                let s = sample_demonstration(gw.mdp(), &expert, gw.features(), 30, &mut rng);
                store.record(i, &observe(&s, &set[i]).unwrap()).unwrap();
            }
            weights[i] = store.count(i) as f64;
        }
        let matched = match_features(gw.mdp(), gw.features(), &set, &store, &weights).unwrap();
        let report = theorem1_report(&gw, &set, &mu_e, &matched.occupancy).unwrap();
        assert!(
            report.holds,
            "trial {trial}: gap {} exceeds bound {}",
            report.actual_gap, report.bound_value
        );
    }
}

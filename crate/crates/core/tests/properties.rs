//! Property suites over randomly generated instances.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpil_core::mdp::{
    build_gridworld, extract_policy, flow_residual, occupancy_of_policy, Policy, FLOW_TOL,
    MASS_TOL,
};
use tpil_core::perspective::{analyze_stack, random_perspectives, PerspectiveSet};

fn arb_policy(n_states: usize, n_actions: usize) -> impl Strategy<Value = Policy> {
    proptest::collection::vec(0.01f64..1.0, n_states * n_actions).prop_map(move |raw| {
        let mut probs = raw;
        for row in probs.chunks_mut(n_actions) {
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Policy::new(n_states, n_actions, probs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn occupancies_satisfy_flow_and_mass(seed in 0u64..1000, policy in arb_policy(25, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gw = build_gridworld(5, 2, 2, 0.3, &mut rng).unwrap();
        let occ = occupancy_of_policy(gw.mdp(), &policy).unwrap();
        prop_assert!((occ.mass() - 1.0 / 0.7).abs() <= MASS_TOL);
        prop_assert!(flow_residual(gw.mdp(), occ.mu()) <= FLOW_TOL);
    }

    #[test]
    fn extraction_round_trips_on_visited_states(seed in 0u64..1000, policy in arb_policy(25, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gw = build_gridworld(5, 2, 2, 0.3, &mut rng).unwrap();
        let occ = occupancy_of_policy(gw.mdp(), &policy).unwrap();
        let recovered = extract_policy(&occ);
        for s in 0..25 {
            let visited: f64 = (0..4).map(|a| occ.mu()[gw.mdp().pair_index(s, a)]).sum();
            if visited > 1e-12 {
                for a in 0..4 {
                    prop_assert!((recovered.prob(s, a) - policy.prob(s, a)).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn thresholded_rows_have_no_entries_in_dead_zone(
        seed in 0u64..10_000,
        threshold in 0.05f64..0.9,
        n in 1usize..20,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_perspectives(4, n, Some(threshold), &mut rng);
        for p in set.iter() {
            for &v in p.matrix().row(0) {
                prop_assert!(v == 0.0 || v >= threshold);
            }
        }
    }

    #[test]
    fn stack_analysis_kernel_identity(seed in 0u64..10_000, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_perspectives(4, n, Some(0.5), &mut rng);
        let w: Vec<f64> = (0..4).map(|i| ((seed + i as u64) % 7) as f64 / 7.0).collect();
        let analysis = analyze_stack(&set, &w, 1.0).unwrap();
        // rho is a projection norm, so it never exceeds the vector's norm
        let w_norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(analysis.rho() <= w_norm + 1e-10);
        if analysis.rank() == 4 {
            prop_assert!(analysis.rho() <= 1e-10);
        }
        // order invariance
        let shuffled = PerspectiveSet::new(set.iter().rev().cloned().collect()).unwrap();
        let again = analyze_stack(&shuffled, &w, 1.0).unwrap();
        prop_assert!((analysis.sigma() - again.sigma()).abs() <= 1e-9);
        prop_assert!((analysis.rho() - again.rho()).abs() <= 1e-9);
        prop_assert_eq!(analysis.rank(), again.rank());
    }
}

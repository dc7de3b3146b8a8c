use apprentice::envs::{chain_mdp, make_gridworld, make_random_mdp, random_policy};
use apprentice::extract::policy_from_vector;
use apprentice::mdp::{
    expected_return, flow_residual, occupancy_of_policy, policy_values, truncated_series_occupancy,
    validate_mdp, value_iteration, CostVector, Mdp, Policy,
};
use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain_stay() -> Policy {
    Policy::deterministic(&[0, 0], 2).unwrap()
}

fn chain_go() -> Policy {
    Policy::deterministic(&[1, 1], 2).unwrap()
}

#[test]
fn chain_occupancies_match_series() {
    let mdp = chain_mdp(0.5);
    let stay = occupancy_of_policy(&mdp, &chain_stay()).unwrap();
    let series = truncated_series_occupancy(&mdp, &chain_stay(), 60).unwrap();
    assert_abs_diff_eq!(
        stay.mass,
        DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]),
        epsilon = 1e-15
    );
    assert!((&stay.mass - &series.mass).lp_norm(1) <= 1e-15);

    let go = occupancy_of_policy(&mdp, &chain_go()).unwrap();
    let series = truncated_series_occupancy(&mdp, &chain_go(), 60).unwrap();
    let want = DVector::from_vec(vec![0.0, 4.0 / 3.0, 0.0, 2.0 / 3.0]);
    assert_abs_diff_eq!(go.mass, want, epsilon = 1e-12);
    assert!((&series.mass - &want).lp_norm(1) <= 0.5f64.powi(60) / 0.5 + 1e-15);
}

#[test]
fn single_step_series_is_initial_pair_distribution() {
    let mdp = chain_mdp(0.5);
    let one = truncated_series_occupancy(&mdp, &chain_stay(), 1).unwrap();
    assert_eq!(one.mass.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn stay_indicator_return_is_two() {
    let mdp = chain_mdp(0.5);
    let mu = occupancy_of_policy(&mdp, &chain_stay()).unwrap();
    let c = CostVector::new(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
    assert_abs_diff_eq!(expected_return(&mu, &c).unwrap(), 2.0, epsilon = 1e-15);
}

#[test]
fn perturbed_flow_gap_matches_dense_product() {
    let mdp = make_random_mdp(5, 3, 0.8, 11).unwrap();
    let mut u = occupancy_of_policy(&mdp, &random_policy(5, 3, 12).unwrap())
        .unwrap()
        .mass;
    u[4] += 0.1;
    let (s, a, g) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
    let p = mdp.transition();
    let mut gap = 0.0;
    for y in 0..s {
        let mut acc = -mdp.initial_dist()[y];
        for x in 0..s {
            for b in 0..a {
                let row = x * a + b;
                let bxy = if x == y { 1.0 } else { 0.0 };
                acc += (bxy - g * p[(row, y)]) * u[row];
            }
        }
        gap += acc.abs();
    }
    let (neg, flow) = flow_residual(&mdp, &u).unwrap();
    assert_eq!(neg, 0.0);
    assert_abs_diff_eq!(flow, gap, epsilon = 1e-12);
}

#[test]
fn zero_vector_residual() {
    let mdp = make_random_mdp(4, 2, 0.9, 1).unwrap();
    let (neg, flow) = flow_residual(&mdp, &DVector::zeros(8)).unwrap();
    assert_eq!(neg, 0.0);
    assert!(neg.is_sign_positive());
    assert_abs_diff_eq!(flow, 1.0, epsilon = 1e-15);
}

#[test]
fn value_iteration_on_chain_goes_then_stays() {
    let mdp = chain_mdp(0.5);
    let c = CostVector::new(DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0])).unwrap();
    let (policy, v) = value_iteration(&mdp, &c, 1e-12).unwrap();
    assert_eq!(policy.prob(0, 1), 1.0);
    assert_eq!(policy.prob(1, 0), 1.0);
    assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-10);

    let mut best = f64::INFINITY;
    for a0 in 0..2 {
        for a1 in 0..2 {
            let pi = Policy::deterministic(&[a0, a1], 2).unwrap();
            best = best.min(policy_values(&mdp, &pi, &c).unwrap()[0]);
        }
    }
    assert_abs_diff_eq!(best, 1.0, epsilon = 1e-12);
}

#[test]
fn value_iteration_value_matches_policy_evaluation() {
    let mdp = make_random_mdp(5, 3, 0.9, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = CostVector::new(DVector::from_fn(15, |_, _| rng.random::<f64>())).unwrap();
    let tol = 1e-9;
    let (policy, v) = value_iteration(&mdp, &c, tol).unwrap();
    let exact = policy_values(&mdp, &policy, &c).unwrap();
    let g = mdp.discount();
    assert!((&v - &exact).amax() <= tol * (1.0 + g) / (1.0 - g));
}

#[test]
fn slippery_grid_keeps_intended_mass() {
    let (mdp, _) = make_gridworld(3, 3, 0.9, 0.2).unwrap();
    // centre cell, moving north lands on a distinct cell
    let row = mdp.transition().row(4 * 4);
    let expected = 0.8 + 0.2 / 4.0;
    assert!(row.iter().any(|&p| (p - expected).abs() < 1e-15));
    assert!(validate_mdp(&mdp).is_empty());
}

#[test]
fn random_mdp_validates() {
    assert!(validate_mdp(&make_random_mdp(10, 3, 0.9, 7).unwrap()).is_empty());
    assert_eq!(
        make_random_mdp(1, 1, 0.5, 3).unwrap().transition(),
        &DMatrix::from_element(1, 1, 1.0)
    );
}

fn instance() -> impl Strategy<Value = (Mdp, Policy)> {
    (
        2usize..=8,
        1usize..=4,
        0.3f64..0.95,
        any::<u64>(),
        any::<u64>(),
    )
        .prop_map(|(s, a, g, m, p)| {
            (
                make_random_mdp(s, a, g, m).unwrap(),
                random_policy(s, a, p).unwrap(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn series_tail_bound((mdp, policy) in instance()) {
        let exact = occupancy_of_policy(&mdp, &policy).unwrap();
        let g = mdp.discount();
        for h in [5, 20, 60] {
            let series = truncated_series_occupancy(&mdp, &policy, h).unwrap();
            let dist = (&exact.mass - &series.mass).lp_norm(1);
            // rounding floor of the f64 solve; exact arithmetic is checked separately
            prop_assert!(dist <= g.powi(h as i32) / (1.0 - g) + 1e-12, "H={h}: {dist}");
        }
    }

    #[test]
    fn occupancy_is_in_flow_polytope((mdp, policy) in instance()) {
        let mu = occupancy_of_policy(&mdp, &policy).unwrap();
        let (neg, flow) = flow_residual(&mdp, &mu.mass).unwrap();
        prop_assert!(neg <= 1e-12 && flow <= 1e-8);
        prop_assert!((mu.total() - mdp.horizon_mass()).abs() <= 1e-8);
        prop_assert!(mu.mass.iter().all(|&m| m >= -1e-12));
    }

    #[test]
    fn occupancy_round_trips_through_extraction((mdp, policy) in instance()) {
        let mu = occupancy_of_policy(&mdp, &policy).unwrap();
        let back = policy_from_vector(&mu.mass, &mdp).unwrap();
        for x in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                prop_assert!((back.prob(x, a) - policy.prob(x, a)).abs() <= 1e-10);
            }
        }
        let again = occupancy_of_policy(&mdp, &back).unwrap();
        prop_assert!((&again.mass - &mu.mass).amax() <= 1e-8);
    }

    #[test]
    fn series_gap_shrinks_geometrically((mdp, policy) in instance(), h in 1usize..20) {
        let exact = occupancy_of_policy(&mdp, &policy).unwrap();
        let gap = |h: usize| (&exact.mass - &truncated_series_occupancy(&mdp, &policy, h).unwrap().mass).lp_norm(1);
        let g = mdp.discount();
        prop_assert!(gap(2 * h) <= g.powi(h as i32) * gap(h) + 1e-12);
    }
}

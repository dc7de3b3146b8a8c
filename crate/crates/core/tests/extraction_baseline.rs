use apprentice::baseline::{
    exact_al_solve, full_subgradient_solve, regret_report, Comparator, SolveMethod, TheoremInputs,
};
use apprentice::envs::{chain_mdp, make_random_mdp, random_policy};
use apprentice::extract::{evaluate_theta, extract_policy, lemma2_report, policy_from_vector};
use apprentice::features::{
    build_feature_matrix, feature_expectation, l1_feature_gap, CostBasis, FeatureExpectation,
};
use apprentice::mdp::{flow_residual, occupancy_of_policy, Mdp, Policy};
use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_u(mdp: &Mdp, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = rng.random_range(0.01..3.0);
    DVector::from_fn(mdp.n_pairs(), |_, _| rng.random_range(-0.5..1.0) * scale)
}

#[test]
fn nonpositive_vector_extracts_uniform() {
    let mdp = make_random_mdp(3, 2, 0.9, 1).unwrap();
    let (policy, fallback) = extract_policy(&DVector::from_element(6, -1.0), &mdp).unwrap();
    assert_eq!(policy, Policy::uniform(3, 2));
    assert_eq!(fallback, vec![0, 1, 2]);
}

#[test]
fn row_three_one_normalizes() {
    let mdp = chain_mdp(0.5);
    let policy = policy_from_vector(&DVector::from_vec(vec![3.0, 1.0, -2.0, 0.0]), &mdp).unwrap();
    assert_eq!((policy.prob(0, 0), policy.prob(0, 1)), (0.75, 0.25));
    assert_eq!((policy.prob(1, 0), policy.prob(1, 1)), (0.5, 0.5));
}

#[test]
fn zero_vector_makes_extraction_bound_tight() {
    let mdp = make_random_mdp(4, 3, 0.8, 2).unwrap();
    let report = lemma2_report(&DVector::zeros(12), &mdp).unwrap();
    assert_abs_diff_eq!(report.l1_distance, 5.0, epsilon = 1e-10);
    assert_abs_diff_eq!(report.lemma2_bound, 5.0, epsilon = 1e-12);
}

#[test]
fn feasible_vector_has_zero_distance() {
    let mdp = make_random_mdp(4, 3, 0.8, 3).unwrap();
    let mu = occupancy_of_policy(&mdp, &random_policy(4, 3, 4).unwrap()).unwrap();
    let report = lemma2_report(&mu.mass, &mdp).unwrap();
    assert!(report.l1_distance <= 1e-8 && report.lemma2_bound <= 1e-8);
}

#[test]
fn zero_theta_gap_uses_uniform_occupancy() {
    let mdp = make_random_mdp(5, 2, 0.9, 5).unwrap();
    let basis = CostBasis::state_indicators(&mdp);
    let phi = build_feature_matrix(&mdp, 3, 6).unwrap();
    let expert = feature_expectation(
        &occupancy_of_policy(&mdp, &random_policy(5, 2, 7).unwrap())
            .unwrap()
            .mass,
        &basis,
    )
    .unwrap();
    let eval = evaluate_theta(&DVector::zeros(3), &phi, &basis, &mdp, &expert).unwrap();
    assert_eq!(eval.policy, Policy::uniform(5, 2));
    let uniform = feature_expectation(
        &occupancy_of_policy(&mdp, &Policy::uniform(5, 2))
            .unwrap()
            .mass,
        &basis,
    )
    .unwrap();
    assert_abs_diff_eq!(
        eval.gap,
        l1_feature_gap(&uniform, &expert).unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn exact_parameter_has_zero_gap() {
    let mdp = make_random_mdp(4, 2, 0.7, 8).unwrap();
    let basis = CostBasis::pair_indicators(&mdp);
    let mu = occupancy_of_policy(&mdp, &random_policy(4, 2, 9).unwrap()).unwrap();
    let phi = apprentice::features::FeatureMatrix::new_unchecked(DMatrix::from_columns(&[mu
        .mass
        .clone()]));
    let expert = feature_expectation(&mu.mass, &basis).unwrap();
    let eval = evaluate_theta(&DVector::from_vec(vec![1.0]), &phi, &basis, &mdp, &expert).unwrap();
    assert!(eval.gap <= 1e-10);
}

#[test]
fn chain_expert_is_recovered_exactly() {
    let mdp = chain_mdp(0.5);
    let basis = CostBasis::pair_indicators(&mdp);
    let mu = occupancy_of_policy(&mdp, &Policy::deterministic(&[1, 1], 2).unwrap()).unwrap();
    let target = feature_expectation(&mu.mass, &basis).unwrap();
    let sol = exact_al_solve(&mdp, &basis, &target).unwrap();
    assert_eq!(sol.method, SolveMethod::LpSimplex);
    assert!(sol.objective <= 1e-9);
    assert_abs_diff_eq!(sol.mu_star.mass, mu.mass, epsilon = 1e-9);
}

struct LpCase {
    mdp: Mdp,
    basis: CostBasis,
    target: FeatureExpectation,
}

fn lp_case(seed: u64) -> LpCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.random_range(2..=6);
    let a = rng.random_range(1..=3);
    let mdp = make_random_mdp(s, a, rng.random_range(0.5..0.9), rng.random()).unwrap();
    let n_c = rng.random_range(1..=4);
    let basis = CostBasis::new(DMatrix::from_fn(s * a, n_c, |_, _| rng.random::<f64>())).unwrap();
    let target = FeatureExpectation::from(DVector::from_fn(n_c, |_, _| {
        rng.random_range(0.0..2.0 / (1.0 - mdp.discount()))
    }));
    LpCase { mdp, basis, target }
}

#[test]
fn lp_optimum_is_feasible_and_locally_optimal() {
    for seed in 0..3 {
        let c = lp_case(seed);
        let sol = exact_al_solve(&c.mdp, &c.basis, &c.target).unwrap();
        let (neg, flow) = flow_residual(&c.mdp, &sol.mu_star.mass).unwrap();
        assert!(neg <= 1e-7 && flow <= 1e-7);
        let gap = l1_feature_gap(
            &feature_expectation(&sol.mu_star.mass, &c.basis).unwrap(),
            &c.target,
        )
        .unwrap();
        assert_abs_diff_eq!(gap, sol.objective, epsilon = 1e-9);

        let (s, a) = (c.mdp.n_states(), c.mdp.n_actions());
        let vertices: Vec<DVector<f64>> = (0..100)
            .map(|k| {
                occupancy_of_policy(&c.mdp, &random_policy(s, a, 1000 * seed + k).unwrap())
                    .unwrap()
                    .mass
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        for _ in 0..100_000 {
            let t: f64 = rng.random_range(0.0..0.1);
            let v = &vertices[rng.random_range(0..vertices.len())];
            let mu = (1.0 - t) * &sol.mu_star.mass + t * v;
            let obj =
                l1_feature_gap(&feature_expectation(&mu, &c.basis).unwrap(), &c.target).unwrap();
            assert!(obj >= sol.objective - 1e-9);
        }
        for v in &vertices {
            let obj =
                l1_feature_gap(&feature_expectation(v, &c.basis).unwrap(), &c.target).unwrap();
            assert!(sol.objective <= obj + 1e-9);
        }
    }
}

#[test]
fn solvers_agree() {
    for seed in 10..13 {
        let c = lp_case(seed);
        let lp = exact_al_solve(&c.mdp, &c.basis, &c.target).unwrap();
        let sg = full_subgradient_solve(
            &c.mdp,
            &c.basis,
            &c.target,
            apprentice::baseline::FALLBACK_ITERATIONS,
        )
        .unwrap();
        assert_eq!(sg.method, SolveMethod::FullSubgradient);
        assert!(
            (lp.objective - sg.objective).abs() <= 1e-4,
            "seed {seed}: {} vs {}",
            lp.objective,
            sg.objective
        );
    }
}

#[test]
fn feasible_comparator_rhs() {
    let inputs = TheoremInputs {
        epsilon: 0.1,
        rho: 2.0,
        d: 4,
        n_c: 3,
        gamma: 0.9,
        psi_inf_norm: 1.0,
        phi_one_norm: 10.0,
    };
    let comparator = Comparator {
        gap: 0.7,
        v1: 0.0,
        v2: 0.0,
    };
    let r = regret_report(0.5, None, comparator, inputs);
    let want = 0.7 + (2.0 / 0.1) * (1.0 * 10.0 * 2.0 * 2.0 + 3.0 / 0.1) * 0.1 + 0.1;
    assert_abs_diff_eq!(r.rhs, want, epsilon = 1e-12);
    assert_eq!(r.penalty_term, 0.0);
    assert!(r.holds);
    let tiny = regret_report(
        0.5,
        None,
        comparator,
        TheoremInputs {
            epsilon: 1e-12,
            ..inputs
        },
    );
    assert_abs_diff_eq!(tiny.rhs, 0.7, epsilon = 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extraction_bound_holds(s in 2usize..8, a in 1usize..4, g in 0.3f64..0.95, seed: u64) {
        let mdp = make_random_mdp(s, a, g, seed).unwrap();
        for k in 0..20 {
            let report = lemma2_report(&random_u(&mdp, seed.wrapping_add(k)), &mdp).unwrap();
            prop_assert!(report.slack() >= -1e-8);
            prop_assert!(report.positive_part_distance <= report.positive_part_bound + 1e-8);
        }
    }

    #[test]
    fn extraction_ignores_power_of_two_scale(seed: u64, e in -40i32..40) {
        let mdp = make_random_mdp(4, 3, 0.9, seed).unwrap();
        let u = random_u(&mdp, seed);
        let c = 2f64.powi(e);
        prop_assert_eq!(policy_from_vector(&(c * &u), &mdp).unwrap(), policy_from_vector(&u, &mdp).unwrap());
    }

    #[test]
    fn extraction_ignores_positive_scale(seed: u64, c in 1e-3f64..1e3) {
        let mdp = make_random_mdp(4, 3, 0.9, seed).unwrap();
        let u = random_u(&mdp, seed);
        let a = policy_from_vector(&(c * &u), &mdp).unwrap();
        let b = policy_from_vector(&u, &mdp).unwrap();
        prop_assert!((a.probs() - b.probs()).amax() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn lp_is_a_lower_bound(seed: u64) {
        let c = lp_case(seed);
        let sol = exact_al_solve(&c.mdp, &c.basis, &c.target).unwrap();
        let mu = occupancy_of_policy(&c.mdp, &random_policy(c.mdp.n_states(), c.mdp.n_actions(), seed).unwrap()).unwrap();
        let obj = l1_feature_gap(&feature_expectation(&mu.mass, &c.basis).unwrap(), &c.target).unwrap();
        prop_assert!(sol.objective <= obj + 1e-9);
    }
}

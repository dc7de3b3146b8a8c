//! Policies extracted from arbitrary state-action vectors, and how far the
//! resulting occupancy measure lands from the vector it came from.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, Result};
use crate::features::{
    feature_expectation, l1_feature_gap, CostBasis, FeatureExpectation, FeatureMatrix,
};
use crate::mdp::{flow_residual, occupancy_of_policy, Mdp, OccupancyMeasure, Policy};

/// States whose positive mass is at most this fall back to the uniform row.
pub const FALLBACK_THRESHOLD: f64 = 1e-15;

/// `pi_u(a|x) = [u(x,a)]_+ / sum_a' [u(x,a')]_+`, uniform where the
/// denominator vanishes. Also returns the states that fell back.
pub fn extract_policy(u: &DVector<f64>, mdp: &Mdp) -> Result<(Policy, Vec<usize>)> {
    check_len("extraction vector", mdp.n_pairs(), u.len())?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut probs = DMatrix::zeros(ns, na);
    let mut fallback = Vec::new();
    for x in 0..ns {
        let pos: Vec<f64> = (0..na).map(|a| u[mdp.pair(x, a)].max(0.0)).collect();
        let total: f64 = pos.iter().sum();
        if total <= FALLBACK_THRESHOLD {
            fallback.push(x);
            probs.row_mut(x).fill(1.0 / na as f64);
        } else {
            for (a, p) in pos.iter().enumerate() {
                probs[(x, a)] = p / total;
            }
        }
    }
    Ok((Policy::from_probs_unchecked(probs), fallback))
}

pub fn policy_from_vector(u: &DVector<f64>, mdp: &Mdp) -> Result<Policy> {
    extract_policy(u, mdp).map(|(p, _)| p)
}

/// Both sides of the extraction distance bound for one vector `u`.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionReport {
    pub policy: Policy,
    pub mu_u: OccupancyMeasure,
    /// `||mu^{pi_u} - u||_1`.
    pub l1_distance: f64,
    /// `(2 ||[u]_-||_1 + ||(B - gamma P)^T u - nu0||_1) / (1 - gamma)`.
    pub lemma2_bound: f64,
    /// `||mu^{pi_u} - [u]_+||_1`.
    pub positive_part_distance: f64,
    /// `((1 + gamma) ||[u]_-||_1 + ||(B - gamma P)^T u - nu0||_1) / (1 - gamma)`,
    /// the sharper intermediate bound on `positive_part_distance`.
    pub positive_part_bound: f64,
    pub uniform_fallback_states: Vec<usize>,
}

impl ExtractionReport {
    pub fn slack(&self) -> f64 {
        self.lemma2_bound - self.l1_distance
    }

    pub fn holds(&self) -> bool {
        self.l1_distance <= self.lemma2_bound + 1e-8
    }
}

pub fn lemma2_report(u: &DVector<f64>, mdp: &Mdp) -> Result<ExtractionReport> {
    let (policy, uniform_fallback_states) = extract_policy(u, mdp)?;
    let mu_u = occupancy_of_policy(mdp, &policy)?;
    let (neg, gap) = flow_residual(mdp, u)?;
    let g = mdp.discount();
    let positive = u.map(|v| v.max(0.0));
    Ok(ExtractionReport {
        l1_distance: (&mu_u.mass - u).lp_norm(1),
        lemma2_bound: (2.0 * neg + gap) / (1.0 - g),
        positive_part_distance: (&mu_u.mass - positive).lp_norm(1),
        positive_part_bound: ((1.0 + g) * neg + gap) / (1.0 - g),
        policy,
        mu_u,
        uniform_fallback_states,
    })
}

/// The policy `pi_{Phi theta}`, its occupancy measure and its l1 feature gap
/// to the expert.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaEvaluation {
    pub policy: Policy,
    pub mu_theta: OccupancyMeasure,
    pub feature_expectation: FeatureExpectation,
    pub gap: f64,
}

pub fn evaluate_theta(
    theta: &DVector<f64>,
    phi: &FeatureMatrix,
    basis: &CostBasis,
    mdp: &Mdp,
    expert_fe: &FeatureExpectation,
) -> Result<ThetaEvaluation> {
    let u = phi.apply(theta)?;
    let policy = policy_from_vector(&u, mdp)?;
    let mu_theta = occupancy_of_policy(mdp, &policy)?;
    let fe = feature_expectation(&mu_theta.mass, basis)?;
    let gap = l1_feature_gap(&fe, expert_fe)?;
    Ok(ThetaEvaluation {
        policy,
        mu_theta,
        feature_expectation: fe,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{chain_mdp, make_random_mdp};
    use crate::features::build_feature_matrix;
    use approx::assert_abs_diff_eq;

    #[test]
    fn occupancy_round_trip_recovers_policy() {
        let mdp = make_random_mdp(5, 3, 0.9, 8).unwrap();
        let probs = DMatrix::from_fn(5, 3, |x, a| (1 + x + 2 * a) as f64);
        let probs = DMatrix::from_fn(5, 3, |x, a| probs[(x, a)] / probs.row(x).sum());
        let pi = Policy::new(probs).unwrap();
        let mu = occupancy_of_policy(&mdp, &pi).unwrap();
        let (back, fallback) = extract_policy(&mu.mass, &mdp).unwrap();
        assert!(fallback.is_empty());
        assert!((back.probs() - pi.probs()).amax() <= 1e-10);
    }

    #[test]
    fn nonpositive_vector_gives_uniform() {
        let mdp = make_random_mdp(3, 2, 0.9, 1).unwrap();
        let u = DVector::from_vec(vec![-1.0, 0.0, -2.0, -0.5, 0.0, 0.0]);
        let (pi, fallback) = extract_policy(&u, &mdp).unwrap();
        assert_eq!(pi, Policy::uniform(3, 2));
        assert_eq!(fallback, vec![0, 1, 2]);
    }

    #[test]
    fn row_normalization() {
        let mdp = chain_mdp(0.5);
        let u = DVector::from_vec(vec![3.0, 1.0, -1.0, 2.0]);
        let pi = policy_from_vector(&u, &mdp).unwrap();
        assert_eq!(
            pi.probs().row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.75, 0.25]
        );
        assert_eq!(
            pi.probs().row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn feasible_point_has_zero_distance() {
        let mdp = make_random_mdp(4, 2, 0.8, 2).unwrap();
        let mu = occupancy_of_policy(&mdp, &Policy::uniform(4, 2)).unwrap();
        let r = lemma2_report(&mu.mass, &mdp).unwrap();
        assert!(r.l1_distance <= 1e-8);
        assert!(r.lemma2_bound <= 1e-8);
    }

    #[test]
    fn zero_vector_is_tight() {
        let mdp = make_random_mdp(4, 3, 0.75, 6).unwrap();
        let r = lemma2_report(&DVector::zeros(12), &mdp).unwrap();
        assert_abs_diff_eq!(r.l1_distance, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.lemma2_bound, 4.0, epsilon = 1e-12);
        assert_eq!(r.uniform_fallback_states.len(), 4);
        assert!(r.holds());
    }

    #[test]
    fn evaluate_exact_expert_has_zero_gap() {
        let mdp = chain_mdp(0.5);
        let basis = CostBasis::pair_indicators(&mdp);
        let pi = Policy::deterministic(&[1, 1], 2).unwrap();
        let mu = occupancy_of_policy(&mdp, &pi).unwrap();
        let phi =
            FeatureMatrix::new_unchecked(DMatrix::from_column_slice(4, 1, mu.mass.as_slice()));
        let fe = feature_expectation(&mu.mass, &basis).unwrap();
        let ev = evaluate_theta(&DVector::from_vec(vec![1.0]), &phi, &basis, &mdp, &fe).unwrap();
        assert!(ev.gap <= 1e-12);
    }

    #[test]
    fn zero_theta_evaluates_uniform_policy() {
        let mdp = make_random_mdp(4, 2, 0.9, 3).unwrap();
        let basis = CostBasis::state_indicators(&mdp);
        let phi = build_feature_matrix(&mdp, 3, 1).unwrap();
        let expert = FeatureExpectation::from(DVector::from_element(4, 2.5));
        let ev = evaluate_theta(&DVector::zeros(3), &phi, &basis, &mdp, &expert).unwrap();
        let oracle_mu = occupancy_of_policy(&mdp, &Policy::uniform(4, 2)).unwrap();
        let oracle = l1_feature_gap(
            &feature_expectation(&oracle_mu.mass, &basis).unwrap(),
            &expert,
        )
        .unwrap();
        assert_eq!(ev.policy, Policy::uniform(4, 2));
        assert_abs_diff_eq!(ev.gap, oracle, epsilon = 1e-12);
    }

    #[test]
    fn gap_is_scale_invariant_for_positive_features() {
        let mdp = make_random_mdp(4, 2, 0.9, 3).unwrap();
        let basis = CostBasis::state_indicators(&mdp);
        let phi = build_feature_matrix(&mdp, 3, 1).unwrap();
        let expert = FeatureExpectation::from(DVector::from_element(4, 2.5));
        let theta = DVector::from_vec(vec![0.3, 0.2, 0.6]);
        let a = evaluate_theta(&theta, &phi, &basis, &mdp, &expert).unwrap();
        let b = evaluate_theta(&(&theta * 7.5), &phi, &basis, &mdp, &expert).unwrap();
        assert_abs_diff_eq!(a.gap, b.gap, epsilon = 1e-12);
    }
}

//! Explicit tabular discounted MDPs, stationary policies and their occupancy
//! measures.
//!
//! State-action pairs are laid out as `(x, a) -> x * n_actions + a` in every
//! vector and matrix of the crate. The transition matrix has one row per
//! state-action pair and one column per successor state.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Tolerance for probability rows and the initial distribution.
pub const PROB_TOL: f64 = 1e-12;

/// Occupancy entries in `[-CLAMP_TOL, 0)` are solver noise and get zeroed.
const CLAMP_TOL: f64 = 1e-12;

const VALUE_ITERATION_CAP: usize = 1_000_000;

/// A finite discounted MDP without a cost function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: DMatrix<f64>,
    discount: f64,
    initial_dist: DVector<f64>,
}

/// A violated [`Mdp`] invariant, as reported by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Discount(f64),
    NonFinite {
        row: usize,
        col: usize,
    },
    NegativeTransition {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    TransitionRowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeInitial {
        state: usize,
        value: f64,
    },
    InitialSum(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Discount(g) => write!(f, "discount {g} is outside (0, 1)"),
            Violation::NonFinite { row, col } => {
                write!(f, "transition entry ({row}, {col}) is not finite")
            }
            Violation::NegativeTransition { state, action, next, value } => write!(
                f,
                "transition row (state {state}, action {action}) has negative entry {value} at successor {next}"
            ),
            Violation::TransitionRowSum { state, action, sum } => write!(
                f,
                "transition row (state {state}, action {action}) sums to {sum}"
            ),
            Violation::NegativeInitial { state, value } => {
                write!(f, "initial_dist has negative entry {value} at state {state}")
            }
            Violation::InitialSum(sum) => write!(f, "initial_dist sums to {sum}"),
        }
    }
}

impl Mdp {
    /// Builds a validated MDP. `transition` must have shape
    /// `(n_states * n_actions) x n_states`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: DMatrix<f64>,
        discount: f64,
        initial_dist: DVector<f64>,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(n_states, n_actions, transition, discount, initial_dist)?;
        let violations = validate_mdp(&mdp);
        if violations.is_empty() {
            Ok(mdp)
        } else {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidModel(msg.join("; ")))
        }
    }

    /// Checks shapes only. Use [`validate_mdp`] to inspect the result.
    pub fn new_unchecked(
        n_states: usize,
        n_actions: usize,
        transition: DMatrix<f64>,
        discount: f64,
        initial_dist: DVector<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel(
                "n_states and n_actions must be positive".into(),
            ));
        }
        check_len("transition rows", n_states * n_actions, transition.nrows())?;
        check_len("transition columns", n_states, transition.ncols())?;
        check_len("initial_dist", n_states, initial_dist.len())?;
        Ok(Self {
            n_states,
            n_actions,
            transition,
            discount,
            initial_dist,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of state-action pairs, `|S||A|`.
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn initial_dist(&self) -> &DVector<f64> {
        &self.initial_dist
    }

    /// Flat index of `(state, action)`.
    #[inline]
    pub fn pair(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    /// Total mass `1 / (1 - gamma)` of every occupancy measure.
    pub fn horizon_mass(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    /// Dense `B - gamma P`, shape `|S||A| x |S|`, where `B[(x,a), x] = 1`.
    pub fn flow_matrix(&self) -> DMatrix<f64> {
        let mut m = -self.discount * &self.transition;
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                m[(self.pair(x, a), x)] += 1.0;
            }
        }
        m
    }

    /// `(B - gamma P)^T u - nu0`, one entry per state.
    pub fn flow_violation(&self, u: &DVector<f64>) -> DVector<f64> {
        let inflow = self.transition.tr_mul(u);
        DVector::from_fn(self.n_states, |y, _| {
            let out: f64 = (0..self.n_actions).map(|a| u[self.pair(y, a)]).sum();
            out - self.discount * inflow[y] - self.initial_dist[y]
        })
    }
}

/// Returns every violated invariant of `mdp`; empty means valid.
pub fn validate_mdp(mdp: &Mdp) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(mdp.discount > 0.0 && mdp.discount < 1.0) {
        out.push(Violation::Discount(mdp.discount));
    }
    for x in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.pair(x, a);
            let mut sum = 0.0;
            let mut finite = true;
            for y in 0..mdp.n_states {
                let p = mdp.transition[(row, y)];
                if !p.is_finite() {
                    out.push(Violation::NonFinite { row, col: y });
                    finite = false;
                    continue;
                }
                if p < 0.0 {
                    out.push(Violation::NegativeTransition {
                        state: x,
                        action: a,
                        next: y,
                        value: p,
                    });
                }
                sum += p;
            }
            if finite && (sum - 1.0).abs() > PROB_TOL {
                out.push(Violation::TransitionRowSum {
                    state: x,
                    action: a,
                    sum,
                });
            }
        }
    }
    for (x, &v) in mdp.initial_dist.iter().enumerate() {
        if v < 0.0 || !v.is_finite() {
            out.push(Violation::NegativeInitial { state: x, value: v });
        }
    }
    let total = mdp.initial_dist.sum();
    if (total - 1.0).abs() > PROB_TOL {
        out.push(Violation::InitialSum(total));
    }
    out
}

/// Serialized form of an [`Mdp`]; `transition` is row-major.
///
/// Floats are written in the shortest representation that parses back to
/// the same bits, so a write/read cycle is exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub transition: Vec<f64>,
    pub initial_dist: Vec<f64>,
}

impl TryFrom<MdpDocument> for Mdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let rows = doc.n_states * doc.n_actions;
        check_len(
            "transition entries",
            rows * doc.n_states,
            doc.transition.len(),
        )?;
        let transition = DMatrix::from_row_slice(rows, doc.n_states, &doc.transition);
        Mdp::new(
            doc.n_states,
            doc.n_actions,
            transition,
            doc.discount,
            DVector::from_vec(doc.initial_dist),
        )
    }
}

impl From<Mdp> for MdpDocument {
    fn from(mdp: Mdp) -> Self {
        let transition = mdp.transition.transpose().as_slice().to_vec();
        MdpDocument {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            discount: mdp.discount,
            transition,
            initial_dist: mdp.initial_dist.as_slice().to_vec(),
        }
    }
}

/// A stationary Markov policy; row `x` is `pi(. | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDocument", into = "PolicyDocument")]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(Error::InvalidModel("policy must be non-empty".into()));
        }
        for (x, row) in probs.row_iter().enumerate() {
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "policy row {x} has a negative or non-finite entry"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidModel(format!("policy row {x} sums to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    /// Deterministic policy taking `actions[x]` in state `x`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::InvalidArgument(format!(
                "action {a} out of range for {n_actions} actions"
            )));
        }
        let mut probs = DMatrix::zeros(actions.len(), n_actions);
        for (x, &a) in actions.iter().enumerate() {
            probs[(x, a)] = 1.0;
        }
        Policy::new(probs)
    }

    pub(crate) fn from_probs_unchecked(probs: DMatrix<f64>) -> Self {
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[(state, action)]
    }

    fn check_against(&self, mdp: &Mdp) -> Result<()> {
        check_len("policy states", mdp.n_states(), self.n_states())?;
        check_len("policy actions", mdp.n_actions(), self.n_actions())
    }

    /// State-to-state kernel `P^pi(x, y) = sum_a pi(a|x) P(y | x, a)`.
    pub fn state_kernel(&self, mdp: &Mdp) -> DMatrix<f64> {
        let s = mdp.n_states();
        let mut k = DMatrix::zeros(s, s);
        for x in 0..s {
            for a in 0..mdp.n_actions() {
                let p = self.probs[(x, a)];
                if p == 0.0 {
                    continue;
                }
                let row = mdp.transition.row(mdp.pair(x, a));
                for y in 0..s {
                    k[(x, y)] += p * row[y];
                }
            }
        }
        k
    }

    /// Spreads a per-state vector over actions: `out(x,a) = v(x) pi(a|x)`.
    fn spread(&self, v: &DVector<f64>) -> DVector<f64> {
        let na = self.n_actions();
        DVector::from_fn(self.n_states() * na, |i, _| {
            v[i / na] * self.probs[(i / na, i % na)]
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyDocument {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TryFrom<PolicyDocument> for Policy {
    type Error = Error;

    fn try_from(doc: PolicyDocument) -> Result<Self> {
        check_len(
            "policy entries",
            doc.n_states * doc.n_actions,
            doc.probs.len(),
        )?;
        Policy::new(DMatrix::from_row_slice(
            doc.n_states,
            doc.n_actions,
            &doc.probs,
        ))
    }
}

impl From<Policy> for PolicyDocument {
    fn from(p: Policy) -> Self {
        PolicyDocument {
            n_states: p.n_states(),
            n_actions: p.n_actions(),
            probs: p.probs.transpose().as_slice().to_vec(),
        }
    }
}

/// Discounted state-action occupancy measure `mu(x, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    #[serde(with = "crate::dvec_serde")]
    pub mass: DVector<f64>,
}

impl OccupancyMeasure {
    pub fn total(&self) -> f64 {
        self.mass.sum()
    }
}

impl From<DVector<f64>> for OccupancyMeasure {
    fn from(mass: DVector<f64>) -> Self {
        Self { mass }
    }
}

/// One-stage cost `c(x, a)` over state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    #[serde(with = "crate::dvec_serde")]
    pub values: DVector<f64>,
}

impl CostVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("cost entries must be finite".into()));
        }
        Ok(Self { values })
    }
}

/// Exact occupancy measure of `policy`, from the `|S| x |S|` system
/// `(I - gamma P^pi)^T d = nu0` followed by `mu(x,a) = d(x) pi(a|x)`.
pub fn occupancy_of_policy(mdp: &Mdp, policy: &Policy) -> Result<OccupancyMeasure> {
    policy.check_against(mdp)?;
    let s = mdp.n_states();
    let system = DMatrix::identity(s, s) - mdp.discount * policy.state_kernel(mdp);
    let visits = system
        .transpose()
        .lu()
        .solve(&mdp.initial_dist)
        .ok_or(Error::Singular("occupancy_of_policy"))?;
    let mut mass = policy.spread(&visits);
    for m in mass.iter_mut() {
        if *m < 0.0 && *m >= -CLAMP_TOL {
            *m = 0.0;
        }
    }
    Ok(OccupancyMeasure { mass })
}

/// `sum_{t < horizon} gamma^t Pr[x_t = x, a_t = a]` by explicit iteration.
/// Differs from the exact measure by at most `gamma^horizon / (1 - gamma)`
/// in l1.
pub fn truncated_series_occupancy(
    mdp: &Mdp,
    policy: &Policy,
    horizon: usize,
) -> Result<OccupancyMeasure> {
    policy.check_against(mdp)?;
    let mut mass = DVector::zeros(mdp.n_pairs());
    let mut pair_dist = policy.spread(&mdp.initial_dist);
    let mut weight = 1.0;
    for _ in 0..horizon {
        mass.axpy(weight, &pair_dist, 1.0);
        let state_dist = mdp.transition.tr_mul(&pair_dist);
        pair_dist = policy.spread(&state_dist);
        weight *= mdp.discount;
    }
    Ok(OccupancyMeasure { mass })
}

/// Returns `(||[u]_-||_1, ||(B - gamma P)^T u - nu0||_1)`; both vanish
/// exactly on the Bellman flow polytope.
pub fn flow_residual(mdp: &Mdp, u: &DVector<f64>) -> Result<(f64, f64)> {
    check_len("flow_residual vector", mdp.n_pairs(), u.len())?;
    let neg_mass = u.iter().filter(|&&v| v < 0.0).fold(0.0, |acc, v| acc - v);
    let flow_gap = mdp.flow_violation(u).lp_norm(1);
    Ok((neg_mass, flow_gap))
}

/// `<mu, c>`, the total expected discounted cost.
pub fn expected_return(mu: &OccupancyMeasure, c: &CostVector) -> Result<f64> {
    check_len("expected_return", mu.mass.len(), c.values.len())?;
    Ok(mu.mass.dot(&c.values))
}

/// State-action values `c(x,a) + gamma sum_y P(y|x,a) v(y)`.
pub fn q_values(mdp: &Mdp, c: &CostVector, v: &DVector<f64>) -> DVector<f64> {
    &c.values + mdp.discount * (&mdp.transition * v)
}

/// Per-state minimum over actions, lowest action index on ties.
fn greedy(mdp: &Mdp, q: &DVector<f64>) -> (Vec<usize>, DVector<f64>) {
    let na = mdp.n_actions();
    let mut actions = vec![0; mdp.n_states()];
    let mut v = DVector::zeros(mdp.n_states());
    for x in 0..mdp.n_states() {
        let mut best = q[mdp.pair(x, 0)];
        for a in 1..na {
            let qa = q[mdp.pair(x, a)];
            if qa < best {
                best = qa;
                actions[x] = a;
            }
        }
        v[x] = best;
    }
    (actions, v)
}

/// Cost-minimizing value iteration. Stops once the sup-norm change between
/// successive value vectors is at most `tolerance` and returns the greedy
/// deterministic policy together with the last value vector.
pub fn value_iteration(
    mdp: &Mdp,
    c: &CostVector,
    tolerance: f64,
) -> Result<(Policy, DVector<f64>)> {
    check_len("value_iteration cost", mdp.n_pairs(), c.values.len())?;
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "value iteration tolerance must be positive, got {tolerance}"
        )));
    }
    let mut v = DVector::zeros(mdp.n_states());
    for _ in 0..VALUE_ITERATION_CAP {
        let (_, next) = greedy(mdp, &q_values(mdp, c, &v));
        let change = (&next - &v).amax();
        v = next;
        if change <= tolerance {
            break;
        }
    }
    let (actions, _) = greedy(mdp, &q_values(mdp, c, &v));
    Ok((Policy::deterministic(&actions, mdp.n_actions())?, v))
}

/// Exact value of `policy` under cost `c`, by a linear solve.
pub fn policy_values(mdp: &Mdp, policy: &Policy, c: &CostVector) -> Result<DVector<f64>> {
    policy.check_against(mdp)?;
    check_len("policy_values cost", mdp.n_pairs(), c.values.len())?;
    let s = mdp.n_states();
    let kernel = policy.state_kernel(mdp);
    let expected_cost = DVector::from_fn(s, |x, _| {
        (0..mdp.n_actions())
            .map(|a| policy.prob(x, a) * c.values[mdp.pair(x, a)])
            .sum()
    });
    (DMatrix::identity(s, s) - mdp.discount * kernel)
        .lu()
        .solve(&expected_cost)
        .ok_or(Error::Singular("policy_values"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain_mdp;
    use approx::assert_abs_diff_eq;

    const STAY: usize = 0;
    const GO: usize = 1;

    #[test]
    fn chain_is_valid() {
        assert!(validate_mdp(&chain_mdp(0.5)).is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let mdp = chain_mdp(0.5);
        let mut t = mdp.transition().clone();
        t[(1, 1)] = 0.9;
        let bad = Mdp::new_unchecked(2, 2, t, 0.5, mdp.initial_dist().clone()).unwrap();
        let v = validate_mdp(&bad);
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::TransitionRowSum { state, action, sum } => {
                assert_eq!((*state, *action), (0, 1));
                assert_abs_diff_eq!(*sum, 0.9, epsilon = 1e-15);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn short_initial_dist_is_reported() {
        let mdp = chain_mdp(0.5);
        let bad = Mdp::new_unchecked(
            2,
            2,
            mdp.transition().clone(),
            0.5,
            DVector::from_vec(vec![0.5, 0.4]),
        )
        .unwrap();
        let v = validate_mdp(&bad);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "initial_dist sums to 0.9");
        assert!(Mdp::new(
            2,
            2,
            mdp.transition().clone(),
            0.5,
            DVector::from_vec(vec![0.5, 0.4])
        )
        .is_err());
    }

    #[test]
    fn bad_discount_and_shapes() {
        let mdp = chain_mdp(0.5);
        let bad = Mdp::new_unchecked(
            2,
            2,
            mdp.transition().clone(),
            1.0,
            mdp.initial_dist().clone(),
        )
        .unwrap();
        assert_eq!(validate_mdp(&bad), vec![Violation::Discount(1.0)]);
        assert!(Mdp::new_unchecked(
            3,
            2,
            mdp.transition().clone(),
            0.5,
            mdp.initial_dist().clone()
        )
        .is_err());
    }

    #[test]
    fn chain_always_stay() {
        let mdp = chain_mdp(0.5);
        let pi = Policy::deterministic(&[STAY, STAY], 2).unwrap();
        let mu = occupancy_of_policy(&mdp, &pi).unwrap();
        assert_abs_diff_eq!(mu.mass[mdp.pair(0, STAY)], 2.0, epsilon = 1e-14);
        for i in 1..4 {
            assert_eq!(mu.mass[i], 0.0);
        }
        let one = truncated_series_occupancy(&mdp, &pi, 1).unwrap();
        assert_eq!(one.mass[0], 1.0);
        let long = truncated_series_occupancy(&mdp, &pi, 60).unwrap();
        assert!((&long.mass - &mu.mass).lp_norm(1) <= 1e-15);
    }

    #[test]
    fn chain_always_go() {
        let mdp = chain_mdp(0.5);
        let pi = Policy::deterministic(&[GO, GO], 2).unwrap();
        let mu = occupancy_of_policy(&mdp, &pi).unwrap();
        let series = truncated_series_occupancy(&mdp, &pi, 60).unwrap();
        assert_abs_diff_eq!(series.mass[mdp.pair(0, GO)], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(series.mass[mdp.pair(1, GO)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mu.mass[mdp.pair(0, GO)], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(mu.mass[mdp.pair(1, GO)], 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(mu.mass[mdp.pair(0, STAY)], 0.0);
        assert_eq!(mu.mass[mdp.pair(1, STAY)], 0.0);
    }

    #[test]
    fn flow_residual_of_zero_and_occupancy() {
        let mdp = chain_mdp(0.5);
        let (neg, gap) = flow_residual(&mdp, &DVector::zeros(4)).unwrap();
        assert_eq!((neg, gap), (0.0, 1.0));
        let mu = occupancy_of_policy(&mdp, &Policy::uniform(2, 2)).unwrap();
        let (neg, gap) = flow_residual(&mdp, &mu.mass).unwrap();
        assert!(neg <= 1e-8 && gap <= 1e-8);
        assert!(flow_residual(&mdp, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn perturbed_flow_gap_matches_dense_product() {
        let mdp = chain_mdp(0.5);
        let mut u = occupancy_of_policy(&mdp, &Policy::uniform(2, 2))
            .unwrap()
            .mass;
        u[2] += 0.1;
        let (_, gap) = flow_residual(&mdp, &u).unwrap();
        // dense oracle: explicit (B - gamma P)^T u - nu0
        let mut dense = vec![0.0; 2];
        for y in 0..2 {
            for x in 0..2 {
                for a in 0..2 {
                    let b = if x == y { 1.0 } else { 0.0 };
                    dense[y] += (b - 0.5 * mdp.transition()[(x * 2 + a, y)]) * u[x * 2 + a];
                }
            }
            dense[y] -= mdp.initial_dist()[y];
        }
        let oracle: f64 = dense.iter().map(|v| v.abs()).sum();
        assert_abs_diff_eq!(gap, oracle, epsilon = 1e-14);
        // (s1, stay) self-loops: adds 0.1 (1 - 0.5) to state 1's row only
        assert_abs_diff_eq!(gap, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn expected_return_examples() {
        let mdp = chain_mdp(0.5);
        let mu =
            occupancy_of_policy(&mdp, &Policy::deterministic(&[STAY, STAY], 2).unwrap()).unwrap();
        let ones = CostVector::new(DVector::from_element(4, 1.0)).unwrap();
        let zero = CostVector::new(DVector::zeros(4)).unwrap();
        let ind = CostVector::new(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(expected_return(&mu, &ones).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(expected_return(&mu, &zero).unwrap(), 0.0);
        assert_abs_diff_eq!(expected_return(&mu, &ind).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn value_iteration_zero_cost() {
        let mdp = chain_mdp(0.5);
        let (pi, v) =
            value_iteration(&mdp, &CostVector::new(DVector::zeros(4)).unwrap(), 1e-10).unwrap();
        assert_eq!(pi, Policy::deterministic(&[0, 0], 2).unwrap());
        assert_eq!(v, DVector::zeros(2));
    }

    #[test]
    fn value_iteration_chain_matches_enumeration() {
        let mdp = chain_mdp(0.5);
        let c = CostVector::new(DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0])).unwrap();
        // oracle: enumerate the four deterministic policies
        let mut best = (f64::INFINITY, vec![]);
        for a0 in 0..2 {
            for a1 in 0..2 {
                let pi = Policy::deterministic(&[a0, a1], 2).unwrap();
                let v = policy_values(&mdp, &pi, &c).unwrap();
                if v[0] < best.0 {
                    best = (v[0], vec![a0, a1]);
                }
            }
        }
        assert_abs_diff_eq!(best.0, 1.0, epsilon = 1e-14);
        let (pi, v) = value_iteration(&mdp, &c, 1e-10).unwrap();
        assert_eq!(pi.prob(0, GO), 1.0);
        assert_eq!(pi.prob(1, STAY), 1.0);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn value_iteration_rejects_bad_tolerance() {
        let mdp = chain_mdp(0.5);
        assert!(value_iteration(&mdp, &CostVector::new(DVector::zeros(4)).unwrap(), 0.0).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mdp = crate::envs::make_random_mdp(4, 3, 0.9, 11).unwrap();
        let text = serde_json::to_string(&mdp).unwrap();
        let back: Mdp = serde_json::from_str(&text).unwrap();
        assert_eq!(mdp, back);
        let doc: MdpDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(doc.transition.len(), 12 * 4);
        // row-major: first row is P(. | state 0, action 0)
        assert_eq!(
            doc.transition[..4],
            *mdp.transition().row(0).transpose().as_slice()
        );
    }

    #[test]
    fn invalid_json_model_is_rejected() {
        let text = r#"{"n_states":1,"n_actions":1,"discount":0.5,"transition":[0.5],"initial_dist":[1.0]}"#;
        assert!(serde_json::from_str::<Mdp>(text).is_err());
    }
}

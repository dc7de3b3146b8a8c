//! Projected stochastic subgradient descent on the penalized surrogate loss
//!
//! ```text
//! L(theta) = ||Psi^T Phi theta - target||_1
//!          + lambda ||[Phi theta]_-||_1
//!          + lambda ||(B - gamma P)^T Phi theta - nu0||_1
//! ```
//!
//! over the Euclidean ball `||theta||_2 <= rho`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::expert::hoeffding_sample_size;
use crate::extract::policy_from_vector;
use crate::features::{CostBasis, FeatureExpectation, FeatureMatrix, SamplingConstants};
use crate::mdp::{Mdp, Policy};

const FIXED_POINT_ROUNDS: usize = 10_000;

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Hyperparameters of the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub rho: f64,
    pub lambda: f64,
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Independent subgradient draws averaged per step.
    #[serde(default = "one")]
    pub batch_size: usize,
}

fn one() -> usize {
    1
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("eta", self.eta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "iterations and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The three parts of the surrogate loss at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub objective: f64,
    pub v1: f64,
    pub v2: f64,
    pub total: f64,
}

/// Problem data with the products `Psi^T Phi` and `(B - gamma P)^T Phi`
/// precomputed.
#[derive(Debug, Clone)]
pub struct AlProblem<'a> {
    mdp: &'a Mdp,
    phi: &'a FeatureMatrix,
    target: DVector<f64>,
    /// `Psi^T Phi`, `n_c x d`.
    psi_phi: DMatrix<f64>,
    /// `(B - gamma P)^T Phi`, `|S| x d`.
    flow_phi: DMatrix<f64>,
}

impl<'a> AlProblem<'a> {
    pub fn new(
        mdp: &'a Mdp,
        basis: &'a CostBasis,
        phi: &'a FeatureMatrix,
        target: &FeatureExpectation,
    ) -> Result<Self> {
        check_len("cost basis rows", mdp.n_pairs(), basis.n_pairs())?;
        check_len("feature rows", mdp.n_pairs(), phi.phi().nrows())?;
        check_len("target", basis.n_costs(), target.values.len())?;
        Ok(Self {
            mdp,
            phi,
            target: target.values.clone(),
            psi_phi: basis.psi().tr_mul(phi.phi()),
            flow_phi: mdp.flow_matrix().tr_mul(phi.phi()),
        })
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn mdp(&self) -> &Mdp {
        self.mdp
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        check_len("theta", self.dim(), theta.len())
    }

    /// `Psi^T Phi theta - target`.
    pub fn objective_residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.psi_phi * theta - &self.target
    }

    /// `(B - gamma P)^T Phi theta - nu0`.
    pub fn flow_residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.flow_phi * theta - self.mdp.initial_dist()
    }

    pub fn loss(&self, theta: &DVector<f64>, lambda: f64) -> Result<LossBreakdown> {
        self.check_theta(theta)?;
        let objective = self.objective_residual(theta).lp_norm(1);
        let u = self.phi.phi() * theta;
        let v1 = u.iter().filter(|&&v| v < 0.0).fold(0.0, |acc, v| acc - v);
        let v2 = self.flow_residual(theta).lp_norm(1);
        Ok(LossBreakdown {
            objective,
            v1,
            v2,
            total: objective + lambda * v1 + lambda * v2,
        })
    }

    /// `Phi^T Psi sign(Psi^T Phi theta - target)`, the part of every
    /// subgradient that does not depend on the sampled indices.
    fn objective_term(&self, theta: &DVector<f64>) -> DVector<f64> {
        let signs = self.objective_residual(theta).map(sign);
        self.psi_phi.tr_mul(&signs)
    }

    /// Full subgradient with `sign(0) = 0` and the strict indicator
    /// `1{Phi_(x,a),: theta < 0}`.
    pub fn exact_subgradient(&self, theta: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        let mut g = self.objective_term(theta);
        let flow_signs = self.flow_residual(theta).map(sign);
        g += lambda * self.flow_phi.tr_mul(&flow_signs);
        let negative = (self.phi.phi() * theta).map(|v| if v < 0.0 { 1.0 } else { 0.0 });
        g -= lambda * self.phi.phi().tr_mul(&negative);
        Ok(g)
    }

    /// Penalty part of the stochastic subgradient for the draws
    /// `(x,a) = pair`, `y = state`.
    fn sampled_penalty(
        &self,
        theta: &DVector<f64>,
        constants: &SamplingConstants,
        pair: usize,
        state: usize,
        out: &mut DVector<f64>,
        weight: f64,
    ) {
        let lambda = constants.lambda;
        let flow_row = self.flow_phi.row(state);
        let r = flow_row.dot(&theta.transpose()) - self.mdp.initial_dist()[state];
        let s = sign(r);
        if s != 0.0 {
            let scale = weight * lambda * s / constants.q2[state];
            for (o, f) in out.iter_mut().zip(flow_row.iter()) {
                *o += scale * f;
            }
        }
        let phi_row = self.phi.phi().row(pair);
        if phi_row.dot(&theta.transpose()) < 0.0 {
            let scale = weight * lambda / constants.q1[pair];
            for (o, f) in out.iter_mut().zip(phi_row.iter()) {
                *o -= scale * f;
            }
        }
    }

    /// The stochastic subgradient for fixed draws; a deterministic function
    /// used both by the sampler and by exhaustive expectation checks.
    pub fn subgradient_for_draw(
        &self,
        theta: &DVector<f64>,
        constants: &SamplingConstants,
        pair: usize,
        state: usize,
    ) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        check_len("q1", self.mdp.n_pairs(), constants.q1.len())?;
        check_len("q2", self.mdp.n_states(), constants.q2.len())?;
        let mut g = self.objective_term(theta);
        self.sampled_penalty(theta, constants, pair, state, &mut g, 1.0);
        Ok(g)
    }

    /// Draws `(x,a) ~ q1`, `y ~ q2` and returns the unbiased subgradient
    /// estimate. With `batch > 1` independent draws are averaged.
    pub fn stochastic_subgradient<R: Rng + ?Sized>(
        &self,
        theta: &DVector<f64>,
        constants: &SamplingConstants,
        batch: usize,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        check_len("q1", self.mdp.n_pairs(), constants.q1.len())?;
        check_len("q2", self.mdp.n_states(), constants.q2.len())?;
        let mut g = self.objective_term(theta);
        let weight = 1.0 / batch as f64;
        for _ in 0..batch {
            let pair = constants.q1_index.sample(rng);
            let state = constants.q2_index.sample(rng);
            self.sampled_penalty(theta, constants, pair, state, &mut g, weight);
        }
        Ok(g)
    }
}

pub fn surrogate_loss(
    theta: &DVector<f64>,
    phi: &FeatureMatrix,
    basis: &CostBasis,
    mdp: &Mdp,
    target: &FeatureExpectation,
    lambda: f64,
) -> Result<LossBreakdown> {
    AlProblem::new(mdp, basis, phi, target)?.loss(theta, lambda)
}

pub fn exact_subgradient(
    theta: &DVector<f64>,
    phi: &FeatureMatrix,
    basis: &CostBasis,
    mdp: &Mdp,
    target: &FeatureExpectation,
    lambda: f64,
) -> Result<DVector<f64>> {
    AlProblem::new(mdp, basis, phi, target)?.exact_subgradient(theta, lambda)
}

/// Euclidean projection onto `{||theta||_2 <= rho}`.
pub fn project_l2_ball(theta: &DVector<f64>, rho: f64) -> DVector<f64> {
    let norm = theta.norm();
    if norm <= rho {
        theta.clone()
    } else {
        theta * (rho / norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Loss at the iterate produced by this step.
    pub loss: LossBreakdown,
    /// Norm of the subgradient used in this step.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    /// Average of the iterates `theta_1, ..., theta_T`.
    pub theta_hat: DVector<f64>,
}

impl TrainingTrace {
    pub const CSV_HEADER: &'static str = "iteration,loss_total,loss_objective,v1,v2,grad_norm";

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration, r.loss.total, r.loss.objective, r.loss.v1, r.loss.v2, r.grad_norm
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Runs projected SGD from `theta_0 = 0`: for `t = 1..T`,
/// `theta_t = Proj(theta_{t-1} - eta g_t(theta_{t-1}))`, then averages
/// `theta_1..theta_T` and extracts `pi_{Phi theta_hat}`.
///
/// Every sampled subgradient is checked against `K`; a violation aborts the
/// run.
pub fn run_sgd_al(
    config: &SgdConfig,
    problem: &AlProblem<'_>,
    constants: &SamplingConstants,
) -> Result<(TrainingTrace, Policy)> {
    config.validate()?;
    if (constants.lambda - config.lambda).abs() > 1e-12 * config.lambda.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling constants were built for lambda = {}, config has {}",
            constants.lambda, config.lambda
        )));
    }
    let d = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = DVector::zeros(d);
    let mut sum = DVector::zeros(d);
    let mut records = Vec::with_capacity(config.iterations);
    let bound = constants.k * (1.0 + 1e-12) + 1e-12;
    for t in 1..=config.iterations {
        let g = problem.stochastic_subgradient(&theta, constants, config.batch_size, &mut rng)?;
        let grad_norm = g.norm();
        if grad_norm > bound {
            return Err(Error::GradientBound {
                iteration: t,
                norm: grad_norm,
                bound: constants.k,
            });
        }
        theta.axpy(-config.eta, &g, 1.0);
        theta = project_l2_ball(&theta, config.rho);
        sum += &theta;
        records.push(TraceRecord {
            iteration: t,
            loss: problem.loss(&theta, config.lambda)?,
            grad_norm,
        });
    }
    let theta_hat = sum / config.iterations as f64;
    let policy = policy_from_vector(&problem.phi.apply(&theta_hat)?, problem.mdp)?;
    Ok((TrainingTrace { records, theta_hat }, policy))
}

/// `Delta = K + sqrt(10 ln(2/delta)) + sqrt(5 d ln(1 + rho^2 T / d))`.
pub fn theorem_delta(k: f64, delta: f64, d: usize, rho: f64, iterations: f64) -> f64 {
    let d = d as f64;
    k + (10.0 * (2.0 / delta).ln()).sqrt()
        + (5.0 * d * (1.0 + rho * rho * iterations / d).ln()).sqrt()
}

/// `(4 rho^2 / eps^2) (2 ||Psi||_inf / (lambda (1 - gamma)) + 1)^2 Delta^2`.
pub fn iteration_lower_bound(
    rho: f64,
    epsilon: f64,
    lambda: f64,
    gamma: f64,
    psi_inf_norm: f64,
    delta_const: f64,
) -> f64 {
    let lead = 2.0 * psi_inf_norm / (lambda * (1.0 - gamma)) + 1.0;
    4.0 * rho * rho / (epsilon * epsilon) * lead * lead * delta_const * delta_const
}

/// High-probability suboptimality of the averaged iterate as it appears in
/// the proof of the regret theorem:
/// `rho K / sqrt(T) + sqrt((1 + 4 rho^2 T) / T^2 (2 ln(2/delta) + d ln(1 + rho^2 T / d)))`.
pub fn suboptimality_bound(k: f64, delta: f64, d: usize, rho: f64, iterations: f64) -> f64 {
    let t = iterations;
    let dd = d as f64;
    rho * k / t.sqrt()
        + ((1.0 + 4.0 * rho * rho * t) / (t * t)
            * (2.0 * (2.0 / delta).ln() + dd * (1.0 + rho * rho * t / dd).ln()))
        .sqrt()
}

/// Parameter schedule that makes the regret theorem applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremSchedule {
    pub lambda: f64,
    pub m: u64,
    pub iterations: u64,
    pub eta: f64,
    /// `Delta` evaluated at the chosen `iterations`.
    pub delta_const: f64,
    /// `rho Delta / sqrt(T)` from the theorem statement.
    pub stated_slack: f64,
    /// The proof's expression for the same slack, logged for comparison.
    pub proof_slack: f64,
    pub fixed_point_rounds: usize,
}

/// `lambda = 1/eps`, `m` from the Hoeffding bound, the smallest `T` meeting
/// its own lower bound (resolved by iterating `T <- ceil(bound(T))` from
/// `T = 1`), and `eta = rho / (K sqrt(T))`.
#[allow(clippy::too_many_arguments)]
pub fn theorem_parameters(
    epsilon: f64,
    delta: f64,
    rho: f64,
    d: usize,
    n_c: usize,
    gamma: f64,
    k: f64,
    psi_inf_norm: f64,
) -> Result<TheoremSchedule> {
    let m = hoeffding_sample_size(n_c, gamma, epsilon, delta)?;
    if !(rho > 0.0) || !(k > 0.0) || d == 0 {
        return Err(Error::InvalidArgument(
            "need rho > 0, K > 0 and d >= 1".into(),
        ));
    }
    let lambda = 1.0 / epsilon;
    let bound = |t: f64| {
        iteration_lower_bound(
            rho,
            epsilon,
            lambda,
            gamma,
            psi_inf_norm,
            theorem_delta(k, delta, d, rho, t),
        )
    };
    let mut t = 1.0f64;
    let mut rounds = 0;
    loop {
        let next = bound(t).ceil();
        if next <= t {
            break;
        }
        t = next;
        rounds += 1;
        if rounds >= FIXED_POINT_ROUNDS || t > 9.0e15 {
            return Err(Error::NoConvergence(rounds));
        }
    }
    let delta_const = theorem_delta(k, delta, d, rho, t);
    Ok(TheoremSchedule {
        lambda,
        m,
        iterations: t as u64,
        eta: rho / (k * t.sqrt()),
        delta_const,
        stated_slack: rho * delta_const / t.sqrt(),
        proof_slack: suboptimality_bound(k, delta, d, rho, t),
        fixed_point_rounds: rounds,
    })
}

//! Exact solution of the full-dimensional program
//! `min_{mu in F} ||Psi^T mu - target||_1` and the regret report.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_expectation, l1_feature_gap, CostBasis, FeatureExpectation};
use crate::lp::LinearProgram;
use crate::mdp::{Mdp, OccupancyMeasure};

/// Largest `|S||A|` accepted by the dense solvers.
pub const MAX_PAIRS: usize = 4096;

/// Iteration budget of [`full_subgradient_solve`].
pub const FALLBACK_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    LpSimplex,
    FullSubgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub mu_star: OccupancyMeasure,
    /// l1 feature gap of `mu_star`, recomputed from the solution.
    pub objective: f64,
    pub method: SolveMethod,
}

fn guard(mdp: &Mdp, basis: &CostBasis, target: &FeatureExpectation) -> Result<()> {
    if mdp.n_pairs() > MAX_PAIRS {
        return Err(Error::ProblemTooLarge {
            n: mdp.n_pairs(),
            limit: MAX_PAIRS,
        });
    }
    crate::error::check_len("cost basis rows", mdp.n_pairs(), basis.n_pairs())?;
    crate::error::check_len("target", basis.n_costs(), target.values.len())
}

fn gap_of(mu: &DVector<f64>, basis: &CostBasis, target: &FeatureExpectation) -> Result<f64> {
    l1_feature_gap(&feature_expectation(mu, basis)?, target)
}

/// Solves the program as an LP in `(mu, s)`:
///
/// ```text
/// min sum_i s_i
///   (B - gamma P)^T mu = nu0
///   Psi^T mu - s <= target
///  -Psi^T mu - s <= -target
///   mu, s >= 0
/// ```
pub fn exact_al_solve(
    mdp: &Mdp,
    basis: &CostBasis,
    target: &FeatureExpectation,
) -> Result<ExactSolution> {
    guard(mdp, basis, target)?;
    let n = mdp.n_pairs();
    let nc = basis.n_costs();
    let mut lp = LinearProgram::new(n + nc);
    let mut cost = vec![0.0; n + nc];
    cost[n..].fill(1.0);
    lp.set_cost(cost)?;
    let flow = mdp.flow_matrix();
    for y in 0..mdp.n_states() {
        let mut row = vec![0.0; n + nc];
        for (j, r) in row.iter_mut().take(n).enumerate() {
            *r = flow[(j, y)];
        }
        lp.add_eq(row, mdp.initial_dist()[y])?;
    }
    let psi = basis.psi();
    for i in 0..nc {
        let mut up = vec![0.0; n + nc];
        let mut down = vec![0.0; n + nc];
        for j in 0..n {
            up[j] = psi[(j, i)];
            down[j] = -psi[(j, i)];
        }
        up[n + i] = -1.0;
        down[n + i] = -1.0;
        lp.add_le(up, target.values[i])?;
        lp.add_le(down, -target.values[i])?;
    }
    let sol = lp.solve()?;
    let mu = sol.x.rows(0, n).into_owned();
    Ok(ExactSolution {
        objective: gap_of(&mu, basis, target)?,
        mu_star: OccupancyMeasure { mass: mu },
        method: SolveMethod::LpSimplex,
    })
}

/// Euclidean projection onto the flow polytope `{mu >= 0, M^T mu = nu0}`
/// with `M = B - gamma P`.
///
/// The projection of `v` is `[v + M y]_+` where `y` maximizes the concave
/// dual `y . nu0 - ||[v + M y]_+||^2 / 2`. The dual is solved by a damped
/// semismooth Newton method, warm-started from the previous call.
struct FlowProjector {
    m: DMatrix<f64>,
    nu0: DVector<f64>,
    y: DVector<f64>,
    /// Active set of the last projection and the factored
    /// `M_A^T M_A + eps I` on it.
    active: Vec<bool>,
    factor: Option<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl FlowProjector {
    const MAX_NEWTON: usize = 100;

    fn new(mdp: &Mdp) -> Self {
        Self {
            m: mdp.flow_matrix(),
            nu0: mdp.initial_dist().clone(),
            y: DVector::zeros(mdp.n_states()),
            active: vec![false; mdp.n_pairs()],
            factor: None,
        }
    }

    fn dual(&self, v: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let z = v + &self.m * y;
        y.dot(&self.nu0) - 0.5 * z.iter().map(|t| t.max(0.0).powi(2)).sum::<f64>()
    }

    fn jacobian(&self, active: &[bool]) -> DMatrix<f64> {
        let s = self.nu0.len();
        let mut jac = DMatrix::from_diagonal_element(s, s, 1e-12);
        for (j, _) in active.iter().enumerate().filter(|(_, &a)| a) {
            let row = self.m.row(j).transpose();
            jac.ger(1.0, &row, &row, 1.0);
        }
        jac
    }

    /// On a fixed active set `A` the projection is affine in `v`:
    /// `y = J_A^{-1} (nu0 - M_A^T v_A)`. Accepted when the resulting signs
    /// reproduce `A`.
    fn try_cached(&mut self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let factor = self.factor.as_ref()?;
        let mut rhs = self.nu0.clone();
        for (j, _) in self.active.iter().enumerate().filter(|(_, &a)| a) {
            rhs.axpy(-v[j], &self.m.row(j).transpose(), 1.0);
        }
        let y = factor.solve(&rhs)?;
        let z = v + &self.m * &y;
        let consistent = z.iter().zip(&self.active).all(|(&t, &a)| (t > 0.0) == a);
        if !consistent {
            return None;
        }
        let mu = z.map(|t| t.max(0.0));
        let grad = &self.nu0 - self.m.tr_mul(&mu);
        if grad.amax() > 1e-12 * (1.0 + self.nu0.amax()) {
            return None;
        }
        self.y = y;
        Some(mu)
    }

    fn project(&mut self, v: &DVector<f64>) -> DVector<f64> {
        if let Some(mu) = self.try_cached(v) {
            return mu;
        }
        let scale = 1.0 + self.nu0.amax();
        for _ in 0..Self::MAX_NEWTON {
            let z = v + &self.m * &self.y;
            let mu = z.map(|t| t.max(0.0));
            let grad = &self.nu0 - self.m.tr_mul(&mu);
            if grad.amax() <= 1e-14 * scale {
                break;
            }
            let active: Vec<bool> = z.iter().map(|&t| t > 0.0).collect();
            let dir = self
                .jacobian(&active)
                .lu()
                .solve(&grad)
                .unwrap_or_else(|| grad.clone());
            let base = self.dual(v, &self.y);
            let slope = grad.dot(&dir);
            let mut t = 1.0;
            loop {
                let trial = &self.y + t * &dir;
                if self.dual(v, &trial) >= base + 1e-4 * t * slope || t < 1e-12 {
                    self.y = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        let z = v + &self.m * &self.y;
        let active: Vec<bool> = z.iter().map(|&t| t > 0.0).collect();
        if active != self.active || self.factor.is_none() {
            self.factor = Some(self.jacobian(&active).lu());
            self.active = active;
        }
        z.map(|t| t.max(0.0))
    }
}

/// Deterministic cross-check for [`exact_al_solve`].
///
/// Projected subgradient descent on `||Psi^T mu - target||_1` over the flow
/// polytope with exact projections. Steps follow the target-level Polyak
/// rule `(f(mu) - level) / ||g||^2` with `level = f_ref - delta`: `f_ref`
/// moves down whenever the best value improves by `delta / 2`, and `delta`
/// is halved, with a restart from the best point, whenever the iterates
/// travel farther than `0.1/(1-gamma)` without such an improvement. Stops
/// after `iterations` steps or once `delta` falls below `1e-12`.
pub fn full_subgradient_solve(
    mdp: &Mdp,
    basis: &CostBasis,
    target: &FeatureExpectation,
    iterations: usize,
) -> Result<ExactSolution> {
    guard(mdp, basis, target)?;
    let psi = basis.psi();
    let budget = 0.1 * mdp.horizon_mass();
    let n = mdp.n_pairs();
    let mut projector = FlowProjector::new(mdp);

    let objective = |mu: &DVector<f64>| -> (f64, DVector<f64>) {
        let r = psi.tr_mul(mu) - &target.values;
        (r.lp_norm(1), psi * r.map(sign))
    };

    let mut mu = projector.project(&DVector::from_element(n, mdp.horizon_mass() / n as f64));
    let (mut best_value, _) = objective(&mu);
    let mut best_point = mu.clone();
    let mut reference = best_value;
    let mut delta = 0.5 * best_value;
    let mut path = 0.0;
    for _ in 0..iterations {
        if delta < 1e-12 {
            break;
        }
        let (value, g) = objective(&mu);
        if value < best_value {
            best_value = value;
            best_point.copy_from(&mu);
        }
        if best_value <= reference - 0.5 * delta {
            reference = best_value;
            path = 0.0;
        } else if path > budget {
            delta *= 0.5;
            path = 0.0;
            reference = best_value;
            mu.copy_from(&best_point);
            continue;
        }
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            break;
        }
        let step = (value - (reference - delta)) / g2;
        let next = projector.project(&(&mu - step * &g));
        path += (&next - &mu).norm();
        mu = next;
    }
    let (value, _) = objective(&mu);
    if value < best_value {
        best_point = mu;
    }
    Ok(ExactSolution {
        objective: gap_of(&best_point, basis, target)?,
        mu_star: OccupancyMeasure { mass: best_point },
        method: SolveMethod::FullSubgradient,
    })
}

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

/// Problem constants entering the right-hand side of the regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub epsilon: f64,
    pub rho: f64,
    pub d: usize,
    pub n_c: usize,
    pub gamma: f64,
    /// `||Psi||_inf`, largest absolute row sum of the basis.
    pub psi_inf_norm: f64,
    /// `||Phi||_1`, largest absolute column sum of the features.
    pub phi_one_norm: f64,
}

/// Comparator point `theta` of the regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparator {
    /// `||Psi^T mu_theta - <mu^{pi_E}, Psi>||_1`.
    pub gap: f64,
    pub v1: f64,
    pub v2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// Feature gap of the trained policy against the exact expert.
    pub lhs: f64,
    pub comparator_gap: f64,
    /// `(4 ||Psi||_inf / (1 - gamma) + 1/eps) (V1 + V2)` at the comparator.
    pub penalty_term: f64,
    /// `(2 ||Psi||_inf / (1 - gamma)) (||Psi||_inf ||Phi||_1 rho sqrt(d) + n_c / (1 - gamma)) eps + eps`.
    pub approximation_term: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Optimum of the full program against the estimated expert, when the
    /// instance was small enough to solve.
    pub baseline_objective: Option<f64>,
    pub inputs: TheoremInputs,
}

pub fn regret_report(
    trained_gap: f64,
    baseline_objective: Option<f64>,
    comparator: Comparator,
    inputs: TheoremInputs,
) -> RegretReport {
    let TheoremInputs {
        epsilon,
        rho,
        d,
        n_c,
        gamma,
        psi_inf_norm,
        phi_one_norm,
    } = inputs;
    let penalty_term =
        (4.0 * psi_inf_norm / (1.0 - gamma) + 1.0 / epsilon) * (comparator.v1 + comparator.v2);
    let approximation_term = (2.0 * psi_inf_norm / (1.0 - gamma))
        * (psi_inf_norm * phi_one_norm * rho * (d as f64).sqrt() + n_c as f64 / (1.0 - gamma))
        * epsilon
        + epsilon;
    let rhs = comparator.gap + penalty_term + approximation_term;
    RegretReport {
        lhs: trained_gap,
        comparator_gap: comparator.gap,
        penalty_term,
        approximation_term,
        rhs,
        holds: trained_gap <= rhs,
        baseline_objective,
        inputs,
    }
}

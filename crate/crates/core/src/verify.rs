//! Randomized property sweeps over the library's oracles. Each sweep is
//! sized by its arguments and reports the worst case it met.

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{exact_al_solve, full_subgradient_solve, FALLBACK_ITERATIONS};
use crate::envs::{make_random_mdp, random_policy};
use crate::error::Result;
use crate::exact::{exact_occupancy, exact_truncated_series, l1_distance, power, rational, to_f64};
use crate::experiment::random_ball_point;
use crate::expert::{
    default_horizon, empirical_feature_expectation, hoeffding_sample_size, sample_trajectories,
    DEFAULT_TAIL,
};
use crate::extract::lemma2_report;
use crate::features::{
    brute_force_sup_gap, build_feature_matrix, feature_expectation, l1_feature_gap,
    sampling_constants, CostBasis, FeatureExpectation, Scheme,
};
use crate::mdp::{occupancy_of_policy, truncated_series_occupancy, Mdp};
use crate::sgd::AlProblem;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_mdp<R: Rng>(
    rng: &mut R,
    max_states: usize,
    max_actions: usize,
    gamma: Option<f64>,
) -> Result<Mdp> {
    let s = rng.random_range(2..=max_states);
    let a = rng.random_range(1..=max_actions);
    let g = gamma.unwrap_or_else(|| rng.random_range(0.5..0.95));
    make_random_mdp(s, a, g, rng.random())
}

fn signed_basis<R: Rng>(rng: &mut R, rows: usize, n_c: usize) -> Result<CostBasis> {
    CostBasis::new(DMatrix::from_fn(rows, n_c, |_, _| {
        rng.random_range(-1.0..=1.0)
    }))
}

fn unit_basis<R: Rng>(rng: &mut R, rows: usize, n_c: usize) -> Result<CostBasis> {
    CostBasis::new(DMatrix::from_fn(rows, n_c, |_, _| rng.random::<f64>()))
}

/// `l1_feature_gap` against sign-vertex enumeration on random triples.
pub fn gap_vertex_equality(triples: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 1);
    let mut worst = 0.0f64;
    for _ in 0..triples {
        let n = rng.random_range(2..=40);
        let n_c = rng.random_range(1..=8);
        let mass = rng.random_range(1.0..20.0);
        let mu = DVector::from_fn(n, |_, _| rng.random::<f64>() * mass / n as f64);
        let mu_e = DVector::from_fn(n, |_, _| rng.random::<f64>() * mass / n as f64);
        let basis = signed_basis(&mut rng, n, n_c)?;
        let a = feature_expectation(&mu, &basis)?;
        let b = feature_expectation(&mu_e, &basis)?;
        worst = worst.max((l1_feature_gap(&a, &b)? - brute_force_sup_gap(&a, &b)?).abs());
    }
    Ok(CheckOutcome {
        name: "l1 gap equals sign-vertex supremum",
        passed: worst <= 1e-12,
        detail: format!("{triples} triples, max |difference| = {worst:e} (tolerance 1e-12)"),
    })
}

/// Exact occupancy against the exact truncated series, plus the floating
/// routines against the exact values.
pub fn occupancy_series(
    mdps: usize,
    max_states: usize,
    horizon: usize,
    gamma: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let results: Vec<Result<(bool, f64, f64, f64)>> = (0..mdps as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, 2 + k);
            let mdp = random_mdp(&mut rng, max_states, 4, Some(gamma))?;
            let pi = random_policy(mdp.n_states(), mdp.n_actions(), rng.random())?;
            let exact = exact_occupancy(&mdp, &pi)?;
            let series = exact_truncated_series(&mdp, &pi, horizon)?;
            let g = rational(gamma);
            let one = BigRational::from_integer(1.into());
            let bound = power(&g, horizon) / (one - g);
            let dist = l1_distance(&exact, &series);
            let ratio = to_f64(&(&dist / &bound));
            let solve = occupancy_of_policy(&mdp, &pi)?;
            let float_series = truncated_series_occupancy(&mdp, &pi, horizon)?;
            let solve_err: f64 = exact
                .iter()
                .zip(solve.mass.iter())
                .map(|(e, f)| (to_f64(e) - f).abs())
                .sum();
            let series_err: f64 = series
                .iter()
                .zip(float_series.mass.iter())
                .map(|(e, f)| (to_f64(e) - f).abs())
                .sum();
            Ok((dist <= bound, ratio, solve_err, series_err))
        })
        .collect();
    let mut all_hold = true;
    let (mut worst_ratio, mut worst_solve, mut worst_series) = (0.0f64, 0.0f64, 0.0f64);
    for r in results {
        let (holds, ratio, solve, series) = r?;
        all_hold &= holds;
        worst_ratio = worst_ratio.max(ratio);
        worst_solve = worst_solve.max(solve);
        worst_series = worst_series.max(series);
    }
    let float_ok = worst_solve <= 1e-12 && worst_series <= 1e-12;
    Ok(CheckOutcome {
        name: "linear-solve occupancy vs truncated series",
        passed: all_hold && float_ok,
        detail: format!(
            "{mdps} MDPs, H = {horizon}, gamma = {gamma}: exact l1 distance / (gamma^H/(1-gamma)) <= {worst_ratio} \
             (bound holds in exact arithmetic: {all_hold}); f64 solve error {worst_solve:e}, \
             f64 series error {worst_series:e} (tolerance 1e-12)"
        ),
    })
}

fn random_u<R: Rng>(rng: &mut R, mdp: &Mdp) -> Result<DVector<f64>> {
    let n = mdp.n_pairs();
    let scale = mdp.horizon_mass() / n as f64;
    Ok(match rng.random_range(0..4) {
        0 => DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale * 2.0),
        1 => {
            let pi = random_policy(mdp.n_states(), mdp.n_actions(), rng.random())?;
            let mu = occupancy_of_policy(mdp, &pi)?.mass;
            let noise = rng.random_range(1e-6..1.0);
            mu.map(|v| v + noise * scale * rng.sample::<f64, _>(StandardNormal))
        }
        2 => DVector::from_fn(n, |_, _| rng.random::<f64>() * 3.0 * scale),
        _ => DVector::from_fn(n, |_, _| {
            if rng.random_bool(0.3) {
                rng.random_range(-1.0..2.0) * scale * 4.0
            } else {
                0.0
            }
        }),
    })
}

/// Extraction distance against its bound on random vectors.
pub fn extraction_bound_sweep(
    mdps: usize,
    vectors_per_mdp: usize,
    seed: u64,
) -> Result<CheckOutcome> {
    let results: Vec<Result<(f64, f64)>> = (0..mdps as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, 1000 + k);
            let mdp = random_mdp(&mut rng, 12, 4, None)?;
            let mut worst_slack = f64::INFINITY;
            let mut worst_refined = f64::INFINITY;
            for _ in 0..vectors_per_mdp {
                let u = random_u(&mut rng, &mdp)?;
                let r = lemma2_report(&u, &mdp)?;
                worst_slack = worst_slack.min(r.slack());
                worst_refined = worst_refined.min(r.positive_part_bound - r.positive_part_distance);
            }
            Ok((worst_slack, worst_refined))
        })
        .collect();
    let (mut slack, mut refined) = (f64::INFINITY, f64::INFINITY);
    for r in results {
        let (s, p) = r?;
        slack = slack.min(s);
        refined = refined.min(p);
    }
    Ok(CheckOutcome {
        name: "extraction distance bound",
        passed: slack >= -1e-8 && refined >= -1e-8,
        detail: format!(
            "{} vectors over {mdps} MDPs, min slack = {slack:e}, min refined positive-part slack = {refined:e} \
             (tolerance -1e-8)",
            mdps * vectors_per_mdp
        ),
    })
}

/// A random training instance: MDP, basis, features and target.
pub struct Instance {
    pub mdp: Mdp,
    pub basis: CostBasis,
    pub phi: crate::features::FeatureMatrix,
    pub target: FeatureExpectation,
    pub lambda: f64,
}

pub fn random_instance<R: Rng>(rng: &mut R, max_pairs: usize) -> Result<Instance> {
    let (mdp, n_pairs) = loop {
        let mdp = random_mdp(rng, 10, 4, None)?;
        if mdp.n_pairs() <= max_pairs {
            let n = mdp.n_pairs();
            break (mdp, n);
        }
    };
    let n_c = rng.random_range(1..=4);
    let d = rng.random_range(2..=5);
    let basis = unit_basis(rng, n_pairs, n_c)?;
    let phi = build_feature_matrix(&mdp, d, rng.random())?;
    let expert = occupancy_of_policy(
        &mdp,
        &random_policy(mdp.n_states(), mdp.n_actions(), rng.random())?,
    )?;
    let mut target = feature_expectation(&expert.mass, &basis)?;
    target
        .values
        .iter_mut()
        .for_each(|v| *v += rng.random_range(-0.2..0.2));
    Ok(Instance {
        mdp,
        basis,
        phi,
        target,
        lambda: rng.random_range(0.1..10.0),
    })
}

fn scheme_for(k: u64) -> Scheme {
    if k % 2 == 0 {
        Scheme::Norm
    } else {
        Scheme::Uniform
    }
}

/// Exhaustive expectation of the stochastic subgradient over `q1 x q2`.
pub fn unbiasedness(instances: usize, thetas: usize, seed: u64) -> Result<CheckOutcome> {
    let results: Vec<Result<(f64, f64)>> = (0..instances as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, 2000 + k);
            let inst = random_instance(&mut rng, 64)?;
            let c = sampling_constants(
                &inst.phi,
                &inst.mdp,
                &inst.basis,
                inst.lambda,
                scheme_for(k),
            )?;
            let problem = AlProblem::new(&inst.mdp, &inst.basis, &inst.phi, &inst.target)?;
            let (mut worst, mut worst_rel) = (0.0f64, 0.0f64);
            for _ in 0..thetas {
                let theta = random_ball_point(&mut rng, problem.dim(), 3.0);
                let exact = problem.exact_subgradient(&theta, inst.lambda)?;
                let mut mean = DVector::zeros(problem.dim());
                for pair in 0..inst.mdp.n_pairs() {
                    for state in 0..inst.mdp.n_states() {
                        let g = problem.subgradient_for_draw(&theta, &c, pair, state)?;
                        mean.axpy(c.q1[pair] * c.q2[state], &g, 1.0);
                    }
                }
                let err = (&mean - &exact).amax();
                worst = worst.max(err);
                worst_rel = worst_rel.max(err / exact.amax().max(1.0));
            }
            Ok((worst, worst_rel))
        })
        .collect();
    let (mut worst, mut rel) = (0.0f64, 0.0f64);
    for r in results {
        let (w, q) = r?;
        worst = worst.max(w);
        rel = rel.max(q);
    }
    Ok(CheckOutcome {
        name: "stochastic subgradient is unbiased",
        passed: worst <= 1e-10,
        detail: format!(
            "{instances} instances x {thetas} theta, max |E g - exact| = {worst:e} (tolerance 1e-10), relative {rel:e}"
        ),
    })
}

/// Norms of sampled subgradients against `K`.
pub fn gradient_bound(samples: usize, thetas: usize, seed: u64) -> Result<CheckOutcome> {
    let per_theta = samples.div_ceil(thetas);
    let results: Vec<Result<(usize, f64)>> = (0..thetas as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, 3000 + k);
            let inst = random_instance(&mut rng, 64)?;
            let c = sampling_constants(
                &inst.phi,
                &inst.mdp,
                &inst.basis,
                inst.lambda,
                scheme_for(k),
            )?;
            let problem = AlProblem::new(&inst.mdp, &inst.basis, &inst.phi, &inst.target)?;
            let radius = rng.random_range(0.1..5.0);
            let theta = random_ball_point(&mut rng, problem.dim(), radius);
            let mut violations = 0;
            let mut ratio = 0.0f64;
            for _ in 0..per_theta {
                let g = problem.stochastic_subgradient(&theta, &c, 1, &mut rng)?;
                let r = g.norm() / c.k;
                ratio = ratio.max(r);
                if g.norm() > c.k {
                    violations += 1;
                }
            }
            Ok((violations, ratio))
        })
        .collect();
    let (mut violations, mut ratio) = (0usize, 0.0f64);
    for r in results {
        let (v, q) = r?;
        violations += v;
        ratio = ratio.max(q);
    }
    Ok(CheckOutcome {
        name: "sampled subgradient norm bounded by K",
        passed: violations == 0,
        detail: format!(
            "{} samples over {thetas} theta, {violations} violations, max ||g|| / K = {ratio}",
            per_theta * thetas
        ),
    })
}

/// Smallest distance from a kink of the loss at `theta`.
fn kink_margin(
    problem: &AlProblem<'_>,
    phi: &crate::features::FeatureMatrix,
    theta: &DVector<f64>,
) -> Result<f64> {
    let u = phi.apply(theta)?;
    let r = problem.objective_residual(theta);
    let f = problem.flow_residual(theta);
    Ok(u.iter()
        .chain(r.iter())
        .chain(f.iter())
        .fold(f64::INFINITY, |m, v| m.min(v.abs())))
}

/// Convexity inequality on random pairs and central differences at random
/// differentiable points.
pub fn subgradient_validity(pairs: usize, fd_points: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = rng_for(seed, 4000);
    let mut worst_convexity = f64::INFINITY;
    for _ in 0..pairs {
        let inst = random_instance(&mut rng, 64)?;
        let problem = AlProblem::new(&inst.mdp, &inst.basis, &inst.phi, &inst.target)?;
        let a = random_ball_point(&mut rng, problem.dim(), 3.0);
        let b = random_ball_point(&mut rng, problem.dim(), 3.0);
        let la = problem.loss(&a, inst.lambda)?.total;
        let lb = problem.loss(&b, inst.lambda)?.total;
        let g = problem.exact_subgradient(&a, inst.lambda)?;
        worst_convexity = worst_convexity.min(lb - la - g.dot(&(&b - &a)));
    }
    let h = 1e-7;
    let mut worst_fd = 0.0f64;
    let mut found = 0;
    let mut tries = 0;
    while found < fd_points && tries < 100 * fd_points.max(1) {
        tries += 1;
        let inst = random_instance(&mut rng, 64)?;
        let problem = AlProblem::new(&inst.mdp, &inst.basis, &inst.phi, &inst.target)?;
        let theta = random_ball_point(&mut rng, problem.dim(), 3.0);
        if kink_margin(&problem, &inst.phi, &theta)? < 1e-4 {
            continue;
        }
        found += 1;
        let g = problem.exact_subgradient(&theta, inst.lambda)?;
        for i in 0..problem.dim() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (problem.loss(&up, inst.lambda)?.total
                - problem.loss(&down, inst.lambda)?.total)
                / (2.0 * h);
            worst_fd = worst_fd.max((fd - g[i]).abs());
        }
    }
    Ok(CheckOutcome {
        name: "exact subgradient validity",
        passed: worst_convexity >= -1e-8 && worst_fd <= 1e-6 && found == fd_points,
        detail: format!(
            "{pairs} pairs, min convexity slack = {worst_convexity:e} (tolerance -1e-8); {found} differentiable \
             points, max |finite difference - subgradient| = {worst_fd:e} (tolerance 1e-6)"
        ),
    })
}

/// Repeated expert estimation with the theorem's sample size; counts
/// repetitions in which every coordinate meets the accuracy.
pub fn hoeffding_scaling(repetitions: usize, required: usize, seed: u64) -> Result<CheckOutcome> {
    let (n_c, eps, delta, gamma) = (2usize, 0.5, 0.5, 0.5);
    let mut rng = rng_for(seed, 5000);
    let mdp = make_random_mdp(6, 3, gamma, rng.random())?;
    let basis = unit_basis(&mut rng, mdp.n_pairs(), n_c)?;
    let pi = random_policy(mdp.n_states(), mdp.n_actions(), rng.random())?;
    let exact = feature_expectation(&occupancy_of_policy(&mdp, &pi)?.mass, &basis)?;
    let m = hoeffding_sample_size(n_c, gamma, eps, delta)? as usize;
    let horizon = default_horizon(gamma, DEFAULT_TAIL);
    let tolerance = eps / (4.0 * n_c as f64) + gamma.powi(horizon as i32) / (1.0 - gamma);
    let base: u64 = rng.random();
    let errors: Vec<Result<f64>> = (0..repetitions as u64)
        .into_par_iter()
        .map(|r| {
            let batch = sample_trajectories(&mdp, &pi, m, horizon, base.wrapping_add(r))?;
            let est = empirical_feature_expectation(&batch, &basis, &mdp)?;
            Ok((&est.values - &exact.values).amax())
        })
        .collect();
    let mut successes = 0;
    let mut worst = 0.0f64;
    for e in errors {
        let e = e?;
        worst = worst.max(e);
        if e <= tolerance {
            successes += 1;
        }
    }
    Ok(CheckOutcome {
        name: "expert estimate accuracy at the theorem's sample size",
        passed: successes >= required,
        detail: format!(
            "m = {m}, H = {horizon}: {successes}/{repetitions} repetitions within {tolerance} on every \
             coordinate (need {required}), worst error {worst}"
        ),
    })
}

/// Simplex against the deterministic fallback on random small instances.
pub fn baseline_crosscheck(
    instances: usize,
    iterations: Option<usize>,
    seed: u64,
) -> Result<CheckOutcome> {
    let iterations = iterations.unwrap_or(FALLBACK_ITERATIONS);
    let results: Vec<Result<f64>> = (0..instances as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(seed, 6000 + k);
            let mdp = random_mdp(&mut rng, 10, 3, None)?;
            let n_c = rng.random_range(1..=4);
            let basis = unit_basis(&mut rng, mdp.n_pairs(), n_c)?;
            let pi = random_policy(mdp.n_states(), mdp.n_actions(), rng.random())?;
            let mut target = feature_expectation(&occupancy_of_policy(&mdp, &pi)?.mass, &basis)?;
            target
                .values
                .iter_mut()
                .for_each(|v| *v *= rng.random_range(0.5..1.5));
            let lp = exact_al_solve(&mdp, &basis, &target)?;
            let sg = full_subgradient_solve(&mdp, &basis, &target, iterations)?;
            Ok((lp.objective - sg.objective).abs())
        })
        .collect();
    let mut worst = 0.0f64;
    for r in results {
        worst = worst.max(r?);
    }
    Ok(CheckOutcome {
        name: "simplex agrees with full subgradient fallback",
        passed: worst <= 1e-4,
        detail: format!("{instances} instances, {iterations} fallback iterations, max |difference| = {worst:e} (tolerance 1e-4)"),
    })
}

/// Quick versions of every sweep.
pub fn quick_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        gap_vertex_equality(200, seed)?,
        occupancy_series(10, 10, 60, 0.5, seed)?,
        extraction_bound_sweep(5, 200, seed)?,
        unbiasedness(4, 5, seed)?,
        gradient_bound(10_000, 20, seed)?,
        subgradient_validity(100, 20, seed)?,
        hoeffding_scaling(40, 30, seed)?,
        baseline_crosscheck(3, Some(200_000), seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        for outcome in quick_suite(1).unwrap() {
            assert!(outcome.passed, "{outcome}");
        }
    }
}

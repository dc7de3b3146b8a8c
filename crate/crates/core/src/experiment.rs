//! End-to-end pipeline: environment, expert, features, training,
//! evaluation, baseline and regret report, with every artifact on disk.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baseline::{
    exact_al_solve, regret_report, Comparator, ExactSolution, RegretReport, TheoremInputs,
};
use crate::envs::{chain_mdp, make_gridworld, make_random_mdp, Grid};
use crate::error::{Error, Result};
use crate::expert::{
    default_horizon, empirical_feature_expectation, format_trajectories, sample_trajectories,
    EmpiricalFeatureExpectation, DEFAULT_TAIL,
};
use crate::extract::{evaluate_theta, ThetaEvaluation};
use crate::features::{
    build_feature_matrix, feature_expectation, sampling_constants, CostBasis, FeatureExpectation,
    FeatureMatrix, MatrixDocument, SamplingConstants, Scheme,
};
use crate::mdp::{occupancy_of_policy, value_iteration, CostVector, Mdp, Policy};
use crate::sgd::{
    project_l2_ball, run_sgd_al, theorem_parameters, AlProblem, SgdConfig, TheoremSchedule,
    TrainingTrace,
};

/// Files written by [`run_experiment`], in write order.
pub const ARTIFACTS: [&str; 9] = [
    "mdp.json",
    "expert_policy.json",
    "trajectories.txt",
    "expert_fe.json",
    "trace.csv",
    "theta.json",
    "policy.json",
    "baseline.json",
    "regret_report.json",
];

/// Random comparator points tried in the regret report.
const COMPARATOR_SAMPLES: usize = 256;

/// Largest iteration count accepted from the theorem schedule.
pub const DEFAULT_MAX_ITERATIONS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Chain {
        discount: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        discount: f64,
        #[serde(default)]
        slip_prob: f64,
    },
    Random {
        n_states: usize,
        n_actions: usize,
        discount: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    PairIndicators,
    StateIndicators,
    /// Gridworld only.
    Regions {
        n_regions: usize,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    /// Occupancy measures of random policies mixed with the uniform policy.
    Mixed {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

fn default_vi_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertSpec {
    #[serde(default = "default_vi_tolerance")]
    pub vi_tolerance: f64,
    /// Number of expert trajectories; taken from the theorem schedule when
    /// the sgd spec is in theorem mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Weights `w` of the true cost `Psi w`. Defaults to the environment's
    /// own cost for gridworlds and to uniform random weights otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_weights: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SgdSpec {
    Explicit {
        rho: f64,
        lambda: f64,
        eta: f64,
        iterations: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "one")]
        batch_size: usize,
    },
    /// Explicit `lambda` and `T` with `eta = rho / (K sqrt(T))`.
    Scaled {
        rho: f64,
        lambda: f64,
        iterations: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "one")]
        batch_size: usize,
    },
    /// `lambda`, `m`, `T` and `eta` from the regret theorem.
    Theorem {
        epsilon: f64,
        delta: f64,
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "one")]
        batch_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iterations: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub basis: BasisSpec,
    pub features: FeatureSpec,
    pub expert: ExpertSpec,
    pub sgd: SgdSpec,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_json(&read_text(path)?)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    /// Makes relative file references relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let BasisSpec::File { path } = &mut self.basis {
            fix(path);
        }
        if let FeatureSpec::File { path } = &mut self.features {
            fix(path);
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(fnv1a(stage) ^ master)`.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    splitmix64(fnv1a(stage.as_bytes()) ^ master)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub master: u64,
    pub environment: u64,
    pub features: u64,
    pub expert: u64,
    pub sgd: u64,
}

impl StageSeeds {
    pub fn derive(master: u64) -> Self {
        Self {
            master,
            environment: stage_seed(master, "environment"),
            features: stage_seed(master, "features"),
            expert: stage_seed(master, "expert"),
            sgd: stage_seed(master, "sgd"),
        }
    }

    /// Derived seeds with explicit overrides from the config applied.
    pub fn for_config(config: &ExperimentConfig) -> Self {
        let mut seeds = Self::derive(config.master_seed);
        if let FeatureSpec::Mixed { seed: Some(s), .. } = config.features {
            seeds.features = s;
        }
        let sgd_seed = match &config.sgd {
            SgdSpec::Explicit { seed, .. }
            | SgdSpec::Scaled { seed, .. }
            | SgdSpec::Theorem { seed, .. } => *seed,
        };
        if let Some(s) = sgd_seed {
            seeds.sgd = s;
        }
        seeds
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Environment {
    pub mdp: Mdp,
    pub grid: Option<Grid>,
    pub native_cost: Option<CostVector>,
}

pub fn generate_environment(spec: &EnvironmentSpec, seed: u64) -> Result<Environment> {
    Ok(match *spec {
        EnvironmentSpec::Chain { discount } => {
            if !(discount > 0.0 && discount < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "discount must lie in (0, 1), got {discount}"
                )));
            }
            Environment {
                mdp: chain_mdp(discount),
                grid: None,
                native_cost: None,
            }
        }
        EnvironmentSpec::Gridworld {
            width,
            height,
            discount,
            slip_prob,
        } => {
            let (mdp, cost) = make_gridworld(width, height, discount, slip_prob)?;
            Environment {
                mdp,
                grid: Some(Grid { width, height }),
                native_cost: Some(cost),
            }
        }
        EnvironmentSpec::Random {
            n_states,
            n_actions,
            discount,
        } => Environment {
            mdp: make_random_mdp(n_states, n_actions, discount, seed)?,
            grid: None,
            native_cost: None,
        },
    })
}

pub fn build_basis(spec: &BasisSpec, env: &Environment) -> Result<CostBasis> {
    let basis = match spec {
        BasisSpec::PairIndicators => CostBasis::pair_indicators(&env.mdp),
        BasisSpec::StateIndicators => CostBasis::state_indicators(&env.mdp),
        BasisSpec::Regions { n_regions } => {
            let grid = env
                .grid
                .ok_or_else(|| Error::InvalidArgument("region basis needs a gridworld".into()))?;
            CostBasis::grid_regions(grid, env.mdp.n_actions(), *n_regions)?
        }
        BasisSpec::File { path } => read_basis(path)?,
    };
    basis.check_against(&env.mdp)?;
    Ok(basis)
}

pub fn build_features(spec: &FeatureSpec, mdp: &Mdp, seed: u64) -> Result<FeatureMatrix> {
    match spec {
        FeatureSpec::Mixed { d, .. } => build_feature_matrix(mdp, *d, seed),
        FeatureSpec::File { path } => read_features(path, mdp),
    }
}

/// The expert, its trajectories and both feature expectations.
#[derive(Debug, Clone)]
pub struct ExpertData {
    pub cost: CostVector,
    pub policy: Policy,
    pub trajectories: Vec<crate::expert::Trajectory>,
    pub empirical: EmpiricalFeatureExpectation,
    /// `<mu^{pi_E}, Psi>` from the exact occupancy measure.
    pub exact: FeatureExpectation,
}

/// True cost of the expert problem.
pub fn true_cost(
    spec: &ExpertSpec,
    env: &Environment,
    basis: &CostBasis,
    seed: u64,
) -> Result<CostVector> {
    if let Some(w) = &spec.cost_weights {
        crate::error::check_len("cost weights", basis.n_costs(), w.len())?;
        return CostVector::new(basis.psi() * DVector::from_column_slice(w));
    }
    if let Some(c) = &env.native_cost {
        return Ok(c.clone());
    }
    // Separate stream so the weights do not shift the trajectory draws.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let w = DVector::from_fn(basis.n_costs(), |_, _| rng.random::<f64>());
    CostVector::new(basis.psi() * w)
}

pub fn run_expert(
    spec: &ExpertSpec,
    env: &Environment,
    basis: &CostBasis,
    m: usize,
    seed: u64,
) -> Result<ExpertData> {
    let cost = true_cost(spec, env, basis, seed)?;
    expert_from_cost(spec, &env.mdp, basis, cost, m, seed)
}

pub fn expert_from_cost(
    spec: &ExpertSpec,
    mdp: &Mdp,
    basis: &CostBasis,
    cost: CostVector,
    m: usize,
    seed: u64,
) -> Result<ExpertData> {
    let (policy, _) = value_iteration(mdp, &cost, spec.vi_tolerance)?;
    let horizon = spec
        .horizon
        .unwrap_or_else(|| default_horizon(mdp.discount(), DEFAULT_TAIL));
    let trajectories = sample_trajectories(mdp, &policy, m, horizon, seed)?;
    let empirical = empirical_feature_expectation(&trajectories, basis, mdp)?;
    let exact = feature_expectation(&occupancy_of_policy(mdp, &policy)?.mass, basis)?;
    Ok(ExpertData {
        cost,
        policy,
        trajectories,
        empirical,
        exact,
    })
}

/// SGD settings resolved against the problem constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSgd {
    pub config: SgdConfig,
    /// Set in theorem mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<TheoremSchedule>,
    pub k: f64,
    pub scheme: Scheme,
}

fn sgd_lambda(spec: &SgdSpec) -> Result<f64> {
    Ok(match *spec {
        SgdSpec::Explicit { lambda, .. } | SgdSpec::Scaled { lambda, .. } => lambda,
        SgdSpec::Theorem { epsilon, .. } => {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "epsilon must lie in (0, 1), got {epsilon}"
                )));
            }
            1.0 / epsilon
        }
    })
}

/// Turns an sgd spec into a concrete [`SgdConfig`].
pub fn resolve_sgd(
    spec: &SgdSpec,
    constants: &SamplingConstants,
    phi: &FeatureMatrix,
    basis: &CostBasis,
    mdp: &Mdp,
    seed: u64,
) -> Result<ResolvedSgd> {
    let k = constants.k;
    let (config, schedule) = match *spec {
        SgdSpec::Explicit {
            rho,
            lambda,
            eta,
            iterations,
            batch_size,
            ..
        } => (
            SgdConfig {
                rho,
                lambda,
                eta,
                iterations,
                seed,
                epsilon: None,
                delta: None,
                batch_size,
            },
            None,
        ),
        SgdSpec::Scaled {
            rho,
            lambda,
            iterations,
            batch_size,
            ..
        } => (
            SgdConfig {
                rho,
                lambda,
                eta: rho / (k * (iterations as f64).sqrt()),
                iterations,
                seed,
                epsilon: None,
                delta: None,
                batch_size,
            },
            None,
        ),
        SgdSpec::Theorem {
            epsilon,
            delta,
            rho,
            batch_size,
            max_iterations,
            ..
        } => {
            let schedule = theorem_parameters(
                epsilon,
                delta,
                rho,
                phi.dim(),
                basis.n_costs(),
                mdp.discount(),
                k,
                basis.inf_norm(),
            )?;
            let cap = max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS);
            if schedule.iterations > cap {
                return Err(Error::InvalidArgument(format!(
                    "theorem schedule needs T = {} iterations, above the cap of {cap}",
                    schedule.iterations
                )));
            }
            (
                SgdConfig {
                    rho,
                    lambda: schedule.lambda,
                    eta: schedule.eta,
                    iterations: schedule.iterations as usize,
                    seed,
                    epsilon: Some(epsilon),
                    delta: Some(delta),
                    batch_size,
                },
                Some(schedule),
            )
        }
    };
    config.validate()?;
    Ok(ResolvedSgd {
        config,
        schedule,
        k,
        scheme: constants.scheme,
    })
}

/// Expert sample size implied by the config.
fn expert_sample_size(config: &ExperimentConfig, basis: &CostBasis, mdp: &Mdp) -> Result<usize> {
    if let SgdSpec::Theorem { epsilon, delta, .. } = config.sgd {
        let m =
            crate::expert::hoeffding_sample_size(basis.n_costs(), mdp.discount(), epsilon, delta)?;
        return usize::try_from(m)
            .map_err(|_| Error::InvalidArgument(format!("m = {m} does not fit")));
    }
    config
        .expert
        .m
        .ok_or_else(|| Error::InvalidArgument("expert.m is required outside theorem mode".into()))
}

/// Everything an experiment produces, before it is written out.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub seeds: StageSeeds,
    pub env: Environment,
    pub basis: CostBasis,
    pub features: FeatureMatrix,
    pub expert: ExpertData,
    pub sgd: ResolvedSgd,
    pub trace: TrainingTrace,
    pub policy: Policy,
    pub evaluation: ThetaEvaluation,
    /// `None` when the instance is too large for the dense solver.
    pub baseline: Option<ExactSolution>,
    pub regret: RegretReport,
}

/// Regret report for the trained parameter, with the comparator chosen to
/// minimize the right side over a fixed candidate set: `theta = 0`, least
/// squares fits of the expert and baseline occupancy measures projected onto
/// the ball, and random points of the ball. `theta_hat` itself is excluded
/// since it makes the inequality hold trivially.
#[allow(clippy::too_many_arguments)]
pub fn build_regret_report(
    problem: &AlProblem<'_>,
    phi: &FeatureMatrix,
    basis: &CostBasis,
    mdp: &Mdp,
    sgd: &ResolvedSgd,
    expert: &ExpertData,
    trained: &ThetaEvaluation,
    baseline: Option<&ExactSolution>,
    seed: u64,
) -> Result<RegretReport> {
    let rho = sgd.config.rho;
    let epsilon = sgd.config.epsilon.unwrap_or(1.0 / sgd.config.lambda);
    let inputs = TheoremInputs {
        epsilon,
        rho,
        d: phi.dim(),
        n_c: basis.n_costs(),
        gamma: mdp.discount(),
        psi_inf_norm: basis.inf_norm(),
        phi_one_norm: phi.one_norm(),
    };
    let fit = |target: &DVector<f64>| -> Option<DVector<f64>> {
        phi.phi()
            .clone()
            .svd(true, true)
            .solve(target, 1e-12)
            .ok()
            .map(|t| project_l2_ball(&t, rho))
    };
    let mut candidates = vec![DVector::zeros(phi.dim())];
    candidates.extend(fit(&occupancy_of_policy(mdp, &expert.policy)?.mass));
    if let Some(b) = baseline {
        candidates.extend(fit(&b.mu_star.mass));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    candidates.extend((0..COMPARATOR_SAMPLES).map(|_| random_ball_point(&mut rng, phi.dim(), rho)));

    let mut best: Option<RegretReport> = None;
    for theta in &candidates {
        let eval = evaluate_theta(theta, phi, basis, mdp, &expert.exact)?;
        let loss = problem.loss(theta, 0.0)?;
        let comparator = Comparator {
            gap: eval.gap,
            v1: loss.v1,
            v2: loss.v2,
        };
        let report = regret_report(
            trained.gap,
            baseline.map(|b| b.objective),
            comparator,
            inputs,
        );
        if best.as_ref().is_none_or(|b| report.rhs < b.rhs) {
            best = Some(report);
        }
    }
    Ok(best.expect("at least one comparator"))
}

/// Uniform point of the Euclidean ball of radius `rho`.
pub fn random_ball_point<R: Rng + ?Sized>(rng: &mut R, d: usize, rho: f64) -> DVector<f64> {
    let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let r = rho * rng.random::<f64>().powf(1.0 / d as f64);
    let n = g.norm();
    if n == 0.0 {
        DVector::zeros(d)
    } else {
        g * (r / n)
    }
}

/// Runs every stage in memory.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let seeds = StageSeeds::for_config(config);
    let env = generate_environment(&config.environment, seeds.environment)
        .map_err(|e| e.in_stage("environment"))?;
    let basis = build_basis(&config.basis, &env).map_err(|e| e.in_stage("basis"))?;
    let features = build_features(&config.features, &env.mdp, seeds.features)
        .map_err(|e| e.in_stage("features"))?;
    let mdp = &env.mdp;

    let lambda = sgd_lambda(&config.sgd).map_err(|e| e.in_stage("sgd"))?;
    let constants = sampling_constants(&features, mdp, &basis, lambda, config.scheme)
        .map_err(|e| e.in_stage("sgd"))?;
    let sgd = resolve_sgd(&config.sgd, &constants, &features, &basis, mdp, seeds.sgd)
        .map_err(|e| e.in_stage("sgd"))?;

    let m = expert_sample_size(config, &basis, mdp).map_err(|e| e.in_stage("expert"))?;
    let expert = run_expert(&config.expert, &env, &basis, m, seeds.expert)
        .map_err(|e| e.in_stage("expert"))?;

    let target = expert.empirical.as_feature_expectation();
    let problem = AlProblem::new(mdp, &basis, &features, &target).map_err(|e| e.in_stage("sgd"))?;
    let (trace, policy) =
        run_sgd_al(&sgd.config, &problem, &constants).map_err(|e| e.in_stage("sgd"))?;

    let evaluation = evaluate_theta(&trace.theta_hat, &features, &basis, mdp, &expert.exact)
        .map_err(|e| e.in_stage("evaluate"))?;
    let baseline = match exact_al_solve(mdp, &basis, &target) {
        Ok(sol) => Some(sol),
        Err(Error::ProblemTooLarge { .. }) => None,
        Err(e) => return Err(e.in_stage("baseline")),
    };
    let regret = build_regret_report(
        &problem,
        &features,
        &basis,
        mdp,
        &sgd,
        &expert,
        &evaluation,
        baseline.as_ref(),
        seeds.sgd,
    )
    .map_err(|e| e.in_stage("regret"))?;
    Ok(ExperimentOutcome {
        seeds,
        env,
        basis,
        features,
        expert,
        sgd,
        trace,
        policy,
        evaluation,
        baseline,
        regret,
    })
}

/// Serializes `value` with a `seeds` entry added at the top level.
fn with_seeds<T: Serialize>(value: &T, seeds: &StageSeeds) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if let Value::Object(map) = &mut v {
        map.insert("seeds".into(), serde_json::to_value(seeds)?);
    }
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    Ok(text)
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

#[derive(Serialize)]
struct ExpertFeDocument<'a> {
    #[serde(flatten)]
    empirical: &'a EmpiricalFeatureExpectation,
    exact_values: &'a [f64],
}

#[derive(Serialize, Deserialize)]
pub struct ThetaDocument {
    pub theta: Vec<f64>,
    pub sgd: ResolvedSgd,
    pub final_loss: Option<crate::sgd::LossBreakdown>,
}

#[derive(Serialize)]
struct BaselineDocument<'a> {
    status: &'static str,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    solution: Option<&'a ExactSolution>,
}

/// Writes files into a directory and deletes them again unless the run
/// completes.
struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
    created_dir: bool,
    committed: bool,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            created_dir,
            committed: false,
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for ArtifactWriter {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Writes the nine artifacts, plus `basis.json` and `features.json`, which
/// the single-stage commands read back.
pub fn write_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut w = ArtifactWriter::new(dir)?;
    write_outcome_into(outcome, &mut w).map_err(|e| e.in_stage("write"))?;
    Ok(w.commit())
}

fn write_outcome_into(o: &ExperimentOutcome, w: &mut ArtifactWriter) -> Result<()> {
    let seeds = &o.seeds;
    w.write("mdp.json", &with_seeds(&o.env.mdp, seeds)?)?;
    w.write("expert_policy.json", &with_seeds(&o.expert.policy, seeds)?)?;
    w.write(
        "trajectories.txt",
        &format_trajectories(&o.expert.trajectories),
    )?;
    let fe = ExpertFeDocument {
        empirical: &o.expert.empirical,
        exact_values: o.expert.exact.values.as_slice(),
    };
    w.write("expert_fe.json", &with_seeds(&fe, seeds)?)?;
    w.write("trace.csv", &o.trace.to_csv())?;
    let theta = ThetaDocument {
        theta: o.trace.theta_hat.as_slice().to_vec(),
        sgd: o.sgd.clone(),
        final_loss: o.trace.records.last().map(|r| r.loss),
    };
    w.write("theta.json", &with_seeds(&theta, seeds)?)?;
    w.write("policy.json", &with_seeds(&o.policy, seeds)?)?;
    let baseline = BaselineDocument {
        status: if o.baseline.is_some() {
            "solved"
        } else {
            "skipped: instance too large"
        },
        solution: o.baseline.as_ref(),
    };
    w.write("baseline.json", &with_seeds(&baseline, seeds)?)?;
    w.write("regret_report.json", &with_seeds(&o.regret, seeds)?)?;
    w.write("basis.json", &pretty(&o.basis)?)?;
    w.write("features.json", &pretty(&o.features)?)?;
    Ok(())
}

/// Runs the full pipeline and writes its artifacts into `dir`. On failure
/// nothing is left behind.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutcome> {
    let outcome = execute(config)?;
    write_outcome(&outcome, dir)?;
    Ok(outcome)
}

/// Writes `mdp.json`, `basis.json`, `features.json` and `cost.json`.
pub fn run_generate(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let seeds = StageSeeds::for_config(config);
    let env = generate_environment(&config.environment, seeds.environment)
        .map_err(|e| e.in_stage("environment"))?;
    let basis = build_basis(&config.basis, &env).map_err(|e| e.in_stage("basis"))?;
    let features = build_features(&config.features, &env.mdp, seeds.features)
        .map_err(|e| e.in_stage("features"))?;
    let cost =
        true_cost(&config.expert, &env, &basis, seeds.expert).map_err(|e| e.in_stage("expert"))?;
    let mut w = ArtifactWriter::new(dir)?;
    w.write("mdp.json", &with_seeds(&env.mdp, &seeds)?)?;
    w.write("basis.json", &pretty(&basis)?)?;
    w.write("features.json", &pretty(&features)?)?;
    w.write("cost.json", &with_seeds(&cost, &seeds)?)?;
    Ok(w.commit())
}

/// Writes `expert_policy.json`, `trajectories.txt` and `expert_fe.json`
/// for an existing MDP, basis and cost.
pub fn run_expert_stage(
    spec: &ExpertSpec,
    mdp: &Mdp,
    basis: &CostBasis,
    cost: CostVector,
    m: usize,
    seeds: &StageSeeds,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let expert = expert_from_cost(spec, mdp, basis, cost, m, seeds.expert)
        .map_err(|e| e.in_stage("expert"))?;
    let mut w = ArtifactWriter::new(dir)?;
    w.write("expert_policy.json", &with_seeds(&expert.policy, seeds)?)?;
    w.write(
        "trajectories.txt",
        &format_trajectories(&expert.trajectories),
    )?;
    let fe = ExpertFeDocument {
        empirical: &expert.empirical,
        exact_values: expert.exact.values.as_slice(),
    };
    w.write("expert_fe.json", &with_seeds(&fe, seeds)?)?;
    Ok(w.commit())
}

/// `train` input: the training hyperparameters plus the problem files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub scheme: Scheme,
    pub mdp: PathBuf,
    pub basis: PathBuf,
    pub features: PathBuf,
    pub expert: PathBuf,
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: Self = serde_json::from_str(&read_text(path)?)?;
        if let Some(base) = path.parent() {
            for p in [
                &mut config.mdp,
                &mut config.basis,
                &mut config.features,
                &mut config.expert,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }
}

/// Writes `trace.csv`, `theta.json` and `policy.json`.
pub fn run_train(config: &TrainConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mdp = read_mdp(&config.mdp).map_err(|e| e.in_stage("load"))?;
    let basis = read_basis(&config.basis).map_err(|e| e.in_stage("load"))?;
    let features = read_features(&config.features, &mdp).map_err(|e| e.in_stage("load"))?;
    let target = read_feature_expectation(&config.expert).map_err(|e| e.in_stage("load"))?;
    let constants = sampling_constants(&features, &mdp, &basis, config.sgd.lambda, config.scheme)
        .map_err(|e| e.in_stage("sgd"))?;
    let problem =
        AlProblem::new(&mdp, &basis, &features, &target).map_err(|e| e.in_stage("sgd"))?;
    let (trace, policy) =
        run_sgd_al(&config.sgd, &problem, &constants).map_err(|e| e.in_stage("sgd"))?;
    let resolved = ResolvedSgd {
        config: config.sgd.clone(),
        schedule: None,
        k: constants.k,
        scheme: config.scheme,
    };
    let mut w = ArtifactWriter::new(dir)?;
    w.write("trace.csv", &trace.to_csv())?;
    let theta = ThetaDocument {
        theta: trace.theta_hat.as_slice().to_vec(),
        sgd: resolved,
        final_loss: trace.records.last().map(|r| r.loss),
    };
    w.write("theta.json", &pretty(&theta)?)?;
    w.write("policy.json", &pretty(&policy)?)?;
    Ok(w.commit())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_mdp(path: &Path) -> Result<Mdp> {
    Ok(serde_json::from_value(read_json(path)?)?)
}

pub fn read_basis(path: &Path) -> Result<CostBasis> {
    Ok(serde_json::from_value(read_json(path)?)?)
}

pub fn read_policy(path: &Path) -> Result<Policy> {
    Ok(serde_json::from_value(read_json(path)?)?)
}

pub fn read_cost(path: &Path) -> Result<CostVector> {
    Ok(serde_json::from_value(read_json(path)?)?)
}

/// Reads a feature matrix and checks it against `mdp`.
pub fn read_features(path: &Path, mdp: &Mdp) -> Result<FeatureMatrix> {
    let doc: MatrixDocument = serde_json::from_value(read_json(path)?)?;
    FeatureMatrix::new(DMatrix::try_from(doc)?, mdp)
}

fn float_array(v: &Value, what: &str) -> Result<Vec<f64>> {
    serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

/// Accepts a bare array or an object with a `values` array, such as
/// `expert_fe.json`.
pub fn read_feature_expectation(path: &Path) -> Result<FeatureExpectation> {
    let v = read_json(path)?;
    let values = match &v {
        Value::Array(_) => float_array(&v, "feature expectation")?,
        Value::Object(map) => float_array(
            map.get("values")
                .ok_or_else(|| Error::Parse(format!("{}: missing \"values\"", path.display())))?,
            "values",
        )?,
        _ => {
            return Err(Error::Parse(format!(
                "{}: expected an array or object",
                path.display()
            )))
        }
    };
    Ok(FeatureExpectation::from(DVector::from_vec(values)))
}

/// Accepts a bare array or an object with a `theta` array, such as
/// `theta.json`.
pub fn read_theta(path: &Path) -> Result<DVector<f64>> {
    let v = read_json(path)?;
    let values = match &v {
        Value::Array(_) => float_array(&v, "theta")?,
        Value::Object(map) => float_array(
            map.get("theta")
                .ok_or_else(|| Error::Parse(format!("{}: missing \"theta\"", path.display())))?,
            "theta",
        )?,
        _ => {
            return Err(Error::Parse(format!(
                "{}: expected an array or object",
                path.display()
            )))
        }
    };
    Ok(DVector::from_vec(values))
}

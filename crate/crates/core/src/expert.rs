//! Expert demonstrations: rollouts, the truncated Monte Carlo estimate of the
//! expert feature expectations, and Hoeffding sample sizes.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{CostBasis, FeatureExpectation};
use crate::mdp::{Mdp, Policy};

/// Tail mass targeted by [`default_horizon`].
pub const DEFAULT_TAIL: f64 = 1e-9;

/// A finite rollout of `(state, action)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Monte Carlo estimate of the expert feature expectations from `m`
/// rollouts truncated at `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFeatureExpectation {
    pub m: usize,
    pub horizon: usize,
    /// `gamma^H / (1 - gamma)`, the discounted mass dropped by truncation.
    pub truncation_bound: f64,
    #[serde(with = "crate::dvec_serde")]
    pub values: DVector<f64>,
}

impl EmpiricalFeatureExpectation {
    pub fn as_feature_expectation(&self) -> FeatureExpectation {
        FeatureExpectation {
            values: self.values.clone(),
        }
    }
}

/// Smallest `H` with `gamma^H / (1 - gamma) <= tail`.
pub fn default_horizon(discount: f64, tail: f64) -> usize {
    let h = ((tail * (1.0 - discount)).ln() / discount.ln()).ceil();
    h.max(1.0) as usize
}

struct Sampler {
    initial: WeightedIndex<f64>,
    policy: Vec<WeightedIndex<f64>>,
    transition: Vec<WeightedIndex<f64>>,
}

fn weighted(weights: impl Iterator<Item = f64>, what: &str) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::InvalidModel(format!("{what}: {e}")))
}

impl Sampler {
    fn new(mdp: &Mdp, policy: &Policy) -> Result<Self> {
        crate::error::check_len("policy states", mdp.n_states(), policy.n_states())?;
        crate::error::check_len("policy actions", mdp.n_actions(), policy.n_actions())?;
        Ok(Self {
            initial: weighted(mdp.initial_dist().iter().copied(), "initial distribution")?,
            policy: policy
                .probs()
                .row_iter()
                .map(|r| weighted(r.iter().copied(), "policy row"))
                .collect::<Result<_>>()?,
            transition: mdp
                .transition()
                .row_iter()
                .map(|r| weighted(r.iter().copied(), "transition row"))
                .collect::<Result<_>>()?,
        })
    }

    fn rollout(&self, n_actions: usize, horizon: usize, rng: &mut ChaCha8Rng) -> Trajectory {
        let mut steps = Vec::with_capacity(horizon);
        let mut x = self.initial.sample(rng);
        for t in 0..horizon {
            let a = self.policy[x].sample(rng);
            steps.push((x, a));
            if t + 1 < horizon {
                x = self.transition[x * n_actions + a].sample(rng);
            }
        }
        Trajectory { steps }
    }
}

/// RNG for rollout `index` of a batch: the batch seed selects the key and
/// the index selects an independent ChaCha stream.
fn rollout_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `m` independent rollouts of `policy`, each of length `horizon`.
pub fn sample_trajectories(
    mdp: &Mdp,
    policy: &Policy,
    m: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if m == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(
            "trajectory count and horizon must be positive".into(),
        ));
    }
    let sampler = Sampler::new(mdp, policy)?;
    let na = mdp.n_actions();
    Ok((0..m as u64)
        .into_par_iter()
        .map(|k| sampler.rollout(na, horizon, &mut rollout_rng(seed, k)))
        .collect())
}

/// Entry `i` is `(1/m) sum_j sum_{t < H} gamma^t psi_i(x_t^j, a_t^j)`.
pub fn empirical_feature_expectation(
    batch: &[Trajectory],
    basis: &CostBasis,
    mdp: &Mdp,
) -> Result<EmpiricalFeatureExpectation> {
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory batch".into()))?;
    let horizon = first.len();
    if horizon == 0 {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    crate::error::check_len("cost basis rows", mdp.n_pairs(), basis.n_pairs())?;
    let gamma = mdp.discount();
    let psi = basis.psi();
    let mut totals = DVector::zeros(basis.n_costs());
    for (j, traj) in batch.iter().enumerate() {
        if traj.len() != horizon {
            return Err(Error::InvalidArgument(format!(
                "trajectory {j} has length {}, expected {horizon}",
                traj.len()
            )));
        }
        let mut weight = 1.0;
        for &(x, a) in &traj.steps {
            if x >= mdp.n_states() || a >= mdp.n_actions() {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {j} visits out-of-range pair ({x}, {a})"
                )));
            }
            let row = psi.row(mdp.pair(x, a));
            for (i, p) in row.iter().enumerate() {
                totals[i] += weight * p;
            }
            weight *= gamma;
        }
    }
    let m = batch.len();
    Ok(EmpiricalFeatureExpectation {
        m,
        horizon,
        truncation_bound: gamma.powi(horizon as i32) / (1.0 - gamma),
        values: totals / m as f64,
    })
}

/// `ceil(32 n_c^2 ln(4 n_c / delta) / ((1 - gamma) eps^2))`, the expert
/// sample size required by the regret theorem.
pub fn hoeffding_sample_size(n_c: usize, gamma: f64, epsilon: f64, delta: f64) -> Result<u64> {
    for (name, v) in [("epsilon", epsilon), ("delta", delta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must lie in (0, 1), got {v}"
            )));
        }
    }
    if n_c == 0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(
            "need n_c >= 1 and gamma in (0, 1)".into(),
        ));
    }
    Ok(hoeffding_bound(n_c, gamma, epsilon, delta).ceil() as u64)
}

/// The real-valued bound before rounding up.
pub fn hoeffding_bound(n_c: usize, gamma: f64, epsilon: f64, delta: f64) -> f64 {
    let n = n_c as f64;
    32.0 * n * n * (4.0 * n / delta).ln() / ((1.0 - gamma) * epsilon * epsilon)
}

/// One trajectory per line as space-separated `state:action` tokens.
pub fn format_trajectories(batch: &[Trajectory]) -> String {
    let mut out = String::new();
    for traj in batch {
        for (t, (x, a)) in traj.steps.iter().enumerate() {
            if t > 0 {
                out.push(' ');
            }
            write!(out, "{x}:{a}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let steps = line
                .split_whitespace()
                .map(|tok| {
                    let (x, a) = tok.split_once(':').ok_or_else(|| {
                        Error::Parse(format!("line {}: bad token `{tok}`", n + 1))
                    })?;
                    let parse = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|e| Error::Parse(format!("line {}: `{tok}`: {e}", n + 1)))
                    };
                    Ok((parse(x)?, parse(a)?))
                })
                .collect::<Result<_>>()?;
            Ok(Trajectory { steps })
        })
        .collect()
}

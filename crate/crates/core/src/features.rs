//! Cost bases, approximation features and the sampling constants of the
//! stochastic subgradient.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{dirichlet_row, Grid};
use crate::error::{check_len, Error, Result};
use crate::mdp::{occupancy_of_policy, Mdp, Policy};

/// Largest `n_c` accepted by [`brute_force_sup_gap`].
pub const MAX_ENUMERATION: usize = 20;

/// Uniform mixing weight applied to every feature column.
pub const FEATURE_MIXING: f64 = 1e-3;

const PROB_FLOOR: f64 = 1e-12;

/// Dense matrix on disk: dimensions plus column-major data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDocument {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixDocument {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl TryFrom<MatrixDocument> for DMatrix<f64> {
    type Error = Error;

    fn try_from(doc: MatrixDocument) -> Result<Self> {
        check_len("matrix entries", doc.rows * doc.cols, doc.data.len())?;
        Ok(DMatrix::from_vec(doc.rows, doc.cols, doc.data))
    }
}

/// Cost basis `Psi`; column `i` is `psi_i` with `||psi_i||_inf <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixDocument", into = "MatrixDocument")]
pub struct CostBasis {
    psi: DMatrix<f64>,
}

impl TryFrom<MatrixDocument> for CostBasis {
    type Error = Error;

    fn try_from(doc: MatrixDocument) -> Result<Self> {
        CostBasis::new(doc.try_into()?)
    }
}

impl From<CostBasis> for MatrixDocument {
    fn from(b: CostBasis) -> Self {
        (&b.psi).into()
    }
}

impl CostBasis {
    pub fn new(psi: DMatrix<f64>) -> Result<Self> {
        if psi.ncols() == 0 || psi.nrows() == 0 {
            return Err(Error::InvalidModel(
                "cost basis needs at least one column".into(),
            ));
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(
                "cost basis has non-finite entries".into(),
            ));
        }
        if let Some((i, col)) = psi.column_iter().enumerate().find(|(_, c)| c.amax() > 1.0) {
            return Err(Error::InvalidModel(format!(
                "basis column {i} has sup-norm {} > 1",
                col.amax()
            )));
        }
        Ok(Self { psi })
    }

    /// One indicator per state-action pair (`n_c = |S||A|`).
    pub fn pair_indicators(mdp: &Mdp) -> Self {
        Self {
            psi: DMatrix::identity(mdp.n_pairs(), mdp.n_pairs()),
        }
    }

    /// One indicator per state, constant across actions.
    pub fn state_indicators(mdp: &Mdp) -> Self {
        let na = mdp.n_actions();
        Self {
            psi: DMatrix::from_fn(mdp.n_pairs(), mdp.n_states(), |i, x| {
                if i / na == x {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    /// Region indicators on a grid. Region 0 is the goal cell alone; the
    /// other cells are ordered by Manhattan distance to the goal (index on
    /// ties) and cut into `n_regions - 1` consecutive blocks of near-equal
    /// size. The gridworld's unit cost is then `sum_{i >= 1} psi_i`.
    pub fn grid_regions(grid: Grid, n_actions: usize, n_regions: usize) -> Result<Self> {
        let cells = grid.n_cells();
        if n_regions < 2 || n_regions > cells {
            return Err(Error::InvalidArgument(format!(
                "region count must lie in [2, {cells}], got {n_regions}"
            )));
        }
        let goal = grid.goal();
        let (gr, gc) = grid.coords(goal);
        let mut others: Vec<usize> = (0..cells).filter(|&x| x != goal).collect();
        others.sort_by_key(|&x| {
            let (r, c) = grid.coords(x);
            (r.abs_diff(gr) + c.abs_diff(gc), x)
        });
        let mut region = vec![0usize; cells];
        let blocks = n_regions - 1;
        for (rank, &x) in others.iter().enumerate() {
            region[x] = 1 + rank * blocks / others.len();
        }
        let psi = DMatrix::from_fn(cells * n_actions, n_regions, |i, j| {
            if region[i / n_actions] == j {
                1.0
            } else {
                0.0
            }
        });
        Ok(Self { psi })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn n_costs(&self) -> usize {
        self.psi.ncols()
    }

    pub fn n_pairs(&self) -> usize {
        self.psi.nrows()
    }

    /// Induced infinity norm (largest absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        self.psi
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `sum_i ||psi_i||_2`.
    pub fn column_norm_sum(&self) -> f64 {
        self.psi.column_iter().map(|c| c.norm()).sum()
    }

    /// Signed bases break the `1/(1-gamma)` range used by the sample-size
    /// bound; callers surface this as a warning.
    pub fn is_nonnegative(&self) -> bool {
        self.psi.iter().all(|&v| v >= 0.0)
    }

    pub(crate) fn check_against(&self, mdp: &Mdp) -> Result<()> {
        check_len("cost basis rows", mdp.n_pairs(), self.n_pairs())
    }
}

/// Feature matrix `Phi`; column `i` is `phi_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixDocument", into = "MatrixDocument")]
pub struct FeatureMatrix {
    phi: DMatrix<f64>,
}

impl TryFrom<MatrixDocument> for FeatureMatrix {
    type Error = Error;

    fn try_from(doc: MatrixDocument) -> Result<Self> {
        Ok(FeatureMatrix::new_unchecked(doc.try_into()?))
    }
}

impl From<FeatureMatrix> for MatrixDocument {
    fn from(f: FeatureMatrix) -> Self {
        (&f.phi).into()
    }
}

impl FeatureMatrix {
    /// Builds a feature matrix satisfying positivity and the induced 1-norm
    /// condition `||Phi||_1 = 1 / (1 - gamma)`.
    pub fn new(phi: DMatrix<f64>, mdp: &Mdp) -> Result<Self> {
        let f = Self::new_unchecked(phi);
        f.validate(mdp)?;
        Ok(f)
    }

    /// No positivity or norm check; used for loaded files (validated against
    /// an MDP afterwards) and for exact-fit experiments.
    pub fn new_unchecked(phi: DMatrix<f64>) -> Self {
        Self { phi }
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        check_len("feature rows", mdp.n_pairs(), self.phi.nrows())?;
        if self.phi.ncols() == 0 {
            return Err(Error::InvalidModel("feature matrix needs a column".into()));
        }
        if let Some(v) = self.phi.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "feature entries must be strictly positive, found {v}"
            )));
        }
        let norm = self.one_norm();
        if (norm - mdp.horizon_mass()).abs() > 1e-8 {
            return Err(Error::InvalidModel(format!(
                "feature matrix 1-norm is {norm}, expected {}",
                mdp.horizon_mass()
            )));
        }
        Ok(())
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// Induced 1-norm (largest absolute column sum).
    pub fn one_norm(&self) -> f64 {
        self.phi
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Spectral norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        self.phi.singular_values().max()
    }

    pub fn apply(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("theta", self.dim(), theta.len())?;
        Ok(&self.phi * theta)
    }
}

/// Feature expectation vector `Psi^T mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExpectation {
    #[serde(with = "crate::dvec_serde")]
    pub values: DVector<f64>,
}

impl From<DVector<f64>> for FeatureExpectation {
    fn from(values: DVector<f64>) -> Self {
        Self { values }
    }
}

/// `Psi^T mu`; entry `i` is `<mu, psi_i>`.
pub fn feature_expectation(mu: &DVector<f64>, basis: &CostBasis) -> Result<FeatureExpectation> {
    check_len("feature_expectation", basis.n_pairs(), mu.len())?;
    Ok(FeatureExpectation {
        values: basis.psi.tr_mul(mu),
    })
}

/// `sum_i |a_i - b_i|`: the worst-case cost difference over the linear class.
pub fn l1_feature_gap(a: &FeatureExpectation, b: &FeatureExpectation) -> Result<f64> {
    check_len("l1_feature_gap", a.values.len(), b.values.len())?;
    Ok(a.values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Supremum of `sum_i w_i (a_i - b_i)` by enumerating every vertex
/// `w in {-1, +1}^{n_c}` of the unit infinity ball.
pub fn brute_force_sup_gap(a: &FeatureExpectation, b: &FeatureExpectation) -> Result<f64> {
    let n = a.values.len();
    check_len("brute_force_sup_gap", n, b.values.len())?;
    if n > MAX_ENUMERATION {
        return Err(Error::EnumerationTooLarge {
            n,
            limit: MAX_ENUMERATION,
        });
    }
    let gaps: Vec<f64> = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| x - y)
        .collect();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1u32 << n) {
        let value: f64 = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| if mask >> i & 1 == 1 { *g } else { -*g })
            .sum();
        best = best.max(value);
    }
    Ok(best)
}

/// Columns are occupancy measures of `d` random stationary policies
/// (Dirichlet(1) rows), each mixed with weight [`FEATURE_MIXING`] with the
/// uniform vector of mass `1/(1-gamma)`.
pub fn build_feature_matrix(mdp: &Mdp, d: usize, seed: u64) -> Result<FeatureMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "feature dimension must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mdp.n_pairs();
    let uniform = mdp.horizon_mass() / n as f64;
    let mut phi = DMatrix::zeros(n, d);
    for i in 0..d {
        let mut probs = DMatrix::zeros(mdp.n_states(), mdp.n_actions());
        for x in 0..mdp.n_states() {
            dirichlet_row(&mut rng, probs.row_mut(x).iter_mut());
        }
        let mu = occupancy_of_policy(mdp, &Policy::new(probs)?)?;
        for (j, m) in mu.mass.iter().enumerate() {
            phi[(j, i)] = (1.0 - FEATURE_MIXING) * m + FEATURE_MIXING * uniform;
        }
    }
    FeatureMatrix::new(phi, mdp)
}

/// How the sampling distributions `q1`, `q2` are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Uniform,
    /// Proportional to the norms that enter `C1` and `C2`.
    #[default]
    Norm,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Scheme::Uniform),
            "norm" | "norm-proportional" => Ok(Scheme::Norm),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Uniform => "uniform",
            Scheme::Norm => "norm",
        })
    }
}

/// Sampling distributions and the constants `C1`, `C2`, `K`.
#[derive(Debug, Clone)]
pub struct SamplingConstants {
    pub c1: f64,
    pub c2: f64,
    pub k: f64,
    pub lambda: f64,
    /// Distribution over state-action pairs.
    pub q1: DVector<f64>,
    /// Distribution over states.
    pub q2: DVector<f64>,
    pub scheme: Scheme,
    pub(crate) q1_index: WeightedIndex<f64>,
    pub(crate) q2_index: WeightedIndex<f64>,
}

fn sampling_distribution(norms: &[f64], scheme: Scheme) -> DVector<f64> {
    let n = norms.len();
    let raw: Vec<f64> = match scheme {
        Scheme::Uniform => vec![1.0; n],
        Scheme::Norm => norms.to_vec(),
    };
    let total: f64 = raw.iter().sum();
    let floor = PROB_FLOOR / n as f64;
    let floored: Vec<f64> = raw
        .iter()
        .map(|&r| {
            if total > 0.0 {
                (r / total).max(floor)
            } else {
                1.0 / n as f64
            }
        })
        .collect();
    let z: f64 = floored.iter().sum();
    DVector::from_iterator(n, floored.into_iter().map(|p| p / z))
}

fn max_ratio(norms: &[f64], q: &DVector<f64>) -> f64 {
    norms
        .iter()
        .zip(q.iter())
        .map(|(n, p)| n / p)
        .fold(0.0, f64::max)
}

/// Euclidean row norms of `Phi` and of `(B - gamma P)^T Phi`.
pub(crate) fn sampling_norms(phi: &FeatureMatrix, mdp: &Mdp) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<f64> = phi.phi.row_iter().map(|r| r.norm()).collect();
    let flow_phi = mdp.flow_matrix().tr_mul(&phi.phi);
    let cols: Vec<f64> = flow_phi.row_iter().map(|r| r.norm()).collect();
    (rows, cols)
}

/// Builds `q1`, `q2` under `scheme`, floored at `1e-12 / n` and
/// renormalized, and the constants
/// `C1 = max ||Phi_(x,a),:|| / q1`, `C2 = max ||Phi^T (B - gamma P)_:,x|| / q2` and
/// `K = ||Phi||_2 sum_i ||psi_i||_2 + lambda (C1 + C2)`.
pub fn sampling_constants(
    phi: &FeatureMatrix,
    mdp: &Mdp,
    basis: &CostBasis,
    lambda: f64,
    scheme: Scheme,
) -> Result<SamplingConstants> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    check_len("feature rows", mdp.n_pairs(), phi.phi.nrows())?;
    basis.check_against(mdp)?;
    let (row_norms, flow_norms) = sampling_norms(phi, mdp);
    let q1 = sampling_distribution(&row_norms, scheme);
    let q2 = sampling_distribution(&flow_norms, scheme);
    let c1 = max_ratio(&row_norms, &q1);
    let c2 = max_ratio(&flow_norms, &q2);
    let k = phi.spectral_norm() * basis.column_norm_sum() + lambda * (c1 + c2);
    let q1_index = WeightedIndex::new(q1.iter().copied())
        .map_err(|e| Error::InvalidArgument(format!("q1: {e}")))?;
    let q2_index = WeightedIndex::new(q2.iter().copied())
        .map_err(|e| Error::InvalidArgument(format!("q2: {e}")))?;
    Ok(SamplingConstants {
        c1,
        c2,
        k,
        lambda,
        q1,
        q2,
        scheme,
        q1_index,
        q2_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{chain_mdp, make_random_mdp};
    use crate::mdp::flow_residual;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_ones_basis_gives_total_mass() {
        let mdp = make_random_mdp(4, 2, 0.8, 1).unwrap();
        let basis = CostBasis::new(DMatrix::from_element(8, 1, 1.0)).unwrap();
        let mu = occupancy_of_policy(&mdp, &Policy::uniform(4, 2)).unwrap();
        let fe = feature_expectation(&mu.mass, &basis).unwrap();
        assert_abs_diff_eq!(fe.values[0], 5.0, epsilon = 1e-12);
        let zero = feature_expectation(&DVector::zeros(8), &basis).unwrap();
        assert_eq!(zero.values[0], 0.0);
        assert!(feature_expectation(&DVector::zeros(7), &basis).is_err());
    }

    #[test]
    fn chain_stay_indicator() {
        let mdp = chain_mdp(0.5);
        let basis =
            CostBasis::new(DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        let mu = occupancy_of_policy(&mdp, &Policy::deterministic(&[0, 0], 2).unwrap()).unwrap();
        assert_abs_diff_eq!(
            feature_expectation(&mu.mass, &basis).unwrap().values[0],
            2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn basis_sup_norm_is_enforced() {
        assert!(CostBasis::new(DMatrix::from_element(3, 1, 1.5)).is_err());
        assert!(CostBasis::new(DMatrix::zeros(3, 0)).is_err());
        let signed = CostBasis::new(DMatrix::from_element(3, 1, -0.5)).unwrap();
        assert!(!signed.is_nonnegative());
    }

    #[test]
    fn gap_examples() {
        let a = FeatureExpectation::from(DVector::from_vec(vec![0.5, -0.3]));
        let z = FeatureExpectation::from(DVector::zeros(2));
        assert_eq!(l1_feature_gap(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(l1_feature_gap(&a, &z).unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(brute_force_sup_gap(&a, &z).unwrap(), 0.8, epsilon = 1e-15);
        assert_eq!(brute_force_sup_gap(&z, &z).unwrap(), 0.0);
        let big = FeatureExpectation::from(DVector::zeros(21));
        assert!(matches!(
            brute_force_sup_gap(&big, &big),
            Err(Error::EnumerationTooLarge { n: 21, .. })
        ));
    }

    #[test]
    fn chain_single_feature() {
        let mdp = chain_mdp(0.5);
        let phi = build_feature_matrix(&mdp, 1, 5).unwrap();
        assert_eq!(phi.dim(), 1);
        assert!(phi.phi().iter().all(|&v| v > 0.0));
        assert_abs_diff_eq!(phi.phi().column(0).sum(), 2.0, epsilon = 1e-12);
        // unit vector: no negative mass, flow gap at most 2 beta on the chain
        let u = phi.apply(&DVector::from_vec(vec![1.0])).unwrap();
        let (neg, gap) = flow_residual(&mdp, &u).unwrap();
        assert_eq!(neg, 0.0);
        assert!(gap <= 2.0 * FEATURE_MIXING);
    }

    #[test]
    fn built_features_have_positive_entries_and_fixed_mass() {
        for seed in 0..10 {
            let mdp = make_random_mdp(6, 3, 0.9, seed).unwrap();
            let phi = build_feature_matrix(&mdp, 4, seed + 100).unwrap();
            phi.validate(&mdp).unwrap();
            assert_abs_diff_eq!(phi.one_norm(), 10.0, epsilon = 1e-8);
            for i in 0..4 {
                let mut e = DVector::zeros(4);
                e[i] = 1.0;
                let (neg, gap) = flow_residual(&mdp, &phi.apply(&e).unwrap()).unwrap();
                assert_eq!(neg, 0.0);
                assert!(gap <= 2.0 * FEATURE_MIXING * mdp.horizon_mass() + 1e-12);
            }
        }
    }

    #[test]
    fn feature_validation_rejects_bad_matrices() {
        let mdp = chain_mdp(0.5);
        assert!(FeatureMatrix::new(DMatrix::from_element(4, 1, 0.5), &mdp).is_ok());
        assert!(FeatureMatrix::new(DMatrix::from_element(4, 1, 0.4), &mdp).is_err());
        assert!(FeatureMatrix::new(
            DMatrix::from_column_slice(4, 1, &[2.0, 0.0, 0.0, 0.0]),
            &mdp
        )
        .is_err());
    }

    #[test]
    fn norm_scheme_c1_is_row_norm_total() {
        let mdp = make_random_mdp(5, 2, 0.9, 3).unwrap();
        let phi = build_feature_matrix(&mdp, 3, 4).unwrap();
        let basis = CostBasis::state_indicators(&mdp);
        let sc = sampling_constants(&phi, &mdp, &basis, 1.0, Scheme::Norm).unwrap();
        let (rows, cols) = sampling_norms(&phi, &mdp);
        assert_abs_diff_eq!(sc.c1, rows.iter().sum::<f64>(), epsilon = 1e-12);
        assert_abs_diff_eq!(sc.c2, cols.iter().sum::<f64>(), epsilon = 1e-12);
        assert_abs_diff_eq!(sc.q1.sum(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sc.q2.sum(), 1.0, epsilon = 1e-12);
        let expected_k = phi.spectral_norm() * basis.column_norm_sum() + sc.c1 + sc.c2;
        assert_abs_diff_eq!(sc.k, expected_k, epsilon = 1e-12);
    }

    #[test]
    fn uniform_scheme_c1_uses_max_row() {
        let mdp = chain_mdp(0.5);
        // one dominant row
        let phi = FeatureMatrix::new(
            DMatrix::from_column_slice(4, 1, &[1.7, 0.1, 0.1, 0.1]),
            &mdp,
        )
        .unwrap();
        let basis = CostBasis::pair_indicators(&mdp);
        let sc = sampling_constants(&phi, &mdp, &basis, 2.0, Scheme::Uniform).unwrap();
        assert_abs_diff_eq!(sc.c1, 4.0 * 1.7, epsilon = 1e-12);
        assert!(sc.q1.iter().all(|&q| (q - 0.25).abs() < 1e-15));
    }

    #[test]
    fn zero_rows_are_floored() {
        let q = sampling_distribution(&[0.0, 1.0, 3.0], Scheme::Norm);
        assert!(q[0] > 0.0);
        assert_abs_diff_eq!(q.sum(), 1.0, epsilon = 1e-15);
        let all_zero = sampling_distribution(&[0.0, 0.0], Scheme::Norm);
        assert_eq!(all_zero.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn regions_partition_the_grid() {
        let grid = Grid {
            width: 4,
            height: 4,
        };
        let basis = CostBasis::grid_regions(grid, 4, 4).unwrap();
        assert_eq!(basis.n_costs(), 4);
        assert_abs_diff_eq!(basis.inf_norm(), 1.0);
        for r in basis.psi().row_iter() {
            assert_eq!(r.sum(), 1.0);
        }
        let sizes: Vec<f64> = basis.psi().column_iter().map(|c| c.sum() / 4.0).collect();
        assert_eq!(sizes, vec![1.0, 5.0, 5.0, 5.0]);
        // goal region holds only the goal's four pairs
        assert_eq!(basis.psi()[(15 * 4, 0)], 1.0);
        assert!(CostBasis::grid_regions(grid, 4, 1).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("uniform".parse::<Scheme>().unwrap(), Scheme::Uniform);
        assert_eq!("norm".parse::<Scheme>().unwrap(), Scheme::Norm);
        assert!("other".parse::<Scheme>().is_err());
    }
}

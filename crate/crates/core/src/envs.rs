//! Benchmark environments.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostVector, Mdp, Policy};

/// Two states, actions `{stay, go}`; `go` toggles the state. Starts in
/// state 0.
pub fn chain_mdp(discount: f64) -> Mdp {
    #[rustfmt::skip]
    let t = DMatrix::from_row_slice(4, 2, &[
        1.0, 0.0, // (s0, stay)
        0.0, 1.0, // (s0, go)
        0.0, 1.0, // (s1, stay)
        1.0, 0.0, // (s1, go)
    ]);
    Mdp::new(2, 2, t, discount, DVector::from_vec(vec![1.0, 0.0]))
        .expect("chain MDP is valid for discount in (0, 1)")
}

/// Grid actions in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

pub const MOVES: [Move; 4] = [Move::North, Move::East, Move::South, Move::West];

/// Layout of a rectangular gridworld. Cell `(row, col)` is state
/// `row * width + col`; row 0 is the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// Bottom-right cell.
    pub fn goal(&self) -> usize {
        self.n_cells() - 1
    }

    pub fn coords(&self, state: usize) -> (usize, usize) {
        (state / self.width, state % self.width)
    }

    /// Successor of `state` under `mv`; walls keep the agent in place.
    pub fn step(&self, state: usize, mv: Move) -> usize {
        let (r, c) = self.coords(state);
        let (r, c) = match mv {
            Move::North => (r.saturating_sub(1), c),
            Move::South => ((r + 1).min(self.height - 1), c),
            Move::East => (r, (c + 1).min(self.width - 1)),
            Move::West => (r, c.saturating_sub(1)),
        };
        r * self.width + c
    }
}

/// Gridworld with four moves. With probability `slip_prob` the chosen move
/// is replaced by one drawn uniformly from all four. The true cost is 1
/// everywhere except the bottom-right goal cell, where it is 0. The agent
/// starts in the top-left cell.
///
/// The dynamics are a deterministic function of the arguments.
pub fn make_gridworld(
    width: usize,
    height: usize,
    discount: f64,
    slip_prob: f64,
) -> Result<(Mdp, CostVector)> {
    if width == 0 || height == 0 || width * height < 2 {
        return Err(Error::InvalidArgument(format!(
            "gridworld needs at least two cells, got {width}x{height}"
        )));
    }
    if !(0.0..1.0).contains(&slip_prob) {
        return Err(Error::InvalidArgument(format!(
            "slip probability must lie in [0, 1), got {slip_prob}"
        )));
    }
    let grid = Grid { width, height };
    let s = grid.n_cells();
    let mut t = DMatrix::zeros(s * 4, s);
    for x in 0..s {
        for (a, &intended) in MOVES.iter().enumerate() {
            let row = x * 4 + a;
            t[(row, grid.step(x, intended))] += 1.0 - slip_prob;
            if slip_prob > 0.0 {
                for &mv in &MOVES {
                    t[(row, grid.step(x, mv))] += slip_prob / 4.0;
                }
            }
        }
    }
    let mut nu0 = DVector::zeros(s);
    nu0[0] = 1.0;
    let mdp = Mdp::new(s, 4, t, discount, nu0)?;
    let mut cost = DVector::from_element(s * 4, 1.0);
    for a in 0..4 {
        cost[grid.goal() * 4 + a] = 0.0;
    }
    Ok((mdp, CostVector::new(cost)?))
}

/// Random MDP with Dirichlet(1) transition rows and uniform `nu0`. All
/// distributions sum to exactly 1.
pub fn make_random_mdp(n_states: usize, n_actions: usize, discount: f64, seed: u64) -> Result<Mdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument("sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = n_states * n_actions;
    let mut t = DMatrix::zeros(rows, n_states);
    for r in 0..rows {
        dirichlet_row(&mut rng, t.row_mut(r).iter_mut());
    }
    Mdp::new(n_states, n_actions, t, discount, dyadic_uniform(n_states))
}

const UNIT: u64 = 1 << 52;

/// Writes `units[i] / 2^52` into the cells. The units must sum to `2^52`, so
/// the row sums to exactly 1 both in floating point and as rationals.
fn write_units<'a>(cells: impl Iterator<Item = &'a mut f64>, units: &[u64]) {
    debug_assert_eq!(units.iter().sum::<u64>(), UNIT);
    for (cell, &k) in cells.zip(units) {
        *cell = k as f64 / UNIT as f64;
    }
}

/// Rounds nonnegative `weights` to multiples of `2^-52` summing exactly to
/// one; the largest entry absorbs the rounding residue.
fn quantize(weights: &[f64]) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let mut units: Vec<u64> = weights
        .iter()
        .map(|w| ((w / total) * UNIT as f64).round() as u64)
        .collect();
    let sum: u64 = units.iter().sum();
    let max = (0..units.len())
        .max_by_key(|&i| units[i])
        .expect("nonempty row");
    units[max] = units[max] + UNIT - sum;
    units
}

/// Fills `row` with a symmetric Dirichlet(1) draw whose entries are
/// multiples of `2^-52` summing to exactly 1.
pub(crate) fn dirichlet_row<'a, R: Rng>(rng: &mut R, row: impl Iterator<Item = &'a mut f64>) {
    let cells: Vec<&mut f64> = row.collect();
    let draws: Vec<f64> = cells.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
    write_units(cells.into_iter(), &quantize(&draws));
}

/// The uniform distribution over `n` outcomes, rounded to multiples of
/// `2^-52` that sum to exactly 1. Entries differ by at most `2^-52`.
pub fn dyadic_uniform(n: usize) -> DVector<f64> {
    let base = UNIT / n as u64;
    let extra = (UNIT - base * n as u64) as usize;
    let units: Vec<u64> = (0..n).map(|i| base + u64::from(i < extra)).collect();
    let mut v = DVector::zeros(n);
    write_units(v.iter_mut(), &units);
    v
}

/// Random stochastic policy with Dirichlet(1) rows.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> Result<Policy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = DMatrix::zeros(n_states, n_actions);
    for x in 0..n_states {
        dirichlet_row(&mut rng, probs.row_mut(x).iter_mut());
    }
    Policy::new(probs)
}

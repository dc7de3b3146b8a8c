//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Solves `min c^T x` subject to `A_eq x = b_eq`, `A_le x <= b_le`,
//! `x >= 0`. Intended for desk-scale instances (a few thousand columns).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-8;
const MAX_PIVOTS: usize = 5_000_000;

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    n_vars: usize,
    cost: Vec<f64>,
    eq_rows: Vec<(Vec<f64>, f64)>,
    le_rows: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            cost: vec![0.0; n_vars],
            ..Default::default()
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn set_cost(&mut self, cost: Vec<f64>) -> Result<&mut Self> {
        check_len("lp cost", self.n_vars, cost.len())?;
        self.cost = cost;
        Ok(self)
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> Result<&mut Self> {
        check_len("lp row", self.n_vars, row.len())?;
        self.eq_rows.push((row, rhs));
        Ok(self)
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> Result<&mut Self> {
        check_len("lp row", self.n_vars, row.len())?;
        self.le_rows.push((row, rhs));
        Ok(self)
    }

    /// Equality form `A z = b`, `b >= 0`, with one slack per `<=` row.
    fn standard_form(&self) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
        let n_slack = self.le_rows.len();
        let m = self.eq_rows.len() + n_slack;
        let n = self.n_vars + n_slack;
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        let rows = self.eq_rows.iter().chain(self.le_rows.iter());
        for (i, (row, rhs)) in rows.enumerate() {
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = *v;
            }
            if i >= self.eq_rows.len() {
                a[(i, self.n_vars + i - self.eq_rows.len())] = 1.0;
            }
            b[i] = *rhs;
            if b[i] < 0.0 {
                b[i] = -b[i];
                a.row_mut(i).neg_mut();
            }
        }
        let mut cost = self.cost.clone();
        cost.resize(n, 0.0);
        (a, b, cost)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let (a, b, cost) = self.standard_form();
        let n = a.ncols();
        let mut tab = Tableau::phase_one(&a, &b);
        tab.run()?;
        if tab.objective_value() > FEASIBILITY_TOL * (1.0 + b.amax()) {
            return Err(Error::LpStatus("infeasible"));
        }
        tab.drive_out_artificials(n);
        tab.reprice(&cost);
        tab.run()?;
        let kept: Vec<usize> = tab.rows.clone();
        let basis = tab.basis.clone();
        let pivots = tab.pivots;

        // Recover the basic solution from the original data for accuracy.
        let mut x = DVector::zeros(n);
        let bm = DMatrix::from_fn(kept.len(), kept.len(), |i, j| a[(kept[i], basis[j])]);
        let rhs = DVector::from_fn(kept.len(), |i, _| b[kept[i]]);
        match bm.lu().solve(&rhs) {
            Some(xb) => {
                for (j, &col) in basis.iter().enumerate() {
                    x[col] = xb[j].max(0.0);
                }
            }
            None => {
                for (i, &col) in basis.iter().enumerate() {
                    x[col] = tab.t[(i, tab.rhs_col())].max(0.0);
                }
            }
        }
        let x = x.rows(0, self.n_vars).into_owned();
        let objective = x.iter().zip(&self.cost).map(|(v, c)| v * c).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots,
        })
    }
}

/// Simplex tableau: constraint rows, then the reduced-cost row at index
/// `rows.len()`. The last column holds the right-hand side.
struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
    /// Original row index of each tableau row.
    rows: Vec<usize>,
    n_cols: usize,
    /// Columns at or beyond this index may not enter the basis.
    entering_limit: usize,
    pivots: usize,
}

impl Tableau {
    fn phase_one(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        let (m, n) = a.shape();
        let n_cols = n + m;
        let mut t = DMatrix::zeros(m + 1, n_cols + 1);
        for i in 0..m {
            for j in 0..n {
                t[(i, j)] = a[(i, j)];
            }
            t[(i, n + i)] = 1.0;
            t[(i, n_cols)] = b[i];
        }
        // cost row: minimise the artificial sum, priced out over the basis
        for j in 0..n {
            t[(m, j)] = -(0..m).map(|i| a[(i, j)]).sum::<f64>();
        }
        t[(m, n_cols)] = -b.sum();
        Self {
            t,
            basis: (n..n + m).collect(),
            rows: (0..m).collect(),
            n_cols,
            entering_limit: n_cols,
            pivots: 0,
        }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn rhs_col(&self) -> usize {
        self.n_cols
    }

    fn objective_value(&self) -> f64 {
        -self.t[(self.m(), self.rhs_col())]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        self.t.row_mut(row).scale_mut(1.0 / p);
        let pivot_row = self.t.row(row).clone_owned();
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for (j, v) in pivot_row.iter().enumerate() {
                    self.t[(i, j)] -= f * v;
                }
                self.t[(i, col)] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Bland's rule: lowest-index improving column; among tied ratios, the
    /// row whose basic variable has the lowest index.
    fn run(&mut self) -> Result<()> {
        let m = self.m();
        loop {
            let entering = (0..self.entering_limit).find(|&j| self.t[(m, j)] < -COST_TOL);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, self.rhs_col())] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12 * (1.0 + best.abs())
                                || (ratio <= best + 1e-12 * (1.0 + best.abs())
                                    && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio.min(best)))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::LpStatus("unbounded"));
            };
            self.pivot(row, col);
            if self.pivots > MAX_PIVOTS {
                return Err(Error::LpStatus("pivot limit exceeded"));
            }
        }
    }

    /// After phase one: pivot zero-valued artificials out of the basis, or
    /// drop their rows when the row is redundant.
    fn drive_out_artificials(&mut self, n_structural: usize) {
        let mut i = 0;
        while i < self.m() {
            if self.basis[i] >= n_structural {
                let col = (0..n_structural).find(|&j| self.t[(i, j)].abs() > 1e-9);
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.t = self.t.clone().remove_row(i);
                        self.basis.remove(i);
                        self.rows.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        self.entering_limit = n_structural;
    }

    fn reprice(&mut self, cost: &[f64]) {
        let m = self.m();
        for j in 0..=self.n_cols {
            self.t[(m, j)] = if j < cost.len() { cost[j] } else { 0.0 };
        }
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = self.t.row(i).clone_owned();
                for (j, v) in row.iter().enumerate() {
                    self.t[(m, j)] -= cb * v;
                }
            }
        }
    }
}

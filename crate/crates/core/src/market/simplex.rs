//! Dense two-phase tableau simplex for `min c·x, A x = b, x >= 0`.
//!
//! Bland's rule is used throughout, so the method terminates on degenerate
//! problems. Sized for dispatch problems with a handful of units.

use thiserror::Error;

const EPS: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("row has {got} coefficients, expected {expected}")]
    BadRow { expected: usize, got: usize },
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per equality row, in insertion order.
    pub duals: Vec<f64>,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram {
            cost: vec![0.0; n_vars],
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.cost.len();
        let m = self.rows.len();
        for r in &self.rows {
            if r.len() != n {
                return Err(LpError::BadRow {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        let width = n + m + 1;
        let mut t = vec![vec![0.0; width]; m];
        let mut sign = vec![1.0; m];
        for i in 0..m {
            if self.rhs[i] < 0.0 {
                sign[i] = -1.0;
            }
            for j in 0..n {
                t[i][j] = sign[i] * self.rows[i][j];
            }
            t[i][n + i] = 1.0;
            t[i][width - 1] = sign[i] * self.rhs[i];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();

        // Phase one: minimise the sum of artificials.
        let mut phase1 = vec![0.0; n + m];
        phase1[n..].iter_mut().for_each(|c| *c = 1.0);
        run_simplex(&mut t, &mut basis, &phase1, n + m)?;
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= n)
            .map(|(i, _)| t[i][width - 1])
            .sum();
        if infeas > 1e-9 {
            return Err(LpError::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if basis[r] >= n {
                if let Some(c) = (0..n).find(|&c| t[r][c].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, r, c);
                }
            }
        }

        let mut phase2 = self.cost.clone();
        phase2.extend(std::iter::repeat_n(0.0, m));
        run_simplex(&mut t, &mut basis, &phase2, n)?;

        let mut x = vec![0.0; n];
        for (r, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = t[r][width - 1];
            }
        }
        let objective = (0..n).map(|j| self.cost[j] * x[j]).sum();
        let duals = (0..m)
            .map(|row| {
                let y: f64 = basis
                    .iter()
                    .enumerate()
                    .map(|(r, &b)| phase2[b] * t[r][n + row])
                    .sum();
                y * sign[row]
            })
            .collect();
        Ok(LpSolution { x, objective, duals })
    }
}

/// Runs Bland-rule pivots for `cost` until optimal. Only columns below
/// `enterable` may enter the basis.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    enterable: usize,
) -> Result<(), LpError> {
    let width = t.first().map_or(0, |r| r.len());
    loop {
        let entering = (0..enterable).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j]
                - basis
                    .iter()
                    .enumerate()
                    .map(|(r, &b)| cost[b] * t[r][j])
                    .sum::<f64>();
            reduced < -EPS
        });
        let Some(col) = entering else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for (r, row) in t.iter().enumerate() {
            if row[col] > EPS {
                let ratio = row[width - 1] / row[col];
                let better = match leave {
                    None => true,
                    Some((lr, best)) => {
                        ratio < best - EPS || (ratio <= best + EPS && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            return Err(LpError::Unbounded);
        };
        pivot(t, basis, row, col);
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    t[row].iter_mut().for_each(|v| *v /= p);
    let pivot_row = t[row].clone();
    for (r, other) in t.iter_mut().enumerate() {
        if r == row {
            continue;
        }
        let f = other[col];
        if f != 0.0 {
            for (v, pv) in other.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
    basis[row] = col;
}

//! Dense two-phase simplex for small equality-form programs:
//! minimize c.x subject to A x = b, x >= 0.
//!
//! Pivot selection is Bland's rule (lowest eligible index for both the
//! entering and leaving variable), which cannot cycle, so the solver
//! terminates on every input.  Problem sizes here stay in the tens of
//! rows, so the dense tableau is the right tool.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Constraint matrix, one row per equality.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const TOL: f64 = 1e-9;

struct Tableau {
    /// rows x (ncols + 1); last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= piv;
        }
        for r in 0..self.t.len() {
            if r == row {
                continue;
            }
            let f = self.t[r][col];
            if f == 0.0 {
                continue;
            }
            for c in 0..=self.ncols {
                let delta = f * self.t[row][c];
                self.t[r][c] -= delta;
            }
        }
        self.basis[row] = col;
    }

    /// Minimizes `cost` over the current basic feasible tableau.  Returns
    /// false when unbounded.
    fn run(&mut self, cost: &[f64], active: usize) -> bool {
        loop {
            // Reduced costs via the basis rows.
            let mut entering = None;
            for j in 0..active {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut red = cost[j];
                for (r, &b) in self.basis.iter().enumerate() {
                    red -= cost[b] * self.t[r][j];
                }
                if red < -TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][col];
                if a > TOL {
                    let ratio = self.t[r][self.ncols] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - TOL
                                || (ratio < lratio + TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return false;
            };
            self.pivot(row, col);
        }
    }
}

/// Solves the program.  Errors only on malformed shapes; infeasibility and
/// unboundedness are ordinary outcomes.
pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome> {
    let m = p.rows.len();
    let n = p.cost.len();
    if p.rhs.len() != m || p.rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "lp shape: {m} rows, {n} cost entries"
        )));
    }
    if m == 0 {
        return Ok(LpOutcome::Optimal { x: vec![0.0; n], value: 0.0 });
    }

    // Tableau with artificial columns; rhs made nonnegative first.
    let ncols = n + m;
    let mut t = Vec::with_capacity(m);
    for (i, row) in p.rows.iter().enumerate() {
        let flip = if p.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        let mut tr = vec![0.0; ncols + 1];
        for (j, &v) in row.iter().enumerate() {
            tr[j] = flip * v;
        }
        tr[n + i] = 1.0;
        tr[ncols] = flip * p.rhs[i];
        t.push(tr);
    }
    let basis: Vec<usize> = (n..n + m).collect();
    let mut tab = Tableau { t, basis, ncols };

    // Phase 1: minimize the artificial sum.
    let mut phase1 = vec![0.0; ncols];
    for c in phase1.iter_mut().skip(n) {
        *c = 1.0;
    }
    if !tab.run(&phase1, ncols) {
        // The artificial sum is bounded below by zero; this cannot happen.
        return Err(Error::Infeasible);
    }
    let feas: f64 = tab
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= n)
        .map(|(r, _)| tab.t[r][ncols])
        .sum();
    if feas > 1e-7 {
        return Ok(LpOutcome::Infeasible);
    }
    // Drive leftover artificial basics out on any original-column pivot.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(col) = (0..n).find(|&c| tab.t[r][c].abs() > TOL) {
                tab.pivot(r, col);
            }
            // A fully zero row is a redundant constraint; its artificial
            // stays basic at value zero and never re-enters.
        }
    }

    // Phase 2 over the original columns only.
    let mut phase2 = vec![0.0; ncols];
    phase2[..n].copy_from_slice(&p.cost);
    if !tab.run(&phase2, n) {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.t[r][tab.ncols];
        }
    }
    let value = x.iter().zip(&p.cost).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, value })
}

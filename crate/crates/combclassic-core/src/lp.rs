//! Dense two-phase simplex with Bland's rule.
//!
//! Desk-scale problems only (a few hundred variables); determinism
//! matters more than speed, so the pivot rules are fixed and there is no
//! pricing cleverness.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::tensor::fabs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    NonNegative,
    Free,
}

/// minimize/maximize c.x subject to ub_rows (a.x <= b), eq_rows
/// (a.x == b), and per-variable bounds.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub ub_rows: Vec<(Vec<f64>, f64)>,
    pub eq_rows: Vec<(Vec<f64>, f64)>,
    pub bounds: Vec<VarBound>,
    pub names: Vec<String>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationCap,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpStatus::Optimal => write!(f, "optimal"),
            LpStatus::Infeasible => write!(f, "infeasible"),
            LpStatus::Unbounded => write!(f, "unbounded"),
            LpStatus::IterationCap => write!(f, "iteration cap reached"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// optimal value in the problem's own sense
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

pub const DEFAULT_PIVOT_CAP: usize = 100_000;

const EPS: f64 = 1e-10;

/// Solve by the two-phase method on a dense tableau; Bland's rule on
/// both entering and leaving choices prevents cycling and makes the
/// pivot path deterministic.
pub fn solve_lp(problem: &LpProblem) -> LpSolution {
    solve_lp_capped(problem, DEFAULT_PIVOT_CAP)
}

pub fn solve_lp_capped(problem: &LpProblem, pivot_cap: usize) -> LpSolution {
    let n_orig = problem.num_vars();
    // split free variables into differences of nonnegatives
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(n_orig);
    let mut n = 0usize;
    for b in &problem.bounds {
        match b {
            VarBound::NonNegative => {
                col_of.push((n, None));
                n += 1;
            }
            VarBound::Free => {
                col_of.push((n, Some(n + 1)));
                n += 2;
            }
        }
    }
    let expand = |row: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (v, &coef) in row.iter().enumerate() {
            let (pos, neg) = col_of[v];
            out[pos] = coef;
            if let Some(negc) = neg {
                out[negc] = -coef;
            }
        }
        out
    };
    let mut cost = expand(&problem.objective);
    if problem.sense == Sense::Maximize {
        for c in cost.iter_mut() {
            *c = -*c;
        }
    }

    // assemble equalities with slacks, rhs >= 0
    let m = problem.ub_rows.len() + problem.eq_rows.len();
    if m == 0 {
        // with x >= 0 and nothing else, the optimum is at the origin
        // unless some cost direction is improving without limit
        let unbounded = cost.iter().any(|&c| c < -EPS);
        return if unbounded {
            LpSolution { status: LpStatus::Unbounded, objective: f64::NAN, x: vec![], iterations: 0 }
        } else {
            LpSolution {
                status: LpStatus::Optimal,
                objective: 0.0,
                x: vec![0.0; n_orig],
                iterations: 0,
            }
        };
    }
    let n_slack = problem.ub_rows.len();
    let total = n + n_slack;
    let mut a = vec![vec![0.0f64; total]; m];
    let mut b = vec![0.0f64; m];
    for (r, (row, rhs)) in problem.ub_rows.iter().enumerate() {
        let e = expand(row);
        a[r][..n].copy_from_slice(&e);
        a[r][n + r] = 1.0;
        b[r] = *rhs;
    }
    for (i, (row, rhs)) in problem.eq_rows.iter().enumerate() {
        let r = n_slack + i;
        let e = expand(row);
        a[r][..n].copy_from_slice(&e);
        b[r] = *rhs;
    }
    for r in 0..m {
        if b[r] < 0.0 {
            for v in a[r].iter_mut() {
                *v = -*v;
            }
            b[r] = -b[r];
        }
    }

    // artificials for rows without a usable slack basis column
    let mut basis = vec![usize::MAX; m];
    let mut n_art = 0usize;
    for r in 0..problem.ub_rows.len() {
        if a[r][n + r] > 0.5 {
            basis[r] = n + r;
        }
    }
    let art_start = total;
    for r in 0..m {
        if basis[r] == usize::MAX {
            n_art += 1;
        }
    }
    let full = total + n_art;
    let mut tableau = vec![vec![0.0f64; full + 1]; m];
    for r in 0..m {
        tableau[r][..total].copy_from_slice(&a[r]);
        tableau[r][full] = b[r];
    }
    let mut next_art = art_start;
    for r in 0..m {
        if basis[r] == usize::MAX {
            tableau[r][next_art] = 1.0;
            basis[r] = next_art;
            next_art += 1;
        }
    }

    // phase 1 objective: sum of artificials
    let mut iterations = 0usize;
    if n_art > 0 {
        let mut phase1 = vec![0.0f64; full];
        for c in art_start..full {
            phase1[c] = 1.0;
        }
        let status =
            run_simplex(&mut tableau, &mut basis, &phase1, full, pivot_cap, &mut iterations);
        if status != LpStatus::Optimal {
            return LpSolution { status, objective: f64::NAN, x: vec![], iterations };
        }
        let p1_value: f64 = (0..m)
            .filter(|&r| basis[r] >= art_start)
            .map(|r| tableau[r][full])
            .sum::<f64>();
        if p1_value > 1e-7 {
            return LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: vec![],
                iterations,
            };
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..m {
            if basis[r] >= art_start {
                if let Some(c) = (0..total).find(|&c| fabs(tableau[r][c]) > 1e-8) {
                    pivot(&mut tableau, &mut basis, r, c);
                    iterations += 1;
                }
            }
        }
    }

    // phase 2 on the real objective, artificial columns frozen
    let mut phase2 = vec![0.0f64; full];
    phase2[..n].copy_from_slice(&cost[..n]);
    let limit = total; // never re-enter artificials
    let status = run_simplex(&mut tableau, &mut basis, &phase2, limit, pivot_cap, &mut iterations);
    if status != LpStatus::Optimal {
        return LpSolution { status, objective: f64::NAN, x: vec![], iterations };
    }

    // read off the solution
    let mut xfull = vec![0.0f64; full];
    for r in 0..m {
        if basis[r] < full {
            xfull[basis[r]] = tableau[r][full];
        }
    }
    let mut x = vec![0.0f64; n_orig];
    for (v, &(pos, neg)) in col_of.iter().enumerate() {
        x[v] = xfull[pos] - neg.map(|c| xfull[c]).unwrap_or(0.0);
    }
    let mut objective: f64 =
        problem.objective.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
    // normalize -0.0
    if objective == 0.0 {
        objective = 0.0;
    }
    LpSolution { status: LpStatus::Optimal, objective, x, iterations }
}

/// Pivot until optimal for the given cost vector over columns < limit.
fn run_simplex(
    tableau: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    limit: usize,
    pivot_cap: usize,
    iterations: &mut usize,
) -> LpStatus {
    let m = tableau.len();
    // reduced costs recomputed each iteration; m and n are small enough
    // that this is simpler than carrying a cost row through the pivots
    loop {
        if *iterations >= pivot_cap {
            return LpStatus::IterationCap;
        }
        // y = c_B applied to rows; reduced cost_j = c_j - sum_r cB_r T[r][j]
        let mut entering = None;
        for j in 0..limit {
            if basis.contains(&j) {
                continue;
            }
            let mut red = cost[j];
            for r in 0..m {
                let cb = cost[basis[r]];
                if cb != 0.0 {
                    red -= cb * tableau[r][j];
                }
            }
            if red < -EPS {
                entering = Some(j);
                break; // Bland: first improving index
            }
        }
        let Some(enter) = entering else {
            return LpStatus::Optimal;
        };
        // ratio test with Bland tie-break on the basis variable index
        let rhs_col = tableau[0].len() - 1;
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let coef = tableau[r][enter];
            if coef > 1e-9 {
                let ratio = tableau[r][rhs_col] / coef;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-12
                            || (fabs(ratio - lratio) <= 1e-12 && basis[r] < basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((leave_row, _)) = leave else {
            return LpStatus::Unbounded;
        };
        pivot(tableau, basis, leave_row, enter);
        *iterations += 1;
    }
}

fn pivot(tableau: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let m = tableau.len();
    let width = tableau[0].len();
    let p = tableau[row][col];
    debug_assert!(fabs(p) > 1e-12);
    for j in 0..width {
        tableau[row][j] /= p;
    }
    tableau[row][col] = 1.0;
    for r in 0..m {
        if r == row {
            continue;
        }
        let factor = tableau[r][col];
        if factor == 0.0 {
            continue;
        }
        for j in 0..width {
            tableau[r][j] -= factor * tableau[row][j];
        }
        tableau[r][col] = 0.0;
    }
    basis[row] = col;
}

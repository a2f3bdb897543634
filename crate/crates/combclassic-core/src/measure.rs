//! The non-classicality measure M(C).
//!
//! Bob's distinguishing game restricts testing to sequences of
//! fixed-basis projectors and identity insertions; the best classical
//! model is a joint distribution over outcome tuples. The resulting
//! min-max is the linear program built here, with
//! M(C) = (primal optimum)/2 and Bob's win probability (1 + M)/2.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::comb::{phi_plus, projector_choi, Comb, CombError};
use crate::lp::{solve_lp_capped, LpProblem, LpSolution, LpStatus, Sense, VarBound};
use crate::tensor::{decompose, fabs, kron, ComplexMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureError {
    /// d^K * 2^K exceeds the configured enumeration cap.
    SizeLimit,
    /// The two-time upper bound needs exactly two slots.
    WrongArity,
    Solver(LpStatus),
    Comb(CombError),
}

impl fmt::Display for MeasureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureError::SizeLimit => write!(f, "testing-sequence enumeration exceeds the cap"),
            MeasureError::WrongArity => write!(f, "two-time bound requires exactly 2 slots"),
            MeasureError::Solver(s) => write!(f, "LP solver failed: {}", s),
            MeasureError::Comb(e) => write!(f, "{}", e),
        }
    }
}

impl From<CombError> for MeasureError {
    fn from(e: CombError) -> Self {
        MeasureError::Comb(e)
    }
}

pub const DEFAULT_SEQUENCE_CAP: usize = 1_000_000;

/// One testing sequence T_i(x): identity insertions on the slots in the
/// mask, projectors with the given outcomes on the rest.
#[derive(Debug, Clone)]
pub struct TestingSequence {
    /// bit s set = identity (no measurement) at slot s
    pub identity_mask: u32,
    /// outcomes on the measured slots, ascending slot order
    pub outcomes: Vec<usize>,
    /// cached tensor product of Phi+ and P_x factors in comb port order
    pub operator: ComplexMatrix,
}

impl TestingSequence {
    pub fn measured_slots(&self, slots: usize) -> Vec<usize> {
        (0..slots).filter(|&s| self.identity_mask & (1 << s) == 0).collect()
    }
}

/// All 2^K identity subsets with their outcome tuples, in deterministic
/// order: subset bitmask ascending, outcomes lexicographic (earliest
/// slot most significant).
pub fn testing_sequences(
    slots: usize,
    dim: usize,
    cap: usize,
) -> Result<Vec<TestingSequence>, MeasureError> {
    assert!(slots >= 1 && dim >= 2);
    let count = dim
        .checked_pow(slots as u32)
        .and_then(|c| c.checked_mul(1usize << slots))
        .ok_or(MeasureError::SizeLimit)?;
    if count > cap {
        return Err(MeasureError::SizeLimit);
    }
    let phi = phi_plus(dim);
    let mut out = Vec::new();
    for mask in 0..(1u32 << slots) {
        let measured: Vec<usize> =
            (0..slots).filter(|&s| mask & (1 << s) == 0).collect();
        let n_out = dim.pow(measured.len() as u32);
        let dims = vec![dim; measured.len()];
        let mut tuple = vec![0usize; measured.len()];
        for flat in 0..n_out {
            decompose(flat, &dims, &mut tuple);
            // operator in port order (slot K-1 first)
            let mut op: Option<ComplexMatrix> = None;
            for slot in (0..slots).rev() {
                let factor = if mask & (1 << slot) != 0 {
                    phi.clone()
                } else {
                    let pos = measured.iter().position(|&m| m == slot).unwrap();
                    projector_choi(dim, tuple[pos])
                };
                op = Some(match op {
                    None => factor,
                    Some(prev) => kron(&prev, &factor),
                });
            }
            out.push(TestingSequence {
                identity_mask: mask,
                outcomes: tuple.clone(),
                operator: op.unwrap(),
            });
        }
    }
    Ok(out)
}

/// LP data shared by the primal and the dual: alpha indicators, beta
/// traces, and the (i, j) index ranges.
pub struct LpData {
    pub slots: usize,
    pub dim: usize,
    /// per subset i: list of sequence indices j
    pub groups: Vec<Vec<usize>>,
    pub sequences: Vec<TestingSequence>,
    /// beta[j] = tr[C T_j]
    pub beta: Vec<f64>,
    /// number of classical atoms d^K
    pub atoms: usize,
}

impl LpData {
    pub fn build(comb: &Comb, cap: usize) -> Result<LpData, MeasureError> {
        let slots = comb.slots();
        let dim = comb.system_dim;
        let sequences = testing_sequences(slots, dim, cap)?;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 1 << slots];
        let mut beta = Vec::with_capacity(sequences.len());
        for (j, seq) in sequences.iter().enumerate() {
            groups[seq.identity_mask as usize].push(j);
            let z = seq.operator.transpose().trace_product(&comb.choi);
            debug_assert!(fabs(z.im) < 1e-9);
            beta.push(z.re);
        }
        Ok(LpData { slots, dim, groups, sequences, beta, atoms: dim.pow(slots as u32) })
    }

    /// alpha_{jk}: does classical atom k (a full outcome tuple) hit
    /// sequence j? 1 exactly when the tuple agrees on every measured
    /// slot (identity slots contribute tr[P Phi+] = 1).
    pub fn alpha(&self, j: usize, k: usize) -> f64 {
        let seq = &self.sequences[j];
        let dims = vec![self.dim; self.slots];
        let mut tuple = vec![0usize; self.slots];
        decompose(k, &dims, &mut tuple);
        let measured = seq.measured_slots(self.slots);
        for (pos, &slot) in measured.iter().enumerate() {
            if tuple[slot] != seq.outcomes[pos] {
                return 0.0;
            }
        }
        1.0
    }
}

/// Variables: [a, b_0..b_{J-1}, p_0..p_{atoms-1}], all nonnegative.
/// Constraints: per subset i, sum_j b_j - a <= 0; per sequence j,
/// +-(sum_k p_k alpha_jk - beta_j) - b_j <= 0; sum_k p_k = 1.
pub fn build_primal(comb: &Comb, cap: usize) -> Result<LpProblem, MeasureError> {
    let data = LpData::build(comb, cap)?;
    Ok(build_primal_from(&data, None))
}

/// Primal restricted to a subset of the testing-subset masks; used for
/// the lower-bound monotonicity property.
pub fn build_primal_restricted(
    comb: &Comb,
    cap: usize,
    masks: &[u32],
) -> Result<LpProblem, MeasureError> {
    let data = LpData::build(comb, cap)?;
    Ok(build_primal_from(&data, Some(masks)))
}

fn build_primal_from(data: &LpData, mask_filter: Option<&[u32]>) -> LpProblem {
    let j_total = data.sequences.len();
    let n_vars = 1 + j_total + data.atoms;
    let b_col = |j: usize| 1 + j;
    let p_col = |k: usize| 1 + j_total + k;
    let mut ub_rows = Vec::new();
    for (mask, group) in data.groups.iter().enumerate() {
        if let Some(filter) = mask_filter {
            if !filter.contains(&(mask as u32)) {
                continue;
            }
        }
        // sum_j b_ij - a <= 0
        let mut row = vec![0.0; n_vars];
        row[0] = -1.0;
        for &j in group {
            row[b_col(j)] = 1.0;
        }
        ub_rows.push((row, 0.0));
        for &j in group {
            let mut plus = vec![0.0; n_vars];
            let mut minus = vec![0.0; n_vars];
            for k in 0..data.atoms {
                let a = data.alpha(j, k);
                if a != 0.0 {
                    plus[p_col(k)] = a;
                    minus[p_col(k)] = -a;
                }
            }
            plus[b_col(j)] = -1.0;
            minus[b_col(j)] = -1.0;
            ub_rows.push((plus, data.beta[j]));
            ub_rows.push((minus, -data.beta[j]));
        }
    }
    let mut simplex_row = vec![0.0; n_vars];
    for k in 0..data.atoms {
        simplex_row[p_col(k)] = 1.0;
    }
    let mut objective = vec![0.0; n_vars];
    objective[0] = 1.0;
    let mut names = vec![String::from("a")];
    names.extend((0..j_total).map(|j| format!("b{}", j)));
    names.extend((0..data.atoms).map(|k| format!("p{}", k)));
    LpProblem {
        sense: Sense::Minimize,
        objective,
        ub_rows,
        eq_rows: vec![(simplex_row, 1.0)],
        bounds: vec![VarBound::NonNegative; n_vars],
        names,
    }
}

/// Dual variables: [Omega (free), X_i per subset, Y_j per sequence].
/// maximize Omega subject to
/// Omega <= sum_j (alpha_jk - beta_j)(2 Y_j - X_{i(j)}) for every k,
/// sum_i X_i = 1, 0 <= Y_j <= X_{i(j)}.
pub fn build_dual(comb: &Comb, cap: usize) -> Result<LpProblem, MeasureError> {
    let data = LpData::build(comb, cap)?;
    let n_subsets = data.groups.len();
    let j_total = data.sequences.len();
    let n_vars = 1 + n_subsets + j_total;
    let x_col = |i: usize| 1 + i;
    let y_col = |j: usize| 1 + n_subsets + j;
    let mut ub_rows = Vec::new();
    for k in 0..data.atoms {
        // Omega - sum_j (alpha - beta)(2Y_j - X_i) <= 0
        let mut row = vec![0.0; n_vars];
        row[0] = 1.0;
        for (i, group) in data.groups.iter().enumerate() {
            for &j in group {
                let coef = data.alpha(j, k) - data.beta[j];
                row[y_col(j)] -= 2.0 * coef;
                row[x_col(i)] += coef;
            }
        }
        ub_rows.push((row, 0.0));
    }
    for (i, group) in data.groups.iter().enumerate() {
        for &j in group {
            // Y_j - X_i <= 0
            let mut row = vec![0.0; n_vars];
            row[y_col(j)] = 1.0;
            row[x_col(i)] = -1.0;
            ub_rows.push((row, 0.0));
        }
    }
    let mut sum_x = vec![0.0; n_vars];
    for i in 0..n_subsets {
        sum_x[x_col(i)] = 1.0;
    }
    let mut objective = vec![0.0; n_vars];
    objective[0] = 1.0;
    let mut bounds = vec![VarBound::NonNegative; n_vars];
    bounds[0] = VarBound::Free;
    let mut names = vec![String::from("omega")];
    names.extend((0..n_subsets).map(|i| format!("x{}", i)));
    names.extend((0..j_total).map(|j| format!("y{}", j)));
    Ok(LpProblem {
        sense: Sense::Maximize,
        objective,
        ub_rows,
        eq_rows: vec![(sum_x, 1.0)],
        bounds,
        names,
    })
}

fn solved(problem: &LpProblem, pivot_cap: usize) -> Result<LpSolution, MeasureError> {
    let sol = solve_lp_capped(problem, pivot_cap);
    if sol.status != LpStatus::Optimal {
        return Err(MeasureError::Solver(sol.status));
    }
    Ok(sol)
}

#[derive(Debug, Clone)]
pub struct MeasureResult {
    /// M(C), half the primal optimum
    pub measure: f64,
    /// Bob's optimal win probability (1 + M)/2
    pub bob_win_probability: f64,
    pub primal_value: f64,
    pub dual_value: Option<f64>,
    pub primal_iterations: usize,
}

/// Solve the primal (and optionally the dual) for a comb.
pub fn nonclassicality_measure_full(
    comb: &Comb,
    cap: usize,
    with_dual: bool,
    pivot_cap: usize,
) -> Result<MeasureResult, MeasureError> {
    let primal = build_primal(comb, cap)?;
    let sol = solved(&primal, pivot_cap)?;
    let dual_value = if with_dual {
        let dual = build_dual(comb, cap)?;
        Some(solved(&dual, pivot_cap)?.objective)
    } else {
        None
    };
    let measure = (sol.objective / 2.0).max(0.0);
    Ok(MeasureResult {
        measure,
        bob_win_probability: 0.5 * (1.0 + measure),
        primal_value: sol.objective,
        dual_value,
        primal_iterations: sol.iterations,
    })
}

pub fn nonclassicality_measure(comb: &Comb) -> Result<f64, MeasureError> {
    Ok(nonclassicality_measure_full(comb, DEFAULT_SEQUENCE_CAP, false, 100_000)?.measure)
}

pub fn bob_win_probability(comb: &Comb) -> Result<f64, MeasureError> {
    Ok(nonclassicality_measure_full(comb, DEFAULT_SEQUENCE_CAP, false, 100_000)?
        .bob_win_probability)
}

/// Two-time upper bound sum_{x2} |P(x2) - sum_{x1} P(x2, x1)| from the
/// projective tables; M(C) never exceeds it.
pub fn upper_bound_two_time(comb: &Comb) -> Result<f64, MeasureError> {
    if comb.slots() != 2 {
        return Err(MeasureError::WrongArity);
    }
    let joint = crate::comb::direct_subset_table(comb, &[0, 1])?;
    let single = crate::comb::direct_subset_table(comb, &[1])?;
    let summed = joint.marginal_out(0);
    let mut bound = 0.0;
    for x2 in 0..comb.system_dim {
        bound += fabs(single.get(&[x2]) - summed.get(&[x2]));
    }
    Ok(bound)
}

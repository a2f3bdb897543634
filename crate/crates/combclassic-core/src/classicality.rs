//! Classicality, Markovianity, coherence, and discord decision
//! procedures.
//!
//! The operational definition: a process is K-classical when summing out
//! any measured time reproduces the statistics of not measuring there at
//! all, for every subset of the probing times. On the comb this is the
//! statement that Phi+ (do nothing) and D (measure and forget) are
//! interchangeable under fixed-basis projective probing.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::comb::{
    apply_choi, compose_chois, dephasing_d, direct_subset_table, phi_plus, ChoiState,
    Comb, CombError, Dilation,
};
use crate::prob::ProbTable;
use crate::tensor::{fabs, kron, C64, ComplexMatrix, FactorLayout, C_ONE, C_ZERO};

#[derive(Debug, Clone, PartialEq)]
pub enum ClassicalityError {
    /// Table family mixes outcome alphabets or omits a needed subset.
    InconsistentFamily,
    DimensionMismatch,
    /// Input is not a density matrix.
    NotAState,
    /// Input Choi is not CPTP.
    NotCptp,
    Comb(CombError),
}

impl fmt::Display for ClassicalityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassicalityError::InconsistentFamily => write!(f, "inconsistent table family"),
            ClassicalityError::DimensionMismatch => write!(f, "dimension mismatch"),
            ClassicalityError::NotAState => write!(f, "not a density matrix"),
            ClassicalityError::NotCptp => write!(f, "not a CPTP Choi"),
            ClassicalityError::Comb(e) => write!(f, "{}", e),
        }
    }
}

impl From<CombError> for ClassicalityError {
    fn from(e: CombError) -> Self {
        ClassicalityError::Comb(e)
    }
}

/// Witness of the worst Kolmogorov violation: the subset checked, the
/// slot summed out, and the outcome tuple on the remaining slots.
#[derive(Debug, Clone, PartialEq)]
pub struct KolmogorovWitness {
    pub subset: Vec<usize>,
    pub dropped_slot: usize,
    pub outcomes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ClassicalityReport {
    pub pass: bool,
    pub worst_violation: f64,
    pub witness: Option<KolmogorovWitness>,
    pub tol: f64,
}

/// Kolmogorov consistency for a family of directly measured tables, one
/// per subset of the probing times. For every table and every slot in
/// it, summing that slot out must reproduce the family's table on the
/// smaller subset.
pub fn kolmogorov_check_tables(
    tables: &[ProbTable],
    tol: f64,
) -> Result<ClassicalityReport, ClassicalityError> {
    let by_subset: BTreeMap<Vec<usize>, &ProbTable> =
        tables.iter().map(|t| (t.slots.clone(), t)).collect();
    let mut worst = 0.0f64;
    let mut witness = None;
    for table in tables {
        for (pos, &slot) in table.slots.iter().enumerate() {
            let mut smaller_slots = table.slots.clone();
            smaller_slots.remove(pos);
            let Some(direct) = by_subset.get(&smaller_slots) else {
                if smaller_slots.is_empty() {
                    // normalization against the empty subset
                    let dev = fabs(table.total() - 1.0);
                    if dev > worst {
                        worst = dev;
                        witness = Some(KolmogorovWitness {
                            subset: table.slots.clone(),
                            dropped_slot: slot,
                            outcomes: vec![],
                        });
                    }
                    continue;
                }
                return Err(ClassicalityError::InconsistentFamily);
            };
            if direct.outcome_dims
                != table
                    .outcome_dims
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != pos)
                    .map(|(_, &d)| d)
                    .collect::<Vec<_>>()
            {
                return Err(ClassicalityError::InconsistentFamily);
            }
            let summed = table.marginal_out(pos);
            for tuple in direct.tuples() {
                let dev = fabs(summed.get(&tuple) - direct.get(&tuple));
                if dev > worst {
                    worst = dev;
                    witness = Some(KolmogorovWitness {
                        subset: table.slots.clone(),
                        dropped_slot: slot,
                        outcomes: tuple.clone(),
                    });
                }
            }
        }
    }
    Ok(ClassicalityReport { pass: worst <= tol, worst_violation: worst, witness, tol })
}

/// Kolmogorov consistency of a comb: the table family for every subset
/// of slots is generated internally (projective measurements on the
/// subset, identity insertions elsewhere) and checked.
pub fn kolmogorov_check_comb(
    comb: &Comb,
    tol: f64,
) -> Result<ClassicalityReport, ClassicalityError> {
    let tables = subset_table_family(comb)?;
    kolmogorov_check_tables(&tables, tol)
}

/// Directly measured tables for every subset of the comb's slots.
pub fn subset_table_family(comb: &Comb) -> Result<Vec<ProbTable>, ClassicalityError> {
    let k = comb.slots();
    let mut tables = Vec::with_capacity(1 << k);
    for mask in 0..(1u32 << k) {
        let subset: Vec<usize> = (0..k).filter(|&s| mask & (1 << s) != 0).collect();
        tables.push(direct_subset_table(comb, &subset)?);
    }
    Ok(tables)
}

/// Skipped conditional comparisons (conditioning event below threshold).
#[derive(Debug, Clone, Default)]
pub struct MarkovReport {
    pub markovian: bool,
    pub worst_violation: f64,
    pub skipped: usize,
}

/// K-Markovianity of a full joint table: P(x_k | x_{k-1}, ..., x_1) must
/// equal P(x_k | x_{k-1}) for every ordered tuple of slots, with all
/// conditionals derived from the given table by classical
/// marginalization. Conditioning events with probability below 1e-12
/// are skipped and counted.
pub fn markov_check(table: &ProbTable, tol: f64) -> MarkovReport {
    let n = table.arity();
    let mut worst = 0.0f64;
    let mut skipped = 0usize;
    // every subset of positions with at least 3 elements; for pairs the
    // condition is vacuous
    for mask in 0..(1u32 << n) {
        let positions: Vec<usize> = (0..n).filter(|&p| mask & (1 << p) != 0).collect();
        if positions.len() < 3 {
            continue;
        }
        let sub = table.marginal_to_positions(&positions);
        let m = positions.len();
        // last position is the predicted slot; second-to-last the condition
        let pair = sub.marginal_to_positions(&[m - 2, m - 1]);
        let prefix = sub.marginal_to_positions(&(0..m - 1).collect::<Vec<_>>());
        let cond_pair = pair.marginal_out(1);
        for tuple in sub.tuples() {
            let p_full = sub.get(&tuple);
            let p_prefix = prefix.get(&tuple[..m - 1]);
            let p_pair = pair.get(&[tuple[m - 2], tuple[m - 1]]);
            let p_cond = cond_pair.get(&[tuple[m - 2]]);
            if p_prefix < 1e-12 || p_cond < 1e-12 {
                skipped += 1;
                continue;
            }
            let lhs = p_full / p_prefix;
            let rhs = p_pair / p_cond;
            worst = worst.max(fabs(lhs - rhs));
        }
    }
    MarkovReport { markovian: worst <= tol, worst_violation: worst, skipped }
}

/// Compose a chain of single-slot channel Chois (chronological order).
fn compose_chain(chain: &[&ChoiState]) -> ChoiState {
    let mut acc = chain[0].clone();
    for c in &chain[1..] {
        acc = compose_chois(c, &acc);
    }
    acc
}

/// Non-coherence-generating-and-detecting: for every adjacent pair of
/// propagators, sandwiching the intermediate time with the dephasing map
/// is undetectable:
/// Delta . L2 . Delta . L1 . Delta == Delta . L2 . L1 . Delta.
pub fn ncgd_check(propagators: &[ChoiState], tol: f64) -> Result<bool, ClassicalityError> {
    if propagators.is_empty() {
        return Ok(true);
    }
    let d = propagators[0].layout.factors()[0].dim;
    for p in propagators {
        if p.matrix.dim() != d * d {
            return Err(ClassicalityError::DimensionMismatch);
        }
    }
    let deph = ChoiState::single_slot(dephasing_d(d), d, 0);
    for w in propagators.windows(2) {
        let (l1, l2) = (&w[0], &w[1]);
        let lhs = compose_chain(&[&deph, l1, &deph, l2, &deph]);
        let rhs = compose_chain(&[&deph, l1]);
        let rhs = compose_chain(&[&rhs, l2, &deph]);
        let diff = &lhs.matrix - &rhs.matrix;
        if diff.hermitian_operator_norm() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Non-discord-generating-and-detecting: the NCGD sandwich identity on
/// the system-environment maps of a dilation, with the dephasing acting
/// on the system alone.
pub fn ndgd_check(dilation: &Dilation, tol: f64) -> Result<bool, ClassicalityError> {
    let dse = dilation.se_dim();
    let deph = ChoiState::single_slot(
        crate::models::system_dephasing_choi(dilation.system_dim, dilation.env_dim),
        dse,
        0,
    );
    let maps: Vec<ChoiState> =
        dilation.maps.iter().map(|m| ChoiState::single_slot(m.clone(), dse, 0)).collect();
    for w in maps.windows(2) {
        let (g1, g2) = (&w[0], &w[1]);
        let lhs = compose_chain(&[&deph, g1, &deph, g2, &deph]);
        let rhs = compose_chain(&[&deph, g1]);
        let rhs = compose_chain(&[&rhs, g2, &deph]);
        let diff = &lhs.matrix - &rhs.matrix;
        if diff.hermitian_operator_norm() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The dephasing-sandwich dilation transform: every map becomes
/// Delta . Gamma . Delta and the initial state is dephased on the
/// system. The result is NDGD by construction, and reproduces the
/// original projective statistics exactly when the process is classical.
pub fn ndgd_sandwich(dilation: &Dilation) -> Dilation {
    let deph = crate::models::system_dephasing_choi(dilation.system_dim, dilation.env_dim);
    let dse = dilation.se_dim();
    let deph_choi = ChoiState::single_slot(deph, dse, 0);
    let maps = dilation
        .maps
        .iter()
        .map(|m| {
            let g = ChoiState::single_slot(m.clone(), dse, 0);
            compose_chain(&[&deph_choi, &g, &deph_choi]).matrix
        })
        .collect();
    let initial_state = crate::models::dephase_system(
        &dilation.initial_state,
        dilation.system_dim,
        dilation.env_dim,
    );
    Dilation { initial_state, maps, ..dilation.clone() }
}

/// Split of a comb into its classical (doubled-product-diagonal) part
/// and the remainder chi that fixed-basis measurements are blind to.
#[derive(Debug, Clone)]
pub struct ChiDecomposition {
    pub classical_part: ComplexMatrix,
    pub chi: ComplexMatrix,
}

pub fn decompose_classical(comb: &Comb) -> ChiDecomposition {
    let d = comb.system_dim;
    let k = comb.slots();
    let dim = comb.choi.dim();
    let mut classical = ComplexMatrix::zeros(dim, dim);
    // diagonal entries at doubled product positions (x,x) per slot
    let total = d.pow(k as u32);
    let mut tuple = vec![0usize; k];
    let dims = vec![d; k];
    for flat in 0..total {
        crate::tensor::decompose(flat, &dims, &mut tuple);
        // port order (o_{K-1}, i_{K-1}, ..., o_0, i_0); tuple[j] is the
        // outcome at slot j (slot K-1 first in the index)
        let mut idx = 0usize;
        for j in 0..k {
            let x = tuple[j];
            idx = idx * d + x;
            idx = idx * d + x;
        }
        classical[(idx, idx)] = comb.choi[(idx, idx)];
    }
    let chi = &comb.choi - &classical;
    ChiDecomposition { classical_part: classical, chi }
}

/// The Lemma-1 constraints on chi: for every nonempty subset of slots
/// and every outcome tuple on the complement,
/// tr[( (x)_{subset} A (x)_{rest} P_x ) chi] == 0 with A = Phi+ - D.
pub fn chi_constraints_check(chi: &ComplexMatrix, slots: usize, dim: usize, tol: f64) -> bool {
    let a = &phi_plus(dim) - &dephasing_d(dim);
    let d_choi = |x: usize| crate::comb::projector_choi(dim, x);
    for mask in 1u32..(1 << slots) {
        let measured: Vec<usize> = (0..slots).filter(|&s| mask & (1 << s) == 0).collect();
        let n_out = dim.pow(measured.len() as u32);
        let mut outs = vec![0usize; measured.len()];
        let dims = vec![dim; measured.len()];
        for flat in 0..n_out {
            crate::tensor::decompose(flat, &dims, &mut outs);
            // build the operator in port order (slot K-1 .. slot 0)
            let mut op: Option<ComplexMatrix> = None;
            for slot in (0..slots).rev() {
                let factor = if mask & (1 << slot) != 0 {
                    a.clone()
                } else {
                    let pos = measured.iter().position(|&m| m == slot).unwrap();
                    d_choi(outs[pos])
                };
                op = Some(match op {
                    None => factor,
                    Some(prev) => kron(&prev, &factor),
                });
            }
            let op = op.unwrap();
            let val = op.trace_product(chi);
            if val.norm() > tol {
                return false;
            }
        }
    }
    true
}

/// Operational zero-discord criterion in the computational basis:
/// (Delta (x) 1)[eta] == eta entrywise.
pub fn zero_discord_check(
    state: &ComplexMatrix,
    dims: (usize, usize),
    tol: f64,
) -> Result<bool, ClassicalityError> {
    let (ds, de) = dims;
    if !state.is_square() || state.dim() != ds * de {
        return Err(ClassicalityError::DimensionMismatch);
    }
    if !state.is_hermitian(1e-7)
        || (state.trace() - C_ONE).norm() > 1e-7
        || !state.psd_probe(1e-7)
    {
        return Err(ClassicalityError::NotAState);
    }
    let dephased = crate::models::dephase_system(state, ds, de);
    Ok(state.max_abs_diff(&dephased) <= tol)
}

/// Does a system-environment map send every computational-basis product
/// input to a zero-discord state? Checked on the spanning set of
/// environment matrix units symmetrized into Hermitian combinations;
/// linearity of the block-off-diagonal criterion makes that sufficient.
pub fn dzero_map_check(
    gamma: &ComplexMatrix,
    dims: (usize, usize),
    tol: f64,
) -> Result<bool, ClassicalityError> {
    let (ds, de) = dims;
    let dse = ds * de;
    if gamma.dim() != dse * dse {
        return Err(ClassicalityError::DimensionMismatch);
    }
    let layout = FactorLayout::unlabelled(&[dse, dse]);
    let tr_o = crate::tensor::partial_trace(gamma, &layout, &[0])
        .map_err(|_| ClassicalityError::DimensionMismatch)?;
    if tr_o.max_abs_diff(&ComplexMatrix::identity(dse)) > 1e-7 || !gamma.psd_probe(1e-7) {
        return Err(ClassicalityError::NotCptp);
    }
    // spanning set: |j><j|, (|j>+|k>)(<j|+<k|)/2, (|j>+i|k>)(...)/2
    let mut env_states: Vec<ComplexMatrix> = Vec::new();
    for j in 0..de {
        let mut v = vec![C_ZERO; de];
        v[j] = C_ONE;
        env_states.push(ComplexMatrix::projector(&v));
    }
    for j in 0..de {
        for k in (j + 1)..de {
            let mut v = vec![C_ZERO; de];
            v[j] = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
            v[k] = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
            env_states.push(ComplexMatrix::projector(&v));
            let mut w = vec![C_ZERO; de];
            w[j] = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
            w[k] = C64::new(0.0, core::f64::consts::FRAC_1_SQRT_2);
            env_states.push(ComplexMatrix::projector(&w));
        }
    }
    for l in 0..ds {
        let mut sys = ComplexMatrix::zeros(ds, ds);
        sys[(l, l)] = C_ONE;
        for eta in &env_states {
            let input = kron(&sys, eta);
            let out = apply_choi(gamma, &input);
            let dephased = crate::models::dephase_system(&out, ds, de);
            if out.max_abs_diff(&dephased) > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Quantum-regression-formula table: propagate rho0 through the
/// system-only propagators, measuring projectively at each slot.
/// `propagators[j]` evolves from slot j to slot j+1; an optional leading
/// propagator from t0 is signalled by `with_t0`.
pub fn markov_table_from_propagators(
    rho0: &ComplexMatrix,
    propagators: &[ChoiState],
    with_t0: bool,
) -> Result<ProbTable, ClassicalityError> {
    let comb = markov_comb_from(rho0, propagators, with_t0)?;
    let inst: Vec<_> =
        (0..comb.slots()).map(|_| crate::instrument::projective_instrument(rho0.dim())).collect();
    Ok(comb.joint_table(&inst)?)
}

/// Markovian comb of a propagator chain (trivial environment).
pub fn markov_comb_from(
    rho0: &ComplexMatrix,
    propagators: &[ChoiState],
    with_t0: bool,
) -> Result<Comb, ClassicalityError> {
    let k = if with_t0 { propagators.len() } else { propagators.len() + 1 };
    let times: Vec<f64> = (0..k).map(|i| i as f64).collect();
    let t0 = if with_t0 { Some(-1.0) } else { None };
    Ok(crate::comb::markov_comb(rho0, propagators, &times, t0)?)
}

/// Corollary-1 precondition: every one-time outcome has nonzero
/// probability for a full-rank diagonal initial state (the classical
/// dynamics is invertible in the relevant sense).
pub fn invertibility_flag(
    rho0: &ComplexMatrix,
    propagators: &[ChoiState],
    with_t0: bool,
) -> Result<bool, ClassicalityError> {
    let d = rho0.dim();
    for x in 0..d {
        if rho0[(x, x)].re < 1e-12 {
            return Ok(false);
        }
    }
    let comb = markov_comb_from(rho0, propagators, with_t0)?;
    for slot in 0..comb.slots() {
        let state = comb.conditional_state(&[], slot)?;
        for x in 0..d {
            if state[(x, x)].re < 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

//! Quantum combs in Choi form.
//!
//! A comb on K time slots is stored as a PSD matrix over 2K tensor
//! factors ordered (o_K, i_K, ..., o_1, i_1), the left-to-right order of
//! the temporal Born rule tr[(M_K^T (x) ... (x) M_1^T) C]. Throughout,
//! the unnormalized maximally entangled state Phi+ (trace d) is the Choi
//! of the identity map, so the Choi of a CPTP map has trace d.
//!
//! The comb of an underlying system-environment evolution is obtained by
//! contracting the dilation over the environment, with the final
//! environment traced out; the last slot keeps an open output port,
//! realized as an explicit identity factor.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::instrument::Instrument;
use crate::prob::ProbTable;
use crate::tensor::{
    contract_factors, decompose, kron, partial_trace, permute_factors, C64, ComplexMatrix,
    Factor, FactorLayout, Port, TensorError, C_ONE, C_ZERO, DEFAULT_TOL,
};

#[derive(Debug, Clone, PartialEq)]
pub enum CombError {
    /// A map expected to be completely positive has a negative eigenvalue.
    NotCp,
    /// A map expected to be CPTP (or trace-non-increasing) is neither.
    NotCptp,
    DimensionMismatch,
    /// The Born rule produced a trace with imaginary part above 1e-8,
    /// signalling a malformed comb or instrument.
    NonRealProbability(f64),
    BadTimes,
    Layout(TensorError),
}

impl fmt::Display for CombError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombError::NotCp => write!(f, "map is not completely positive"),
            CombError::NotCptp => write!(f, "map is not CPTP"),
            CombError::DimensionMismatch => write!(f, "dimension mismatch"),
            CombError::NonRealProbability(im) => {
                write!(f, "non-real probability (imaginary part {:e})", im)
            }
            CombError::BadTimes => write!(f, "time stamps must be strictly increasing"),
            CombError::Layout(e) => write!(f, "{}", e),
        }
    }
}

impl From<TensorError> for CombError {
    fn from(e: TensorError) -> Self {
        CombError::Layout(e)
    }
}

/// A Choi matrix together with the layout of its tensor factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiState {
    pub matrix: ComplexMatrix,
    pub layout: FactorLayout,
}

impl ChoiState {
    /// Choi of a single-slot map: factors (output, input), both of
    /// dimension `dim`, attached to `slot`.
    pub fn single_slot(matrix: ComplexMatrix, dim: usize, slot: usize) -> Self {
        debug_assert_eq!(matrix.dim(), dim * dim);
        ChoiState {
            matrix,
            layout: FactorLayout::new(vec![
                Factor::new(dim, slot, Port::Output),
                Factor::new(dim, slot, Port::Input),
            ]),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Unnormalized maximally entangled state Phi+ = sum_xy |xx><yy| on
/// (output, input); the Choi of the identity map.
pub fn phi_plus(dim: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim * dim, dim * dim);
    for x in 0..dim {
        for y in 0..dim {
            m[(x * dim + x, y * dim + y)] = C_ONE;
        }
    }
    m
}

/// D = sum_x |xx><xx|; the Choi of the completely dephasing map.
pub fn dephasing_d(dim: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim * dim, dim * dim);
    for x in 0..dim {
        m[(x * dim + x, x * dim + x)] = C_ONE;
    }
    m
}

/// P_x = |xx><xx|; the Choi of rho -> |x><x| rho |x><x|.
pub fn projector_choi(dim: usize, x: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim * dim, dim * dim);
    m[(x * dim + x, x * dim + x)] = C_ONE;
    m
}

/// Choi state M = (M (x) I)[Phi+] of the map with the given Kraus
/// operators. Accepts CPTP maps and CP trace-non-increasing maps
/// (instrument elements).
pub fn choi_of_map(kraus_list: &[ComplexMatrix]) -> Result<ChoiState, CombError> {
    if kraus_list.is_empty() {
        return Err(CombError::DimensionMismatch);
    }
    let d = kraus_list[0].rows();
    for k in kraus_list {
        if !k.is_square() || k.dim() != d {
            return Err(CombError::DimensionMismatch);
        }
    }
    // sum K^dagger K must be == 1 (CPTP) or <= 1 (trace non-increasing)
    let mut norm = ComplexMatrix::zeros(d, d);
    for k in kraus_list {
        norm = &norm + &k.dagger().matmul(k);
    }
    let gap = &ComplexMatrix::identity(d) - &norm;
    if gap.max_abs() > DEFAULT_TOL && !gap.is_psd(DEFAULT_TOL) {
        return Err(CombError::NotCptp);
    }
    let mut choi = ComplexMatrix::zeros(d * d, d * d);
    for k in kraus_list {
        for a in 0..d {
            for x in 0..d {
                let kax = k[(a, x)];
                if kax == C_ZERO {
                    continue;
                }
                for b in 0..d {
                    for y in 0..d {
                        choi[(a * d + x, b * d + y)] += kax * k[(b, y)].conj();
                    }
                }
            }
        }
    }
    if !choi.is_psd(DEFAULT_TOL) {
        return Err(CombError::NotCp);
    }
    Ok(ChoiState::single_slot(choi, d, 0))
}

/// Choi of the channel rho -> U rho U^dagger.
pub fn choi_of_unitary(u: &ComplexMatrix) -> ChoiState {
    choi_of_map(core::slice::from_ref(u)).expect("unitary conjugation is CPTP")
}

/// Apply a channel given by its Choi matrix (factors: output, input) to a
/// state: rho'[o,o'] = sum_{i,i'} Choi[(o,i),(o',i')] rho[i,i'].
pub fn apply_choi(choi: &ComplexMatrix, state: &ComplexMatrix) -> ComplexMatrix {
    let d_in = state.dim();
    let d_out = choi.dim() / d_in;
    debug_assert_eq!(choi.dim(), d_out * d_in);
    let mut out = ComplexMatrix::zeros(d_out, d_out);
    for o in 0..d_out {
        for i in 0..d_in {
            let row = o * d_in + i;
            for o2 in 0..d_out {
                for i2 in 0..d_in {
                    let g = choi[(row, o2 * d_in + i2)];
                    if g == C_ZERO {
                        continue;
                    }
                    out[(o, o2)] += g * state[(i, i2)];
                }
            }
        }
    }
    out
}

/// Link product: contract two Choi states over paired factors,
/// tr_shared[(1 (x) right^{T_shared})(left (x) 1)]. The result carries
/// the unshared factors of `left` first, then those of `right`.
///
/// Composition of channels is the special case of linking the later
/// Choi's input with the earlier Choi's output.
pub fn link_product(
    left: &ChoiState,
    right: &ChoiState,
    shared: &[(usize, usize)],
) -> Result<ChoiState, CombError> {
    let ldims = left.layout.dims();
    let rdims = right.layout.dims();
    for &(lf, rf) in shared {
        if lf >= ldims.len() || rf >= rdims.len() {
            return Err(CombError::Layout(TensorError::LayoutMismatch));
        }
        if ldims[lf] != rdims[rf] {
            return Err(CombError::DimensionMismatch);
        }
    }
    let lkeep: Vec<usize> =
        (0..ldims.len()).filter(|i| !shared.iter().any(|&(lf, _)| lf == *i)).collect();
    let rkeep: Vec<usize> =
        (0..rdims.len()).filter(|i| !shared.iter().any(|&(_, rf)| rf == *i)).collect();
    let shared_dims: Vec<usize> = shared.iter().map(|&(lf, _)| ldims[lf]).collect();
    let shared_dim: usize = shared_dims.iter().product();
    let lkeep_dims: Vec<usize> = lkeep.iter().map(|&i| ldims[i]).collect();
    let rkeep_dims: Vec<usize> = rkeep.iter().map(|&i| rdims[i]).collect();
    let lkeep_dim: usize = lkeep_dims.iter().product();
    let rkeep_dim: usize = rkeep_dims.iter().product();
    let out_dim = lkeep_dim * rkeep_dim;

    let lstrides = left.layout.strides();
    let rstrides = right.layout.strides();

    // result[(v,u),(v',u')] = sum_{m,m'} left[(v,m),(v',m')] right[(u,m),(u',m')]
    let mut out = ComplexMatrix::zeros(out_dim, out_dim);
    let mut vm = vec![0usize; lkeep.len()];
    let mut vm2 = vec![0usize; lkeep.len()];
    let mut um = vec![0usize; rkeep.len()];
    let mut um2 = vec![0usize; rkeep.len()];
    let mut sm = vec![0usize; shared.len()];
    let mut sm2 = vec![0usize; shared.len()];
    for v in 0..lkeep_dim {
        decompose(v, &lkeep_dims, &mut vm);
        let vbase: usize = vm.iter().zip(lkeep.iter()).map(|(&a, &f)| a * lstrides[f]).sum();
        for v2 in 0..lkeep_dim {
            decompose(v2, &lkeep_dims, &mut vm2);
            let v2base: usize =
                vm2.iter().zip(lkeep.iter()).map(|(&a, &f)| a * lstrides[f]).sum();
            for u in 0..rkeep_dim {
                decompose(u, &rkeep_dims, &mut um);
                let ubase: usize =
                    um.iter().zip(rkeep.iter()).map(|(&a, &f)| a * rstrides[f]).sum();
                for u2 in 0..rkeep_dim {
                    decompose(u2, &rkeep_dims, &mut um2);
                    let u2base: usize =
                        um2.iter().zip(rkeep.iter()).map(|(&a, &f)| a * rstrides[f]).sum();
                    let mut acc = C_ZERO;
                    for s in 0..shared_dim {
                        decompose(s, &shared_dims, &mut sm);
                        let loff: usize = sm
                            .iter()
                            .zip(shared.iter())
                            .map(|(&a, &(lf, _))| a * lstrides[lf])
                            .sum();
                        let roff: usize = sm
                            .iter()
                            .zip(shared.iter())
                            .map(|(&a, &(_, rf))| a * rstrides[rf])
                            .sum();
                        for s2 in 0..shared_dim {
                            decompose(s2, &shared_dims, &mut sm2);
                            let loff2: usize = sm2
                                .iter()
                                .zip(shared.iter())
                                .map(|(&a, &(lf, _))| a * lstrides[lf])
                                .sum();
                            let lval = left.matrix[(vbase + loff, v2base + loff2)];
                            if lval == C_ZERO {
                                continue;
                            }
                            let roff2: usize = sm2
                                .iter()
                                .zip(shared.iter())
                                .map(|(&a, &(_, rf))| a * rstrides[rf])
                                .sum();
                            acc += lval * right.matrix[(ubase + roff, u2base + roff2)];
                        }
                    }
                    out[(v * rkeep_dim + u, v2 * rkeep_dim + u2)] = acc;
                }
            }
        }
    }
    let mut factors: Vec<Factor> = lkeep.iter().map(|&i| left.layout.factors()[i]).collect();
    factors.extend(rkeep.iter().map(|&i| right.layout.factors()[i]));
    Ok(ChoiState { matrix: out, layout: FactorLayout::new(factors) })
}

/// Compose channels at the Choi level: Choi(later . earlier).
pub fn compose_chois(later: &ChoiState, earlier: &ChoiState) -> ChoiState {
    // link earlier's output (factor 0) with later's input (factor 1)
    let linked = link_product(later, earlier, &[(1, 0)]).expect("composable chois");
    // linked factors: (later output, earlier input)
    let d_out = linked.layout.factors()[0].dim;
    ChoiState::single_slot(linked.matrix, d_out, later.layout.factors()[0].slot)
}

/// Underlying system-environment description of a process: an initial
/// state and CPTP maps Gamma_{t_j, t_{j-1}} on system (x) environment.
/// With `t0` present, `maps[0]` evolves the initial state from t0 to the
/// first slot; otherwise the initial state is the state at the first slot.
#[derive(Debug, Clone)]
pub struct Dilation {
    pub initial_state: ComplexMatrix,
    pub maps: Vec<ComplexMatrix>,
    pub system_dim: usize,
    pub env_dim: usize,
    pub times: Vec<f64>,
    pub t0: Option<f64>,
}

impl Dilation {
    pub fn se_dim(&self) -> usize {
        self.system_dim * self.env_dim
    }

    pub fn slots(&self) -> usize {
        self.times.len()
    }

    /// Maps between consecutive slots (excluding any t0 -> t_1 map).
    pub fn slot_maps(&self) -> &[ComplexMatrix] {
        if self.t0.is_some() { &self.maps[1..] } else { &self.maps }
    }

    pub fn validate(&self, tol: f64) -> Result<(), CombError> {
        let dse = self.se_dim();
        let expected = self.times.len() - 1 + usize::from(self.t0.is_some());
        if self.maps.len() != expected {
            return Err(CombError::DimensionMismatch);
        }
        if self.initial_state.dim() != dse {
            return Err(CombError::DimensionMismatch);
        }
        if self.times.windows(2).any(|w| w[0] > w[1]) {
            return Err(CombError::BadTimes);
        }
        if (self.initial_state.trace() - C_ONE).norm() > 1e-12
            || !self.initial_state.psd_probe(tol)
        {
            return Err(CombError::NotCptp);
        }
        let id = ComplexMatrix::identity(dse);
        let layout = FactorLayout::unlabelled(&[dse, dse]);
        for g in &self.maps {
            if g.dim() != dse * dse {
                return Err(CombError::DimensionMismatch);
            }
            // trace over the output factor must give the identity
            let tr_o = partial_trace(g, &layout, &[0])?;
            if tr_o.max_abs_diff(&id) > tol {
                return Err(CombError::NotCptp);
            }
            if !g.psd_probe(tol) {
                return Err(CombError::NotCp);
            }
        }
        Ok(())
    }
}

/// A quantum comb: Choi matrix over 2K ports, slot times, and a
/// `relaxed` flag for diagonal classical combs that do not satisfy the
/// causality hierarchy.
#[derive(Debug, Clone)]
pub struct Comb {
    pub choi: ComplexMatrix,
    pub layout: FactorLayout,
    pub times: Vec<f64>,
    pub system_dim: usize,
    pub relaxed: bool,
}

/// Standard port layout (o_K, i_K, ..., o_1, i_1) for K slots of equal
/// dimension; slots are numbered 0..K-1 in chronological order.
pub fn comb_layout(slots: usize, dim: usize) -> FactorLayout {
    let mut factors = Vec::with_capacity(2 * slots);
    for j in (0..slots).rev() {
        factors.push(Factor::new(dim, j, Port::Output));
        factors.push(Factor::new(dim, j, Port::Input));
    }
    FactorLayout::new(factors)
}

/// Diagnostics from `validate_comb`.
#[derive(Debug, Clone)]
pub struct CausalityReport {
    pub psd: bool,
    pub min_eigenvalue: f64,
    /// |Born - 1| on the all-dephasing instrument sequence.
    pub normalization_deviation: f64,
    /// Residual of C == 1_{o_K} (x) tr_{o_K}[C]/d, then one residual per
    /// level of the trace hierarchy, ending with |tr(rho_1) - 1|.
    pub hierarchy_residuals: Vec<f64>,
    pub relaxed: bool,
    pub pass: bool,
}

impl Comb {
    pub fn new(
        choi: ComplexMatrix,
        times: Vec<f64>,
        system_dim: usize,
        relaxed: bool,
    ) -> Result<Self, CombError> {
        let slots = times.len();
        let layout = comb_layout(slots, system_dim);
        if !layout.matches(&choi) {
            return Err(CombError::DimensionMismatch);
        }
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(CombError::BadTimes);
        }
        if !choi.is_hermitian(1e-7) {
            return Err(CombError::NotCp);
        }
        Ok(Comb { choi, layout, times, system_dim, relaxed })
    }

    pub fn slots(&self) -> usize {
        self.times.len()
    }

    pub fn port_position(&self, slot: usize, port: Port) -> usize {
        self.layout.position(slot, port).expect("slot within comb")
    }

    /// Born rule for temporal processes: tr[(M_K^T (x) ... (x) M_1^T) C].
    /// `sequence` is in chronological order (index 0 = earliest slot).
    pub fn born_probability(&self, sequence: &[&ComplexMatrix]) -> Result<f64, CombError> {
        let k = self.slots();
        if sequence.len() != k {
            return Err(CombError::DimensionMismatch);
        }
        let d2 = self.system_dim * self.system_dim;
        for m in sequence {
            if !m.is_square() || m.dim() != d2 {
                return Err(CombError::DimensionMismatch);
            }
        }
        let transposed: Vec<ComplexMatrix> =
            sequence.iter().rev().map(|m| m.transpose()).collect();
        let refs: Vec<&ComplexMatrix> = transposed.iter().collect();
        let op = crate::tensor::kron_all(&refs);
        let z = op.trace_product(&self.choi);
        if crate::tensor::fabs(z.im) > 1e-8 {
            return Err(CombError::NonRealProbability(z.im));
        }
        Ok(z.re.clamp(-1e-9, 1.0 + 1e-9).clamp(0.0, 1.0))
    }

    /// Joint outcome distribution for one instrument per slot
    /// (chronological order).
    pub fn joint_table(&self, instruments: &[Instrument]) -> Result<ProbTable, CombError> {
        let k = self.slots();
        if instruments.len() != k {
            return Err(CombError::DimensionMismatch);
        }
        let counts: Vec<usize> = instruments.iter().map(|i| i.elements.len()).collect();
        let total: usize = counts.iter().product();
        let mut table = ProbTable::empty((0..k).collect(), counts.clone());
        let mut tuple = vec![0usize; k];
        for flat in 0..total {
            decompose(flat, &counts, &mut tuple);
            let seq: Vec<&ComplexMatrix> = tuple
                .iter()
                .enumerate()
                .map(|(slot, &x)| &instruments[slot].elements[x].matrix)
                .collect();
            let p = self.born_probability(&seq)?;
            table.set(tuple.clone(), p);
        }
        Ok(table)
    }

    /// Contract the comb with operator Chois at the given slots (both
    /// ports of each listed slot). Operators are the *map Chois*; the
    /// transpose required by the Born rule is applied here.
    pub fn contract_slots(
        &self,
        ops: &[(usize, &ComplexMatrix)],
    ) -> Result<(ComplexMatrix, FactorLayout), CombError> {
        let mut matrix = self.choi.clone();
        let mut layout = self.layout.clone();
        for &(slot, op) in ops {
            let po = layout.position(slot, Port::Output).ok_or(CombError::DimensionMismatch)?;
            let pi = layout.position(slot, Port::Input).ok_or(CombError::DimensionMismatch)?;
            let opt = op.transpose();
            matrix = contract_factors(&matrix, &layout, &[po, pi], &opt)?;
            layout = layout.dropped(&[po, pi]);
        }
        Ok((matrix, layout))
    }

    /// Comb on the remaining slots, obtained by contracting Phi+ (the
    /// identity map) at each dropped slot.
    pub fn marginal_comb(&self, drop_slots: &[usize]) -> Result<Comb, CombError> {
        if drop_slots.is_empty() {
            return Ok(self.clone());
        }
        let phi = phi_plus(self.system_dim);
        let ops: Vec<(usize, &ComplexMatrix)> =
            drop_slots.iter().map(|&s| (s, &phi)).collect();
        let (matrix, layout) = self.contract_slots(&ops)?;
        // remaining slots, renumbered chronologically
        let mut kept: Vec<usize> =
            (0..self.slots()).filter(|s| !drop_slots.contains(s)).collect();
        kept.sort_unstable();
        let times: Vec<f64> = kept.iter().map(|&s| self.times[s]).collect();
        // reorder factors into the standard layout for the kept slots
        let mut perm = Vec::with_capacity(2 * kept.len());
        for (_new, &old_slot) in kept.iter().enumerate().rev() {
            perm.push(layout.position(old_slot, Port::Output).unwrap());
            perm.push(layout.position(old_slot, Port::Input).unwrap());
        }
        let (matrix, _) = permute_factors(&matrix, &layout, &perm)?;
        Comb::new(matrix, times, self.system_dim, self.relaxed)
    }

    /// Unnormalized state delivered at `target_slot`'s input port, given
    /// map Chois applied at earlier slots; unlisted slots are left alone
    /// (Phi+ insertion). Its trace is the probability of the listed
    /// outcomes. Meaningful for proper (causal) combs.
    pub fn conditional_state(
        &self,
        ops: &[(usize, &ComplexMatrix)],
        target_slot: usize,
    ) -> Result<ComplexMatrix, CombError> {
        if ops.iter().any(|&(s, _)| s >= target_slot) {
            return Err(CombError::DimensionMismatch);
        }
        let phi = phi_plus(self.system_dim);
        let mut all_ops: Vec<(usize, &ComplexMatrix)> = ops.to_vec();
        for s in 0..self.slots() {
            if s != target_slot && !ops.iter().any(|&(t, _)| t == s) {
                all_ops.push((s, &phi));
            }
        }
        let (matrix, layout) = self.contract_slots(&all_ops)?;
        // remaining: (o_target, i_target); project out the open output
        let po = layout.position(target_slot, Port::Output).unwrap();
        let traced = partial_trace(&matrix, &layout, &[po])?;
        Ok(traced.scale(C64::new(1.0 / self.system_dim as f64, 0.0)))
    }

    /// Check PSD, Born normalization, and the recursive hierarchy of
    /// partial-trace conditions that encode causal ordering.
    pub fn validate(&self, tol: f64) -> CausalityReport {
        let (vals, _) = self.choi.eigh();
        let min_eigenvalue = vals.first().copied().unwrap_or(0.0);
        let psd = min_eigenvalue >= -tol;

        let d = self.system_dim;
        let deph = dephasing_d(d);
        let seq: Vec<&ComplexMatrix> = (0..self.slots()).map(|_| &deph).collect();
        let normalization_deviation = match self.born_probability(&seq) {
            Ok(p) => crate::tensor::fabs(p - 1.0),
            Err(_) => f64::INFINITY,
        };

        let mut residuals = Vec::new();
        let mut theta = self.choi.clone();
        let mut layout = self.layout.clone();
        // Level K: the final output port must be an identity factor.
        for slot in (0..self.slots()).rev() {
            let po = layout.position(slot, Port::Output).unwrap();
            let reduced = partial_trace(&theta, &layout, &[po])
                .expect("layout consistent")
                .scale(C64::new(1.0 / d as f64, 0.0));
            // rebuild 1_{o_slot} (x) reduced in the current factor order
            // (the output port is always leftmost in the standard order)
            debug_assert_eq!(po, 0);
            let rebuilt = kron(&ComplexMatrix::identity(d), &reduced);
            residuals.push(theta.max_abs_diff(&rebuilt));
            layout = layout.dropped(&[po]);
            theta = reduced;
            // trace out this slot's input to descend one level
            let pi = layout.position(slot, Port::Input).unwrap();
            theta = partial_trace(&theta, &layout, &[pi]).expect("layout consistent");
            layout = layout.dropped(&[pi]);
        }
        // theta is now a scalar: the trace of the state at the first slot.
        residuals.push(crate::tensor::fabs(theta[(0, 0)].re - 1.0).max(theta[(0, 0)].im.abs()));

        let hierarchy_ok = residuals.iter().all(|&r| r < tol);
        let pass = psd && normalization_deviation <= tol && hierarchy_ok;
        CausalityReport {
            psd,
            min_eigenvalue,
            normalization_deviation,
            hierarchy_residuals: residuals,
            relaxed: self.relaxed,
            pass,
        }
    }
}

/// Permutation taking the construction order of `comb_from_dilation`
/// into the standard port order.
fn standard_order_perm(slots: usize) -> Vec<usize> {
    // current order after construction: (o_{K-1}, i_0, o_0, i_1, o_1, ..., i_{K-1})
    // target order: (o_{K-1}, i_{K-1}, o_{K-2}, i_{K-2}, ..., o_0, i_0)
    let mut perm = Vec::with_capacity(2 * slots);
    perm.push(0usize);
    // position of i_j in current order: 1 + 2j; of o_j (j < K-1): 2 + 2j
    for j in (0..slots).rev() {
        if j == slots - 1 {
            perm.push(1 + 2 * j);
        } else {
            perm.push(2 + 2 * j); // o_j
            perm.push(1 + 2 * j); // i_j
        }
    }
    // perm currently: [o_{K-1}, i_{K-1}, o_{K-2}, i_{K-2}, ...] built in
    // target order; each entry is the old position.
    perm
}

/// Contract a dilation into its comb: the initial state opens the first
/// input port, each intermediate map threads the environment forward and
/// opens an (output, input) port pair, and the final environment is
/// traced out. The last slot's output port is an explicit identity.
pub fn comb_from_dilation(d: &Dilation) -> Result<Comb, CombError> {
    d.validate(DEFAULT_TOL)?;
    let ds = d.system_dim;
    let de = d.env_dim;
    let k = d.slots();

    let mut state = d.initial_state.clone();
    if d.t0.is_some() {
        state = apply_choi(&d.maps[0], &state);
    }
    // state lives on (i_0, env); ports accumulate chronologically:
    // (i_0, o_0, i_1, o_1, ..., i_{j}) (x) env
    let mut port_dim = ds;
    for gamma in d.slot_maps() {
        state = extend_with_map(&state, port_dim, ds, de, gamma);
        port_dim *= ds * ds;
    }
    // trace out the environment
    let mut dims: Vec<usize> = vec![ds; 2 * k - 1];
    dims.push(de);
    let layout = FactorLayout::unlabelled(&dims);
    let traced = partial_trace(&state, &layout, &[2 * k - 1])?;
    // prepend the open final output and reorder to (o_K, i_K, ..., o_1, i_1)
    let with_out = kron(&ComplexMatrix::identity(ds), &traced);
    let tmp_layout = FactorLayout::unlabelled(&vec![ds; 2 * k]);
    let perm = standard_order_perm(k);
    let (choi, _) = permute_factors(&with_out, &tmp_layout, &perm)?;
    Comb::new(choi, d.times.clone(), ds, false)
}

/// One dilation step: given sigma on (ports (x) env), produce sigma' on
/// (ports, o_prev, i_next (x) env') by feeding half of a fresh Phi+ into
/// the system side of `gamma`.
///
/// sigma'[(P,a,c,e),(P',b,d,e')] =
///     sum_{m,m'} gamma[((c,e),(a,m)), ((d,e'),(b,m'))] sigma[(P,m),(P',m')]
fn extend_with_map(
    sigma: &ComplexMatrix,
    port_dim: usize,
    ds: usize,
    de: usize,
    gamma: &ComplexMatrix,
) -> ComplexMatrix {
    let dse = ds * de;
    debug_assert_eq!(gamma.dim(), dse * dse);
    debug_assert_eq!(sigma.dim(), port_dim * de);
    let new_dim = port_dim * ds * ds * de;
    let mut out = ComplexMatrix::zeros(new_dim, new_dim);

    // bucket gamma entries by (input env m, input env m')
    // gamma row index: ((c,e),(a,m)) = ((c*de+e)*ds + a)*de + m
    let mut buckets: Vec<Vec<(usize, usize, usize, usize, usize, usize, C64)>> =
        vec![Vec::new(); de * de];
    for c in 0..ds {
        for e in 0..de {
            for a in 0..ds {
                for m in 0..de {
                    let row = ((c * de + e) * ds + a) * de + m;
                    for dd in 0..ds {
                        for e2 in 0..de {
                            for b in 0..ds {
                                for m2 in 0..de {
                                    let col = ((dd * de + e2) * ds + b) * de + m2;
                                    let g = gamma[(row, col)];
                                    if g == C_ZERO {
                                        continue;
                                    }
                                    buckets[m * de + m2].push((c, e, a, dd, e2, b, g));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    for p in 0..port_dim {
        for m in 0..de {
            let row = p * de + m;
            for p2 in 0..port_dim {
                for m2 in 0..de {
                    let s = sigma[(row, p2 * de + m2)];
                    if s == C_ZERO {
                        continue;
                    }
                    for &(c, e, a, dd, e2, b, g) in &buckets[m * de + m2] {
                        // new row: (P, a, c, e)
                        let nr = ((p * ds + a) * ds + c) * de + e;
                        let nc = ((p2 * ds + b) * ds + dd) * de + e2;
                        out[(nr, nc)] += g * s;
                    }
                }
            }
        }
    }
    out
}

/// Statistics of measuring projectively at `subset` only, with the
/// identity map inserted at every other slot. This is the directly
/// measured table for the subset, not a classical marginal.
pub fn direct_subset_table(comb: &Comb, subset: &[usize]) -> Result<ProbTable, CombError> {
    let d = comb.system_dim;
    let phi = phi_plus(d);
    let mut sorted: Vec<usize> = subset.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let dims = vec![d; n];
    let total: usize = d.pow(n as u32);
    let mut table = ProbTable::empty(sorted.clone(), dims.clone());
    let mut tuple = vec![0usize; n];
    for flat in 0..total {
        decompose(flat, &dims, &mut tuple);
        let projectors: Vec<ComplexMatrix> =
            tuple.iter().map(|&x| projector_choi(d, x)).collect();
        let seq: Vec<&ComplexMatrix> = (0..comb.slots())
            .map(|slot| match sorted.iter().position(|&s| s == slot) {
                Some(pos) => &projectors[pos],
                None => &phi,
            })
            .collect();
        let p = comb.born_probability(&seq)?;
        table.set(tuple.clone(), p);
    }
    Ok(table)
}

/// Markovian comb from a chain of system-only propagator Chois
/// [Lambda_{t1,t0}, Lambda_{t2,t1}, ...] and an initial system state
/// (trivial environment dilation). With `with_t0` false, the first
/// propagator in the list is interpreted as acting between slots 0 and 1.
pub fn markov_comb(
    rho0: &ComplexMatrix,
    propagators: &[ChoiState],
    times: &[f64],
    with_t0: Option<f64>,
) -> Result<Comb, CombError> {
    let ds = rho0.dim();
    let dilation = Dilation {
        initial_state: rho0.clone(),
        maps: propagators.iter().map(|p| p.matrix.clone()).collect(),
        system_dim: ds,
        env_dim: 1,
        times: times.to_vec(),
        t0: with_t0,
    };
    comb_from_dilation(&dilation)
}

//! Probing operations: projective instruments, the identity and
//! completely-dephasing Chois, POVM-based instruments, and the
//! Bloch-parameterized two-element POVMs used for the unrestricted
//! measurement sweep.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::comb::{choi_of_map, dephasing_d, phi_plus, projector_choi, ChoiState};
use crate::tensor::{partial_trace, C64, ComplexMatrix, FactorLayout, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum InstrumentError {
    /// POVM elements do not sum to the identity (or are not PSD).
    NotPovm,
    DimensionMismatch,
    /// Element list empty or sum not trace-preserving.
    Invalid,
}

impl fmt::Display for InstrumentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstrumentError::NotPovm => write!(f, "elements do not form a POVM"),
            InstrumentError::DimensionMismatch => write!(f, "dimension mismatch"),
            InstrumentError::Invalid => write!(f, "instrument elements do not sum to a CPTP map"),
        }
    }
}

/// An instrument: ordered CP Choi states, one per outcome, whose sum is
/// trace-preserving.
#[derive(Debug, Clone)]
pub struct Instrument {
    pub elements: Vec<ChoiState>,
    pub dim: usize,
    pub labels: Vec<String>,
}

impl Instrument {
    pub fn new(
        elements: Vec<ChoiState>,
        dim: usize,
        labels: Vec<String>,
    ) -> Result<Self, InstrumentError> {
        let inst = Instrument { elements, dim, labels };
        inst.validate(DEFAULT_TOL)?;
        Ok(inst)
    }

    pub fn validate(&self, tol: f64) -> Result<(), InstrumentError> {
        if self.elements.is_empty() || self.labels.len() != self.elements.len() {
            return Err(InstrumentError::Invalid);
        }
        let d2 = self.dim * self.dim;
        let mut sum = ComplexMatrix::zeros(d2, d2);
        for e in &self.elements {
            if e.matrix.dim() != d2 {
                return Err(InstrumentError::DimensionMismatch);
            }
            if !e.matrix.is_psd(tol) {
                return Err(InstrumentError::Invalid);
            }
            sum = &sum + &e.matrix;
        }
        let layout = FactorLayout::unlabelled(&[self.dim, self.dim]);
        let tr_o = partial_trace(&sum, &layout, &[0]).map_err(|_| InstrumentError::Invalid)?;
        if tr_o.max_abs_diff(&ComplexMatrix::identity(self.dim)) > tol {
            return Err(InstrumentError::Invalid);
        }
        Ok(())
    }

    /// An element is pathological if it is proportional to a CPTP map:
    /// probing with it reveals nothing about the process.
    pub fn pathological_elements(&self, tol: f64) -> Vec<usize> {
        let layout = FactorLayout::unlabelled(&[self.dim, self.dim]);
        let mut out = Vec::new();
        for (i, e) in self.elements.iter().enumerate() {
            let t = e.matrix.trace().re;
            if t <= tol {
                continue;
            }
            let tr_o = partial_trace(&e.matrix, &layout, &[0]).expect("element layout");
            let scaled_id = ComplexMatrix::identity(self.dim)
                .scale(C64::new(t / self.dim as f64, 0.0));
            if tr_o.max_abs_diff(&scaled_id) <= tol {
                out.push(i);
            }
        }
        out
    }

    pub fn is_pathological(&self, tol: f64) -> bool {
        !self.pathological_elements(tol).is_empty()
    }

    /// Choi of the CPTP map the elements sum to.
    pub fn summed_choi(&self) -> ComplexMatrix {
        let d2 = self.dim * self.dim;
        let mut sum = ComplexMatrix::zeros(d2, d2);
        for e in &self.elements {
            sum = &sum + &e.matrix;
        }
        sum
    }
}

/// Choi of the identity map: the unnormalized Phi+ (trace d).
pub fn identity_choi(dim: usize) -> ChoiState {
    ChoiState::single_slot(phi_plus(dim), dim, 0)
}

/// Choi of the completely dephasing map, D = sum_x |xx><xx|.
pub fn dephasing_choi(dim: usize) -> ChoiState {
    ChoiState::single_slot(dephasing_d(dim), dim, 0)
}

/// Sharp measurement in the computational basis: elements
/// P_x = |xx><xx|, which sum to the dephasing Choi.
pub fn projective_instrument(dim: usize) -> Instrument {
    assert!(dim >= 2, "projective instrument needs dim >= 2");
    let elements: Vec<ChoiState> = (0..dim)
        .map(|x| ChoiState::single_slot(projector_choi(dim, x), dim, 0))
        .collect();
    let labels = (0..dim).map(|x| format!("{}", x)).collect();
    Instrument { elements, dim, labels }
}

/// Instrument realizing a POVM. With repreparation states given, outcome
/// x maps rho to rho_x tr[E_x rho]; otherwise the Lueders square-root
/// form sqrt(E_x) rho sqrt(E_x) is used.
pub fn povm_instrument(
    povm: &[ComplexMatrix],
    repreparation: Option<&[ComplexMatrix]>,
) -> Result<Instrument, InstrumentError> {
    if povm.is_empty() {
        return Err(InstrumentError::NotPovm);
    }
    let dim = povm[0].rows();
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for e in povm {
        if !e.is_square() || e.dim() != dim {
            return Err(InstrumentError::DimensionMismatch);
        }
        if !e.is_psd(DEFAULT_TOL) {
            return Err(InstrumentError::NotPovm);
        }
        sum = &sum + e;
    }
    if sum.max_abs_diff(&ComplexMatrix::identity(dim)) > DEFAULT_TOL {
        return Err(InstrumentError::NotPovm);
    }
    let elements: Vec<ChoiState> = match repreparation {
        Some(states) => {
            if states.len() != povm.len() {
                return Err(InstrumentError::DimensionMismatch);
            }
            povm.iter()
                .zip(states.iter())
                .map(|(e, rho)| {
                    // Choi of rho_x tr[E_x .] is rho_x (x) E_x^T
                    let m = crate::tensor::kron(rho, &e.transpose());
                    ChoiState::single_slot(m, dim, 0)
                })
                .collect()
        }
        None => povm
            .iter()
            .map(|e| {
                let root = e.sqrt_psd(DEFAULT_TOL);
                choi_of_map(core::slice::from_ref(&root)).map_err(|_| InstrumentError::NotPovm)
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let labels = (0..povm.len()).map(|x| format!("{}", x)).collect();
    let inst = Instrument { elements, dim, labels };
    inst.validate(DEFAULT_TOL)?;
    Ok(inst)
}

/// Merge outcomes according to a partition of the outcome set.
pub fn coarse_grain(inst: &Instrument, grouping: &[Vec<usize>]) -> Instrument {
    let n = inst.elements.len();
    let mut seen = vec![false; n];
    for group in grouping {
        for &i in group {
            assert!(i < n && !seen[i], "grouping must partition the outcome set");
            seen[i] = true;
        }
    }
    assert!(seen.iter().all(|&s| s), "grouping must cover every outcome");
    let d2 = inst.dim * inst.dim;
    let elements: Vec<ChoiState> = grouping
        .iter()
        .map(|group| {
            let mut sum = ComplexMatrix::zeros(d2, d2);
            for &i in group {
                sum = &sum + &inst.elements[i].matrix;
            }
            ChoiState::single_slot(sum, inst.dim, 0)
        })
        .collect();
    let labels = grouping
        .iter()
        .map(|group| {
            let parts: Vec<&str> =
                group.iter().map(|&i| inst.labels[i].as_str()).collect();
            parts.join("+")
        })
        .collect();
    Instrument { elements, dim: inst.dim, labels }
}

/// Two-element qubit POVM {r0 1 + r.sigma, (1-r0) 1 - r.sigma}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochPovm {
    pub r0: f64,
    pub r: [f64; 3],
}

impl BlochPovm {
    pub fn new(r0: f64, r: [f64; 3]) -> Result<Self, InstrumentError> {
        let povm = BlochPovm { r0, r };
        // both elements PSD iff |r| <= min(r0, 1-r0)
        if povm.r_norm() > povm.r0.min(1.0 - povm.r0) + 1e-12 {
            return Err(InstrumentError::NotPovm);
        }
        Ok(povm)
    }

    pub fn r_norm(&self) -> f64 {
        libm::sqrt(self.r[0] * self.r[0] + self.r[1] * self.r[1] + self.r[2] * self.r[2])
    }

    pub fn element(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 0)] = C64::new(self.r0 + self.r[2], 0.0);
        m[(1, 1)] = C64::new(self.r0 - self.r[2], 0.0);
        m[(0, 1)] = C64::new(self.r[0], -self.r[1]);
        m[(1, 0)] = C64::new(self.r[0], self.r[1]);
        m
    }

    pub fn elements(&self) -> [ComplexMatrix; 2] {
        let e0 = self.element();
        let e1 = &ComplexMatrix::identity(2) - &e0;
        [e0, e1]
    }

    /// Lueders instrument of the two POVM elements.
    pub fn instrument(&self) -> Result<Instrument, InstrumentError> {
        let [e0, e1] = self.elements();
        povm_instrument(&[e0, e1], None)
    }
}

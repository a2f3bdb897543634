//! Dense complex matrices and multi-factor tensor bookkeeping.
//!
//! Everything downstream (combs, instruments, the LP) is built on the
//! primitives here: Kronecker products, partial traces over labelled
//! tensor factors, Hermiticity/positivity checks, and a cyclic Jacobi
//! eigensolver for Hermitian matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Sub};

pub type C64 = num_complex::Complex<f64>;

pub const C_ZERO: C64 = C64::new(0.0, 0.0);
pub const C_ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub(crate) fn fabs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Default tolerance for PSD / Hermiticity / trace-preservation checks:
/// double precision with at most ~8 tensor factors.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorError {
    /// Matrix dimensions and factor layout disagree, or a non-square
    /// matrix reached an operation that requires a square one.
    LayoutMismatch,
    /// Operand dimensions are incompatible.
    DimensionMismatch,
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::LayoutMismatch => write!(f, "factor layout does not match matrix"),
            TensorError::DimensionMismatch => write!(f, "operand dimensions are incompatible"),
        }
    }
}

/// Dense complex matrix, row-major storage.
///
/// All matrices appearing in this crate are square; the type keeps
/// `rows`/`cols` separate only so that construction errors surface as
/// `LayoutMismatch` instead of silent misindexing.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl core::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.entries[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.entries[i * self.cols + j]
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![C_ZERO; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C_ONE;
        }
        m
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self, TensorError> {
        if entries.len() != rows * cols {
            return Err(TensorError::LayoutMismatch);
        }
        Ok(Self { rows, cols, entries })
    }

    /// Square matrix from a nested real array, mostly for tests and fixtures.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n, rows[0].len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), m.cols);
            for (j, &x) in r.iter().enumerate() {
                m[(i, j)] = C64::new(x, 0.0);
            }
        }
        m
    }

    /// |i><j| on a `dim`-dimensional space.
    pub fn basis_unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        m[(i, j)] = C_ONE;
        m
    }

    /// Rank-1 projector |v><v|.
    pub fn projector(v: &[C64]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Dimension of a square matrix.
    #[inline]
    pub fn dim(&self) -> usize {
        debug_assert_eq!(self.rows, self.cols);
        self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn conjugate(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C_ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn apply_to_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![C_ZERO; self.rows];
        for i in 0..self.rows {
            let mut acc = C_ZERO;
            for j in 0..self.cols {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries
            .iter()
            .zip(other.entries.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// tr(A B).
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = C_ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C_ZERO {
                    continue;
                }
                acc += a * other[(k, i)];
            }
        }
        acc
    }

    /// Hermitian symmetrization (M + M†)/2.
    pub fn hermitian_part(&self) -> Self {
        let d = self.dagger();
        let mut m = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = (self[(i, j)] + d[(i, j)]) * 0.5;
            }
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in i..self.cols {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Eigenvalue floor of the Hermitian part is >= -tol.
    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let (vals, _) = self.hermitian_part().eigh();
        vals.iter().all(|&v| v >= -tol)
    }

    /// Cheap positivity probe via a tolerance-shifted Cholesky attempt.
    ///
    /// Used on large Choi matrices where the Jacobi sweep is too slow;
    /// `is_psd` remains the reference check.
    pub fn psd_probe(&self, tol: f64) -> bool {
        if !self.is_square() || !self.is_hermitian(tol.max(1e-12) * 1e3) {
            return false;
        }
        let n = self.dim();
        let shift = tol.max(1e-14);
        let mut a = self.hermitian_part();
        for i in 0..n {
            a[(i, i)] += C64::new(shift, 0.0);
        }
        // In-place LL^dagger; fail on a non-positive pivot.
        for k in 0..n {
            let mut d = a[(k, k)].re;
            for j in 0..k {
                d -= a[(k, j)].norm_sqr();
            }
            if d <= 0.0 {
                return false;
            }
            let d = libm::sqrt(d);
            a[(k, k)] = C64::new(d, 0.0);
            for i in (k + 1)..n {
                let mut s = a[(i, k)];
                for j in 0..k {
                    s -= a[(i, j)] * a[(k, j)].conj();
                }
                a[(i, k)] = s / d;
            }
        }
        true
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.
    ///
    /// Returns eigenvalues (ascending) and the unitary whose columns are
    /// the corresponding eigenvectors. The sweep order (p < q, row-major)
    /// is fixed so results are reproducible.
    pub fn eigh(&self) -> (Vec<f64>, ComplexMatrix) {
        assert!(self.is_square(), "eigh requires a square matrix");
        let n = self.dim();
        let mut a = self.hermitian_part();
        let mut v = ComplexMatrix::identity(n);
        let max_sweeps = 60;
        for _ in 0..max_sweeps {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)].norm_sqr();
                }
            }
            if off <= 1e-26 * (n as f64) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    let norm = apq.norm();
                    if norm <= 1e-300 {
                        continue;
                    }
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    // Phase that makes the pivot real, then a real Jacobi
                    // rotation on the (p,q) plane.
                    let phase = apq / norm;
                    let tau = (aqq - app) / (2.0 * norm);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + libm::sqrt(1.0 + tau * tau))
                    } else {
                        -1.0 / (-tau + libm::sqrt(1.0 + tau * tau))
                    };
                    let c = 1.0 / libm::sqrt(1.0 + t * t);
                    let s = t * c;
                    // Columns: |p'> = c|p> - s conj(phase)|q>, |q'> = s phase|p> + c|q>
                    let cs = C64::new(c, 0.0);
                    let sp = phase * s;
                    let spc = phase.conj() * s;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = akp * cs - akq * spc;
                        a[(k, q)] = akp * sp + akq * cs;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = apk * cs - aqk * sp;
                        a[(q, k)] = apk * spc + aqk * cs;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * cs - vkq * spc;
                        v[(k, q)] = vkp * sp + vkq * cs;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
        order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
        let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
        let mut vecs = ComplexMatrix::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                vecs[(k, new)] = v[(k, old)];
            }
        }
        (vals, vecs)
    }

    /// Principal square root of a PSD matrix; small negative eigenvalues
    /// within `tol` are clipped to zero.
    pub fn sqrt_psd(&self, tol: f64) -> Self {
        let (vals, vecs) = self.eigh();
        let n = self.dim();
        let mut out = Self::zeros(n, n);
        for (k, &lam) in vals.iter().enumerate() {
            debug_assert!(lam >= -tol.max(1e-7), "sqrt_psd on a non-PSD matrix");
            let r = libm::sqrt(lam.max(0.0));
            if r == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = vecs[(i, k)] * r;
                if vi == C_ZERO {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vi * vecs[(j, k)].conj();
                }
            }
        }
        out
    }

    /// Spectral norm of a Hermitian matrix (max |eigenvalue|).
    pub fn hermitian_operator_norm(&self) -> f64 {
        let (vals, _) = self.eigh();
        vals.iter().fold(0.0, |m, &v| m.max(fabs(v)))
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, other: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(other)
    }
}

/// Kronecker product; the left operand is the most significant factor,
/// matching the left-to-right tensor order used throughout.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let mut out = ComplexMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C_ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn kron_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    assert!(!factors.is_empty());
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = kron(&acc, f);
    }
    acc
}

/// Entrywise transpose in the fixed computational basis.
pub fn transpose_computational(m: &ComplexMatrix) -> ComplexMatrix {
    m.transpose()
}

/// Which side of a time slot a tensor factor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factor {
    pub dim: usize,
    pub slot: usize,
    pub port: Port,
}

impl Factor {
    pub fn new(dim: usize, slot: usize, port: Port) -> Self {
        Self { dim, slot, port }
    }
}

/// Ordered list of tensor factors labelling the subsystems of a square
/// matrix; the leftmost factor is the most significant index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorLayout {
    factors: Vec<Factor>,
}

impl FactorLayout {
    pub fn new(factors: Vec<Factor>) -> Self {
        let layout = Self { factors };
        debug_assert!(layout.no_duplicate_ports());
        layout
    }

    /// Layout with anonymous slot labels 0..n, all marked as inputs.
    pub fn unlabelled(dims: &[usize]) -> Self {
        Self {
            factors: dims
                .iter()
                .enumerate()
                .map(|(i, &d)| Factor::new(d, i, Port::Input))
                .collect(),
        }
    }

    fn no_duplicate_ports(&self) -> bool {
        for (i, a) in self.factors.iter().enumerate() {
            for b in &self.factors[i + 1..] {
                if a.slot == b.slot && a.port == b.port {
                    return false;
                }
            }
        }
        true
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn matches(&self, m: &ComplexMatrix) -> bool {
        m.is_square() && m.dim() == self.total_dim()
    }

    pub fn position(&self, slot: usize, port: Port) -> Option<usize> {
        self.factors.iter().position(|f| f.slot == slot && f.port == port)
    }

    /// Strides of each factor in the flattened index (row-major,
    /// leftmost factor most significant).
    pub fn strides(&self) -> Vec<usize> {
        let n = self.factors.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.factors[i + 1].dim;
        }
        strides
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let strides = self.strides();
        multi.iter().zip(strides.iter()).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut out = vec![0usize; self.factors.len()];
        for (k, s) in strides.iter().enumerate() {
            out[k] = flat / s;
            flat %= s;
        }
        out
    }

    pub fn dropped(&self, drop: &[usize]) -> FactorLayout {
        FactorLayout {
            factors: self
                .factors
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, f)| *f)
                .collect(),
        }
    }
}

/// Partial trace over the factors listed in `drop`. Trace is preserved:
/// tr(result) == tr(m).
pub fn partial_trace(
    m: &ComplexMatrix,
    layout: &FactorLayout,
    drop: &[usize],
) -> Result<ComplexMatrix, TensorError> {
    if !layout.matches(m) {
        return Err(TensorError::LayoutMismatch);
    }
    if drop.iter().any(|&i| i >= layout.len()) {
        return Err(TensorError::LayoutMismatch);
    }
    let keep: Vec<usize> = (0..layout.len()).filter(|i| !drop.contains(i)).collect();
    let dims = layout.dims();
    let strides = layout.strides();
    let keep_dim: usize = keep.iter().map(|&i| dims[i]).product();
    let drop_dim: usize = drop.iter().map(|&i| dims[i]).product();
    let mut out = ComplexMatrix::zeros(keep_dim, keep_dim);

    // Enumerate kept row/col multi-indices and sum the dropped diagonal.
    let keep_dims: Vec<usize> = keep.iter().map(|&i| dims[i]).collect();
    let drop_dims: Vec<usize> = drop.iter().map(|&i| dims[i]).collect();
    let mut row_multi = vec![0usize; keep.len()];
    for r in 0..keep_dim {
        decompose(r, &keep_dims, &mut row_multi);
        let row_base: usize = row_multi
            .iter()
            .zip(keep.iter())
            .map(|(&v, &f)| v * strides[f])
            .sum();
        let mut col_multi = vec![0usize; keep.len()];
        for c in 0..keep_dim {
            decompose(c, &keep_dims, &mut col_multi);
            let col_base: usize = col_multi
                .iter()
                .zip(keep.iter())
                .map(|(&v, &f)| v * strides[f])
                .sum();
            let mut acc = C_ZERO;
            let mut d_multi = vec![0usize; drop.len()];
            for d in 0..drop_dim {
                decompose(d, &drop_dims, &mut d_multi);
                let off: usize = d_multi
                    .iter()
                    .zip(drop.iter())
                    .map(|(&v, &f)| v * strides[f])
                    .sum();
                acc += m[(row_base + off, col_base + off)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Reorder tensor factors. `perm[k]` is the old position of the factor
/// that ends up at new position `k`.
pub fn permute_factors(
    m: &ComplexMatrix,
    layout: &FactorLayout,
    perm: &[usize],
) -> Result<(ComplexMatrix, FactorLayout), TensorError> {
    if !layout.matches(m) || perm.len() != layout.len() {
        return Err(TensorError::LayoutMismatch);
    }
    let strides = layout.strides();
    let new_factors: Vec<Factor> = perm.iter().map(|&old| layout.factors()[old]).collect();
    let new_layout = FactorLayout::new(new_factors);
    let new_dims = new_layout.dims();
    let n = m.dim();
    let mut out = ComplexMatrix::zeros(n, n);
    let mut multi = vec![0usize; perm.len()];
    // old flat index for each new flat index
    let mut map = vec![0usize; n];
    for new_flat in 0..n {
        decompose(new_flat, &new_dims, &mut multi);
        let mut old_flat = 0;
        for (k, &old_pos) in perm.iter().enumerate() {
            old_flat += multi[k] * strides[old_pos];
        }
        map[new_flat] = old_flat;
    }
    for r in 0..n {
        for c in 0..n {
            out[(r, c)] = m[(map[r], map[c])];
        }
    }
    Ok((out, new_layout))
}

/// Transpose only the listed factors (partial transposition).
pub fn transpose_factors(
    m: &ComplexMatrix,
    layout: &FactorLayout,
    subset: &[usize],
) -> Result<ComplexMatrix, TensorError> {
    if !layout.matches(m) {
        return Err(TensorError::LayoutMismatch);
    }
    let dims = layout.dims();
    let n = m.dim();
    let mut out = ComplexMatrix::zeros(n, n);
    let mut rm = vec![0usize; dims.len()];
    let mut cm = vec![0usize; dims.len()];
    for r in 0..n {
        decompose(r, &dims, &mut rm);
        for c in 0..n {
            decompose(c, &dims, &mut cm);
            let mut sr = rm.clone();
            let mut sc = cm.clone();
            for &k in subset {
                sr[k] = cm[k];
                sc[k] = rm[k];
            }
            let strides = layout.strides();
            let fr: usize = sr.iter().zip(strides.iter()).map(|(a, s)| a * s).sum();
            let fc: usize = sc.iter().zip(strides.iter()).map(|(a, s)| a * s).sum();
            out[(r, c)] = m[(fr, fc)];
        }
    }
    Ok(out)
}

/// tr_S[(op_S (x) 1_rest) m]: contract an operator living on the factor
/// subset `which` against `m`, returning the matrix on the remaining
/// factors. A full contraction (all factors) returns a 1x1 matrix.
pub fn contract_factors(
    m: &ComplexMatrix,
    layout: &FactorLayout,
    which: &[usize],
    op: &ComplexMatrix,
) -> Result<ComplexMatrix, TensorError> {
    if !layout.matches(m) {
        return Err(TensorError::LayoutMismatch);
    }
    let dims = layout.dims();
    let strides = layout.strides();
    let sub_dims: Vec<usize> = which.iter().map(|&i| dims[i]).collect();
    let sub_dim: usize = sub_dims.iter().product();
    if !op.is_square() || op.dim() != sub_dim {
        return Err(TensorError::DimensionMismatch);
    }
    let keep: Vec<usize> = (0..layout.len()).filter(|i| !which.contains(i)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&i| dims[i]).collect();
    let keep_dim: usize = keep_dims.iter().product();
    let mut out = ComplexMatrix::zeros(keep_dim.max(1), keep_dim.max(1));

    let mut rk = vec![0usize; keep.len()];
    let mut ck = vec![0usize; keep.len()];
    let mut rs = vec![0usize; which.len()];
    let mut cs = vec![0usize; which.len()];
    for r in 0..keep_dim.max(1) {
        decompose(r, &keep_dims, &mut rk);
        let rbase: usize = rk.iter().zip(keep.iter()).map(|(&v, &f)| v * strides[f]).sum();
        for c in 0..keep_dim.max(1) {
            decompose(c, &keep_dims, &mut ck);
            let cbase: usize = ck.iter().zip(keep.iter()).map(|(&v, &f)| v * strides[f]).sum();
            let mut acc = C_ZERO;
            for s in 0..sub_dim {
                decompose(s, &sub_dims, &mut rs);
                let roff: usize =
                    rs.iter().zip(which.iter()).map(|(&v, &f)| v * strides[f]).sum();
                for t in 0..sub_dim {
                    let o = op[(s, t)];
                    if o == C_ZERO {
                        continue;
                    }
                    decompose(t, &sub_dims, &mut cs);
                    let coff: usize =
                        cs.iter().zip(which.iter()).map(|(&v, &f)| v * strides[f]).sum();
                    // tr_S[(op (x) 1) m]: row of op meets column index of m.
                    acc += o * m[(rbase + coff, cbase + roff)];
                }
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn decompose(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

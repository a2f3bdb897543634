//! Independent oracles shared by the integration and acceptance suites.
//!
//! These deliberately avoid the code paths they validate: the LP oracle
//! enumerates vertices instead of pivoting, the dephasing oracle
//! propagates grid wavefunctions instead of evaluating kernels, and the
//! dilation oracle applies channels step by step instead of contracting
//! a comb.

#![allow(dead_code)]

use combclassic_core::comb::{apply_choi, Comb, Dilation};
use combclassic_core::measure::LpData;
use combclassic_core::tensor::{kron, C64, ComplexMatrix};

pub const C_ZERO: C64 = C64::new(0.0, 0.0);
pub const C_ONE: C64 = C64::new(1.0, 0.0);

// ---------------------------------------------------------------------
// LP oracle: exhaustive vertex enumeration.
//
// After eliminating the b variables, the primal is
//   min a  s.t.  a >= sum_j sigma_j (alpha_j . p - beta_j)
//                for every subset i and sign pattern sigma in {+-1}^{J_i},
//                sum_k p_k = 1, p >= 0, a >= 0,
// an LP in (a, p). Every vertex is the solution of n linearly
// independent tight constraints; enumerate all candidate bases, keep
// feasible points, and take the best objective.

pub fn lp_vertex_oracle(comb: &Comb) -> f64 {
    let data = LpData::build(comb, 1_000_000).expect("within cap");
    let atoms = data.atoms;
    let nvars = 1 + atoms; // (a, p)
    // constraint rows: g . x <= h
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for group in &data.groups {
        let jn = group.len();
        for bits in 0..(1usize << jn) {
            // sum_j sigma_j (alpha_j . p - beta_j) - a <= 0
            let mut row = vec![0.0; nvars];
            let mut rhs = 0.0;
            row[0] = -1.0;
            for (pos, &j) in group.iter().enumerate() {
                let sigma = if bits & (1 << pos) != 0 { 1.0 } else { -1.0 };
                for k in 0..atoms {
                    row[1 + k] += sigma * data.alpha(j, k);
                }
                rhs += sigma * data.beta[j];
            }
            rows.push((row, rhs));
        }
    }
    // nonnegativity as rows
    for v in 0..nvars {
        let mut row = vec![0.0; nvars];
        row[v] = -1.0;
        rows.push((row, 0.0));
    }
    let eq: Vec<f64> = {
        let mut e = vec![0.0; nvars];
        for k in 0..atoms {
            e[1 + k] = 1.0;
        }
        e
    };

    let m = rows.len();
    let mut best = f64::INFINITY;
    // choose nvars-1 tight rows plus the simplex equality
    let mut choice: Vec<usize> = (0..nvars - 1).collect();
    loop {
        // solve the square system [eq; rows(choice)] x = [1; rhs]
        let mut a = vec![vec![0.0f64; nvars + 1]; nvars];
        a[0][..nvars].copy_from_slice(&eq);
        a[0][nvars] = 1.0;
        for (r, &idx) in choice.iter().enumerate() {
            a[r + 1][..nvars].copy_from_slice(&rows[idx].0);
            a[r + 1][nvars] = rows[idx].1;
        }
        if let Some(x) = solve_dense(a) {
            // feasibility
            let feasible = rows.iter().all(|(g, h)| {
                let lhs: f64 = g.iter().zip(x.iter()).map(|(gi, xi)| gi * xi).sum();
                lhs <= h + 1e-8
            });
            if feasible {
                best = best.min(x[0]);
            }
        }
        // next combination
        let mut i = choice.len();
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if choice[i] + (choice.len() - i) < m {
                choice[i] += 1;
                for j in i + 1..choice.len() {
                    choice[j] = choice[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; None if singular.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let (pivot, maxval) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if maxval < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        let p = a[col][col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col] / p;
            if f == 0.0 {
                continue;
            }
            for c in col..=n {
                let sub = f * a[col][c];
                a[r][c] -= sub;
            }
        }
    }
    Some((0..n).map(|r| a[r][n] / a[r][r]).collect())
}

// ---------------------------------------------------------------------
// Dephasing-model grid oracle: pure-state branch propagation.
//
// The environment mode is importance-sampled through the inverse CDF of
// the Lorentzian; the joint state stays a pure wavefunction on every
// measurement branch, so probabilities are exact in the discretized
// model.

pub struct DephasingGridOracle {
    pub points: Vec<f64>,
    pub amps: Vec<f64>,
    pub gamma: f64,
}

impl DephasingGridOracle {
    pub fn new(gamma: f64, n: usize) -> Self {
        let mut points = Vec::with_capacity(n);
        let mut amps = Vec::with_capacity(n);
        for i in 0..n {
            let v = (i as f64 + 0.5) / n as f64;
            points.push(gamma * (core::f64::consts::PI * (v - 0.5)).tan());
            amps.push((1.0 / n as f64).sqrt());
        }
        DephasingGridOracle { points, amps, gamma }
    }

    /// Joint probability of the +/- outcome sequence (x = 0 for +) when
    /// measuring in the sigma_x basis at `times`, starting from rho0
    /// (z-basis matrix, must be a pure-state projector for this oracle)
    /// at time t0.
    pub fn joint_probability(
        &self,
        t0: f64,
        times: &[f64],
        rho0: &ComplexMatrix,
        outcomes: &[usize],
    ) -> f64 {
        let n = self.points.len();
        // decompose rho0 into its eigenvectors (qubit) and average
        let (vals, vecs) = rho0.eigh();
        let mut total = 0.0;
        for which in 0..2 {
            let w = vals[which];
            if w < 1e-14 {
                continue;
            }
            let c0 = vecs[(0, which)];
            let c1 = vecs[(1, which)];
            // psi[l * n + i] with l the z-basis system index
            let mut psi: Vec<C64> = vec![C_ZERO; 2 * n];
            for i in 0..n {
                psi[i] = c0 * self.amps[i];
                psi[n + i] = c1 * self.amps[i];
            }
            let mut prev = t0;
            let mut amp_sq = 1.0;
            for (j, &t) in times.iter().enumerate() {
                let dt = t - prev;
                prev = t;
                for i in 0..n {
                    let phase = self.points[i] * dt;
                    let rot = C64::new(phase.cos(), phase.sin());
                    psi[i] *= rot;
                    psi[n + i] *= rot.conj();
                }
                // project onto |+/-> on the system
                let sign = if outcomes[j] == 0 { 1.0 } else { -1.0 };
                let inv_sqrt2 = core::f64::consts::FRAC_1_SQRT_2;
                let mut norm = 0.0;
                let mut proj: Vec<C64> = vec![C_ZERO; n];
                for i in 0..n {
                    let a = (psi[i] + psi[n + i] * sign) * inv_sqrt2;
                    norm += a.norm_sqr();
                    proj[i] = a;
                }
                amp_sq = norm;
                // collapsed state |x> (x) proj
                for i in 0..n {
                    psi[i] = proj[i] * inv_sqrt2;
                    psi[n + i] = proj[i] * (sign * inv_sqrt2);
                }
                let _ = amp_sq;
            }
            // probability of the branch = final squared norm
            let p: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            total += w * p;
        }
        total
    }

    /// System density matrix (sigma_x basis) of a branch after the given
    /// outcomes, normalized; None if the branch has zero probability.
    pub fn branch_state(
        &self,
        t0: f64,
        times: &[f64],
        rho0: &ComplexMatrix,
        outcomes: &[usize],
        final_time: f64,
    ) -> Option<ComplexMatrix> {
        let n = self.points.len();
        let (vals, vecs) = rho0.eigh();
        let mut rho_x = ComplexMatrix::zeros(2, 2);
        let mut weight = 0.0;
        for which in 0..2 {
            let w = vals[which];
            if w < 1e-14 {
                continue;
            }
            let c0 = vecs[(0, which)];
            let c1 = vecs[(1, which)];
            let mut psi: Vec<C64> = vec![C_ZERO; 2 * n];
            for i in 0..n {
                psi[i] = c0 * self.amps[i];
                psi[n + i] = c1 * self.amps[i];
            }
            let mut prev = t0;
            for (j, &t) in times.iter().enumerate() {
                let dt = t - prev;
                prev = t;
                for i in 0..n {
                    let phase = self.points[i] * dt;
                    let rot = C64::new(phase.cos(), phase.sin());
                    psi[i] *= rot;
                    psi[n + i] *= rot.conj();
                }
                let sign = if outcomes[j] == 0 { 1.0 } else { -1.0 };
                let inv_sqrt2 = core::f64::consts::FRAC_1_SQRT_2;
                let mut proj: Vec<C64> = vec![C_ZERO; n];
                for i in 0..n {
                    proj[i] = (psi[i] + psi[n + i] * sign) * inv_sqrt2;
                }
                for i in 0..n {
                    psi[i] = proj[i] * inv_sqrt2;
                    psi[n + i] = proj[i] * (sign * inv_sqrt2);
                }
            }
            // free evolution to final_time
            let dt = final_time - prev;
            for i in 0..n {
                let phase = self.points[i] * dt;
                let rot = C64::new(phase.cos(), phase.sin());
                psi[i] *= rot;
                psi[n + i] *= rot.conj();
            }
            // reduced system state in the z basis, weighted by branch prob
            for l in 0..2 {
                for l2 in 0..2 {
                    let mut acc = C_ZERO;
                    for i in 0..n {
                        acc += psi[l * n + i] * psi[l2 * n + i].conj();
                    }
                    rho_x[(l, l2)] += acc * w;
                }
            }
            weight += w;
        }
        let _ = weight;
        let tr = rho_x.trace().re;
        if tr < 1e-12 {
            return None;
        }
        // rotate to the sigma_x basis (Hadamard conjugation)
        let h = ComplexMatrix::from_real_rows(&[
            &[core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2],
            &[core::f64::consts::FRAC_1_SQRT_2, -core::f64::consts::FRAC_1_SQRT_2],
        ]);
        let rotated = h.matmul(&rho_x).matmul(&h);
        Some(rotated.scale(C64::new(1.0 / tr, 0.0)))
    }
}

// ---------------------------------------------------------------------
// Direct sequential propagation of a dilation (Eq.-by-eq application of
// instrument elements and maps), the oracle for comb contraction.

pub fn propagate_dilation(d: &Dilation, element_chois: &[&ComplexMatrix]) -> f64 {
    assert_eq!(element_chois.len(), d.slots());
    let ds = d.system_dim;
    let de = d.env_dim;
    let mut eta = d.initial_state.clone();
    let mut maps = d.maps.iter();
    if d.t0.is_some() {
        eta = apply_choi(maps.next().unwrap(), &eta);
    }
    for (j, m) in element_chois.iter().enumerate() {
        // apply the instrument element on the system factor
        eta = apply_system_choi(m, &eta, ds, de);
        if j + 1 < d.slots() {
            eta = apply_choi(maps.next().unwrap(), &eta);
        }
    }
    eta.trace().re
}

/// Apply a single-slot map Choi on the system factor of an s (x) e state.
pub fn apply_system_choi(
    choi: &ComplexMatrix,
    state: &ComplexMatrix,
    ds: usize,
    de: usize,
) -> ComplexMatrix {
    let dse = ds * de;
    let mut out = ComplexMatrix::zeros(dse, dse);
    for o in 0..ds {
        for i in 0..ds {
            for o2 in 0..ds {
                for i2 in 0..ds {
                    let g = choi[(o * ds + i, o2 * ds + i2)];
                    if g == C_ZERO {
                        continue;
                    }
                    for e in 0..de {
                        for e2 in 0..de {
                            out[(o * de + e, o2 * de + e2)] +=
                                g * state[(i * de + e, i2 * de + e2)];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Random diagonal classical comb (chi = 0) from a seeded distribution.
pub fn random_classical_comb(seed: u64, slots: usize, dim: usize) -> Comb {
    use combclassic_core::comb::comb_layout;
    use combclassic_core::models::SeededRng;
    let mut rng = SeededRng::new(seed);
    let atoms = dim.pow(slots as u32);
    let mut ps: Vec<f64> = (0..atoms).map(|_| rng.uniform() + 1e-3).collect();
    let total: f64 = ps.iter().sum();
    for p in ps.iter_mut() {
        *p /= total;
    }
    let layout = comb_layout(slots, dim);
    let full = (dim * dim).pow(slots as u32);
    let mut m = ComplexMatrix::zeros(full, full);
    let dims = vec![dim; slots];
    let mut tuple = vec![0usize; slots];
    for (k, &p) in ps.iter().enumerate() {
        let mut flat = k;
        for s in (0..slots).rev() {
            tuple[s] = flat % dim;
            flat /= dim;
        }
        // port order: slot K-1 doubled first
        let mut multi = Vec::with_capacity(2 * slots);
        for s in (0..slots).rev() {
            multi.push(tuple[s]);
            multi.push(tuple[s]);
        }
        let idx = layout.flat_index(&multi);
        m[(idx, idx)] = C64::new(p, 0.0);
        let _ = &dims;
    }
    Comb::new(m, (0..slots).map(|i| i as f64).collect(), dim, true).unwrap()
}

pub fn hadamard() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[
        &[core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2],
        &[core::f64::consts::FRAC_1_SQRT_2, -core::f64::consts::FRAC_1_SQRT_2],
    ])
}

pub fn bell_state() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            m[(i * 2 + i, j * 2 + j)] = C64::new(0.5, 0.0);
        }
    }
    m
}

pub fn kron2(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    kron(a, b)
}

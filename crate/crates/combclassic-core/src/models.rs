//! The worked example processes and the randomized generators used by
//! the property suites.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::comb::{choi_of_map, comb_from_dilation, phi_plus, Comb, CombError, Dilation};
use crate::instrument::BlochPovm;
use crate::tensor::{fabs, kron, C64, ComplexMatrix, C_ONE, C_ZERO};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    BadParameter,
    BadTimes,
    /// The discretized environment fails to reproduce the closed-form
    /// kernel within 1e-3.
    GridTooCoarse,
    Comb(CombError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::BadParameter => write!(f, "invalid model parameter"),
            ModelError::BadTimes => write!(f, "times must be non-decreasing"),
            ModelError::GridTooCoarse => {
                write!(f, "environment grid too coarse for the requested kernel")
            }
            ModelError::Comb(e) => write!(f, "{}", e),
        }
    }
}

impl From<CombError> for ModelError {
    fn from(e: CombError) -> Self {
        ModelError::Comb(e)
    }
}

/// Environment memory kernel k(t) = int dp |f(p)|^2 e^{2ipt}, with
/// k(0) = 1 and |k| <= 1.
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    pub description: String,
    form: KernelForm,
}

#[derive(Debug, Clone)]
enum KernelForm {
    /// |f(p)|^2 = Gamma / (pi (Gamma^2 + p^2)), k(t) = exp(-2 Gamma |t|).
    Lorentzian { gamma: f64 },
    /// k == 1: a static environment (the Gamma -> 0 limit).
    Static,
    /// Samples of k on t >= 0, linearly interpolated; k(-t) = conj k(t).
    Tabulated { times: Vec<f64>, values: Vec<C64> },
}

impl MemoryKernel {
    pub fn eval(&self, t: f64) -> C64 {
        match &self.form {
            KernelForm::Lorentzian { gamma } => {
                C64::new(libm::exp(-2.0 * gamma * fabs(t)), 0.0)
            }
            KernelForm::Static => C_ONE,
            KernelForm::Tabulated { times, values } => {
                let at = fabs(t);
                let v = if at >= *times.last().unwrap() {
                    *values.last().unwrap()
                } else {
                    let i = times.partition_point(|&x| x <= at).max(1) - 1;
                    let (t0, t1) = (times[i], times[i + 1]);
                    let w = if t1 > t0 { (at - t0) / (t1 - t0) } else { 0.0 };
                    values[i] * (1.0 - w) + values[i + 1] * w
                };
                if t < 0.0 { v.conj() } else { v }
            }
        }
    }

    /// Spectral density |f(p)|^2, where a closed form is known.
    pub fn spectral_density(&self, p: f64) -> Option<f64> {
        match &self.form {
            KernelForm::Lorentzian { gamma } => {
                Some(gamma / (core::f64::consts::PI * (gamma * gamma + p * p)))
            }
            _ => None,
        }
    }

    pub fn lorentzian_gamma(&self) -> Option<f64> {
        match &self.form {
            KernelForm::Lorentzian { gamma } => Some(*gamma),
            _ => None,
        }
    }
}

/// Lorentzian spectral density: k(t) = exp(-2 gamma |t|), purely real.
pub fn lorentzian_kernel(gamma: f64) -> Result<MemoryKernel, ModelError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(ModelError::BadParameter);
    }
    Ok(MemoryKernel {
        description: alloc::format!("lorentzian(gamma={})", gamma),
        form: KernelForm::Lorentzian { gamma },
    })
}

/// Static environment, k == 1 (the Gamma -> 0 limit of the Lorentzian).
pub fn static_kernel() -> MemoryKernel {
    MemoryKernel { description: String::from("static"), form: KernelForm::Static }
}

/// Kernel from samples of k(t) on t >= 0.
pub fn tabulated_kernel(times: Vec<f64>, values: Vec<C64>) -> Result<MemoryKernel, ModelError> {
    if times.len() != values.len() || times.is_empty() || times[0] != 0.0 {
        return Err(ModelError::BadParameter);
    }
    if (values[0] - C_ONE).norm() > 1e-12 || values.iter().any(|v| v.norm() > 1.0 + 1e-12) {
        return Err(ModelError::BadParameter);
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ModelError::BadParameter);
    }
    Ok(MemoryKernel {
        description: String::from("tabulated"),
        form: KernelForm::Tabulated { times, values },
    })
}

// ---------------------------------------------------------------------
// Seeded randomness. ChaCha8 is a counter-based stream generator, so a
// 64-bit seed reproduces bit-identical output on any platform.

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random bits into [0, 1)
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u = loop {
            let u = self.uniform();
            if u > 1e-300 {
                break u;
            }
        };
        let v = self.uniform();
        libm::sqrt(-2.0 * libm::log(u)) * libm::cos(2.0 * core::f64::consts::PI * v)
    }

    pub fn complex_normal(&mut self) -> C64 {
        C64::new(self.normal(), self.normal())
    }
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the R-diagonal
/// phases divided out.
pub fn random_unitary(rng: &mut SeededRng, dim: usize) -> ComplexMatrix {
    let mut g = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            g[(i, j)] = rng.complex_normal();
        }
    }
    // modified Gram-Schmidt on columns
    let mut q = g.clone();
    for j in 0..dim {
        for k in 0..j {
            let mut dot = C_ZERO;
            for i in 0..dim {
                dot += q[(i, k)].conj() * q[(i, j)];
            }
            for i in 0..dim {
                let sub = dot * q[(i, k)];
                q[(i, j)] -= sub;
            }
        }
        let mut norm = 0.0;
        for i in 0..dim {
            norm += q[(i, j)].norm_sqr();
        }
        let norm = libm::sqrt(norm);
        // fix the phase so the generator is Haar rather than QR-biased
        let phase = {
            let z = q[(j, j)];
            if z.norm() > 1e-300 { z / z.norm() } else { C_ONE }
        };
        for i in 0..dim {
            q[(i, j)] /= phase * norm;
        }
    }
    q
}

/// Random pure density matrix.
pub fn random_pure_state(rng: &mut SeededRng, dim: usize) -> ComplexMatrix {
    let mut v = vec![C_ZERO; dim];
    let mut norm = 0.0;
    for x in v.iter_mut() {
        *x = rng.complex_normal();
        norm += x.norm_sqr();
    }
    let norm = libm::sqrt(norm);
    for x in v.iter_mut() {
        *x /= norm;
    }
    ComplexMatrix::projector(&v)
}

/// Haar-ish random unitary dilation: pure initial system-environment
/// state and unitary-conjugation Chois between slots. Deterministic per
/// seed.
pub fn random_dilation(seed: u64, dims: (usize, usize), slots: usize) -> Dilation {
    let (ds, de) = dims;
    let dse = ds * de;
    let mut rng = SeededRng::new(seed);
    let initial_state = random_pure_state(&mut rng, dse);
    let maps: Vec<ComplexMatrix> = (0..slots.saturating_sub(1))
        .map(|_| {
            let u = random_unitary(&mut rng, dse);
            choi_of_map(core::slice::from_ref(&u)).expect("unitary is CPTP").matrix
        })
        .collect();
    Dilation {
        initial_state,
        maps,
        system_dim: ds,
        env_dim: de,
        times: (0..slots).map(|i| i as f64).collect(),
        t0: None,
    }
}

/// Comb of a random dilation.
pub fn random_comb(seed: u64, dims: (usize, usize), slots: usize) -> Comb {
    comb_from_dilation(&random_dilation(seed, dims, slots)).expect("random dilation is valid")
}

// ---------------------------------------------------------------------
// Dephasing qubit coupled to a continuous environment mode.

/// Reduced comb of the dephasing model, expressed in the measured
/// (sigma_x eigenbasis) coordinates so that the fixed computational
/// basis of all checkers coincides with the model's measurement basis.
///
/// `times` are the slot times t_1..t_K (strictly increasing); `t0` is
/// the preparation time (t0 <= times[0]); `rho0` is the initial qubit
/// state written in the z-basis.
///
/// Entries come from the closed-form kernel: each matrix element of the
/// z-basis comb is k evaluated at a signed sum of the gaps, since every
/// phase difference is 0 or +/-2.
pub fn dephasing_comb(
    kernel: &MemoryKernel,
    t0: f64,
    times: &[f64],
    rho0: &ComplexMatrix,
) -> Result<Comb, ModelError> {
    if times.is_empty() || rho0.dim() != 2 {
        return Err(ModelError::BadParameter);
    }
    if t0 > times[0] || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ModelError::BadTimes);
    }
    let k = times.len();
    // gaps tau_a = t_a - t_{a-1}, with t_0 = t0
    let mut gaps = Vec::with_capacity(k);
    let mut prev = t0;
    for &t in times {
        gaps.push(t - prev);
        prev = t;
    }
    let dim = 4usize.pow(k as u32);
    let mut choi = ComplexMatrix::zeros(dim, dim);
    // Ket leg labels (a_1..a_k) and bra leg labels (b_1..b_k); leg a's
    // label sits on ports i_a and o_{a-1}; the final output port is an
    // open identity factor. Standard port order (o_K, i_K, ..., o_1, i_1).
    let legs = k;
    let total = 1usize << legs;
    let phi = |l: usize| if l == 0 { 1.0 } else { -1.0 };
    for a_bits in 0..total {
        let a_leg = |leg: usize| (a_bits >> leg) & 1; // leg index 0 = leg 1
        for b_bits in 0..total {
            let b_leg = |leg: usize| (b_bits >> leg) & 1;
            let mut arg = 0.0;
            for leg in 0..legs {
                arg += 0.5 * (phi(a_leg(leg)) - phi(b_leg(leg))) * gaps[leg];
            }
            let weight = kernel.eval(arg) * rho0[(a_leg(0), b_leg(0))];
            if weight == C_ZERO {
                continue;
            }
            for g in 0..2usize {
                // port values, most significant first:
                // o_{K-1}=g, then for slot j=K-1..0: i_j = leg j+1 label,
                // o_{j-1} = leg j+1 label (j >= 1), ending with i_0 = leg 1.
                let mut row = g;
                let mut col = g;
                for slot in (0..k).rev() {
                    // i_slot carries leg (slot+1) = leg index slot
                    row = row * 2 + a_leg(slot);
                    col = col * 2 + b_leg(slot);
                    if slot > 0 {
                        // o_{slot-1} carries the same leg label
                        row = row * 2 + a_leg(slot);
                        col = col * 2 + b_leg(slot);
                    }
                }
                choi[(row, col)] += weight;
            }
        }
    }
    // rotate every port by the Hadamard so that computational-basis
    // instruments act in the measured sigma_x basis
    let h = ComplexMatrix::from_real_rows(&[
        &[core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2],
        &[core::f64::consts::FRAC_1_SQRT_2, -core::f64::consts::FRAC_1_SQRT_2],
    ]);
    let mut rot = h.clone();
    for _ in 1..(2 * k) {
        rot = kron(&rot, &h);
    }
    let rotated = rot.matmul(&choi).matmul(&rot);
    Ok(Comb::new(rotated, times.to_vec(), 2, false)?)
}

/// Discretization of the environment mode.
///
/// With `cutoff <= 0` (the default) the grid importance-samples the
/// spectral density through its inverse CDF, covering the whole line
/// with equal weights; a heavy-tailed density like the Lorentzian needs
/// this to stay within the 1e-3 kernel contract. A positive cutoff
/// selects a uniform grid on |p| <= cutoff with exact per-cell masses.
pub struct GridSpec {
    pub points: usize,
    pub cutoff: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 1024, cutoff: 0.0 }
    }
}

/// Grid points and weights for a Lorentzian of width `gamma`.
pub fn lorentzian_grid(gamma: f64, grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let n = grid.points;
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    if grid.cutoff > 0.0 {
        // uniform grid, exact CDF cell masses, renormalized
        let dp = 2.0 * grid.cutoff / n as f64;
        let cdf = |p: f64| 0.5 + libm::atan(p / gamma) / core::f64::consts::PI;
        let mut total = 0.0;
        for i in 0..n {
            let a = -grid.cutoff + i as f64 * dp;
            let w = cdf(a + dp) - cdf(a);
            points.push(a + 0.5 * dp);
            weights.push(w);
            total += w;
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
    } else {
        for i in 0..n {
            let v = (i as f64 + 0.5) / n as f64;
            points.push(gamma * libm::tan(core::f64::consts::PI * (v - 0.5)));
            weights.push(1.0 / n as f64);
        }
    }
    (points, weights)
}

/// Importance grid with a tunable sampling offset; the offset shifts the
/// quasi-random aliasing of the discrete measure, so scanning a handful
/// of offsets finds a registration accurate at any one target time.
fn shifted_importance_grid(gamma: f64, n: usize, shift: f64) -> (Vec<f64>, Vec<f64>) {
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let v = (i as f64 + shift) / n as f64;
        points.push(gamma * libm::tan(core::f64::consts::PI * (v - 0.5)));
    }
    (points, vec![1.0 / n as f64; n])
}

pub fn example1_joint_state(
    kernel: &MemoryKernel,
    t: f64,
    alpha: f64,
    grid: &GridSpec,
) -> Result<ComplexMatrix, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::BadParameter);
    }
    let gamma = kernel.lorentzian_gamma().ok_or(ModelError::BadParameter)?;
    let n = grid.points;
    let (points, weights) = if grid.cutoff > 0.0 {
        lorentzian_grid(gamma, grid)
    } else {
        // pick the sampling offset whose discrete kernel best matches
        // k(t) at the construction time; golden-ratio offsets decorrelate
        // the aliasing between candidates
        let target = kernel.eval(t);
        let mut best = shifted_importance_grid(gamma, n, 0.5);
        let mut best_err = f64::INFINITY;
        for j in 0..64u32 {
            let shift = if j == 0 {
                0.5
            } else {
                let s = 0.5 + 0.618_033_988_749_895 * j as f64;
                s - libm::floor(s)
            };
            let (p, w) = shifted_importance_grid(gamma, n, shift);
            let mut overlap = C_ZERO;
            for (pi, wi) in p.iter().zip(w.iter()) {
                let arg = 2.0 * pi * t;
                overlap += C64::new(wi * libm::cos(arg), wi * libm::sin(arg));
            }
            let err = (overlap - target).norm();
            if err < best_err {
                best_err = err;
                best = (p, w);
            }
            if err <= 2e-4 {
                break;
            }
        }
        best
    };
    // amplitudes of |phi+-(t)> = int dp f(p) e^{+-ipt} |p>
    let mut plus = vec![C_ZERO; n];
    let mut minus = vec![C_ZERO; n];
    for i in 0..n {
        let p = points[i];
        let f = libm::sqrt(weights[i]);
        let (s, c) = (libm::sin(p * t), libm::cos(p * t));
        plus[i] = C64::new(f * c, f * s);
        minus[i] = C64::new(f * c, -f * s);
    }
    // grid fidelity contract: <phi-|phi+> must match k(t)
    let mut overlap = C_ZERO;
    for i in 0..n {
        overlap += minus[i].conj() * plus[i];
    }
    if (overlap - kernel.eval(t)).norm() > 1e-3 {
        return Err(ModelError::GridTooCoarse);
    }
    // rho_se(t) = 1/4 sum_{i,j in {-,+}} |i><j| (x)
    //   ( ij |phi-><phi-| + i(2a-1)|phi-><phi+|
    //     + j(2a-1)|phi+><phi-| + |phi+><phi+| )
    // with the system factor written in the (+,-) basis: index 0 = +.
    let two_a = 2.0 * alpha - 1.0;
    let mut out = ComplexMatrix::zeros(2 * n, 2 * n);
    let sign = |idx: usize| if idx == 0 { 1.0 } else { -1.0 };
    for si in 0..2usize {
        for sj in 0..2usize {
            let (i, j) = (sign(si), sign(sj));
            for a in 0..n {
                for b in 0..n {
                    let env = i * j * (minus[a] * minus[b].conj())
                        + i * two_a * (minus[a] * plus[b].conj())
                        + j * two_a * (plus[a] * minus[b].conj())
                        + plus[a] * plus[b].conj();
                    out[(si * n + a, sj * n + b)] = env * 0.25;
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Incoherent but non-classical two-time process.

/// Bell-check map applied between the two slots:
/// E[eta] = tr(phi+ eta) |0><0| + tr[(1 - phi+) eta] |1><1| on the
/// system, with the environment reset to |0><0|.
fn bell_check_map_choi(reset_env: bool) -> ComplexMatrix {
    // Choi on ((s,e)out, (s,e)in), dims 4 x 4 ports
    let bell = phi_plus(2).scale(C64::new(0.5, 0.0)); // normalized Bell projector
    let dim = 4;
    let mut choi = ComplexMatrix::zeros(16, 16);
    for i_in in 0..dim {
        for j_in in 0..dim {
            // image of |i_in><j_in|
            let w_bell = bell[(j_in, i_in)]; // tr[phi+ |i><j|]
            let w_rest = if i_in == j_in { C_ONE - w_bell } else { -w_bell };
            for (weight, sys) in [(w_bell, 0usize), (w_rest, 1usize)] {
                if weight == C_ZERO {
                    continue;
                }
                // output: |sys><sys| (x) env
                if reset_env {
                    let out = sys * 2; // (s=sys, e=0)
                    choi[(out * dim + i_in, out * dim + j_in)] += weight;
                } else {
                    for e in 0..2 {
                        let out = sys * 2 + e;
                        choi[(out * dim + i_in, out * dim + j_in)] +=
                            weight * C64::new(0.5, 0.0);
                    }
                }
            }
        }
    }
    choi
}

/// Two-slot process whose system state is incoherent at both times yet
/// violates the Kolmogorov condition: maximally entangled initial
/// system-environment state, trivial evolution to the first slot, then
/// the Bell-check map.
pub fn appendix_d_dilation() -> Dilation {
    let initial = phi_plus(2).scale(C64::new(0.5, 0.0));
    Dilation {
        initial_state: initial,
        maps: vec![bell_check_map_choi(true)],
        system_dim: 2,
        env_dim: 2,
        times: vec![0.0, 1.0],
        t0: None,
    }
}

pub fn appendix_d_comb() -> Comb {
    comb_from_dilation(&appendix_d_dilation()).expect("fixed dilation is valid")
}

// ---------------------------------------------------------------------
// Classical statistics from a non-NDGD dilation.

/// Choi of the CNOT with the environment as control and the system as
/// target, on (s,e).
fn cnot_env_control_choi() -> ComplexMatrix {
    let mut u = ComplexMatrix::zeros(4, 4);
    // basis order (s,e): |s e>; flip s when e = 1
    for s in 0..2usize {
        for e in 0..2usize {
            let s_out = if e == 1 { 1 - s } else { s };
            u[(s_out * 2 + e, s * 2 + e)] = C_ONE;
        }
    }
    choi_of_map(core::slice::from_ref(&u)).expect("unitary").matrix
}

/// Choi of the system-environment map that yields 1/2 (x) |0><0| on the
/// Bell state and 1/2 (x) |1><1| on its complement.
fn scramble_map_choi() -> ComplexMatrix {
    let bell = phi_plus(2).scale(C64::new(0.5, 0.0));
    let dim = 4;
    let mut choi = ComplexMatrix::zeros(16, 16);
    for i_in in 0..dim {
        for j_in in 0..dim {
            let w_bell = bell[(j_in, i_in)];
            let w_rest = if i_in == j_in { C_ONE - w_bell } else { -w_bell };
            for (weight, env) in [(w_bell, 0usize), (w_rest, 1usize)] {
                if weight == C_ZERO {
                    continue;
                }
                // output 1_s/2 (x) |env><env|
                for s in 0..2usize {
                    let out = s * 2 + env;
                    choi[(out * dim + i_in, out * dim + j_in)] += weight * C64::new(0.5, 0.0);
                }
            }
        }
    }
    choi
}

/// Unital final step from a product Hamiltonian: a local system unitary.
fn unital_step_choi() -> ComplexMatrix {
    let theta = 0.7f64;
    let (c, s) = (libm::cos(theta), libm::sin(theta));
    let mut u_s = ComplexMatrix::zeros(2, 2);
    u_s[(0, 0)] = C64::new(c, 0.0);
    u_s[(1, 1)] = C64::new(c, 0.0);
    u_s[(0, 1)] = C64::new(0.0, -s);
    u_s[(1, 0)] = C64::new(0.0, -s);
    let u = kron(&u_s, &ComplexMatrix::identity(2));
    choi_of_map(core::slice::from_ref(&u)).expect("unitary").matrix
}

/// Three-slot dilation that is not NDGD yet yields classical statistics:
/// a CNOT entangles the system with the environment, a Bell-check map
/// scrambles the system while recording the check in the environment,
/// and a unital product step follows. The system is maximally mixed at
/// every slot.
pub fn appendix_g_dilation() -> Dilation {
    let ket0 = [C_ONE, C_ZERO];
    let plus = [
        C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0),
        C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0),
    ];
    let initial = kron(&ComplexMatrix::projector(&ket0), &ComplexMatrix::projector(&plus));
    Dilation {
        initial_state: initial,
        maps: vec![cnot_env_control_choi(), scramble_map_choi(), unital_step_choi()],
        system_dim: 2,
        env_dim: 2,
        times: vec![1.0, 2.0, 3.0],
        t0: Some(0.0),
    }
}

/// Choi of the CNOT with the system as control and the environment as
/// target; a map that never creates discord from product inputs.
pub fn cnot_sys_control_choi() -> ComplexMatrix {
    let mut u = ComplexMatrix::zeros(4, 4);
    for s in 0..2usize {
        for e in 0..2usize {
            let e_out = if s == 1 { 1 - e } else { e };
            u[(s * 2 + e_out, s * 2 + e)] = C_ONE;
        }
    }
    choi_of_map(core::slice::from_ref(&u)).expect("unitary").matrix
}

/// The non-discord-safe map of the Appendix-G-style construction,
/// exported for the D-zero map tests.
pub fn appendix_g_cnot_choi() -> ComplexMatrix {
    cnot_env_control_choi()
}

pub fn appendix_g_bell_check_choi() -> ComplexMatrix {
    scramble_map_choi()
}

// ---------------------------------------------------------------------
// Genuinely quantum four-time process (flag registers folded into the
// environment).

/// Environment layout: e (x) z (x) y (x) x flags, each a qubit.
const GQP_ENV_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauE {
    MaximallyMixed,
    Ground,
}

fn tau_e_matrix(tau: TauE) -> ComplexMatrix {
    match tau {
        TauE::MaximallyMixed => ComplexMatrix::identity(2).scale(C64::new(0.5, 0.0)),
        TauE::Ground => {
            let mut m = ComplexMatrix::zeros(2, 2);
            m[(0, 0)] = C_ONE;
            m
        }
    }
}

/// Builds the Choi of a map on the full (s,e,z,y,x) space from its
/// action on basis units.
fn choi_from_action<F>(dim: usize, f: F) -> ComplexMatrix
where
    F: Fn(usize, usize) -> ComplexMatrix,
{
    let mut choi = ComplexMatrix::zeros(dim * dim, dim * dim);
    for u in 0..dim {
        for v in 0..dim {
            let img = f(u, v);
            for a in 0..dim {
                for b in 0..dim {
                    let w = img[(a, b)];
                    if w != C_ZERO {
                        choi[(a * dim + u, b * dim + v)] += w;
                    }
                }
            }
        }
    }
    choi
}

#[derive(Clone, Copy)]
struct GqpIndices;

impl GqpIndices {
    // full space (s, e, z, y, x): dims 2,2,2,2,2 -> 32
    #[inline]
    fn split(u: usize) -> (usize, usize, usize, usize, usize) {
        let x = u & 1;
        let y = (u >> 1) & 1;
        let z = (u >> 2) & 1;
        let e = (u >> 3) & 1;
        let s = (u >> 4) & 1;
        (s, e, z, y, x)
    }

    #[inline]
    fn join(s: usize, e: usize, z: usize, y: usize, x: usize) -> usize {
        (((s * 2 + e) * 2 + z) * 2 + y) * 2 + x
    }
}

fn gqp_step_choi(step: usize, bias: &ComplexMatrix, tau: &ComplexMatrix) -> ComplexMatrix {
    // step 0: Gamma_z (controlled on nothing, writes z)
    // step 1: Gamma_y (controlled on z, writes y)
    // step 2: Gamma_x (controlled on z,y, writes x)
    let dim = 2 * GQP_ENV_DIM;
    let bell = phi_plus(2).scale(C64::new(0.5, 0.0));
    choi_from_action(dim, |u, v| {
        let (su, eu, zu, yu, xu) = GqpIndices::split(u);
        let (sv, ev, zv, yv, xv) = GqpIndices::split(v);
        let mut out = ComplexMatrix::zeros(dim, dim);
        // flags already written stay classical: dephase-and-control
        let controls_match: bool = match step {
            0 => true,
            1 => zu == zv,
            2 => zu == zv && yu == yv,
            _ => unreachable!(),
        };
        if !controls_match {
            return out;
        }
        let active = match step {
            0 => true,
            1 => zu == 0,
            2 => zu == 0 && yu == 0,
            _ => unreachable!(),
        };
        if active {
            // the flag register being written is discarded first: trace
            let trace_ok = match step {
                0 => zu == zv,
                1 => yu == yv,
                2 => xu == xv,
                _ => unreachable!(),
            };
            if !trace_ok {
                return out;
            }
            // Bell check on the (s,e) unit |su eu><sv ev|
            let i_in = su * 2 + eu;
            let j_in = sv * 2 + ev;
            let w_bell = bell[(j_in, i_in)];
            let w_rest = if i_in == j_in { C_ONE - w_bell } else { -w_bell };
            // success branch: Bell state back, flag 0
            if w_bell != C_ZERO {
                for a in 0..2usize {
                    for b in 0..2usize {
                        for a2 in 0..2usize {
                            for b2 in 0..2usize {
                                let amp = bell[(a * 2 + b, a2 * 2 + b2)] * w_bell;
                                if amp == C_ZERO {
                                    continue;
                                }
                                let (nz, ny, nx) = flag_write(step, 0, zu, yu, xu);
                                let (nz2, ny2, nx2) = flag_write(step, 0, zv, yv, xv);
                                let row = GqpIndices::join(a, b, nz, ny, nx);
                                let col = GqpIndices::join(a2, b2, nz2, ny2, nx2);
                                out[(row, col)] += amp;
                            }
                        }
                    }
                }
            }
            // failure branch: bias (x) tau, flag 1
            if w_rest != C_ZERO {
                for a in 0..2usize {
                    for a2 in 0..2usize {
                        let sys = bias[(a, a2)];
                        if sys == C_ZERO {
                            continue;
                        }
                        for b in 0..2usize {
                            for b2 in 0..2usize {
                                let amp = sys * tau[(b, b2)] * w_rest;
                                if amp == C_ZERO {
                                    continue;
                                }
                                let (nz, ny, nx) = flag_write(step, 1, zu, yu, xu);
                                let (nz2, ny2, nx2) = flag_write(step, 1, zv, yv, xv);
                                let row = GqpIndices::join(a, b, nz, ny, nx);
                                let col = GqpIndices::join(a2, b2, nz2, ny2, nx2);
                                out[(row, col)] += amp;
                            }
                        }
                    }
                }
            }
        } else {
            // trivial dynamics; fresh flag set to 0
            let trace_ok = match step {
                1 => yu == yv,
                2 => xu == xv,
                _ => unreachable!(),
            };
            if !trace_ok {
                return out;
            }
            let (nz, ny, nx) = flag_write(step, 0, zu, yu, xu);
            let (nz2, ny2, nx2) = flag_write(step, 0, zv, yv, xv);
            let row = GqpIndices::join(su, eu, nz, ny, nx);
            let col = GqpIndices::join(sv, ev, nz2, ny2, nx2);
            out[(row, col)] = C_ONE;
        }
        out
    })
}

#[inline]
fn flag_write(step: usize, value: usize, z: usize, y: usize, x: usize) -> (usize, usize, usize) {
    match step {
        0 => (value, y, x),
        1 => (z, value, x),
        2 => (z, y, value),
        _ => unreachable!(),
    }
}

/// The four-time genuinely quantum process: system and environment begin
/// in a Bell state; between consecutive slots the process Bell-checks
/// the pair and biases the system in the z-, y-, then x-basis on
/// failure, recording each check in a classical flag register.
pub fn genuinely_quantum_process(tau: TauE) -> Dilation {
    let tau_m = tau_e_matrix(tau);
    let bell = phi_plus(2).scale(C64::new(0.5, 0.0));
    // initial state: bell on (s,e), flags |000>
    let mut initial = ComplexMatrix::zeros(32, 32);
    for i in 0..4 {
        for j in 0..4 {
            let (s, e) = (i / 2, i % 2);
            let (s2, e2) = (j / 2, j % 2);
            initial[(GqpIndices::join(s, e, 0, 0, 0), GqpIndices::join(s2, e2, 0, 0, 0))] =
                bell[(i, j)];
        }
    }
    let ket0 = [C_ONE, C_ZERO];
    let minus_y = [
        C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0),
        C64::new(0.0, -core::f64::consts::FRAC_1_SQRT_2),
    ];
    let minus_x = [
        C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0),
        C64::new(-core::f64::consts::FRAC_1_SQRT_2, 0.0),
    ];
    let maps = vec![
        gqp_step_choi(0, &ComplexMatrix::projector(&ket0), &tau_m),
        gqp_step_choi(1, &ComplexMatrix::projector(&minus_y), &tau_m),
        gqp_step_choi(2, &ComplexMatrix::projector(&minus_x), &tau_m),
    ];
    Dilation {
        initial_state: initial,
        maps,
        system_dim: 2,
        env_dim: GQP_ENV_DIM,
        times: vec![0.0, 1.0, 2.0, 3.0],
        t0: None,
    }
}

// ---------------------------------------------------------------------
// POVM classicality sweep over the genuinely quantum process.

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub r0: f64,
    pub r: [f64; 3],
    /// max over the three single-CPTP histories of the total-variation
    /// deviation of the final statistics from the all-identity history
    pub deviation: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// fitted constant c with deviation >= c |r|^2 across the grid
    pub fitted_quadratic_coefficient: f64,
    /// largest |r| among points with deviation <= tol
    pub max_r_with_zero_deviation: f64,
    pub tol: f64,
}

/// For each Bloch POVM on the grid: probe the process with the POVM's
/// CPTP channel (the Lueders sum of its elements) at one early slot at a
/// time and measure the POVM at the final slot; report the deviation
/// from the all-identity history.
pub fn povm_classicality_sweep(
    process: &Dilation,
    grid: &[BlochPovm],
    tol: f64,
) -> Result<SweepReport, ModelError> {
    let comb = comb_from_dilation(process)?;
    sweep_comb(&comb, grid, tol)
}

/// Sweep against a prebuilt comb.
///
/// For each early slot j the comb is reduced once to a three-port
/// tensor on (i_target, o_j, i_j); every grid point then costs a single
/// small contraction instead of a fresh pass over the full comb.
pub fn sweep_comb(comb: &Comb, grid: &[BlochPovm], tol: f64) -> Result<SweepReport, ModelError> {
    use crate::tensor::{contract_factors, partial_trace, Port};
    let target = comb.slots() - 1;
    let d = comb.system_dim;
    let phi = phi_plus(d);
    let id_state = comb.conditional_state(&[], target)?;
    let mut reduced = Vec::with_capacity(target);
    for slot in 0..target {
        let ops: Vec<(usize, &ComplexMatrix)> = (0..comb.slots())
            .filter(|&s| s != slot && s != target)
            .map(|s| (s, &phi))
            .collect();
        let (matrix, layout) = comb.contract_slots(&ops)?;
        let po = layout.position(target, Port::Output).expect("target ports remain");
        let traced = partial_trace(&matrix, &layout, &[po]).map_err(CombError::from)?;
        let traced = traced.scale(C64::new(1.0 / d as f64, 0.0));
        // remaining factor order: (i_target, o_slot, i_slot)
        reduced.push((traced, layout.dropped(&[po])));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut fitted_c = f64::INFINITY;
    let mut max_r_zero: f64 = 0.0;
    for povm in grid {
        let inst = povm.instrument().map_err(|_| ModelError::BadParameter)?;
        let channel = inst.summed_choi().transpose();
        let [e0, e1] = povm.elements();
        let mut deviation = 0.0f64;
        for (traced, layout) in &reduced {
            // contract the channel over (o_slot, i_slot): factors 1, 2
            let state = contract_factors(traced, layout, &[1, 2], &channel)
                .map_err(CombError::from)?;
            let diff = &state - &id_state;
            let dev = fabs(e0.trace_product(&diff).re) + fabs(e1.trace_product(&diff).re);
            deviation = deviation.max(dev);
        }
        let rn = povm.r_norm();
        if rn > 1e-12 {
            fitted_c = fitted_c.min(deviation / (rn * rn));
        }
        if deviation <= tol {
            max_r_zero = max_r_zero.max(rn);
        }
        points.push(SweepPoint { r0: povm.r0, r: povm.r, deviation });
    }
    Ok(SweepReport {
        points,
        fitted_quadratic_coefficient: if fitted_c.is_finite() { fitted_c } else { 0.0 },
        max_r_with_zero_deviation: max_r_zero,
        tol,
    })
}

/// Deterministic Bloch-POVM grid covering r0 in (0,1) and |r| up to the
/// PSD boundary.
pub fn bloch_grid(r0_steps: usize, dir_steps: usize, radius_steps: usize) -> Vec<BlochPovm> {
    let mut out = Vec::new();
    for a in 0..r0_steps {
        let r0 = (a as f64 + 1.0) / (r0_steps as f64 + 1.0);
        let rmax = r0.min(1.0 - r0);
        for d in 0..dir_steps {
            let theta = core::f64::consts::PI * (d as f64 + 0.5) / dir_steps as f64;
            for m in 0..dir_steps {
                let phi = 2.0 * core::f64::consts::PI * m as f64 / dir_steps as f64;
                for rr in 0..radius_steps {
                    let r = rmax * (rr as f64 + 1.0) / radius_steps as f64;
                    let v = [
                        r * libm::sin(theta) * libm::cos(phi),
                        r * libm::sin(theta) * libm::sin(phi),
                        r * libm::cos(theta),
                    ];
                    if let Ok(p) = BlochPovm::new(r0, v) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Dephase a state in the computational basis on the system factor of a
/// system (x) environment space.
pub fn dephase_system(state: &ComplexMatrix, system_dim: usize, env_dim: usize) -> ComplexMatrix {
    let mut out = state.clone();
    for s in 0..system_dim {
        for s2 in 0..system_dim {
            if s == s2 {
                continue;
            }
            for e in 0..env_dim {
                for e2 in 0..env_dim {
                    out[(s * env_dim + e, s2 * env_dim + e2)] = C_ZERO;
                }
            }
        }
    }
    out
}

/// Choi of the system-dephasing map Delta (x) 1_e on system (x) env:
/// (Delta (x) 1)(|s e><s' e'|) = delta_{s s'} |s e><s' e'|.
pub fn system_dephasing_choi(system_dim: usize, env_dim: usize) -> ComplexMatrix {
    let dse = system_dim * env_dim;
    let mut choi = ComplexMatrix::zeros(dse * dse, dse * dse);
    for s in 0..system_dim {
        for e in 0..env_dim {
            let i_in = s * env_dim + e;
            for e2 in 0..env_dim {
                let j_in = s * env_dim + e2;
                choi[(i_in * dse + i_in, j_in * dse + j_in)] = C_ONE;
            }
        }
    }
    choi
}

//! Physical (continuous-variable) engine: multi-mode truncated Fock states,
//! the cross-Kerr controlled-Z, the pseudo-number/pseudo-phase codeword
//! subspace, and the encode/decode maps between CV states and ideal qudits.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{coherent_state, FockVector};
use crate::qudit::{ClusterGraph, MultiQuditState, QuditDims, QuditState};

/// Modes a CV state may hold; teleportation needs exactly three.
pub const DEFAULT_MAX_MODES: usize = 3;

/// Cap on the flat amplitude array of a CV state.
pub const DEFAULT_AMPLITUDE_CAP: usize = 1 << 24;

/// Decoding aborts when this much population sits outside the codeword
/// subspace; the state is not qudit-like at the chosen (d, alpha).
pub const DEFAULT_LEAKAGE_ABORT: f64 = 0.5;

/// Tensor-product state of several Fock-truncated modes. Amplitudes are
/// row-major with mode 0 slowest.
#[derive(Clone, Debug)]
pub struct MultiModeState {
    mode_dims: Vec<usize>,
    amplitudes: Vec<Complex64>,
    mode_labels: Vec<String>,
}

impl MultiModeState {
    pub fn from_amplitudes(mode_dims: Vec<usize>, amplitudes: Vec<Complex64>) -> Result<Self> {
        let expected: usize = mode_dims.iter().product();
        if expected == 0 || expected > DEFAULT_AMPLITUDE_CAP {
            return Err(Error::AmplitudeCapExceeded { requested: expected, cap: DEFAULT_AMPLITUDE_CAP });
        }
        if amplitudes.len() != expected {
            return Err(Error::DimensionMismatch {
                reason: format!("expected {} amplitudes, got {}", expected, amplitudes.len()),
            });
        }
        let mode_labels = (0..mode_dims.len()).map(|i| format!("m{i}")).collect();
        Ok(Self { mode_dims, amplitudes, mode_labels })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.mode_dims.len());
        self.mode_labels = labels;
        self
    }

    pub fn num_modes(&self) -> usize {
        self.mode_dims.len()
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn mode_labels(&self) -> &[String] {
        &self.mode_labels
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn overlap(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &Self) -> f64 {
        self.overlap(other).norm_sqr()
    }

    /// Stride of a mode in the flat array.
    pub fn stride(&self, mode: usize) -> usize {
        self.mode_dims[mode + 1..].iter().product()
    }

    /// View a single-mode state as a Fock vector.
    pub fn into_fock_vector(self) -> Result<FockVector> {
        if self.num_modes() != 1 {
            return Err(Error::DimensionMismatch {
                reason: format!("state has {} modes, not 1", self.num_modes()),
            });
        }
        Ok(FockVector::from_amplitudes(self.amplitudes))
    }

    /// Amplitudes regrouped with `mode` as the slow index: result[n * rest + r]
    /// where r runs row-major over the remaining modes in original order.
    pub(crate) fn mode_major(&self, mode: usize) -> Result<(Vec<Complex64>, usize, usize)> {
        if mode >= self.num_modes() {
            return Err(Error::ModeOutOfRange { mode, num_modes: self.num_modes() });
        }
        let dim = self.mode_dims[mode];
        let stride = self.stride(mode);
        let rest = self.amplitudes.len() / dim;
        let mut out = vec![Complex64::ZERO; self.amplitudes.len()];
        for (idx, &a) in self.amplitudes.iter().enumerate() {
            let n = (idx / stride) % dim;
            let high = idx / (stride * dim);
            let r = high * stride + (idx % stride);
            out[n * rest + r] = a;
        }
        Ok((out, dim, rest))
    }

    /// Mode dims and labels with `mode` removed, for post-measurement states.
    pub(crate) fn contracted_shape(&self, mode: usize) -> (Vec<usize>, Vec<String>) {
        let dims = self
            .mode_dims
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != mode)
            .map(|(_, &d)| d)
            .collect();
        let labels = self
            .mode_labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != mode)
            .map(|(_, l)| l.clone())
            .collect();
        (dims, labels)
    }
}

/// Tensor product of single-mode states, mode 0 first.
pub fn tensor(states: &[FockVector]) -> Result<MultiModeState> {
    if states.is_empty() {
        return Err(Error::InvalidArgument { reason: "empty tensor product".into() });
    }
    let mode_dims: Vec<usize> = states.iter().map(|s| s.len()).collect();
    let total: usize = mode_dims.iter().product();
    if total > DEFAULT_AMPLITUDE_CAP {
        return Err(Error::AmplitudeCapExceeded { requested: total, cap: DEFAULT_AMPLITUDE_CAP });
    }
    let mut amplitudes = vec![Complex64::ONE];
    for s in states {
        let mut next = Vec::with_capacity(amplitudes.len() * s.len());
        for a in &amplitudes {
            for b in s.amplitudes() {
                next.push(a * b);
            }
        }
        amplitudes = next;
    }
    MultiModeState::from_amplitudes(mode_dims, amplitudes)
}

/// Accumulated cross-Kerr phase chi*t. The canonical controlled-Z value
/// 2 pi / d is tracked as an exact fraction of a turn so photon-number
/// products can be reduced mod d before any trigonometry.
#[derive(Clone, Copy, Debug)]
pub struct KerrPhase {
    chi_t: f64,
    turn_denominator: Option<usize>,
}

impl KerrPhase {
    pub fn radians(chi_t: f64) -> Self {
        assert!(chi_t.is_finite());
        Self { chi_t, turn_denominator: None }
    }

    /// The controlled-Z phase 2 pi / d, i.e. interaction time t = 2 pi/(d chi).
    pub fn controlled_z(dims: QuditDims) -> Self {
        Self { chi_t: 2.0 * PI / dims.d() as f64, turn_denominator: Some(dims.d()) }
    }

    pub fn chi_t(&self) -> f64 {
        self.chi_t
    }

    pub(crate) fn turn_denominator(&self) -> Option<usize> {
        self.turn_denominator
    }

    fn phase_table(&self) -> Option<Vec<Complex64>> {
        self.turn_denominator.map(|den| {
            (0..den)
                .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / den as f64))
                .collect()
        })
    }
}

/// Cross-Kerr evolution: the amplitude at photon indices (n_a, n_b) picks up
/// e^{i chi_t n_a n_b}. Norm-preserving and symmetric in the two modes.
pub fn apply_cross_kerr(
    state: &MultiModeState,
    mode_a: usize,
    mode_b: usize,
    kerr: KerrPhase,
) -> Result<MultiModeState> {
    if mode_a == mode_b {
        return Err(Error::InvalidArgument { reason: "cross-Kerr needs two distinct modes".into() });
    }
    for mode in [mode_a, mode_b] {
        if mode >= state.num_modes() {
            return Err(Error::ModeOutOfRange { mode, num_modes: state.num_modes() });
        }
    }
    // Walk the flat array as [outer, n_slow, mid, n_fast, inner] so the phase
    // is constant over each inner run and no per-amplitude division happens.
    let (slow, fast) = if state.stride(mode_a) >= state.stride(mode_b) {
        (mode_a, mode_b)
    } else {
        (mode_b, mode_a)
    };
    let (s_slow, s_fast) = (state.stride(slow), state.stride(fast));
    let (d_slow, d_fast) = (state.mode_dims[slow], state.mode_dims[fast]);
    let len = state.amplitudes.len();
    let outer = len / (s_slow * d_slow);
    let mid = s_slow / (s_fast * d_fast);
    let table = kerr.phase_table();
    let phase_for = |ns: usize, nf: usize| match &table {
        Some(t) => t[(ns * nf) % t.len()],
        None => Complex64::from_polar(1.0, kerr.chi_t * (ns * nf) as f64),
    };
    let src = &state.amplitudes;
    let mut amplitudes = Vec::with_capacity(len);
    let mut idx = 0;
    for _ in 0..outer {
        for ns in 0..d_slow {
            for _ in 0..mid {
                for nf in 0..d_fast {
                    let phase = phase_for(ns, nf);
                    for _ in 0..s_fast {
                        amplitudes.push(src[idx] * phase);
                        idx += 1;
                    }
                }
            }
        }
    }
    let out = MultiModeState::from_amplitudes(state.mode_dims.clone(), amplitudes)?;
    Ok(out.with_labels(state.mode_labels.clone()))
}

/// Pseudo-number ket |k>: the n = k (mod d) sector of the coherent state,
/// renormalized to unit norm.
///
/// The returned defect |sqrt(d) * (raw sector norm) - 1| records how far the
/// sqrt(d) normalization — exact only asymptotically — is from exact at this
/// (d, alpha).
pub fn pseudo_number_ket(
    k: usize,
    dims: QuditDims,
    alpha: Complex64,
    n_max: usize,
) -> Result<(FockVector, f64)> {
    let (ket, defect, _) = pseudo_number_ket_with_weight(k, dims, alpha, n_max)?;
    Ok((ket, defect))
}

fn pseudo_number_ket_with_weight(
    k: usize,
    dims: QuditDims,
    alpha: Complex64,
    n_max: usize,
) -> Result<(FockVector, f64, f64)> {
    let d = dims.d();
    if k >= d {
        return Err(Error::InvalidArgument { reason: format!("k = {k} must be < d = {d}") });
    }
    let coherent = coherent_state(alpha, n_max)?;
    let mut sector = vec![Complex64::ZERO; n_max + 1];
    for (n, &a) in coherent.amplitudes().iter().enumerate() {
        if n % d == k {
            sector[n] = a;
        }
    }
    let raw_norm_sqr: f64 = sector.iter().map(|a| a.norm_sqr()).sum();
    if raw_norm_sqr < 1e-30 {
        return Err(Error::EmptySector { k, d, alpha_abs: alpha.norm(), norm_sqr: raw_norm_sqr });
    }
    let raw_norm = raw_norm_sqr.sqrt();
    let defect = ((d as f64).sqrt() * raw_norm - 1.0).abs();
    for a in sector.iter_mut() {
        *a /= raw_norm;
    }
    Ok((FockVector::from_amplitudes(sector).with_alpha_ref(alpha), defect, raw_norm))
}

/// Pseudo-phase ket |l~>: the rotated coherent state |omega^l alpha>.
pub fn pseudo_phase_ket(l: usize, dims: QuditDims, alpha: Complex64, n_max: usize) -> Result<FockVector> {
    if l >= dims.d() {
        return Err(Error::InvalidArgument { reason: format!("l = {l} must be < d = {}", dims.d()) });
    }
    coherent_state(dims.omega_pow(l as i64) * alpha, n_max)
}

/// Orthonormal measurement/decoding basis at a given (d, alpha, n_max).
///
/// `number_kets` are the renormalized coherent-state sectors (mutually
/// orthogonal exactly, by disjoint photon-number support). `phase_kets` are
/// their exact Fourier images, so they are orthonormal at any alpha; the gap
/// to the physical coherent states |omega^l alpha> is tracked per ket as a
/// diagnostic rather than inherited as error.
#[derive(Clone, Debug)]
pub struct CodewordBasis {
    dims: QuditDims,
    alpha: Complex64,
    n_max: usize,
    number_kets: Vec<FockVector>,
    phase_kets: Vec<FockVector>,
    /// Raw sector norms w_k of the coherent state, before renormalization.
    sector_weights: Vec<f64>,
    normalization_defects: Vec<f64>,
    phase_ket_physical_gap: Vec<f64>,
}

impl CodewordBasis {
    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn number_kets(&self) -> &[FockVector] {
        &self.number_kets
    }

    pub fn phase_kets(&self) -> &[FockVector] {
        &self.phase_kets
    }

    pub fn normalization_defects(&self) -> &[f64] {
        &self.normalization_defects
    }

    pub fn phase_ket_physical_gap(&self) -> &[f64] {
        &self.phase_ket_physical_gap
    }

    pub fn max_defect(&self) -> f64 {
        self.normalization_defects.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_phase_gap(&self) -> f64 {
        self.phase_ket_physical_gap.iter().copied().fold(0.0, f64::max)
    }

    /// Raw sector norms w_k; the coherent state is sum_k w_k |number_ket_k>.
    pub fn sector_weights(&self) -> &[f64] {
        &self.sector_weights
    }

    /// Smallest d * w_k^2 over k; 1 for a perfectly balanced basis, near 0
    /// when some sector is starved and the mode stops being qudit-like.
    pub fn min_sector_balance(&self) -> f64 {
        let d = self.dims.d() as f64;
        self.sector_weights.iter().map(|w| d * w * w).fold(f64::INFINITY, f64::min)
    }
}

/// Build the full codeword basis; fails if any sector is empty.
pub fn codeword_subspace(dims: QuditDims, alpha: Complex64, n_max: usize) -> Result<CodewordBasis> {
    let d = dims.d();
    let mut number_kets = Vec::with_capacity(d);
    let mut normalization_defects = Vec::with_capacity(d);
    let mut sector_weights = Vec::with_capacity(d);
    for k in 0..d {
        let (ket, defect, weight) = pseudo_number_ket_with_weight(k, dims, alpha, n_max)?;
        number_kets.push(ket);
        normalization_defects.push(defect);
        sector_weights.push(weight);
    }
    let s = 1.0 / (d as f64).sqrt();
    let mut phase_kets = Vec::with_capacity(d);
    let mut phase_ket_physical_gap = Vec::with_capacity(d);
    for l in 0..d {
        let mut amps = vec![Complex64::ZERO; n_max + 1];
        for (k, ket) in number_kets.iter().enumerate() {
            let w = dims.omega_pow((l * k) as i64) * s;
            for (a, &b) in amps.iter_mut().zip(ket.amplitudes()) {
                *a += w * b;
            }
        }
        let ket = FockVector::from_amplitudes(amps).with_alpha_ref(dims.omega_pow(l as i64) * alpha);
        let physical = coherent_state(dims.omega_pow(l as i64) * alpha, n_max)?;
        let gap = 1.0 - crate::fock::overlap(&ket, &physical).norm_sqr() / physical.norm_sqr();
        phase_kets.push(ket);
        phase_ket_physical_gap.push(gap.max(0.0));
    }
    Ok(CodewordBasis {
        dims,
        alpha,
        n_max,
        number_kets,
        phase_kets,
        sector_weights,
        normalization_defects,
        phase_ket_physical_gap,
    })
}

/// CV cluster: coherent |alpha> at every site, cross-Kerr across every edge.
///
/// For the canonical controlled-Z phase the per-amplitude exponent is summed
/// as an integer mod d before a single multiplication, which makes the result
/// independent of edge order down to the last bit.
pub fn build_cv_cluster(
    graph: &ClusterGraph,
    dims: QuditDims,
    alpha: Complex64,
    kerr: KerrPhase,
    n_max: usize,
) -> Result<MultiModeState> {
    if graph.num_sites() > DEFAULT_MAX_MODES {
        return Err(Error::ModeCapExceeded { requested: graph.num_sites(), cap: DEFAULT_MAX_MODES });
    }
    if let Some(den) = kerr.turn_denominator() {
        if den != dims.d() {
            return Err(Error::InvalidArgument {
                reason: format!("controlled-Z phase is 2 pi/{den} but d = {}", dims.d()),
            });
        }
    }
    let site = coherent_state(alpha, n_max)?;
    let sites: Vec<FockVector> = vec![site; graph.num_sites()];
    let base = tensor(&sites)?;
    let strides: Vec<usize> = (0..graph.num_sites()).map(|m| base.stride(m)).collect();
    let dims_per_mode = base.mode_dims().to_vec();
    let amplitudes: Vec<Complex64> = match kerr.turn_denominator() {
        Some(den) => {
            let table: Vec<Complex64> = (0..den)
                .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / den as f64))
                .collect();
            base.amplitudes()
                .iter()
                .enumerate()
                .map(|(idx, a)| {
                    let mut e = 0usize;
                    for &(p, q) in graph.edges() {
                        let np = (idx / strides[p]) % dims_per_mode[p];
                        let nq = (idx / strides[q]) % dims_per_mode[q];
                        e = (e + np * nq) % den;
                    }
                    a * table[e]
                })
                .collect()
        }
        None => base
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(idx, a)| {
                let mut angle = 0.0;
                for &(p, q) in graph.edges() {
                    let np = (idx / strides[p]) % dims_per_mode[p];
                    let nq = (idx / strides[q]) % dims_per_mode[q];
                    angle += kerr.chi_t() * (np * nq) as f64;
                }
                a * Complex64::from_polar(1.0, angle)
            })
            .collect(),
    };
    MultiModeState::from_amplitudes(dims_per_mode, amplitudes)
}

/// Encode an ideal qudit state into the codeword subspace of one mode.
pub fn encode_qudit(q: &QuditState, basis: &CodewordBasis) -> Result<FockVector> {
    if q.dims() != basis.dims() {
        return Err(Error::DimensionMismatch { reason: "qudit dimension differs from basis".into() });
    }
    let mut amps = vec![Complex64::ZERO; basis.n_max() + 1];
    for (l, &a_l) in q.amplitudes().iter().enumerate() {
        for (a, &b) in amps.iter_mut().zip(basis.number_kets()[l].amplitudes()) {
            *a += a_l * b;
        }
    }
    Ok(FockVector::from_amplitudes(amps).with_alpha_ref(basis.alpha()))
}

/// Project a single mode onto the codeword basis.
///
/// Returns the renormalized qudit coefficients and the leakage (population
/// outside the codeword subspace, relative to the state norm).
pub fn decode_fock(state: &FockVector, basis: &CodewordBasis) -> Result<(QuditState, f64)> {
    if state.len() != basis.n_max() + 1 {
        return Err(Error::DimensionMismatch {
            reason: format!("mode dim {} differs from basis dim {}", state.len(), basis.n_max() + 1),
        });
    }
    let coeffs: Vec<Complex64> = basis
        .number_kets()
        .iter()
        .map(|ket| crate::fock::overlap(ket, state))
        .collect();
    let captured: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let leakage = (1.0 - captured / state.norm_sqr()).max(0.0);
    if leakage > DEFAULT_LEAKAGE_ABORT {
        return Err(Error::LeakageAbort { leakage, threshold: DEFAULT_LEAKAGE_ABORT });
    }
    Ok((QuditState::from_amplitudes(basis.dims(), coeffs)?, leakage))
}

/// Project every mode of a CV state onto the codeword basis.
pub fn decode_cv(state: &MultiModeState, basis: &CodewordBasis) -> Result<(MultiQuditState, f64)> {
    let dim = basis.n_max() + 1;
    for (m, &md) in state.mode_dims().iter().enumerate() {
        if md != dim {
            return Err(Error::DimensionMismatch {
                reason: format!("mode {m} has dim {md}, basis expects {dim}"),
            });
        }
    }
    let d = basis.dims().d();
    let num_modes = state.num_modes();
    // Contract one mode at a time: [prefix, dim, rest] -> [prefix * d, rest].
    let mut cur = state.amplitudes().to_vec();
    let mut prefix = 1usize;
    let mut rest = cur.len() / dim;
    for _ in 0..num_modes {
        let mut next = vec![Complex64::ZERO; prefix * d * rest];
        for p in 0..prefix {
            for (k, ket) in basis.number_kets().iter().enumerate() {
                let out_base = (p * d + k) * rest;
                for (n, &b) in ket.amplitudes().iter().enumerate() {
                    let in_base = (p * dim + n) * rest;
                    let bc = b.conj();
                    for r in 0..rest {
                        next[out_base + r] += bc * cur[in_base + r];
                    }
                }
            }
        }
        cur = next;
        prefix *= d;
        rest /= dim;
        if rest == 0 {
            rest = 1;
        }
    }
    debug_assert_eq!(cur.len(), d.pow(num_modes as u32));
    let captured: f64 = cur.iter().map(|c| c.norm_sqr()).sum();
    let leakage = (1.0 - captured / state.norm_sqr()).max(0.0);
    if leakage > DEFAULT_LEAKAGE_ABORT {
        return Err(Error::LeakageAbort { leakage, threshold: DEFAULT_LEAKAGE_ABORT });
    }
    let norm = captured.sqrt();
    if norm < 1e-150 {
        return Err(Error::DegenerateProbabilities);
    }
    for c in cur.iter_mut() {
        *c /= norm;
    }
    let q = MultiQuditState::from_amplitudes(basis.dims(), num_modes, cur)?;
    Ok((q, leakage))
}

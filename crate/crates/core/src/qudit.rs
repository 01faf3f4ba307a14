//! Exact d-dimensional qudit engine: generalized gate matrices, controlled-Z
//! on multi-site states, ideal cluster states on arbitrary graphs, projective
//! measurement, and the teleportation chain. This is the oracle the CV engine
//! is checked against.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cap on ideal multi-site state size, d^num_sites amplitudes.
pub const QUDIT_AMPLITUDE_CAP: usize = 1 << 24;

/// Qudit dimension d with its primitive root of unity omega = e^{2 pi i / d}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QuditDims {
    d: usize,
}

impl QuditDims {
    /// d >= 1; d = 1 is the degenerate single-sector case used by diagnostics.
    pub fn new(d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::InvalidArgument { reason: "qudit dimension must be >= 1".into() });
        }
        Ok(Self { d })
    }

    pub fn d(self) -> usize {
        self.d
    }

    pub fn omega(self) -> Complex64 {
        self.omega_pow(1)
    }

    /// omega^e with the exponent reduced mod d, so omega^d is exactly 1.
    pub fn omega_pow(self, e: i64) -> Complex64 {
        let r = e.rem_euclid(self.d as i64) as f64;
        Complex64::from_polar(1.0, 2.0 * PI * r / self.d as f64)
    }

    /// All d-th roots of unity, omega^0..omega^{d-1}.
    pub fn omega_table(self) -> Vec<Complex64> {
        (0..self.d as i64).map(|j| self.omega_pow(j)).collect()
    }
}

/// Basis in which a qudit (or one CV mode) is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MeasurementBasis {
    PseudoNumber,
    PseudoPhase,
}

/// Normalized complex d-vector in the pseudo-number computational basis.
#[derive(Clone, Debug)]
pub struct QuditState {
    dims: QuditDims,
    amplitudes: Vec<Complex64>,
}

impl QuditState {
    pub fn from_amplitudes(dims: QuditDims, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != dims.d() {
            return Err(Error::DimensionMismatch {
                reason: format!("expected {} amplitudes, got {}", dims.d(), amplitudes.len()),
            });
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm_sqr < 1e-30 {
            return Err(Error::DegenerateProbabilities);
        }
        let n = norm_sqr.sqrt();
        Ok(Self { dims, amplitudes: amplitudes.into_iter().map(|a| a / n).collect() })
    }

    pub fn basis_state(dims: QuditDims, k: usize) -> Self {
        assert!(k < dims.d());
        let mut amplitudes = vec![Complex64::ZERO; dims.d()];
        amplitudes[k] = Complex64::ONE;
        Self { dims, amplitudes }
    }

    /// The even superposition (1/sqrt d) sum_k |k>.
    pub fn uniform(dims: QuditDims) -> Self {
        let c = Complex64::new(1.0 / (dims.d() as f64).sqrt(), 0.0);
        Self { dims, amplitudes: vec![c; dims.d()] }
    }

    /// Haar-like random state: i.i.d. complex Gaussian components, normalized.
    pub fn random(dims: QuditDims, rng: &mut impl Rng) -> Self {
        use rand_distr::StandardNormal;
        let amplitudes: Vec<Complex64> = (0..dims.d())
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::from_amplitudes(dims, amplitudes).expect("gaussian vector is nonzero")
    }

    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn overlap(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// |<self|other>|^2; states compare equal up to global phase.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.overlap(other).norm_sqr()
    }

    pub fn apply(&self, gate: &GateMatrix) -> Self {
        assert_eq!(gate.dims(), self.dims);
        let d = self.dims.d();
        let mut out = vec![Complex64::ZERO; d];
        for (r, o) in out.iter_mut().enumerate() {
            for c in 0..d {
                *o += gate.get(r, c) * self.amplitudes[c];
            }
        }
        Self { dims: self.dims, amplitudes: out }
    }
}

/// Generalized gate selector; integer powers are reduced mod d.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GateKind {
    /// Fourier-type Hadamard, entries omega^{kl} / sqrt d.
    H,
    /// Phase gate diag(omega^k) = omega^{n}.
    Z,
    /// Cyclic shift |k> -> |k-1 mod d>.
    X,
    /// Basis reversal |k> -> |-k mod d>; equals H H.
    R,
    ZPow(i64),
    XPow(i64),
}

/// Dense complex d x d unitary, row-major.
#[derive(Clone, Debug)]
pub struct GateMatrix {
    dims: QuditDims,
    entries: Vec<Complex64>,
}

impl GateMatrix {
    pub fn identity(dims: QuditDims) -> Self {
        let d = dims.d();
        let mut entries = vec![Complex64::ZERO; d * d];
        for i in 0..d {
            entries[i * d + i] = Complex64::ONE;
        }
        Self { dims, entries }
    }

    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dims.d() + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Matrix product self * rhs.
    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dims, rhs.dims);
        let d = self.dims.d();
        let mut entries = vec![Complex64::ZERO; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.get(r, k);
                if a == Complex64::ZERO {
                    continue;
                }
                for c in 0..d {
                    entries[r * d + c] += a * rhs.get(k, c);
                }
            }
        }
        Self { dims: self.dims, entries }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let d = self.dims.d();
        let mut entries = vec![Complex64::ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                entries[c * d + r] = self.get(r, c).conj();
            }
        }
        Self { dims: self.dims, entries }
    }

    /// Largest entrywise deviation |self - other|.
    pub fn max_entry_deviation(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise deviation up to a single global phase, inferred from
    /// the largest-magnitude entry of self.
    pub fn max_entry_deviation_up_to_phase(&self, other: &Self) -> f64 {
        let (idx, _) = self
            .entries
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.norm().total_cmp(&b.norm()))
            .expect("nonempty matrix");
        if other.entries[idx].norm() < 1e-300 {
            return self.max_entry_deviation(other);
        }
        let phase = self.entries[idx] / other.entries[idx];
        let phase = phase / phase.norm();
        let rotated = Self {
            dims: other.dims,
            entries: other.entries.iter().map(|e| e * phase).collect(),
        };
        self.max_entry_deviation(&rotated)
    }

    /// Deviation of M^dagger M from identity, entrywise max.
    pub fn unitarity_defect(&self) -> f64 {
        self.dagger().mul(self).max_entry_deviation(&Self::identity(self.dims))
    }
}

/// Build a generalized gate matrix.
pub fn gate_matrix(kind: GateKind, dims: QuditDims) -> GateMatrix {
    let d = dims.d();
    let mut entries = vec![Complex64::ZERO; d * d];
    match kind {
        GateKind::H => {
            let s = 1.0 / (d as f64).sqrt();
            for k in 0..d {
                for l in 0..d {
                    entries[k * d + l] = dims.omega_pow((k * l) as i64) * s;
                }
            }
        }
        GateKind::Z => {
            for k in 0..d {
                entries[k * d + k] = dims.omega_pow(k as i64);
            }
        }
        GateKind::ZPow(m) => {
            for k in 0..d {
                entries[k * d + k] = dims.omega_pow(m * k as i64);
            }
        }
        GateKind::X => {
            // X|k> = |k-1 mod d>: row j has a 1 in column k with j = k-1.
            for k in 0..d {
                let j = (k as i64 - 1).rem_euclid(d as i64) as usize;
                entries[j * d + k] = Complex64::ONE;
            }
        }
        GateKind::XPow(m) => {
            for k in 0..d {
                let j = (k as i64 - m).rem_euclid(d as i64) as usize;
                entries[j * d + k] = Complex64::ONE;
            }
        }
        GateKind::R => {
            for k in 0..d {
                let j = (-(k as i64)).rem_euclid(d as i64) as usize;
                entries[j * d + k] = Complex64::ONE;
            }
        }
    }
    GateMatrix { dims, entries }
}

/// Undirected graph of cluster neighbors.
#[derive(Clone, Debug)]
pub struct ClusterGraph {
    num_sites: usize,
    edges: Vec<(usize, usize)>,
}

impl ClusterGraph {
    /// Edges are stored as ordered (low, high) pairs, deduplicated and sorted
    /// so construction order never leaks into results.
    pub fn new(num_sites: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument { reason: format!("self-loop at site {a}") });
            }
            if a >= num_sites || b >= num_sites {
                return Err(Error::SiteOutOfRange { site: a.max(b), num_sites });
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(Self { num_sites, edges: normalized })
    }

    pub fn path(num_sites: usize) -> Self {
        let edges: Vec<_> = (1..num_sites).map(|i| (i - 1, i)).collect();
        Self::new(num_sites, &edges).expect("path graph is always valid")
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// Normalized state of several qudits; amplitudes are row-major with site 0
/// slowest (the leftmost digit).
#[derive(Clone, Debug)]
pub struct MultiQuditState {
    dims: QuditDims,
    num_sites: usize,
    amplitudes: Vec<Complex64>,
}

impl MultiQuditState {
    pub fn from_amplitudes(dims: QuditDims, num_sites: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        let expected = checked_size(dims, num_sites)?;
        if amplitudes.len() != expected {
            return Err(Error::DimensionMismatch {
                reason: format!("expected {} amplitudes for {} sites, got {}", expected, num_sites, amplitudes.len()),
            });
        }
        Ok(Self { dims, num_sites, amplitudes })
    }

    /// Product of even superpositions at every site.
    pub fn uniform_product(dims: QuditDims, num_sites: usize) -> Result<Self> {
        let size = checked_size(dims, num_sites)?;
        let c = Complex64::new(1.0 / (size as f64).sqrt(), 0.0);
        Ok(Self { dims, num_sites, amplitudes: vec![c; size] })
    }

    /// Tensor product of single-qudit states, site 0 first.
    pub fn product_of(states: &[QuditState]) -> Result<Self> {
        let dims = states.first().ok_or(Error::InvalidArgument { reason: "empty product".into() })?.dims();
        checked_size(dims, states.len())?;
        let mut amplitudes = vec![Complex64::ONE];
        for s in states {
            if s.dims() != dims {
                return Err(Error::DimensionMismatch { reason: "mixed qudit dimensions".into() });
            }
            let mut next = Vec::with_capacity(amplitudes.len() * dims.d());
            for a in &amplitudes {
                for b in s.amplitudes() {
                    next.push(a * b);
                }
            }
            amplitudes = next;
        }
        Ok(Self { dims, num_sites: states.len(), amplitudes })
    }

    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Stride of a site index in the flat amplitude array.
    pub fn stride(&self, site: usize) -> usize {
        self.dims.d().pow((self.num_sites - 1 - site) as u32)
    }

    pub fn overlap(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &Self) -> f64 {
        self.overlap(other).norm_sqr()
    }

    /// View a single-site state as a QuditState.
    pub fn into_qudit_state(self) -> Result<QuditState> {
        if self.num_sites != 1 {
            return Err(Error::DimensionMismatch {
                reason: format!("state has {} sites, not 1", self.num_sites),
            });
        }
        QuditState::from_amplitudes(self.dims, self.amplitudes)
    }

    /// Apply a single-site gate.
    pub fn apply_single(&self, site: usize, gate: &GateMatrix) -> Result<Self> {
        if site >= self.num_sites {
            return Err(Error::SiteOutOfRange { site, num_sites: self.num_sites });
        }
        let d = self.dims.d();
        let stride = self.stride(site);
        let block = stride * d;
        let mut out = vec![Complex64::ZERO; self.amplitudes.len()];
        for base in (0..self.amplitudes.len()).step_by(block) {
            for rest in 0..stride {
                for r in 0..d {
                    let mut acc = Complex64::ZERO;
                    for c in 0..d {
                        acc += gate.get(r, c) * self.amplitudes[base + c * stride + rest];
                    }
                    out[base + r * stride + rest] = acc;
                }
            }
        }
        Ok(Self { dims: self.dims, num_sites: self.num_sites, amplitudes: out })
    }

    /// Von Neumann entanglement entropy (nats) across the cut that puts the
    /// first `left_sites` sites on one side.
    pub fn entanglement_entropy_nats(&self, left_sites: usize) -> Result<f64> {
        let p = self.schmidt_probabilities(left_sites)?;
        Ok(p.iter().filter(|&&x| x > 1e-300).map(|&x| -x * x.ln()).sum())
    }

    /// Squared Schmidt coefficients across the cut, normalized to sum 1.
    pub fn schmidt_probabilities(&self, left_sites: usize) -> Result<Vec<f64>> {
        if left_sites == 0 || left_sites >= self.num_sites {
            return Err(Error::InvalidArgument { reason: "cut must leave sites on both sides".into() });
        }
        let rows = self.dims.d().pow(left_sites as u32);
        let cols = self.amplitudes.len() / rows;
        let m = nalgebra::DMatrix::from_fn(rows, cols, |r, c| self.amplitudes[r * cols + c]);
        let svd = m.svd(false, false);
        let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        if total < 1e-300 {
            return Err(Error::DegenerateProbabilities);
        }
        Ok(svd.singular_values.iter().map(|s| s * s / total).collect())
    }
}

fn checked_size(dims: QuditDims, num_sites: usize) -> Result<usize> {
    let mut size: usize = 1;
    for _ in 0..num_sites {
        size = size
            .checked_mul(dims.d())
            .filter(|&s| s <= QUDIT_AMPLITUDE_CAP)
            .ok_or(Error::AmplitudeCapExceeded { requested: usize::MAX, cap: QUDIT_AMPLITUDE_CAP })?;
    }
    Ok(size)
}

/// Controlled-Z^power between two sites: the amplitude at digits (k_a, k_b)
/// picks up omega^{power k_a k_b}. Symmetric in the two sites.
pub fn cz_apply(state: &MultiQuditState, site_a: usize, site_b: usize, power: i64) -> Result<MultiQuditState> {
    if site_a == site_b {
        return Err(Error::InvalidArgument { reason: "controlled-Z needs two distinct sites".into() });
    }
    for site in [site_a, site_b] {
        if site >= state.num_sites() {
            return Err(Error::SiteOutOfRange { site, num_sites: state.num_sites() });
        }
    }
    let dims = state.dims();
    let d = dims.d() as i64;
    let table = dims.omega_table();
    let (sa, sb) = (state.stride(site_a), state.stride(site_b));
    let dd = dims.d();
    let amplitudes = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(idx, a)| {
            let ka = (idx / sa) % dd;
            let kb = (idx / sb) % dd;
            let e = (power * (ka * kb) as i64).rem_euclid(d) as usize;
            a * table[e]
        })
        .collect();
    MultiQuditState::from_amplitudes(dims, state.num_sites(), amplitudes)
}

/// Cluster state: every site starts in the even superposition and controlled-Z
/// acts across every edge. Phase exponents are accumulated per amplitude as
/// integers mod d, so the edge order cannot affect the result even bitwise.
pub fn ideal_cluster(graph: &ClusterGraph, dims: QuditDims) -> Result<MultiQuditState> {
    let base = MultiQuditState::uniform_product(dims, graph.num_sites())?;
    let d = dims.d();
    let table = dims.omega_table();
    let strides: Vec<usize> = (0..graph.num_sites()).map(|s| base.stride(s)).collect();
    let amplitudes = base
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(idx, a)| {
            let mut e = 0usize;
            for &(p, q) in graph.edges() {
                let kp = (idx / strides[p]) % d;
                let kq = (idx / strides[q]) % d;
                e = (e + kp * kq) % d;
            }
            a * table[e]
        })
        .collect();
    MultiQuditState::from_amplitudes(dims, graph.num_sites(), amplitudes)
}

/// Outcome of an ideal projective measurement on one site.
#[derive(Clone, Debug)]
pub struct IdealMeasurement {
    pub outcome: usize,
    /// Born probabilities for outcomes 0..d-1.
    pub probs: Vec<f64>,
    /// Renormalized post-measurement state with the measured site removed.
    pub post: MultiQuditState,
}

/// Measure `site` in the chosen basis, sampling from the Born distribution.
pub fn ideal_measure(
    state: &MultiQuditState,
    site: usize,
    basis: MeasurementBasis,
    rng: &mut impl Rng,
) -> Result<IdealMeasurement> {
    let (components, probs) = measurement_components(state, site, basis)?;
    let total: f64 = probs.iter().sum();
    if total < 1e-12 {
        return Err(Error::DegenerateProbabilities);
    }
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut outcome = probs.len() - 1;
    for (o, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            outcome = o;
            break;
        }
    }
    finish_measurement(state, components, probs, outcome)
}

/// Measure with a forced outcome, for exhaustive branch verification.
pub fn ideal_measure_forced(
    state: &MultiQuditState,
    site: usize,
    basis: MeasurementBasis,
    outcome: usize,
) -> Result<IdealMeasurement> {
    let (components, probs) = measurement_components(state, site, basis)?;
    if outcome >= probs.len() {
        return Err(Error::InvalidArgument { reason: format!("forced outcome {outcome} out of range") });
    }
    if probs[outcome] < 1e-15 {
        return Err(Error::DegenerateProbabilities);
    }
    finish_measurement(state, components, probs, outcome)
}

fn finish_measurement(
    state: &MultiQuditState,
    mut components: Vec<Vec<Complex64>>,
    probs: Vec<f64>,
    outcome: usize,
) -> Result<IdealMeasurement> {
    let norm = probs[outcome].sqrt();
    let post_amps: Vec<Complex64> = components.swap_remove(outcome).iter().map(|a| a / norm).collect();
    let post = MultiQuditState::from_amplitudes(state.dims(), state.num_sites() - 1, post_amps)?;
    Ok(IdealMeasurement { outcome, probs, post })
}

/// For each outcome o, the unnormalized amplitude vector of the remaining
/// sites, plus its squared norm (the Born probability).
fn measurement_components(
    state: &MultiQuditState,
    site: usize,
    basis: MeasurementBasis,
) -> Result<(Vec<Vec<Complex64>>, Vec<f64>)> {
    if site >= state.num_sites() {
        return Err(Error::SiteOutOfRange { site, num_sites: state.num_sites() });
    }
    if state.num_sites() < 2 {
        return Err(Error::InvalidArgument { reason: "cannot remove the last remaining site".into() });
    }
    let dims = state.dims();
    let d = dims.d();
    let stride = state.stride(site);
    let rest_len = state.amplitudes().len() / d;
    // Gather per-site-digit slices: slot[k][rest] with rest in row-major order
    // of the remaining sites.
    let mut slots = vec![vec![Complex64::ZERO; rest_len]; d];
    for (idx, &a) in state.amplitudes().iter().enumerate() {
        let k = (idx / stride) % d;
        let high = idx / (stride * d);
        let rest = high * stride + (idx % stride);
        slots[k][rest] = a;
    }
    let components: Vec<Vec<Complex64>> = match basis {
        MeasurementBasis::PseudoNumber => slots,
        MeasurementBasis::PseudoPhase => {
            // <l~| = (1/sqrt d) sum_k omega^{-lk} <k|.
            let s = 1.0 / (d as f64).sqrt();
            (0..d)
                .map(|l| {
                    let mut comp = vec![Complex64::ZERO; rest_len];
                    for (k, slot) in slots.iter().enumerate() {
                        let w = dims.omega_pow(-((l * k) as i64)) * s;
                        for (c, &a) in comp.iter_mut().zip(slot.iter()) {
                            *c += w * a;
                        }
                    }
                    comp
                })
                .collect()
        }
    };
    let probs: Vec<f64> = components
        .iter()
        .map(|c| c.iter().map(|a| a.norm_sqr()).sum())
        .collect();
    Ok((components, probs))
}

/// The three-site teleportation chain Z_{12} Z_{23} |phi> |u> |u> with u the
/// even superposition.
pub fn teleport_chain(input: &QuditState) -> Result<MultiQuditState> {
    let dims = input.dims();
    let chain = MultiQuditState::product_of(&[
        input.clone(),
        QuditState::uniform(dims),
        QuditState::uniform(dims),
    ])?;
    let chain = cz_apply(&chain, 0, 1, 1)?;
    cz_apply(&chain, 1, 2, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(d: usize) -> QuditDims {
        QuditDims::new(d).unwrap()
    }

    #[test]
    fn omega_to_the_d_is_exactly_one() {
        for d in 1..=32 {
            let q = dims(d);
            assert!((q.omega_pow(d as i64) - C64::ONE).norm() < 1e-14);
            assert!((q.omega().norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn qubit_hadamard_is_the_standard_matrix() {
        let h = gate_matrix(GateKind::H, dims(2));
        let s = 1.0 / 2.0f64.sqrt();
        assert!((h.get(0, 0).re - s).abs() < 1e-15);
        assert!((h.get(0, 1).re - s).abs() < 1e-15);
        assert!((h.get(1, 0).re - s).abs() < 1e-15);
        assert!((h.get(1, 1).re + s).abs() < 1e-15);
    }

    #[test]
    fn hadamard_squared_reverses_the_basis() {
        for d in 2..=16 {
            let q = dims(d);
            let h = gate_matrix(GateKind::H, q);
            let r = gate_matrix(GateKind::R, q);
            assert!(h.mul(&h).max_entry_deviation(&r) < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn hadamard_conjugation_turns_z_into_x() {
        for d in 2..=16 {
            let q = dims(d);
            let h = gate_matrix(GateKind::H, q);
            let z = gate_matrix(GateKind::Z, q);
            let x = gate_matrix(GateKind::X, q);
            assert!(h.mul(&z).mul(&h.dagger()).max_entry_deviation(&x) < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn weyl_commutation_holds() {
        for d in 2..=32 {
            let q = dims(d);
            let x = gate_matrix(GateKind::X, q);
            let z = gate_matrix(GateKind::Z, q);
            let lhs = x.mul(&z);
            let mut rhs = z.mul(&x);
            for e in rhs.entries.iter_mut() {
                *e *= q.omega();
            }
            assert!(lhs.max_entry_deviation(&rhs) < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn gate_powers_compose_exactly() {
        let q = dims(5);
        let x = gate_matrix(GateKind::X, q);
        let mut x3 = GateMatrix::identity(q);
        for _ in 0..3 {
            x3 = x3.mul(&x);
        }
        assert!(x3.max_entry_deviation(&gate_matrix(GateKind::XPow(3), q)) < 1e-14);
        assert!(gate_matrix(GateKind::XPow(-2), q).max_entry_deviation(&gate_matrix(GateKind::XPow(3), q)) < 1e-14);
    }

    #[test]
    fn cz_with_power_zero_is_identity() {
        let q = dims(3);
        let state = MultiQuditState::uniform_product(q, 2).unwrap();
        let out = cz_apply(&state, 0, 1, 0).unwrap();
        assert!(state.amplitudes().iter().zip(out.amplitudes()).all(|(a, b)| a == b));
    }

    #[test]
    fn cz_on_plus_plus_gives_balanced_schmidt_coefficients() {
        let q = dims(2);
        let state = MultiQuditState::uniform_product(q, 2).unwrap();
        let cluster = cz_apply(&state, 0, 1, 1).unwrap();
        let p = cluster.schmidt_probabilities(1).unwrap();
        // Brute-force oracle: reshaped 2x2 matrix (1/2)[[1,1],[1,-1]] has both
        // singular values 1/sqrt 2.
        for x in p {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cz_applications_commute() {
        let q = dims(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let states: Vec<QuditState> = (0..3).map(|_| QuditState::random(q, &mut rng)).collect();
        let base = MultiQuditState::product_of(&states).unwrap();
        let ab_then_bc = cz_apply(&cz_apply(&base, 0, 1, 1).unwrap(), 1, 2, 1).unwrap();
        let bc_then_ab = cz_apply(&cz_apply(&base, 1, 2, 1).unwrap(), 0, 1, 1).unwrap();
        let dev = ab_then_bc
            .amplitudes()
            .iter()
            .zip(bc_then_ab.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-14);
    }

    #[test]
    fn empty_cluster_is_the_uniform_product() {
        let q = dims(4);
        let g = ClusterGraph::new(2, &[]).unwrap();
        let c = ideal_cluster(&g, q).unwrap();
        let u = MultiQuditState::uniform_product(q, 2).unwrap();
        assert!((c.fidelity(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qubit_path_cluster_satisfies_its_stabilizers() {
        let q = dims(2);
        let cluster = ideal_cluster(&ClusterGraph::path(3), q).unwrap();
        let x = gate_matrix(GateKind::X, q);
        let z = gate_matrix(GateKind::Z, q);
        // Stabilizers X Z I, Z X Z, I Z X, each with expectation +1.
        let words: [Vec<(usize, &GateMatrix)>; 3] = [
            vec![(0, &x), (1, &z)],
            vec![(0, &z), (1, &x), (2, &z)],
            vec![(1, &z), (2, &x)],
        ];
        for word in words {
            let mut s = cluster.clone();
            for (site, gate) in word {
                s = s.apply_single(site, gate).unwrap();
            }
            let expectation = cluster.overlap(&s);
            assert!((expectation - C64::ONE).norm() < 1e-12, "{expectation}");
        }
    }

    #[test]
    fn single_edge_cluster_is_the_bell_pair() {
        for d in [2usize, 3, 5] {
            let q = dims(d);
            let g = ClusterGraph::new(2, &[(0, 1)]).unwrap();
            let c = ideal_cluster(&g, q).unwrap();
            // Independent construction of (1/sqrt d) sum_k |k>|k~>.
            let s = 1.0 / (d as f64).sqrt();
            let mut expected = vec![C64::ZERO; d * d];
            for k in 0..d {
                for l in 0..d {
                    expected[k * d + l] = q.omega_pow((k * l) as i64) * s / (d as f64).sqrt();
                }
            }
            let e = MultiQuditState::from_amplitudes(q, 2, expected).unwrap();
            assert!((c.fidelity(&e) - 1.0).abs() < 1e-12, "d = {d}");
            let p = c.schmidt_probabilities(1).unwrap();
            for x in p {
                assert!((x - 1.0 / d as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn measuring_a_basis_state_is_deterministic() {
        let q = dims(4);
        let state = MultiQuditState::product_of(&[
            QuditState::basis_state(q, 2),
            QuditState::uniform(q),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ideal_measure(&state, 0, MeasurementBasis::PseudoNumber, &mut rng).unwrap();
        assert_eq!(m.outcome, 2);
        assert!((m.probs[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_basis_probabilities_of_a_number_ket_are_uniform() {
        let q = dims(5);
        let state = MultiQuditState::product_of(&[
            QuditState::basis_state(q, 3),
            QuditState::uniform(q),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ideal_measure(&state, 0, MeasurementBasis::PseudoPhase, &mut rng).unwrap();
        for p in &m.probs {
            assert!((p - 0.2).abs() < 1e-12);
        }
        let total: f64 = m.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((m.post.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_measurement_collapse_matches_the_residual_formula() {
        for d in [2usize, 4] {
            let q = dims(d);
            let bell = ideal_cluster(&ClusterGraph::new(2, &[(0, 1)]).unwrap(), q).unwrap();
            let h = gate_matrix(GateKind::H, q);
            for k in 0..d {
                let m = ideal_measure_forced(&bell, 0, MeasurementBasis::PseudoPhase, k).unwrap();
                let target = QuditState::uniform(q)
                    .apply(&gate_matrix(GateKind::ZPow(-(k as i64)), q))
                    .apply(&h);
                let post = m.post.into_qudit_state().unwrap();
                assert!((post.fidelity(&target) - 1.0).abs() < 1e-12, "d = {d}, k = {k}");
            }
        }
    }

    #[test]
    fn all_generalized_gates_are_unitary() {
        for d in 2..=16 {
            let q = dims(d);
            for kind in [GateKind::H, GateKind::Z, GateKind::X, GateKind::R, GateKind::ZPow(3), GateKind::XPow(5)] {
                assert!(gate_matrix(kind, q).unitarity_defect() < 1e-12, "d = {d}, {kind:?}");
            }
        }
    }
}

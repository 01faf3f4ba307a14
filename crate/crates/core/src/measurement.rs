//! Measurement models for CV modes: exact projection onto the codeword
//! subspace (plus a distinct leak outcome), and the physical double-arm
//! homodyne picture — Husimi-Q sampling of both quadratures followed by
//! nearest-sector phase binning.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::cv::{CodewordBasis, MultiModeState, DEFAULT_MAX_MODES};
use crate::error::{Error, Result};
use crate::fock::coherent_amplitudes;
use crate::qudit::{MeasurementBasis, QuditDims};

/// Which physical model produced a measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MeasModel {
    SubspaceProjective,
    HeterodyneBin,
}

/// Measurement result; leakage outside the codeword subspace is a distinct
/// symbol, never folded into 0..d-1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Codeword(usize),
    Leak,
}

impl Outcome {
    pub fn codeword(self) -> Option<usize> {
        match self {
            Outcome::Codeword(k) => Some(k),
            Outcome::Leak => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasurementRecord {
    pub mode: usize,
    pub mode_label: String,
    pub model: MeasModel,
    pub basis: MeasurementBasis,
    pub outcome: Outcome,
    /// Both quadratures (x1, x2) for the heterodyne model.
    pub raw_sample: Option<(f64, f64)>,
    /// Born probabilities of the d codeword outcomes (subspace model).
    pub probs: Option<Vec<f64>>,
    /// Seed of the trial that produced this record; set by the caller that
    /// owns the seed.
    pub seed_used: u64,
}

/// Project one mode onto the d orthonormal kets of the chosen basis plus the
/// orthogonal leak remainder, and sample the outcome from the Born rule.
///
/// On a codeword outcome the post state has the measured mode contracted out;
/// on the leak outcome the mode is retained (the remainder does not factor).
/// The third return value is the leak probability.
pub fn subspace_projective_measure(
    state: &MultiModeState,
    mode: usize,
    basis_kind: MeasurementBasis,
    basis: &CodewordBasis,
    rng: &mut impl Rng,
) -> Result<(MeasurementRecord, MultiModeState, f64)> {
    let dim = basis.n_max() + 1;
    if state.mode_dims().get(mode) != Some(&dim) {
        return Err(Error::DimensionMismatch {
            reason: format!("mode {mode} does not match basis dimension {dim}"),
        });
    }
    let kets = match basis_kind {
        MeasurementBasis::PseudoNumber => basis.number_kets(),
        MeasurementBasis::PseudoPhase => basis.phase_kets(),
    };
    let d = basis.dims().d();
    let (major, _, rest) = state.mode_major(mode)?;

    // Components C_o[r] = <ket_o| psi>_mode, one vector over the rest indices
    // per outcome.
    let mut components = vec![vec![Complex64::ZERO; rest]; d];
    for (o, ket) in kets.iter().enumerate() {
        let comp = &mut components[o];
        for (n, &b) in ket.amplitudes().iter().enumerate() {
            let bc = b.conj();
            let row = &major[n * rest..(n + 1) * rest];
            for (c, &a) in comp.iter_mut().zip(row) {
                *c += bc * a;
            }
        }
    }
    let probs: Vec<f64> = components.iter().map(|c| c.iter().map(|a| a.norm_sqr()).sum()).collect();
    let total_norm: f64 = major.iter().map(|a| a.norm_sqr()).sum();
    if (total_norm - 1.0).abs() > 1e-8 {
        return Err(Error::ProbabilityNotNormalized { total: total_norm });
    }
    let captured: f64 = probs.iter().sum();
    let p_leak = (total_norm - captured).max(0.0);
    if captured + p_leak < 1e-12 {
        return Err(Error::DegenerateProbabilities);
    }

    let u: f64 = rng.gen::<f64>() * total_norm;
    let mut acc = 0.0;
    let mut outcome = Outcome::Leak;
    for (o, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            outcome = Outcome::Codeword(o);
            break;
        }
    }

    let normalized_probs: Vec<f64> = probs.iter().map(|p| p / total_norm).collect();
    let record = MeasurementRecord {
        mode,
        mode_label: state.mode_labels()[mode].clone(),
        model: MeasModel::SubspaceProjective,
        basis: basis_kind,
        outcome,
        raw_sample: None,
        probs: Some(normalized_probs),
        seed_used: 0,
    };
    let leakage = p_leak / total_norm;

    let post = match outcome {
        Outcome::Codeword(o) => {
            let norm = probs[o].sqrt();
            let amps: Vec<Complex64> = components[o].iter().map(|a| a / norm).collect();
            let (dims, labels) = state.contracted_shape(mode);
            MultiModeState::from_amplitudes(dims, amps)?.with_labels(labels)
        }
        Outcome::Leak => {
            // Orthogonal remainder, mode retained in original order.
            let mut remainder = major;
            for (o, ket) in kets.iter().enumerate() {
                for (n, &b) in ket.amplitudes().iter().enumerate() {
                    let row = &mut remainder[n * rest..(n + 1) * rest];
                    for (r, c) in row.iter_mut().zip(&components[o]) {
                        *r -= b * c;
                    }
                }
            }
            let norm = p_leak.sqrt();
            if norm < 1e-150 {
                return Err(Error::DegenerateProbabilities);
            }
            let stride = state.stride(mode);
            let mut amps = vec![Complex64::ZERO; state.amplitudes().len()];
            for (idx, slot) in amps.iter_mut().enumerate() {
                let n = (idx / stride) % dim;
                let high = idx / (stride * dim);
                let r = high * stride + (idx % stride);
                *slot = remainder[n * rest + r] / norm;
            }
            MultiModeState::from_amplitudes(state.mode_dims().to_vec(), amps)?
                .with_labels(state.mode_labels().to_vec())
        }
    };
    Ok((record, post, leakage))
}

/// Grid configuration for Husimi-Q sampling.
///
/// Quadrature convention: the reported pair (x1, x2) is unbiased for the
/// coherent amplitude, <x1> + i <x2> = beta for a mode in |beta>, with
/// per-axis sampling variance 1 (one half from the vacuum width of Q, one
/// half of detection noise from the 50/50 split).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HeterodyneConfig {
    pub grid_radius_sigmas: f64,
    pub grid_points_per_axis: usize,
}

impl Default for HeterodyneConfig {
    fn default() -> Self {
        Self { grid_radius_sigmas: 8.0, grid_points_per_axis: 128 }
    }
}

impl HeterodyneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_radius_sigmas >= 6.0) {
            return Err(Error::InvalidArgument {
                reason: format!("grid_radius_sigmas = {} must cover at least 6 sigma", self.grid_radius_sigmas),
            });
        }
        if self.grid_points_per_axis < 64 {
            return Err(Error::InvalidArgument {
                reason: format!("grid_points_per_axis = {} must be >= 64", self.grid_points_per_axis),
            });
        }
        Ok(())
    }
}

/// One heterodyne detection event.
#[derive(Clone, Debug)]
pub struct HeterodyneDraw {
    /// Coherent amplitude the POVM landed on (before detection noise).
    pub gamma: Complex64,
    pub x1: f64,
    pub x2: f64,
    /// Conditional state of the remaining modes given gamma.
    pub post: MultiModeState,
}

/// Precomputed Husimi-Q grid distribution for repeated sampling of one mode
/// of one state.
///
/// The mode's reduced density matrix is diagonalized once; each grid cell
/// then costs rank x dim inner products, and each draw is a CDF lookup plus
/// one conditional-state contraction.
pub struct HeterodyneSampler {
    major: Vec<Complex64>,
    dim: usize,
    rest: usize,
    contracted_dims: Vec<usize>,
    contracted_labels: Vec<String>,
    centers: Vec<Complex64>,
    cdf: Vec<f64>,
    total_weight: f64,
    cell: f64,
}

impl HeterodyneSampler {
    pub fn new(state: &MultiModeState, mode: usize, cfg: &HeterodyneConfig) -> Result<Self> {
        cfg.validate()?;
        let (major, dim, rest) = state.mode_major(mode)?;

        // Reduced density matrix of the measured mode; the row stream r_i is
        // shared across a block of four columns to cut memory traffic.
        let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
        for i in 0..dim {
            let ri = &major[i * rest..(i + 1) * rest];
            let mut j = 0;
            while j + 4 <= i + 1 {
                let mut acc = [Complex64::ZERO; 4];
                let r0 = &major[j * rest..(j + 1) * rest];
                let r1 = &major[(j + 1) * rest..(j + 2) * rest];
                let r2 = &major[(j + 2) * rest..(j + 3) * rest];
                let r3 = &major[(j + 3) * rest..(j + 4) * rest];
                for (r, &a) in ri.iter().enumerate() {
                    acc[0] += a * r0[r].conj();
                    acc[1] += a * r1[r].conj();
                    acc[2] += a * r2[r].conj();
                    acc[3] += a * r3[r].conj();
                }
                for (t, &v) in acc.iter().enumerate() {
                    rho[(i, j + t)] = v;
                    rho[(j + t, i)] = v.conj();
                }
                j += 4;
            }
            while j <= i {
                let rj = &major[j * rest..(j + 1) * rest];
                let mut acc = Complex64::ZERO;
                for (a, b) in ri.iter().zip(rj) {
                    acc += a * b.conj();
                }
                rho[(i, j)] = acc;
                rho[(j, i)] = acc.conj();
                j += 1;
            }
        }
        let trace: f64 = (0..dim).map(|i| rho[(i, i)].re).sum();
        if trace < 1e-150 {
            return Err(Error::DegenerateProbabilities);
        }

        // Amplitude centroid <a> and mean photon number from rho.
        let centroid: Complex64 = (1..dim)
            .map(|m| rho[(m, m - 1)] * (m as f64).sqrt())
            .sum::<Complex64>()
            / trace;
        let mean_n: f64 = (0..dim).map(|m| m as f64 * rho[(m, m)].re).sum::<f64>() / trace;
        // Q support sits within the ring radius sqrt(<n> - |mu|^2) around the
        // centroid, broadened by the vacuum lobe width 1/sqrt(2). Sizing the
        // grid as ring + sigmas*lobe keeps cells fine against the lobe width,
        // which the midpoint rule needs.
        let ring = (mean_n - centroid.norm_sqr()).max(0.0).sqrt();
        let lobe = std::f64::consts::FRAC_1_SQRT_2;

        let eig = nalgebra::SymmetricEigen::new(rho);
        let lambda: DVector<f64> = eig.eigenvalues;
        let vectors = eig.eigenvectors;
        let lambda_max = lambda.iter().cloned().fold(0.0f64, f64::max);
        let kept: Vec<usize> = (0..dim).filter(|&r| lambda[r] > lambda_max * 1e-13).collect();

        let points = cfg.grid_points_per_axis;
        let radius = ring + cfg.grid_radius_sigmas * lobe;
        let cell = 2.0 * radius / points as f64;
        let area = cell * cell;
        let mut centers = Vec::with_capacity(points * points);
        let mut weights = Vec::with_capacity(points * points);
        for i in 0..points {
            let x = centroid.re - radius + (i as f64 + 0.5) * cell;
            for j in 0..points {
                let y = centroid.im - radius + (j as f64 + 0.5) * cell;
                centers.push(Complex64::new(x, y));
            }
        }
        for gamma in &centers {
            let bra = coherent_amplitudes(*gamma, dim - 1);
            let mut q = 0.0;
            for &r in &kept {
                let mut ov = Complex64::ZERO;
                for n in 0..dim {
                    ov += bra[n].conj() * vectors[(n, r)];
                }
                q += lambda[r] * ov.norm_sqr();
            }
            weights.push(q * area / std::f64::consts::PI);
        }
        let total_weight: f64 = weights.iter().sum();
        if total_weight < (1.0 - 1e-6) * trace {
            return Err(Error::GridMassTooSmall { mass: total_weight / trace });
        }
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cdf.push(acc);
        }
        let (contracted_dims, contracted_labels) = state.contracted_shape(mode);
        Ok(Self {
            major,
            dim,
            rest,
            contracted_dims,
            contracted_labels,
            centers,
            cdf,
            total_weight,
            cell,
        })
    }

    /// Sample one detection event.
    pub fn draw(&self, rng: &mut impl Rng) -> Result<HeterodyneDraw> {
        use rand_distr::StandardNormal;
        for _ in 0..100 {
            let u: f64 = rng.gen::<f64>() * self.total_weight;
            let idx = match self.cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) => i,
                Err(i) => i.min(self.cdf.len() - 1),
            };
            let jx: f64 = rng.gen::<f64>() - 0.5;
            let jy: f64 = rng.gen::<f64>() - 0.5;
            let gamma = self.centers[idx] + Complex64::new(jx * self.cell, jy * self.cell);

            let bra = coherent_amplitudes(gamma, self.dim - 1);
            let mut post = vec![Complex64::ZERO; self.rest];
            for n in 0..self.dim {
                let bc = bra[n].conj();
                let row = &self.major[n * self.rest..(n + 1) * self.rest];
                for (p, &a) in post.iter_mut().zip(row) {
                    *p += bc * a;
                }
            }
            let norm_sqr: f64 = post.iter().map(|a| a.norm_sqr()).sum();
            if norm_sqr < 1e-280 {
                continue; // landed on a Q zero within the jittered cell
            }
            let norm = norm_sqr.sqrt();
            for p in post.iter_mut() {
                *p /= norm;
            }
            let post_state = if self.contracted_dims.is_empty() {
                MultiModeState::from_amplitudes(vec![1], post)?
            } else {
                MultiModeState::from_amplitudes(self.contracted_dims.clone(), post)?
                    .with_labels(self.contracted_labels.clone())
            };
            let noise = std::f64::consts::FRAC_1_SQRT_2;
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            return Ok(HeterodyneDraw {
                gamma,
                x1: gamma.re + noise * n1,
                x2: gamma.im + noise * n2,
                post: post_state,
            });
        }
        Err(Error::DegenerateProbabilities)
    }
}

/// One-shot double-arm homodyne sample of both quadratures of one mode.
pub fn heterodyne_sample(
    state: &MultiModeState,
    mode: usize,
    cfg: &HeterodyneConfig,
    rng: &mut impl Rng,
) -> Result<(f64, f64, MultiModeState)> {
    let sampler = HeterodyneSampler::new(state, mode, cfg)?;
    let draw = sampler.draw(rng)?;
    Ok((draw.x1, draw.x2, draw.post))
}

/// Nearest-sector-center decision rule: the index l whose direction
/// omega^l e^{i ref_phase} is closest in angle to x1 + i x2.
pub fn phase_bin(x1: f64, x2: f64, dims: QuditDims, ref_phase: f64) -> Result<usize> {
    let z = Complex64::new(x1, x2);
    if z.norm() < 1e-30 {
        return Err(Error::ZeroMagnitudeSample);
    }
    let d = dims.d() as f64;
    let sectors = d * (z.arg() - ref_phase) / (2.0 * std::f64::consts::PI);
    Ok((sectors.round() as i64).rem_euclid(dims.d() as i64) as usize)
}

/// Pseudo-phase measurement of one mode with the chosen model.
///
/// The record carries the model so protocol fidelities stay attributable; the
/// third return value is the leak probability (zero under heterodyne, which
/// has no leak outcome).
pub fn measure_pseudo_phase(
    state: &MultiModeState,
    mode: usize,
    model: MeasModel,
    basis: &CodewordBasis,
    cfg: &HeterodyneConfig,
    rng: &mut impl Rng,
) -> Result<(MeasurementRecord, MultiModeState, f64)> {
    match model {
        MeasModel::SubspaceProjective => {
            subspace_projective_measure(state, mode, MeasurementBasis::PseudoPhase, basis, rng)
        }
        MeasModel::HeterodyneBin => {
            let sampler = HeterodyneSampler::new(state, mode, cfg)?;
            let ref_phase = basis.alpha().arg();
            for _ in 0..32 {
                let draw = sampler.draw(rng)?;
                match phase_bin(draw.x1, draw.x2, basis.dims(), ref_phase) {
                    Ok(l) => {
                        let record = MeasurementRecord {
                            mode,
                            mode_label: state.mode_labels()[mode].clone(),
                            model,
                            basis: MeasurementBasis::PseudoPhase,
                            outcome: Outcome::Codeword(l),
                            raw_sample: Some((draw.x1, draw.x2)),
                            probs: None,
                            seed_used: 0,
                        };
                        return Ok((record, draw.post, 0.0));
                    }
                    Err(Error::ZeroMagnitudeSample) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::ZeroMagnitudeSample)
        }
    }
}

/// Pseudo-number measurement via an ancilla: adjoin a fresh coherent mode,
/// couple it to the target with the controlled-Z cross-Kerr phase, and read
/// the ancilla in the pseudo-phase basis. The ancilla pointer value equals the
/// target's number sector, so the outcome is the pseudo-number result.
///
/// On a subspace leak outcome the ancilla is still attached to the returned
/// post state; callers treat that as a failed trial.
pub fn measure_pseudo_number_via_ancilla(
    state: &MultiModeState,
    mode: usize,
    basis: &CodewordBasis,
    model: MeasModel,
    cfg: &HeterodyneConfig,
    rng: &mut impl Rng,
) -> Result<(MeasurementRecord, MultiModeState, f64)> {
    if state.num_modes() + 1 > DEFAULT_MAX_MODES {
        return Err(Error::ModeCapExceeded { requested: state.num_modes() + 1, cap: DEFAULT_MAX_MODES });
    }
    if mode >= state.num_modes() {
        return Err(Error::ModeOutOfRange { mode, num_modes: state.num_modes() });
    }
    let ancilla = crate::fock::coherent_state(basis.alpha(), basis.n_max())?;
    let mut dims = state.mode_dims().to_vec();
    dims.push(ancilla.len());
    let mut amps = Vec::with_capacity(state.amplitudes().len() * ancilla.len());
    for &a in state.amplitudes() {
        for &b in ancilla.amplitudes() {
            amps.push(a * b);
        }
    }
    let mut labels = state.mode_labels().to_vec();
    labels.push("ancilla".to_string());
    let joined = MultiModeState::from_amplitudes(dims, amps)?.with_labels(labels);
    let ancilla_index = joined.num_modes() - 1;
    let coupled = crate::cv::apply_cross_kerr(
        &joined,
        mode,
        ancilla_index,
        crate::cv::KerrPhase::controlled_z(basis.dims()),
    )?;
    let (mut record, post, leakage) =
        measure_pseudo_phase(&coupled, ancilla_index, model, basis, cfg, rng)?;
    record.mode = mode;
    record.mode_label = state.mode_labels()[mode].clone();
    record.basis = MeasurementBasis::PseudoNumber;
    Ok((record, post, leakage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv::{codeword_subspace, tensor};
    use crate::fock::coherent_state;
    use crate::qudit::QuditState;
    use crate::seed::rng_from_seed;
    use num_complex::Complex64 as C64;

    fn dims(d: usize) -> QuditDims {
        QuditDims::new(d).unwrap()
    }

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn single_mode(f: crate::fock::FockVector) -> MultiModeState {
        tensor(&[f, crate::fock::FockVector::number_state(0, 0)]).unwrap()
    }

    // A 2-mode wrapper is needed because projective measurement contracts the
    // measured mode out; mode 1 is a trivial 1-dimensional spectator.

    #[test]
    fn subspace_measurement_of_a_phase_ket_is_deterministic() {
        let q = dims(4);
        let basis = codeword_subspace(q, re(5.0), 73).unwrap();
        let state = single_mode(basis.phase_kets()[2].clone());
        let mut rng = rng_from_seed(0);
        let (rec, _, leak) =
            subspace_projective_measure(&state, 0, MeasurementBasis::PseudoPhase, &basis, &mut rng)
                .unwrap();
        assert_eq!(rec.outcome, Outcome::Codeword(2));
        let probs = rec.probs.unwrap();
        assert!((probs[2] - 1.0).abs() < 1e-12);
        assert!(leak < 1e-12);
    }

    #[test]
    fn number_ket_in_phase_basis_is_uniform() {
        let q = dims(4);
        let basis = codeword_subspace(q, re(5.0), 73).unwrap();
        for k in 0..4 {
            let state = single_mode(basis.number_kets()[k].clone());
            let mut rng = rng_from_seed(k as u64);
            let (rec, _, _) =
                subspace_projective_measure(&state, 0, MeasurementBasis::PseudoPhase, &basis, &mut rng)
                    .unwrap();
            for p in rec.probs.unwrap() {
                assert!((p - 0.25).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bell_pair_number_measurement_collapses_the_partner_to_a_phase_ket() {
        let q = dims(4);
        let alpha = re(5.0);
        let basis = codeword_subspace(q, alpha, 73).unwrap();
        let c = coherent_state(alpha, 73).unwrap();
        let bell = crate::cv::apply_cross_kerr(
            &tensor(&[c.clone(), c]).unwrap(),
            0,
            1,
            crate::cv::KerrPhase::controlled_z(q),
        )
        .unwrap();
        let mut rng = rng_from_seed(5);
        let (rec, post, _) =
            subspace_projective_measure(&bell, 0, MeasurementBasis::PseudoNumber, &basis, &mut rng)
                .unwrap();
        let k = rec.outcome.codeword().unwrap();
        let partner = post.into_fock_vector().unwrap();
        let fid = crate::fock::fidelity(&partner, &basis.phase_kets()[k]);
        assert!(fid > 1.0 - 1e-6, "fidelity {fid}");
    }

    #[test]
    fn subspace_probabilities_match_a_direct_contraction_oracle() {
        let q = dims(3);
        let alpha = re(4.0);
        let n_max = 60;
        let basis = codeword_subspace(q, alpha, n_max).unwrap();
        let a = coherent_state(alpha, n_max).unwrap();
        let b = coherent_state(re(0.5) * alpha, n_max).unwrap().normalized();
        let state = crate::cv::apply_cross_kerr(
            &tensor(&[a, b]).unwrap(),
            0,
            1,
            crate::cv::KerrPhase::radians(0.71),
        )
        .unwrap();
        let mut rng = rng_from_seed(9);
        let (rec, _, _) =
            subspace_projective_measure(&state, 0, MeasurementBasis::PseudoPhase, &basis, &mut rng)
                .unwrap();
        let probs = rec.probs.unwrap();
        // Oracle: loop over every joint index without the slot regrouping.
        let dim = n_max + 1;
        for (l, ket) in basis.phase_kets().iter().enumerate() {
            let mut comp = vec![C64::ZERO; dim];
            for (idx, &amp) in state.amplitudes().iter().enumerate() {
                let (n0, n1) = (idx / dim, idx % dim);
                comp[n1] += ket.amplitudes()[n0].conj() * amp;
            }
            let p: f64 = comp.iter().map(|c| c.norm_sqr()).sum();
            assert!((p - probs[l]).abs() < 1e-10, "l = {l}");
        }
    }

    #[test]
    fn phase_bin_on_the_reference_axis_is_zero() {
        assert_eq!(phase_bin(3.0, 0.0, dims(4), 0.0).unwrap(), 0);
    }

    #[test]
    fn phase_bin_picks_the_nearest_sector() {
        let theta = 100.0_f64.to_radians();
        assert_eq!(phase_bin(theta.cos(), theta.sin(), dims(4), 0.0).unwrap(), 1);
    }

    #[test]
    fn phase_bin_rejects_the_origin() {
        assert!(matches!(phase_bin(0.0, 0.0, dims(4), 0.0), Err(Error::ZeroMagnitudeSample)));
    }

    #[test]
    fn ancilla_number_measurement_of_a_sector_state_is_exact() {
        let q = dims(4);
        let basis = codeword_subspace(q, re(5.0), 73).unwrap();
        let state = single_mode(basis.number_kets()[1].clone());
        let mut rng = rng_from_seed(2);
        let (rec, _, _) = measure_pseudo_number_via_ancilla(
            &state,
            0,
            &basis,
            MeasModel::SubspaceProjective,
            &HeterodyneConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(rec.outcome, Outcome::Codeword(1));
        let probs = rec.probs.unwrap();
        assert!((probs[1] - 1.0).abs() < 1e-6, "probs {probs:?}");
    }

    #[test]
    fn ancilla_measurement_respects_the_mode_cap() {
        let q = dims(2);
        let basis = codeword_subspace(q, re(2.0), 28).unwrap();
        let c = coherent_state(re(2.0), 28).unwrap();
        let state = tensor(&[c.clone(), c.clone(), c]).unwrap();
        let mut rng = rng_from_seed(0);
        let err = measure_pseudo_number_via_ancilla(
            &state,
            0,
            &basis,
            MeasModel::SubspaceProjective,
            &HeterodyneConfig::default(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ModeCapExceeded { .. }));
    }

    #[test]
    fn heterodyne_post_state_of_a_product_is_the_other_factor() {
        let a = coherent_state(re(2.0), 30).unwrap();
        let b = coherent_state(C64::new(0.0, 1.5), 30).unwrap();
        let state = tensor(&[a, b.clone()]).unwrap();
        let mut rng = rng_from_seed(17);
        let (_, _, post) = heterodyne_sample(&state, 0, &HeterodyneConfig::default(), &mut rng).unwrap();
        let partner = post.into_fock_vector().unwrap();
        let fid = crate::fock::fidelity(&partner, &b) / b.norm_sqr();
        assert!((fid - 1.0).abs() < 1e-10, "fidelity {fid}");
    }

    #[test]
    fn heterodyne_grid_must_cover_the_state() {
        let c = coherent_state(re(3.0), 50).unwrap();
        let state = single_mode(c);
        let cfg = HeterodyneConfig { grid_radius_sigmas: 6.0, grid_points_per_axis: 64 };
        // Valid config covers a single coherent lobe comfortably.
        assert!(HeterodyneSampler::new(&state, 0, &cfg).is_ok());
        let bad = HeterodyneConfig { grid_radius_sigmas: 4.0, grid_points_per_axis: 64 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn encoded_state_outcome_frequencies_follow_the_born_rule() {
        let q = dims(4);
        let basis = codeword_subspace(q, re(5.0), 73).unwrap();
        let mut rng = rng_from_seed(123);
        let input = QuditState::random(q, &mut rng);
        let encoded = single_mode(crate::cv::encode_qudit(&input, &basis).unwrap());
        let trials = 10_000usize;
        let mut counts = [0usize; 4];
        for t in 0..trials {
            let mut trial_rng = rng_from_seed(crate::seed::derive_seed(77, t as u64));
            let (rec, _, _) = measure_pseudo_number_via_ancilla(
                &encoded,
                0,
                &basis,
                MeasModel::SubspaceProjective,
                &HeterodyneConfig::default(),
                &mut trial_rng,
            )
            .unwrap();
            counts[rec.outcome.codeword().unwrap()] += 1;
        }
        for (l, &c) in counts.iter().enumerate() {
            let p = input.amplitudes()[l].norm_sqr();
            let sigma = (p * (1.0 - p) / trials as f64).sqrt().max(1e-6);
            let diff = (c as f64 / trials as f64 - p).abs();
            assert!(diff < 3.0 * sigma + 0.005, "l = {l}: freq {} vs p {p}", c as f64 / trials as f64);
        }
    }
}

//! End-to-end compositions: Bell-pair generation, one-step teleportation, and
//! full teleportation with classical messages and corrections, runnable on
//! both engines and both measurement models.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::cv::{
    apply_cross_kerr, codeword_subspace, decode_fock, encode_qudit, tensor, KerrPhase, MultiModeState,
};
use crate::error::{Error, Result};
use crate::fock::{coherent_state, truncation_dim, TruncationPolicy};
use crate::measurement::{measure_pseudo_phase, HeterodyneConfig, MeasModel};
use crate::qudit::{
    cz_apply, gate_matrix, ideal_measure, ideal_measure_forced, teleport_chain, ClusterGraph,
    GateKind, GateMatrix, MeasurementBasis, MultiQuditState, QuditDims, QuditState,
};
use crate::seed::{derive_seed, rng_from_seed};

/// Which state representation runs the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Engine {
    Ideal,
    Cv,
}

/// One classical transmission; Bob's corrections may consume only these.
#[derive(Clone, Debug, Serialize)]
pub struct ClassicalMessage {
    pub sender: String,
    pub name: String,
    pub value: usize,
}

/// A single gate of a correction/byproduct word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WordGate {
    X(i64),
    Z(i64),
    R,
    H,
}

impl WordGate {
    pub fn matrix(self, dims: QuditDims) -> GateMatrix {
        match self {
            WordGate::X(p) => gate_matrix(GateKind::XPow(p), dims),
            WordGate::Z(p) => gate_matrix(GateKind::ZPow(p), dims),
            WordGate::R => gate_matrix(GateKind::R, dims),
            WordGate::H => gate_matrix(GateKind::H, dims),
        }
    }
}

/// Gate word in application order: the first entry acts on the state first,
/// so the matrix of `[g0, g1, g2]` is `g2 * g1 * g0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateWord(pub Vec<WordGate>);

impl GateWord {
    pub fn matrix(&self, dims: QuditDims) -> GateMatrix {
        let mut m = GateMatrix::identity(dims);
        for g in &self.0 {
            m = g.matrix(dims).mul(&m);
        }
        m
    }

    pub fn apply(&self, state: &QuditState) -> QuditState {
        let mut s = state.clone();
        for g in &self.0 {
            s = s.apply(&g.matrix(state.dims()));
        }
        s
    }
}

/// Residual operator of full teleportation for outcomes (k, s):
/// X^{-s} R Z^{-k}, with Z^{-k} acting first.
pub fn byproduct_word(k: usize, s: usize) -> GateWord {
    GateWord(vec![WordGate::Z(-(k as i64)), WordGate::R, WordGate::X(-(s as i64))])
}

/// The two readings of "apply X^s, R and Z^k in order".
#[derive(Clone, Debug)]
pub struct CorrectionOps {
    /// Exact inverse of the byproduct: X^s first, then R, then Z^k
    /// (matrix Z^k R X^s). This is what the protocol applies.
    pub exact_inverse: GateWord,
    /// The same three gates composed as the written product X^s R Z^k,
    /// i.e. Z^k acting first. Equal to the inverse only up to a global
    /// phase at d = 2; kept for the equivalence check.
    pub product_order: GateWord,
}

pub fn correction_ops(k: usize, s: usize, dims: QuditDims) -> CorrectionOps {
    let d = dims.d();
    debug_assert!(k < d && s < d);
    CorrectionOps {
        exact_inverse: GateWord(vec![WordGate::X(s as i64), WordGate::R, WordGate::Z(k as i64)]),
        product_order: GateWord(vec![WordGate::Z(k as i64), WordGate::R, WordGate::X(s as i64)]),
    }
}

/// Extract the outcomes Bob is allowed to use from the message list.
pub fn corrections_from_messages(messages: &[ClassicalMessage]) -> Result<(usize, usize)> {
    let find = |name: &str| {
        messages
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.value)
            .ok_or_else(|| Error::InvalidArgument { reason: format!("no '{name}' in the classical messages") })
    };
    Ok((find("k")?, find("s")?))
}

/// Everything both engines need to run a protocol.
#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub dims: QuditDims,
    pub alpha: Complex64,
    pub engine: Engine,
    pub meas_model: MeasModel,
    pub apply_corrections: bool,
    pub truncation: TruncationPolicy,
    pub heterodyne: HeterodyneConfig,
}

impl ProtocolConfig {
    pub fn ideal(dims: QuditDims) -> Self {
        Self {
            dims,
            alpha: Complex64::ZERO,
            engine: Engine::Ideal,
            meas_model: MeasModel::SubspaceProjective,
            apply_corrections: true,
            truncation: TruncationPolicy::default(),
            heterodyne: HeterodyneConfig::default(),
        }
    }

    pub fn cv(dims: QuditDims, alpha: Complex64) -> Self {
        Self { alpha, engine: Engine::Cv, ..Self::ideal(dims) }
    }

    pub fn with_model(mut self, model: MeasModel) -> Self {
        self.meas_model = model;
        self
    }

    pub fn without_corrections(mut self) -> Self {
        self.apply_corrections = false;
        self
    }
}

/// Record of one teleportation run.
#[derive(Clone, Debug, Serialize)]
pub struct TeleportRecord {
    pub engine: Engine,
    pub meas_model: MeasModel,
    /// (k, s); s is absent for one-step teleportation.
    pub outcomes: (usize, Option<usize>),
    pub messages: Vec<ClassicalMessage>,
    /// Residual operator left on the output, as a gate word.
    pub byproduct: GateWord,
    /// Fidelity of the raw output against the byproduct-adjusted target
    /// (frame tracking, no gates applied).
    pub fidelity_pre_correction: f64,
    /// Fidelity against the input after applying the inverse word; absent
    /// when corrections were not requested.
    pub fidelity_post_correction: Option<f64>,
    pub leakage_total: f64,
    pub seed: u64,
}

/// Maximally entangled pair in either representation.
pub enum BellPair {
    Ideal(MultiQuditState),
    Cv(MultiModeState),
}

/// (1/sqrt d) sum_k |k>|k~>: the single-edge ideal cluster.
pub fn bell_pair_ideal(dims: QuditDims) -> Result<MultiQuditState> {
    let u = MultiQuditState::uniform_product(dims, 2)?;
    cz_apply(&u, 0, 1, 1)
}

/// Cross-Kerr controlled-Z on |alpha>|alpha>.
pub fn bell_pair_cv(dims: QuditDims, alpha: Complex64, n_max: usize) -> Result<MultiModeState> {
    let c = coherent_state(alpha, n_max)?;
    apply_cross_kerr(&tensor(&[c.clone(), c])?, 0, 1, KerrPhase::controlled_z(dims))
}

pub fn bell_pair(dims: QuditDims, alpha: Complex64, engine: Engine, policy: &TruncationPolicy) -> Result<BellPair> {
    match engine {
        Engine::Ideal => Ok(BellPair::Ideal(bell_pair_ideal(dims)?)),
        Engine::Cv => {
            let n_max = truncation_dim(alpha, policy)?;
            Ok(BellPair::Cv(bell_pair_cv(dims, alpha, n_max)?))
        }
    }
}

/// Ideal residual of one-step teleportation: H Z^{-k} |phi>.
fn one_step_target(input: &QuditState, k: usize) -> QuditState {
    let dims = input.dims();
    input
        .apply(&gate_matrix(GateKind::ZPow(-(k as i64)), dims))
        .apply(&gate_matrix(GateKind::H, dims))
}

/// One-step teleportation: entangle the input with a fresh channel qudit via
/// controlled-Z, measure the input side in the pseudo-phase basis, and score
/// the residual against H Z^{-k} |phi>. No correction is applied; the
/// residual itself is the object of interest.
pub fn one_step_teleport(
    input: &QuditState,
    cfg: &ProtocolConfig,
    rng: &mut impl Rng,
    seed: u64,
) -> Result<TeleportRecord> {
    let dims = cfg.dims;
    let (k, residual, leakage) = match cfg.engine {
        Engine::Ideal => {
            let pair = MultiQuditState::product_of(&[input.clone(), QuditState::uniform(dims)])?;
            let pair = cz_apply(&pair, 0, 1, 1)?;
            let m = ideal_measure(&pair, 0, MeasurementBasis::PseudoPhase, rng)?;
            (m.outcome, m.post.into_qudit_state()?, 0.0)
        }
        Engine::Cv => {
            let n_max = truncation_dim(cfg.alpha, &cfg.truncation)?;
            let basis = codeword_subspace(dims, cfg.alpha, n_max)?;
            let state = tensor(&[encode_qudit(input, &basis)?, coherent_state(cfg.alpha, n_max)?])?;
            let state = apply_cross_kerr(&state, 0, 1, KerrPhase::controlled_z(dims))?;
            let (rec, post, leak_meas) =
                measure_pseudo_phase(&state, 0, cfg.meas_model, &basis, &cfg.heterodyne, rng)?;
            let k = rec.outcome.codeword().ok_or(Error::LeakOutcome { mode: 0 })?;
            let (residual, leak_decode) = decode_fock(&post.into_fock_vector()?, &basis)?;
            (k, residual, leak_meas + leak_decode)
        }
    };
    let target = one_step_target(input, k);
    let fidelity_pre_correction = target.fidelity(&residual);
    Ok(TeleportRecord {
        engine: cfg.engine,
        meas_model: cfg.meas_model,
        outcomes: (k, None),
        messages: vec![ClassicalMessage { sender: "alice".into(), name: "k".into(), value: k }],
        byproduct: GateWord(vec![WordGate::Z(-(k as i64)), WordGate::H]),
        fidelity_pre_correction,
        fidelity_post_correction: None,
        leakage_total: leakage,
        seed,
    })
}

/// One-step teleportation on the ideal engine with a forced branch.
pub fn one_step_teleport_forced(input: &QuditState, dims: QuditDims, k: usize) -> Result<TeleportRecord> {
    let pair = MultiQuditState::product_of(&[input.clone(), QuditState::uniform(dims)])?;
    let pair = cz_apply(&pair, 0, 1, 1)?;
    let m = ideal_measure_forced(&pair, 0, MeasurementBasis::PseudoPhase, k)?;
    let residual = m.post.into_qudit_state()?;
    let target = one_step_target(input, k);
    Ok(TeleportRecord {
        engine: Engine::Ideal,
        meas_model: MeasModel::SubspaceProjective,
        outcomes: (k, None),
        messages: vec![ClassicalMessage { sender: "alice".into(), name: "k".into(), value: k }],
        byproduct: GateWord(vec![WordGate::Z(-(k as i64)), WordGate::H]),
        fidelity_pre_correction: target.fidelity(&residual),
        fidelity_post_correction: None,
        leakage_total: 0.0,
        seed: 0,
    })
}

fn assemble_full_record(
    input: &QuditState,
    cfg: &ProtocolConfig,
    k: usize,
    s: usize,
    bob: QuditState,
    leakage_total: f64,
    seed: u64,
) -> Result<TeleportRecord> {
    let dims = cfg.dims;
    let messages = vec![
        ClassicalMessage { sender: "alice".into(), name: "k".into(), value: k },
        ClassicalMessage { sender: "alice".into(), name: "s".into(), value: s },
    ];
    let byproduct = byproduct_word(k, s);
    let target = byproduct.apply(input);
    let fidelity_pre_correction = target.fidelity(&bob);
    // Bob reconstructs the correction from the transmitted messages alone.
    let fidelity_post_correction = if cfg.apply_corrections {
        let (mk, ms) = corrections_from_messages(&messages)?;
        let corrected = correction_ops(mk, ms, dims).exact_inverse.apply(&bob);
        Some(input.fidelity(&corrected))
    } else {
        None
    };
    Ok(TeleportRecord {
        engine: cfg.engine,
        meas_model: cfg.meas_model,
        outcomes: (k, Some(s)),
        messages,
        byproduct,
        fidelity_pre_correction,
        fidelity_post_correction,
        leakage_total,
        seed,
    })
}

/// Full teleportation: Bob entangles |alpha>|alpha> with controlled-Z and
/// hands one half to Alice; Alice couples her state in, measures both her
/// qudits in the pseudo-phase basis, and sends (k, s) to Bob, who inverts the
/// byproduct X^{-s} R Z^{-k}.
pub fn full_teleport(
    input: &QuditState,
    cfg: &ProtocolConfig,
    rng: &mut impl Rng,
    seed: u64,
) -> Result<TeleportRecord> {
    let dims = cfg.dims;
    match cfg.engine {
        Engine::Ideal => {
            let chain = teleport_chain(input)?;
            let m1 = ideal_measure(&chain, 0, MeasurementBasis::PseudoPhase, rng)?;
            let m2 = ideal_measure(&m1.post, 0, MeasurementBasis::PseudoPhase, rng)?;
            let bob = m2.post.into_qudit_state()?;
            assemble_full_record(input, cfg, m1.outcome, m2.outcome, bob, 0.0, seed)
        }
        Engine::Cv => {
            let n_max = truncation_dim(cfg.alpha, &cfg.truncation)?;
            let basis = codeword_subspace(dims, cfg.alpha, n_max)?;
            let fresh = coherent_state(cfg.alpha, n_max)?;
            let state = tensor(&[encode_qudit(input, &basis)?, fresh.clone(), fresh])?;
            // Bob prepares the channel pair, then Alice couples her mode in;
            // the two Kerr gates commute, so the order is conventional.
            let state = apply_cross_kerr(&state, 1, 2, KerrPhase::controlled_z(dims))?;
            let state = apply_cross_kerr(&state, 0, 1, KerrPhase::controlled_z(dims))?;
            let (rec1, state, leak1) =
                measure_pseudo_phase(&state, 0, cfg.meas_model, &basis, &cfg.heterodyne, rng)?;
            let k = rec1.outcome.codeword().ok_or(Error::LeakOutcome { mode: 0 })?;
            let (rec2, state, leak2) =
                measure_pseudo_phase(&state, 0, cfg.meas_model, &basis, &cfg.heterodyne, rng)?;
            let s = rec2.outcome.codeword().ok_or(Error::LeakOutcome { mode: 1 })?;
            let (bob, leak3) = decode_fock(&state.into_fock_vector()?, &basis)?;
            assemble_full_record(input, cfg, k, s, bob, leak1 + leak2 + leak3, seed)
        }
    }
}

/// Full teleportation on the ideal engine with both outcomes forced.
pub fn full_teleport_forced(
    input: &QuditState,
    dims: QuditDims,
    k: usize,
    s: usize,
    apply_corrections: bool,
) -> Result<TeleportRecord> {
    let chain = teleport_chain(input)?;
    let m1 = ideal_measure_forced(&chain, 0, MeasurementBasis::PseudoPhase, k)?;
    let m2 = ideal_measure_forced(&m1.post, 0, MeasurementBasis::PseudoPhase, s)?;
    let bob = m2.post.into_qudit_state()?;
    let mut cfg = ProtocolConfig::ideal(dims);
    cfg.apply_corrections = apply_corrections;
    assemble_full_record(input, &cfg, k, s, bob, 0.0, 0)
}

/// Full ideal-engine teleportation with sampled outcomes and corrections.
pub fn ideal_teleport(input: &QuditState, dims: QuditDims, rng: &mut impl Rng) -> Result<TeleportRecord> {
    full_teleport(input, &ProtocolConfig::ideal(dims), rng, 0)
}

/// Which protocol a trial batch runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProtocolKind {
    OneStep,
    FullTeleport,
}

/// Input state policy for trial batches.
#[derive(Clone, Debug)]
pub enum InputSpec {
    /// A fresh Haar-like random state per trial, drawn from the trial seed.
    RandomHaar,
    /// The same state every trial.
    Fixed(QuditState),
}

#[derive(Clone, Debug)]
pub struct ProtocolDescriptor {
    pub kind: ProtocolKind,
    pub cfg: ProtocolConfig,
    pub input: InputSpec,
    /// Per-trial records kept in the summary, at most this many.
    pub record_cap: usize,
}

/// Deterministic summary of a trial batch.
#[derive(Clone, Debug, Serialize)]
pub struct TrialSummary {
    pub num_trials: usize,
    pub failed_trials: usize,
    pub mean_fidelity_pre: f64,
    pub min_fidelity_pre: f64,
    pub mean_fidelity_post: Option<f64>,
    pub min_fidelity_post: Option<f64>,
    /// Counts indexed by k (one-step) or k*d + s (full teleportation);
    /// successful trials only.
    pub outcome_histogram: Vec<u64>,
    pub mean_leakage: f64,
    pub max_leakage: f64,
    pub records: Vec<TeleportRecord>,
}

/// Run `num_trials` seeded trials; trial i uses the derived seed (seed, i),
/// so any single trial replays in isolation.
pub fn run_trials(desc: &ProtocolDescriptor, num_trials: usize, seed: u64) -> Result<TrialSummary> {
    if num_trials == 0 {
        return Err(Error::InvalidArgument { reason: "num_trials must be >= 1".into() });
    }
    let d = desc.cfg.dims.d();
    let hist_len = match desc.kind {
        ProtocolKind::OneStep => d,
        ProtocolKind::FullTeleport => d * d,
    };
    let mut summary = TrialSummary {
        num_trials,
        failed_trials: 0,
        mean_fidelity_pre: 0.0,
        min_fidelity_pre: f64::INFINITY,
        mean_fidelity_post: None,
        min_fidelity_post: None,
        outcome_histogram: vec![0; hist_len],
        mean_leakage: 0.0,
        max_leakage: 0.0,
        records: Vec::new(),
    };
    let mut post_sum = 0.0;
    let mut post_min = f64::INFINITY;
    let mut successes = 0usize;
    for i in 0..num_trials {
        let trial_seed = derive_seed(seed, i as u64);
        let mut rng = rng_from_seed(trial_seed);
        let input = match &desc.input {
            InputSpec::RandomHaar => QuditState::random(desc.cfg.dims, &mut rng),
            InputSpec::Fixed(q) => q.clone(),
        };
        let result = match desc.kind {
            ProtocolKind::OneStep => one_step_teleport(&input, &desc.cfg, &mut rng, trial_seed),
            ProtocolKind::FullTeleport => full_teleport(&input, &desc.cfg, &mut rng, trial_seed),
        };
        match result {
            Ok(record) => {
                successes += 1;
                summary.mean_fidelity_pre += record.fidelity_pre_correction;
                summary.min_fidelity_pre = summary.min_fidelity_pre.min(record.fidelity_pre_correction);
                if let Some(f) = record.fidelity_post_correction {
                    post_sum += f;
                    post_min = post_min.min(f);
                }
                summary.mean_leakage += record.leakage_total;
                summary.max_leakage = summary.max_leakage.max(record.leakage_total);
                let slot = match record.outcomes {
                    (k, Some(s)) => k * d + s,
                    (k, None) => k,
                };
                summary.outcome_histogram[slot] += 1;
                if summary.records.len() < desc.record_cap {
                    summary.records.push(record);
                }
            }
            Err(_) => summary.failed_trials += 1,
        }
    }
    if successes > 0 {
        summary.mean_fidelity_pre /= successes as f64;
        summary.mean_leakage /= successes as f64;
        if desc.cfg.apply_corrections && desc.kind == ProtocolKind::FullTeleport {
            summary.mean_fidelity_post = Some(post_sum / successes as f64);
            summary.min_fidelity_post = Some(post_min);
        }
    } else {
        summary.mean_fidelity_pre = 0.0;
        summary.min_fidelity_pre = 0.0;
    }
    Ok(summary)
}

/// Decoded entanglement entropy (nats) of a CV Bell pair, with its leakage.
pub fn cv_bell_entropy(dims: QuditDims, alpha: Complex64, policy: &TruncationPolicy) -> Result<(f64, f64)> {
    let n_max = truncation_dim(alpha, policy)?;
    let bell = bell_pair_cv(dims, alpha, n_max)?;
    let basis = codeword_subspace(dims, alpha, n_max)?;
    let (decoded, leakage) = crate::cv::decode_cv(&bell, &basis)?;
    Ok((decoded.entanglement_entropy_nats(1)?, leakage))
}

/// Fidelity of the decoded CV cluster against the ideal cluster on the same
/// graph, with the decode leakage.
pub fn cv_cluster_fidelity(
    graph: &ClusterGraph,
    dims: QuditDims,
    alpha: Complex64,
    policy: &TruncationPolicy,
) -> Result<(f64, f64)> {
    let n_max = truncation_dim(alpha, policy)?;
    let cv = crate::cv::build_cv_cluster(graph, dims, alpha, KerrPhase::controlled_z(dims), n_max)?;
    let basis = codeword_subspace(dims, alpha, n_max)?;
    let (decoded, leakage) = crate::cv::decode_cv(&cv, &basis)?;
    let ideal = crate::qudit::ideal_cluster(graph, dims)?;
    Ok((decoded.fidelity(&ideal), leakage))
}

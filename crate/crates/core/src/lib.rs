//! Simulation of coherent-state optical qudits.
//!
//! A coherent state |alpha> splits into d pseudo-number sectors (photon number
//! fixed mod d), which makes a single optical mode behave as a d-level system
//! once |alpha| is large against d/(2 pi). Two engines realize the same
//! protocols:
//!
//! * [`qudit`] — the exact ideal qudit model (generalized H/X/Z/R gates,
//!   controlled-Z, cluster states, projective measurement);
//! * [`cv`] + [`measurement`] — the physical picture in truncated Fock space
//!   (cross-Kerr controlled-Z, codeword subspace, subspace-projective and
//!   double-homodyne measurement models).
//!
//! [`protocols`] composes both into Bell-pair generation, one-step
//! teleportation, and full teleportation with classical corrections, and
//! quantifies how the physical implementation converges to the ideal model as
//! |alpha| grows.

pub mod cv;
pub mod error;
pub mod fock;
pub mod measurement;
pub mod protocols;
pub mod qudit;
pub mod seed;

pub use error::{Error, Result};
pub use fock::{coherent_state, FockVector, TruncationPolicy};
pub use qudit::{GateKind, GateMatrix, MeasurementBasis, QuditDims, QuditState};

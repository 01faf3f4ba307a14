//! Error type shared by all simulator modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The requested amplitude needs more Fock levels than the hard cap allows
    /// while the photon-number tail above the cap is still non-negligible.
    #[error(
        "|alpha| = {alpha_abs:.3} needs n_max = {required} for tail <= {tolerance:.1e}, \
         but the hard cap is {hard_cap} (tail above cap: {tail:.3e})"
    )]
    AmplitudeTooLarge {
        alpha_abs: f64,
        required: usize,
        hard_cap: usize,
        tail: f64,
        tolerance: f64,
    },

    #[error("photon-number tail above n_max = {n_max} is {tail:.3e}, exceeding tolerance {tolerance:.1e}")]
    TailTooLarge { n_max: usize, tail: f64, tolerance: f64 },

    #[error("invalid truncation policy: {reason}")]
    InvalidPolicy { reason: String },

    #[error("invalid argument: {reason}")]
    InvalidArgument { reason: String },

    /// Under truncation the k-sector of the coherent state carries essentially
    /// no weight; alpha is far too small for this d.
    #[error("pseudo-number sector k = {k} of d = {d} is empty at |alpha| = {alpha_abs:.3} (raw norm^2 = {norm_sqr:.3e})")]
    EmptySector { k: usize, d: usize, alpha_abs: f64, norm_sqr: f64 },

    #[error("site {site} out of range for {num_sites} sites")]
    SiteOutOfRange { site: usize, num_sites: usize },

    #[error("mode {mode} out of range for {num_modes} modes")]
    ModeOutOfRange { mode: usize, num_modes: usize },

    #[error("state of {requested} amplitudes exceeds the configured cap of {cap}")]
    AmplitudeCapExceeded { requested: usize, cap: usize },

    #[error("{requested} modes exceed the configured cap of {cap}")]
    ModeCapExceeded { requested: usize, cap: usize },

    #[error("measurement probabilities sum to {total} instead of 1; upstream state is not normalized")]
    ProbabilityNotNormalized { total: f64 },

    #[error("all measurement outcomes have zero probability")]
    DegenerateProbabilities,

    #[error("heterodyne grid captures only {mass} of the state; enlarge grid_radius_sigmas")]
    GridMassTooSmall { mass: f64 },

    #[error("zero-magnitude quadrature sample has no phase; resample")]
    ZeroMagnitudeSample,

    #[error("leakage {leakage:.3e} outside the codeword subspace exceeds the abort threshold {threshold}")]
    LeakageAbort { leakage: f64, threshold: f64 },

    /// A subspace measurement landed in the orthogonal-leak outcome; the
    /// protocol that requested it cannot continue on this trial.
    #[error("subspace measurement on mode {mode} produced the leak outcome")]
    LeakOutcome { mode: usize },

    #[error("dimension mismatch: {reason}")]
    DimensionMismatch { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

//! Single-mode truncated Fock-space primitives: coherent states, number-basis
//! phase rotations, overlaps, and the modulo-d partial sums of the exponential
//! series that underpin the pseudo-number construction.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// How aggressively a coherent state is truncated in photon number.
///
/// `n_max` is chosen as `|alpha|^2 + margin_sigmas*|alpha| + margin_sigmas`,
/// clamped to `hard_cap`, and the Poisson tail above it must stay below
/// `tail_tolerance`.
#[derive(Clone, Copy, Debug)]
pub struct TruncationPolicy {
    pub margin_sigmas: f64,
    pub hard_cap: usize,
    pub tail_tolerance: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        // Keeps 3-mode tensors below ~1.7e7 amplitudes for |alpha| <= 6 while
        // making truncation error negligible against the d-vs-alpha effects
        // under study.
        Self { margin_sigmas: 8.0, hard_cap: 256, tail_tolerance: 1e-10 }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin_sigmas > 0.0) {
            return Err(Error::InvalidPolicy { reason: format!("margin_sigmas = {} must be > 0", self.margin_sigmas) });
        }
        if self.hard_cap < 1 {
            return Err(Error::InvalidPolicy { reason: "hard_cap must be >= 1".into() });
        }
        if !(self.tail_tolerance > 0.0 && self.tail_tolerance < 1.0) {
            return Err(Error::InvalidPolicy { reason: format!("tail_tolerance = {} must be in (0, 1)", self.tail_tolerance) });
        }
        Ok(())
    }
}

/// Complex amplitude vector over the photon-number basis |0>..|n_max> of one
/// optical mode.
#[derive(Clone, Debug)]
pub struct FockVector {
    amplitudes: Vec<Complex64>,
    alpha_ref: Option<Complex64>,
}

impl FockVector {
    /// Wrap raw amplitudes; the vector owns whatever normalization they carry.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Self {
        assert!(!amplitudes.is_empty(), "a Fock vector needs at least the vacuum level");
        Self { amplitudes, alpha_ref: None }
    }

    pub fn with_alpha_ref(mut self, alpha: Complex64) -> Self {
        self.alpha_ref = Some(alpha);
        self
    }

    /// Number state |n> embedded in an (n_max+1)-dimensional mode.
    pub fn number_state(n: usize, n_max: usize) -> Self {
        assert!(n <= n_max);
        let mut amplitudes = vec![Complex64::ZERO; n_max + 1];
        amplitudes[n] = Complex64::ONE;
        Self { amplitudes, alpha_ref: None }
    }

    pub fn n_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Amplitude of |n>, zero above the truncation bound.
    pub fn amp(&self, n: usize) -> Complex64 {
        self.amplitudes.get(n).copied().unwrap_or(Complex64::ZERO)
    }

    pub fn alpha_ref(&self) -> Option<Complex64> {
        self.alpha_ref
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Unit-norm copy; panics on the zero vector.
    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        assert!(n > 0.0, "cannot normalize the zero vector");
        let amplitudes = self.amplitudes.iter().map(|a| a / n).collect();
        Self { amplitudes, alpha_ref: self.alpha_ref }
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            amplitudes: self.amplitudes.iter().map(|a| a * c).collect(),
            alpha_ref: self.alpha_ref,
        }
    }
}

/// Truncation bound for a coherent state of amplitude `alpha` under `policy`.
///
/// Fails when the Poisson tail above the best allowed bound still exceeds the
/// policy tolerance, i.e. the amplitude is too large for the memory budget.
pub fn truncation_dim(alpha: Complex64, policy: &TruncationPolicy) -> Result<usize> {
    policy.validate()?;
    let a = alpha.norm();
    let wanted = (a * a + policy.margin_sigmas * a + policy.margin_sigmas).ceil() as usize;
    let n_max = wanted.min(policy.hard_cap);
    let tail = poisson_tail_above(a * a, n_max);
    if tail > policy.tail_tolerance {
        if n_max < wanted {
            Err(Error::AmplitudeTooLarge {
                alpha_abs: a,
                required: wanted,
                hard_cap: policy.hard_cap,
                tail,
                tolerance: policy.tail_tolerance,
            })
        } else {
            Err(Error::TailTooLarge { n_max, tail, tolerance: policy.tail_tolerance })
        }
    } else {
        Ok(n_max)
    }
}

/// Poisson tail mass above `n_max` for mean `x = |alpha|^2`.
pub fn poisson_tail_above(x: f64, n_max: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // At or past the distribution peak the tail terms decay monotonically and
    // can be summed directly; before the peak (cap-bound case) the head is the
    // numerically safe side.
    if (n_max as f64) >= x {
        let ln_t = -x + (n_max as f64 + 1.0) * x.ln() - ln_factorial(n_max + 1);
        if ln_t < -745.0 {
            return 0.0;
        }
        let mut t = ln_t.exp();
        let mut sum = t;
        let mut n = n_max + 1;
        loop {
            n += 1;
            t *= x / n as f64;
            sum += t;
            if t < sum * 1e-18 || t == 0.0 {
                break;
            }
        }
        sum
    } else {
        let mut head = 0.0;
        for n in 0..=n_max {
            let ln_t = -x + n as f64 * x.ln() - ln_factorial(n);
            if ln_t > -745.0 {
                head += ln_t.exp();
            }
        }
        (1.0 - head).max(0.0)
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Coherent-state amplitudes without any tail validation; internal building
/// block also used for heterodyne bra vectors whose own tail is irrelevant.
pub(crate) fn coherent_amplitudes(alpha: Complex64, n_max: usize) -> Vec<Complex64> {
    // Stable recursion amp[n+1] = amp[n] * alpha / sqrt(n+1), seeded with the
    // Gaussian prefactor; avoids factorial evaluation.
    let mut amps = Vec::with_capacity(n_max + 1);
    let mut a = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amps.push(a);
    for n in 0..n_max {
        a *= alpha / ((n + 1) as f64).sqrt();
        amps.push(a);
    }
    amps
}

/// Coherent state |alpha> truncated at `n_max`, amplitudes
/// `e^{-|alpha|^2/2} alpha^n / sqrt(n!)`.
pub fn coherent_state(alpha: Complex64, n_max: usize) -> Result<FockVector> {
    coherent_state_with_tolerance(alpha, n_max, TruncationPolicy::default().tail_tolerance)
}

pub fn coherent_state_with_tolerance(alpha: Complex64, n_max: usize, tail_tolerance: f64) -> Result<FockVector> {
    let tail = poisson_tail_above(alpha.norm_sqr(), n_max);
    if tail > tail_tolerance {
        return Err(Error::TailTooLarge { n_max, tail, tolerance: tail_tolerance });
    }
    Ok(FockVector { amplitudes: coherent_amplitudes(alpha, n_max), alpha_ref: Some(alpha) })
}

/// Number-operator phase rotation: amp[n] <- e^{i theta n} amp[n].
pub fn apply_phase_rotation(state: &FockVector, theta: f64) -> FockVector {
    let amplitudes = state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(n, a)| a * Complex64::from_polar(1.0, theta * n as f64))
        .collect();
    FockVector { amplitudes, alpha_ref: state.alpha_ref }
}

/// Inner product <a|b>, zero-padding the shorter vector.
pub fn overlap(a: &FockVector, b: &FockVector) -> Complex64 {
    a.amplitudes
        .iter()
        .zip(b.amplitudes.iter())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// Fidelity |<a|b>|^2.
pub fn fidelity(a: &FockVector, b: &FockVector) -> f64 {
    overlap(a, b).norm_sqr()
}

/// Partial exponential sum `f_k(x) = sum_{m>=0} x^{k+md} / (k+md)!`.
///
/// The d partial sums tile the full series, `sum_k f_k(x) = e^x`, and each
/// approaches `e^x / d` as x grows. Terms are folded one factor at a time so
/// neither powers nor factorials are ever materialized.
pub fn partial_exp_sum(k: usize, d: usize, x: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument { reason: "d must be >= 1".into() });
    }
    if k >= d {
        return Err(Error::InvalidArgument { reason: format!("k = {k} must be < d = {d}") });
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument { reason: format!("x = {x} must be >= 0") });
    }
    if x > 700.0 {
        return Err(Error::InvalidArgument { reason: format!("x = {x} overflows e^x in f64") });
    }
    // Leading term x^k / k!.
    let mut term = 1.0;
    for j in 1..=k {
        term *= x / j as f64;
    }
    let mut sum = term;
    let mut offset = k;
    loop {
        for j in 1..=d {
            term *= x / (offset + j) as f64;
        }
        offset += d;
        sum += term;
        if term == 0.0 || term < sum * 1e-18 {
            break;
        }
        if offset > 1_000_000 {
            break;
        }
    }
    Ok(sum)
}

/// One row of the asymptotic-ratio diagnostic table.
#[derive(Clone, Copy, Debug)]
pub struct AsymptoticRow {
    pub x: f64,
    /// max over k of |d * e^{-x} * f_k(x) - 1|.
    pub max_deviation: f64,
}

/// Deviation of each partial sum from its asymptote e^x/d over a grid of x.
pub fn asymptotic_ratio_report(d: usize, x_list: &[f64]) -> Result<Vec<AsymptoticRow>> {
    if d == 0 {
        return Err(Error::InvalidArgument { reason: "d must be >= 1".into() });
    }
    if x_list.is_empty() {
        return Err(Error::InvalidArgument { reason: "x_list must be nonempty".into() });
    }
    for w in x_list.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidArgument { reason: "x_list must be strictly increasing".into() });
        }
    }
    if !(x_list[0] > 0.0) {
        return Err(Error::InvalidArgument { reason: "x_list must be positive".into() });
    }
    x_list
        .iter()
        .map(|&x| {
            let scale = (-x).exp() * d as f64;
            let mut max_dev: f64 = 0.0;
            for k in 0..d {
                let dev = (scale * partial_exp_sum(k, d, x)? - 1.0).abs();
                max_dev = max_dev.max(dev);
            }
            Ok(AsymptoticRow { x, max_deviation: max_dev })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C64;
    use std::f64::consts::{E, PI};

    #[test]
    fn truncation_dim_vacuum_is_small_with_zero_tail() {
        let n_max = truncation_dim(C64::ZERO, &TruncationPolicy::default()).unwrap();
        assert_eq!(n_max, 8);
        assert_eq!(poisson_tail_above(0.0, n_max), 0.0);
    }

    #[test]
    fn truncation_dim_alpha_five_matches_margin_formula() {
        let n_max = truncation_dim(C64::new(5.0, 0.0), &TruncationPolicy::default()).unwrap();
        assert_eq!(n_max, 73);
        // Frozen from the direct Poisson tail oracle: 1.76e-15.
        assert!(poisson_tail_above(25.0, 73) < 1e-8);
    }

    #[test]
    fn truncation_dim_rejects_alpha_beyond_hard_cap() {
        let policy = TruncationPolicy { hard_cap: 40, ..TruncationPolicy::default() };
        let err = truncation_dim(C64::new(6.0, 0.0), &policy).unwrap_err();
        assert!(matches!(err, Error::AmplitudeTooLarge { .. }), "got {err:?}");
    }

    #[test]
    fn coherent_vacuum_is_the_number_vacuum() {
        let v = coherent_state(C64::ZERO, 5).unwrap();
        assert_abs_diff_eq!(v.amp(0).re, 1.0, epsilon = 1e-15);
        for n in 1..=5 {
            assert_eq!(v.amp(n), C64::ZERO);
        }
    }

    #[test]
    fn coherent_mean_photon_number_is_alpha_squared() {
        let v = coherent_state(C64::new(4.0, 0.0), 60).unwrap();
        assert_abs_diff_eq!(v.mean_photon_number(), 16.0, epsilon = 1e-6);
    }

    #[test]
    fn coherent_single_photon_weight_matches_poisson() {
        let v = coherent_state(C64::new(0.0, 2.0), 40).unwrap();
        assert_abs_diff_eq!(v.amp(1).norm_sqr(), (-4.0f64).exp() * 4.0, epsilon = 1e-12);
    }

    #[test]
    fn coherent_norm_plus_tail_is_one() {
        for alpha in [C64::new(2.0, 1.0), C64::new(5.0, 0.0), C64::new(0.0, 3.5)] {
            let n_max = truncation_dim(alpha, &TruncationPolicy::default()).unwrap();
            let v = coherent_state(alpha, n_max).unwrap();
            let tail = poisson_tail_above(alpha.norm_sqr(), n_max);
            assert_abs_diff_eq!(v.norm_sqr() + tail, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn phase_rotation_zero_is_identity() {
        let v = coherent_state(C64::new(1.5, 0.5), 30).unwrap();
        let r = apply_phase_rotation(&v, 0.0);
        for (a, b) in v.amplitudes().iter().zip(r.amplitudes()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn phase_rotation_by_sector_angle_rotates_alpha() {
        let d = 4.0;
        let alpha = C64::new(3.0, 0.0);
        let v = coherent_state(alpha, 60).unwrap();
        let rotated = apply_phase_rotation(&v, 2.0 * PI / d);
        let omega = C64::from_polar(1.0, 2.0 * PI / d);
        let target = coherent_state(omega * alpha, 60).unwrap();
        assert!((1.0 - fidelity(&rotated, &target)).abs() < 1e-12);
    }

    #[test]
    fn phase_rotation_full_turn_fixes_number_states() {
        let v = FockVector::number_state(7, 12);
        let r = apply_phase_rotation(&v, 2.0 * PI);
        assert!((r.amp(7) - C64::ONE).norm() < 1e-12);
    }

    #[test]
    fn overlap_of_normalized_state_with_itself_is_one() {
        let v = coherent_state(C64::new(2.0, -1.0), 50).unwrap();
        assert_abs_diff_eq!(overlap(&v, &v).re, v.norm_sqr(), epsilon = 1e-14);
        assert!((overlap(&v, &v).re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn overlap_of_coherent_states_matches_closed_form() {
        let a = C64::new(2.0, 0.0);
        let b = C64::new(1.0, 1.0);
        let va = coherent_state(a, 40).unwrap();
        let vb = coherent_state(b, 40).unwrap();
        let expected = ((a.norm_sqr() + b.norm_sqr()) * -0.5 + a.conj() * b).exp();
        let got = overlap(&va, &vb);
        assert!((got - expected).norm() < 1e-10, "got {got}, expected {expected}");
    }

    #[test]
    fn overlap_of_distinct_number_states_is_zero() {
        let v0 = FockVector::number_state(0, 3);
        let v1 = FockVector::number_state(1, 3);
        assert_eq!(overlap(&v0, &v1), C64::ZERO);
    }

    #[test]
    fn partial_sum_with_d_one_is_the_exponential() {
        let f = partial_exp_sum(0, 1, 3.0).unwrap();
        assert!((f / E.powi(3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_sum_at_zero_keeps_only_the_constant_term() {
        assert_eq!(partial_exp_sum(2, 4, 0.0).unwrap(), 0.0);
        assert_eq!(partial_exp_sum(0, 4, 0.0).unwrap(), 1.0);
    }

    /// Independent oracle: d e^{-x} f_k(x) = sum_j omega^{-jk} e^{x(omega^j - 1)}.
    fn roots_of_unity_ratio(k: usize, d: usize, x: f64) -> C64 {
        (0..d)
            .map(|j| {
                let omega_j = C64::from_polar(1.0, 2.0 * PI * j as f64 / d as f64);
                C64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / d as f64) * (x * (omega_j - 1.0)).exp()
            })
            .sum()
    }

    #[test]
    fn partial_sums_match_roots_of_unity_oracle_at_d4_x25() {
        let (d, x): (usize, f64) = (4, 25.0);
        for k in 0..d {
            let direct = d as f64 * (-x).exp() * partial_exp_sum(k, d, x).unwrap();
            let oracle = roots_of_unity_ratio(k, d, x);
            assert!((direct - oracle.re).abs() < 1e-12, "k={k}: {direct} vs {oracle}");
            assert!((direct - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn asymptotic_report_is_flat_for_d_one() {
        let rows = asymptotic_ratio_report(1, &[1.0, 10.0, 100.0]).unwrap();
        for row in rows {
            assert!(row.max_deviation < 1e-13);
        }
    }

    #[test]
    fn asymptotic_report_decreases_for_d_four() {
        let rows = asymptotic_ratio_report(4, &[4.0, 9.0, 16.0, 25.0]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].max_deviation < w[0].max_deviation, "{:?}", rows);
        }
        // Frozen oracle values: 2.81e-2, 2.25e-4, 2.16e-7, 2.75e-11.
        assert!((rows[0].max_deviation / 2.8058e-2 - 1.0).abs() < 1e-3);
        assert!((rows[3].max_deviation / 2.7532e-11 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn asymptotic_deviation_at_d8_x25_sits_in_the_predicted_band() {
        let rows = asymptotic_ratio_report(8, &[25.0]).unwrap();
        let dev = rows[0].max_deviation;
        // Dominant oracle term is e^{x(cos(2pi/8)-1)} = 6.59e-4; the measured
        // max over k is 1.224e-3 (the conjugate pair nearly aligns).
        assert!(dev > 2e-4 && dev < 2e-3, "deviation {dev}");
        let oracle_max = (0..8)
            .map(|k| (roots_of_unity_ratio(k, 8, 25.0) - 1.0).norm())
            .fold(0.0f64, f64::max);
        assert!((dev / oracle_max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn partial_sums_tile_the_exponential() {
        for d in [1usize, 2, 3, 8, 32] {
            for x in [0.5, 25.0, 200.0] {
                let total: f64 = (0..d).map(|k| partial_exp_sum(k, d, x).unwrap()).sum();
                assert!((total / x.exp() - 1.0).abs() < 1e-12, "d={d} x={x}");
            }
        }
    }
}

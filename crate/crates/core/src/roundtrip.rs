//! Forward → inverse → forward checks against a known matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bandmatrix::{BandMatrix, BandMatrixError};
use crate::forward::{spectral_function, ForwardError};
use crate::inverse::{reconstruct, InverseError, Reconstruction, ReconstructionOptions, DEFAULT_BAND_TOL};
use crate::measure::MatrixMeasure;
use crate::random::{random_initial_conditions, random_member, ClassSpec, RandomSpecError};
use crate::recurrence::InitialConditions;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoundTripError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Inverse(#[from] InverseError),
    #[error(transparent)]
    Matrix(#[from] BandMatrixError),
    #[error(transparent)]
    Random(#[from] RandomSpecError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTripTolerances {
    pub entry: f64,
    pub moment: f64,
    pub band: f64,
}

impl Default for RoundTripTolerances {
    fn default() -> Self {
        Self { entry: 1e-7, moment: 1e-7, band: DEFAULT_BAND_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub n: usize,
    #[serde(rename = "N")]
    pub size: usize,
    pub expected_profile: Vec<usize>,
    pub recovered_profile: Vec<usize>,
    pub detected_degenerations: Vec<usize>,
    pub rows_checked: usize,
    pub max_entry_error: f64,
    /// `(i, k)` of the worst entry `d_k^(i)`.
    pub worst_entry: Option<(usize, usize)>,
    pub moment_order: usize,
    pub max_moment_error: f64,
    pub pass: bool,
}

impl RoundTripReport {
    pub fn profile_ok(&self) -> bool {
        self.recovered_profile == self.expected_profile && self.detected_degenerations == self.expected_profile
    }
}

/// A seeded member of 𝓜(n, size) with the given degenerations and a
/// random 𝒯, drawn from one ChaCha8 stream.
pub fn seeded_case(n: usize, size: usize, m: Vec<usize>, seed: u64) -> Result<(BandMatrix, InitialConditions), RandomSpecError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_member(&ClassSpec::new(n, size, m), &mut rng)?;
    let t = random_initial_conditions(n, &mut rng);
    Ok((a, t))
}

/// `(K, max_k |S_k(out) − S_k(in)| / Σ_l |x_l|^k ‖W_l‖)` with `K =
/// ⌈2h(p̃_{K_p})/n⌉`, comparing `sigma` to the measure of the assembled
/// matrix under the extracted 𝒯.
pub fn measure_round_trip(sigma: &MatrixMeasure, rec: &Reconstruction) -> Result<(usize, f64), RoundTripError> {
    let n = sigma.n();
    let order = rec.state.p_heights.last().map_or(0, |&h| (2 * h).div_ceil(n));
    let back = spectral_function(&rec.matrix, &rec.t, rec.matrix.size())?;
    let a = sigma.moments(order).moments;
    let b = back.moments(order).moments;
    let mut worst = 0.0f64;
    for k in 0..=order {
        let scale: f64 = sigma
            .atoms()
            .iter()
            .map(|at| at.x.abs().powi(k as i32) * at.weight.amax())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        worst = worst.max((&a[k] - &b[k]).amax() / scale);
    }
    Ok((order, worst))
}

/// Runs `a`'s top `size` block through forward and inverse and compares
/// entries on rows `k ≤ size − n`, the profile and the moments.
pub fn matrix_round_trip(
    a: &BandMatrix,
    t: &InitialConditions,
    size: usize,
    options: &ReconstructionOptions,
    tol: &RoundTripTolerances,
) -> Result<RoundTripReport, RoundTripError> {
    let sigma = spectral_function(a, t, size)?;
    let rec = reconstruct(&sigma, options, tol.band)?;
    compare_reconstruction(a, size, &sigma, &rec, tol)
}

/// Compares a reconstruction of `sigma = σ_size^𝒯(a)` against `a`.
pub fn compare_reconstruction(
    a: &BandMatrix,
    size: usize,
    sigma: &MatrixMeasure,
    rec: &Reconstruction,
    tol: &RoundTripTolerances,
) -> Result<RoundTripReport, RoundTripError> {
    let n = a.n();
    let expected = a.truncate(size)?.validate()?;
    let rows = size.saturating_sub(n);
    let mut max_entry_error = 0.0f64;
    let mut worst_entry = None;
    for i in 0..=n {
        for k in 1..=rows {
            let got = if k + i <= rec.matrix.size() { rec.matrix.d(i, k) } else { f64::INFINITY };
            let err = (got - a.d(i, k)).abs();
            if !(err <= max_entry_error) {
                max_entry_error = err;
                worst_entry = Some((i, k));
            }
        }
    }
    let (moment_order, max_moment_error) = measure_round_trip(sigma, rec)?;
    let mut report = RoundTripReport {
        n,
        size,
        expected_profile: expected.m,
        recovered_profile: rec.profile.m.clone(),
        detected_degenerations: rec.degenerations.clone(),
        rows_checked: rows,
        max_entry_error,
        worst_entry,
        moment_order,
        max_moment_error,
        pass: false,
    };
    report.pass = report.profile_ok() && max_entry_error <= tol.entry && max_moment_error <= tol.moment;
    Ok(report)
}

//! The direct problem: eigen-decomposition of a finite truncation and the
//! matrix-valued spectral function σ_N^𝒯 built from it.

mod jacobi;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::bandmatrix::{BandMatrix, BandMatrixError};
use crate::measure::{MatrixMeasure, MeasureError};
use crate::recurrence::{heights_from_profile, run_generators, run_recurrence, InitialConditions};

use crate::compensated::CompensatedValues;
use twofloat::TwoFloat;

pub use jacobi::{eigensolve, EigenDecomposition};

/// Eigenvalues closer than this fraction of the spectral spread share an atom.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row},{col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("Jacobi iteration did not converge in {sweeps} sweeps (off-diagonal mass {off_diagonal:e})")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },
    #[error("N must be >= n0+m_j0 = {needed}, got {size}")]
    BelowConventionBound { size: usize, needed: usize },
    #[error("initial conditions are {t}x{t} but the matrix half-width is {n}")]
    DimensionMismatch { t: usize, n: usize },
    #[error(transparent)]
    Matrix(#[from] BandMatrixError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// One atom of σ_N^𝒯 before merging into a measure: the eigenvalue, the
/// α-vectors of its eigenvectors and `W = Σ α αᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralJump {
    pub x: f64,
    pub alphas: Vec<DVector<f64>>,
    pub weight: DMatrix<f64>,
}

/// Solves `v_i = Σ_j α_j t_ji` (`i = 1..n`), i.e. `𝒯ᵀ α = v[..n]`, by
/// forward substitution in double-double.
pub fn alpha_coefficients(v: &[f64], t: &InitialConditions) -> DVector<f64> {
    let tm = t.matrix();
    let n = t.n();
    let mut alpha: Vec<TwoFloat> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = TwoFloat::from(v[i]);
        for (j, a) in alpha.iter().enumerate() {
            s -= *a * tm[(j, i)];
        }
        alpha.push(s / tm[(i, i)]);
    }
    DVector::from_iterator(n, alpha.iter().map(|a| a.hi() + a.lo()))
}

fn check(a: &BandMatrix, t: &InitialConditions, size: usize) -> Result<BandMatrix, ForwardError> {
    if t.n() != a.n() {
        return Err(ForwardError::DimensionMismatch { t: t.n(), n: a.n() });
    }
    let profile = a.validate()?;
    let needed = profile.min_truncation();
    if size < needed {
        return Err(ForwardError::BelowConventionBound { size, needed });
    }
    Ok(a.truncate(size)?)
}

/// Rows whose eigenvector component is at least this fraction of the
/// largest one take part in the least-squares fit for `α`.
const FIT_ROW_FRACTION: f64 = 1e-3;
/// `α` comes straight from the first components of `v` when all of them
/// exceed this fraction of `max|v|`.
const DIRECT_FRACTION: f64 = 1e-2;
const REFINEMENT_STEPS: usize = 3;
/// The fit is rejected when a pivot of its column-scaled QR falls below this
/// fraction of the largest.
const MIN_PIVOT_RATIO: f64 = 1e-12;

/// `α` from the eigenvector where it is large: the least-squares solution
/// of `p_k(x)ᵀ α = v_k` over the rows down to the last one with `|v_k| ≥
/// FIT_ROW_FRACTION·max|v|`, together with `q_j(x)ᵀ α = 0`. Agrees with
/// [`alpha_coefficients`] in exact arithmetic, but keeps its relative
/// accuracy when the first components of `v` are tiny. Residuals are taken
/// in double-double and fed back through the QR factorization. `None` if the
/// rows do not determine `α` in floating point.
fn alpha_least_squares(
    p: &[CompensatedValues],
    q: &[CompensatedValues],
    l: usize,
    v: &[f64],
) -> Option<DVector<f64>> {
    let n = p[0].n();
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let last = (0..p.len()).rev().find(|&k| v[k].abs() >= FIT_ROW_FRACTION * vmax)?;
    let row_norm = |r: &[TwoFloat]| r.iter().map(|x| x.hi() * x.hi()).sum::<f64>().sqrt();
    let scale = p[..=last].iter().map(|pk| row_norm(pk.at(l))).fold(0.0f64, f64::max);

    let mut exact: Vec<Vec<TwoFloat>> = p[..=last].iter().map(|pk| pk.at(l).to_vec()).collect();
    let mut rhs: Vec<f64> = v[..=last].to_vec();
    for qj in q {
        let norm = row_norm(qj.at(l));
        if norm > 0.0 {
            exact.push(qj.at(l).iter().map(|&x| x * (scale / norm)).collect());
            rhs.push(0.0);
        }
    }
    if exact.len() < n {
        return None;
    }
    let mut m = DMatrix::from_fn(exact.len(), n, |r, c| exact[r][c].hi());
    let mut norms = Vec::with_capacity(n);
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        col /= norm;
        norms.push(norm);
    }
    let qr = m.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= MIN_PIVOT_RATIO * diag_max) {
        return None;
    }
    let qt = qr.q().transpose();
    let solve = |b: DVector<f64>| {
        r.solve_upper_triangular(&(&qt * b)).map(|beta| beta.iter().zip(&norms).map(|(b, s)| b / s).collect::<Vec<f64>>())
    };
    let mut alpha = solve(DVector::from_vec(rhs.clone()))?;
    for _ in 0..REFINEMENT_STEPS {
        let residual = DVector::from_iterator(
            exact.len(),
            exact.iter().zip(&rhs).map(|(row, &b)| {
                let fit = row.iter().zip(&alpha).fold(TwoFloat::from(0.0), |acc, (&x, &a)| acc + x * a);
                let res = TwoFloat::from(b) - fit;
                res.hi() + res.lo()
            }),
        );
        let delta = solve(residual)?;
        alpha.iter_mut().zip(&delta).for_each(|(a, d)| *a += d);
    }
    Some(DVector::from_vec(alpha))
}

/// `vᵀAv / vᵀv` over the band of the leading `size` block, accumulated in
/// double-double. Accurate to second order in the eigenvector error.
fn rayleigh_quotient(a: &BandMatrix, size: usize, v: &[f64]) -> f64 {
    let n = a.n();
    let zero = TwoFloat::from(0.0);
    let mut num = zero;
    let mut den = zero;
    for k in 1..=size {
        let vk = v[k - 1];
        den += TwoFloat::new_mul(vk, vk);
        num += TwoFloat::new_mul(a.d(0, k), vk) * vk;
        for i in 1..=n.min(size - k) {
            num += TwoFloat::new_mul(2.0 * a.d(i, k), vk) * v[k + i - 1];
        }
    }
    let x = num / den;
    x.hi() + x.lo()
}

/// `(A − x)v` over the band, accumulated in double-double.
fn residual(a: &BandMatrix, size: usize, x: f64, v: &[f64]) -> Vec<f64> {
    let n = a.n();
    (1..=size)
        .map(|k| {
            let mut acc = TwoFloat::new_add(a.d(0, k), -x) * v[k - 1];
            for i in 1..=n {
                if k + i <= size {
                    acc += TwoFloat::new_mul(a.d(i, k), v[k + i - 1]);
                }
                if k > i {
                    acc += TwoFloat::new_mul(a.d(i, k - i), v[k - i - 1]);
                }
            }
            acc.hi() + acc.lo()
        })
        .collect()
}

/// One first-order correction of every eigenvector against the others:
/// `v_l − Σ_m v_m (v_mᵀ r_l) / (x_m − x_l)` with `r_l = (A − x_l)v_l`,
/// leaving out partners within the clustering tolerance, then renormalized.
fn refine_vectors(a: &BandMatrix, size: usize, values: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let spread = values.last().copied().unwrap_or(0.0) - values.first().copied().unwrap_or(0.0);
    let tol = CLUSTER_TOL * spread.max(f64::MIN_POSITIVE);
    let columns: Vec<DVector<f64>> = (0..values.len())
        .into_par_iter()
        .map(|l| {
            let v = vectors.column(l);
            let r = DVector::from_vec(residual(a, size, values[l], v.as_slice()));
            let mut out = v.into_owned();
            for (m, &xm) in values.iter().enumerate() {
                let gap = xm - values[l];
                if m != l && gap.abs() > tol {
                    out.axpy(-vectors.column(m).dot(&r) / gap, &vectors.column(m), 1.0);
                }
            }
            let norm = out.iter().fold(TwoFloat::from(0.0), |acc, &x| acc + TwoFloat::new_mul(x, x)).sqrt();
            out.iter_mut().for_each(|x| {
                let y = TwoFloat::from(*x) / norm;
                *x = y.hi() + y.lo();
            });
            out
        })
        .collect();
    DMatrix::from_columns(&columns)
}

/// The jumps of σ_N^𝒯, one per eigenvalue cluster, ascending.
pub fn spectral_jumps(a: &BandMatrix, t: &InitialConditions, size: usize) -> Result<Vec<SpectralJump>, ForwardError> {
    let truncated = check(a, t, size)?;
    let eig = eigensolve(&truncated.dense(size)?)?;
    let n = t.n();

    let refined: Vec<f64> = (0..eig.len()).map(|l| rayleigh_quotient(&truncated, size, eig.vectors.column(l).as_slice())).collect();
    let vectors = refine_vectors(&truncated, size, &refined, &eig.vectors);
    let nodes: Arc<[f64]> = refined.clone().into();
    let initial = (1..=n).map(|k| CompensatedValues::constant(nodes.clone(), &t.column(k))).collect();
    let profile = truncated.validate()?;
    let p = run_recurrence(&truncated, &profile, initial, size).ok();
    let q = match &p {
        Some(p) if p.len() >= profile.m(profile.j0()) + profile.n0() => run_generators(&truncated, &profile, p).ok(),
        Some(_) => Some(Vec::new()),
        None => None,
    };

    let spread = eig.values.last().copied().unwrap_or(0.0) - eig.values.first().copied().unwrap_or(0.0);
    let tol = CLUSTER_TOL * spread.max(f64::MIN_POSITIVE);
    let mut jumps: Vec<SpectralJump> = Vec::new();
    let mut members = 0usize;
    for (l, &x) in refined.iter().enumerate() {
        let v: Vec<f64> = vectors.column(l).iter().copied().collect();
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let top_significant = v[..n].iter().all(|x| x.abs() >= DIRECT_FRACTION * vmax);
        let alpha = match (&p, &q) {
            (Some(p), Some(q)) if !top_significant => alpha_least_squares(p, q, l, &v),
            _ => None,
        }
        .unwrap_or_else(|| alpha_coefficients(&v, t));
        let outer = &alpha * alpha.transpose();
        match jumps.last_mut() {
            Some(last) if (x - last.x).abs() <= tol => {
                members += 1;
                // running mean of the clustered eigenvalues
                last.x += (x - last.x) / members as f64;
                last.weight += outer;
                last.alphas.push(alpha);
            }
            _ => {
                members = 1;
                jumps.push(SpectralJump { x, alphas: vec![alpha], weight: outer });
            }
        }
        debug_assert_eq!(jumps.last().unwrap().weight.nrows(), n);
    }
    Ok(jumps)
}

/// σ_N^𝒯 as a measure. Requires `N ≥ n_0 + m_{j_0}` for the profile of `a`.
pub fn spectral_function(a: &BandMatrix, t: &InitialConditions, size: usize) -> Result<MatrixMeasure, ForwardError> {
    let jumps = spectral_jumps(a, t, size)?;
    Ok(MatrixMeasure::new(t.n(), jumps.into_iter().map(|j| (j.x, j.weight)))?)
}

/// `S_0(𝒯)..S_k(𝒯)` of σ_N^𝒯 at one size.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationRow {
    pub size: usize,
    pub moments: Vec<DMatrix<f64>>,
    /// `⌈2h(p_N)/n⌉`: orders up to this are expected to be final at this size.
    pub stable_order: usize,
    /// Per order, largest entry difference from the previous size in the list.
    pub change: Option<Vec<f64>>,
}

impl StabilizationRow {
    pub fn is_stable_for(&self, k: usize) -> bool {
        k <= self.stable_order
    }
}

/// Computes `S_0..S_k` of σ_N^𝒯 for every `N` in `sizes` (in parallel).
pub fn moment_stabilization(
    a: &BandMatrix,
    t: &InitialConditions,
    k: usize,
    sizes: &[usize],
) -> Result<Vec<StabilizationRow>, ForwardError> {
    let profile = a.validate()?;
    let n = profile.n;
    let moments: Vec<Vec<DMatrix<f64>>> = sizes
        .par_iter()
        .map(|&size| spectral_function(a, t, size).map(|m| m.moments(k).moments))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<StabilizationRow> = Vec::with_capacity(sizes.len());
    for (&size, moments) in sizes.iter().zip(moments) {
        let h = heights_from_profile(&profile, size)[size - 1];
        let change = rows
            .last()
            .map(|prev| prev.moments.iter().zip(&moments).map(|(p, m)| (m - p).amax()).collect());
        rows.push(StabilizationRow { size, moments, stable_order: (2 * h).div_ceil(n), change });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_initial_conditions, random_member, ClassSpec};
    use crate::recurrence::{evaluate_system, generate_system};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn jacobi(diag: Vec<f64>, off: Vec<f64>) -> BandMatrix {
        BandMatrix::new(1, vec![diag, off]).unwrap()
    }

    #[test]
    fn two_by_two_jacobi() {
        let m = spectral_function(&jacobi(vec![0.0, 0.0], vec![1.0]), &InitialConditions::identity(1), 2).unwrap();
        let atoms = m.atoms();
        assert_eq!(atoms.len(), 2);
        assert!((atoms[0].x + 1.0).abs() < 1e-14 && (atoms[1].x - 1.0).abs() < 1e-14);
        assert!((atoms[0].weight[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((atoms[1].weight[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn size_one_edge() {
        let m = spectral_function(&jacobi(vec![0.7], vec![]), &InitialConditions::identity(1), 1).unwrap();
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(m.atoms()[0].x, 0.7);
        assert!((m.atoms()[0].weight[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_examples() {
        let a = alpha_coefficients(&[0.6], &InitialConditions::new(DMatrix::from_element(1, 1, 2.0)).unwrap());
        assert!((a[0] - 0.3).abs() < 1e-16);
        let a = alpha_coefficients(&[0.1, 0.2, 0.3], &InitialConditions::identity(2));
        assert_eq!(a.as_slice(), &[0.1, 0.2]);
    }

    #[test]
    fn convention_bound() {
        let a = random_member(&ClassSpec::new(3, 12, vec![3, 5]), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(matches!(
            spectral_function(&a, &InitialConditions::identity(3), 5),
            Err(ForwardError::BelowConventionBound { needed: 6, .. })
        ));
        assert!(spectral_function(&a, &InitialConditions::identity(3), 6).is_ok());
    }

    #[test]
    fn free_jacobi_second_moment() {
        let a = jacobi(vec![0.0; 8], vec![1.0; 7]);
        let t = InitialConditions::identity(1);
        let rows = moment_stabilization(&a, &t, 2, &[2, 3, 4, 5, 6, 7, 8]).unwrap();
        for r in &rows {
            assert!((r.moments[2][(0, 0)] - 1.0).abs() < 1e-12, "N={}", r.size);
        }
        let odd = moment_stabilization(&a, &t, 3, &[5, 8]).unwrap();
        assert!(odd.iter().all(|r| r.moments[3][(0, 0)].abs() < 1e-12));
    }

    #[test]
    fn identity_first_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_member(&ClassSpec::new(2, 15, vec![4]), &mut rng).unwrap();
        let t = random_initial_conditions(2, &mut rng);
        for size in [6, 10, 15] {
            let s0 = spectral_function(&a, &t, size).unwrap().moment(0);
            let tm = t.matrix();
            let id = tm.transpose() * s0 * tm;
            assert!((id - DMatrix::identity(2, 2)).amax() < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_are_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_member(&ClassSpec::new(3, 14, vec![3]), &mut rng).unwrap();
        let m = spectral_function(&a, &InitialConditions::identity(3), 14).unwrap();
        let eig = eigensolve(&a.dense(14).unwrap()).unwrap();
        assert_eq!(m.atoms().len(), 14);
        for (atom, x) in m.atoms().iter().zip(&eig.values) {
            assert!((atom.x - x).abs() < 1e-12);
        }
        assert_eq!(m.total_rank(), 14);
    }

    #[test]
    fn multiple_eigenvalue_merges() {
        // two decoupled 2x2 blocks with the same spectrum
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        ]);
        let band = BandMatrix::from_dense(2, &a).unwrap();
        let m = spectral_function(&band, &InitialConditions::identity(2), 4).unwrap();
        assert_eq!(m.atoms().len(), 2);
        for atom in m.atoms() {
            assert!((&atom.weight - DMatrix::identity(2, 2) * 0.5).amax() < 1e-12);
        }
        assert_eq!(m.total_rank(), 4);
    }

    #[test]
    fn moment_matrices_become_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_member(&ClassSpec::new(2, 24, vec![3]), &mut rng).unwrap();
        let m = spectral_function(&a, &InitialConditions::identity(2), 24).unwrap();
        for k in 0..=3 {
            let ev = crate::linalg::symmetric_eigenvalues(&m.moment(2 * k));
            assert!(ev[0] > 0.0, "S_{} not positive definite", 2 * k);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn polynomials_orthonormal(seed in 0u64..10_000, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<usize> = if n > 1 { vec![3] } else { vec![] };
            let spec = ClassSpec::new(n, 0, m.clone());
            let size = spec.min_visible_size() + 3;
            let a = random_member(&ClassSpec::new(n, size, m), &mut rng).unwrap();
            let t = random_initial_conditions(n, &mut rng);
            let sigma = spectral_function(&a, &t, size).unwrap();
            let nodes: Arc<[f64]> = sigma.nodes().collect::<Vec<_>>().into();
            let (p, q) = evaluate_system(&a, &t, nodes, size).unwrap();
            for (j, pj) in p.iter().enumerate() {
                for (k, pk) in p.iter().enumerate() {
                    let target = if j == k { 1.0 } else { 0.0 };
                    prop_assert!((sigma.inner_sampled(pj.values(), pk.values()) - target).abs() < 1e-9);
                }
            }
            let sys = generate_system(&a, &t, size).unwrap();
            for (qv, qc) in q.iter().zip(&sys.q) {
                let scale = sigma.zero_class_scale(qc).unwrap();
                prop_assert!(sigma.inner_sampled(qv.values(), qv.values()).abs() <= 1e-16 * scale);
            }
        }
    }
}

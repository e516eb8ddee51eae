//! Small dense helpers shared by the measure, matrix and reconstruction code.

use nalgebra::DMatrix;

use crate::forward::eigensolve;

/// Eigenvalues of a small symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = symmetrize(m);
    // Jacobi never fails on matrices this small; fall back to the diagonal
    // only if the sweep cap is somehow hit.
    match eigensolve(&sym) {
        Ok(e) => e.values,
        Err(_) => {
            let mut d: Vec<f64> = sym.diagonal().iter().copied().collect();
            d.sort_by(f64::total_cmp);
            d
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    symmetric_eigenvalues(&gram).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Returns `F` with `F Fᵀ = W` for a symmetric positive semi-definite `W`;
/// negative round-off eigenvalues are clamped to zero.
pub fn psd_factor(w: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(w);
    let e = eigensolve(&sym).expect("Jacobi on a small symmetric matrix");
    let mut f = e.vectors.clone();
    for (j, &lambda) in e.values.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// Numerical rank of a PSD matrix: eigenvalues above `rel_tol·λ_max`.
pub fn psd_rank(w: &DMatrix<f64>, rel_tol: f64) -> usize {
    let ev = symmetric_eigenvalues(w);
    let max = ev.last().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&l| l > rel_tol * max).count()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn factor_reproduces_matrix() {
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let f = psd_factor(&w);
        assert!((&f * f.transpose() - &w).norm() < 1e-14);
        assert_eq!(psd_rank(&w, 1e-10), 2);
        assert_eq!(psd_rank(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), 1e-10), 1);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}

//! Cyclic Jacobi eigensolver for dense real symmetric matrices.

use nalgebra::{DMatrix, DVector};

use super::ForwardError;

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-14;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, l: usize) -> DVector<f64> {
        self.vectors.column(l).into_owned()
    }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Diagonalizes a symmetric matrix by cyclic sweeps of plane rotations.
///
/// Sweeps stop once the off-diagonal Frobenius mass falls to
/// `1e-14·‖A‖_F`. Each eigenvector is signed so that its first entry of
/// magnitude above `1e-12` is positive.
pub fn eigensolve(a: &DMatrix<f64>) -> Result<EigenDecomposition, ForwardError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(ForwardError::NotSquare { rows: n, cols: a.ncols() });
    }
    for i in 0..n {
        for j in 0..i {
            let (u, l) = (a[(j, i)], a[(i, j)]);
            if (u - l).abs() > 1e-12 * u.abs().max(l.abs()).max(1.0) {
                return Err(ForwardError::NotSymmetric { row: i, col: j });
            }
        }
    }
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let target = OFF_DIAGONAL_TOL * a.norm();

    let mut converged = off_diagonal_norm(&m) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(ForwardError::NoConvergence { sweeps, off_diagonal: off_diagonal_norm(&m) });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate_columns(&mut m, p, q, c, s);
                rotate_rows(&mut m, p, q, c, s);
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        converged = off_diagonal_norm(&m) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition { values, vectors })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let (kp, kq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * kp - s * kq;
        m[(k, q)] = s * kp + c * kq;
    }
}

fn rotate_rows(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.ncols() {
        let (pk, qk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * pk - s * qk;
        m[(q, k)] = s * pk + c * qk;
    }
}

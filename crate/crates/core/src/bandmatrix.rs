//! Band symmetric matrices of the class 𝓜(n, N): storage, class validation
//! from the zero/positive pattern of the outer diagonals, and the block
//! Jacobi view of the tail used by the self-adjointness diagnostics.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BandMatrixError {
    #[error("band half-width must be positive")]
    ZeroHalfWidth,
    #[error("expected {expected} diagonals, got {got}")]
    DiagonalCount { expected: usize, got: usize },
    #[error("diagonal {diagonal} has length {got}, expected {expected}")]
    DiagonalLength { diagonal: usize, expected: usize, got: usize },
    #[error("diagonal {diagonal}, index {index}: non-finite entry")]
    NonFinite { diagonal: usize, index: usize },
    #[error("requested size {requested} exceeds matrix size {size}")]
    SizeExceeded { requested: usize, size: usize },
    #[error("class violation: diagonal {diagonal}, index {index}: {reason}")]
    BadSignPattern { diagonal: usize, index: usize, reason: &'static str },
    #[error("class violation: diagonal {diagonal} degenerates at {m_next}, less than two after the previous degeneration at {m_prev}")]
    BadGap { diagonal: usize, m_prev: usize, m_next: usize },
    #[error("class violation: diagonal {diagonal} degenerates, which would leave {n} degenerations for half-width {n}")]
    TooManyDegenerations { diagonal: usize, n: usize },
    #[error("tail past row {start} has {rows} rows, need at least {needed}")]
    TailTooShort { start: usize, rows: usize, needed: usize },
}

/// Symmetric band matrix stored by its upper diagonals: `diagonal(i)[k-1]`
/// is `d_k^{(i)}`, the entry at row `k`, column `k + i` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    size: usize,
    diagonals: Vec<Vec<f64>>,
    truncation: bool,
}

/// Degeneration indices `m_1 < … < m_{j_0}` of a class member.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DegenerationProfile {
    pub n: usize,
    pub m: Vec<usize>,
}

impl DegenerationProfile {
    pub fn nondegenerate(n: usize) -> Self {
        Self { n, m: Vec::new() }
    }

    pub fn j0(&self) -> usize {
        self.m.len()
    }

    /// Half-width of the tail, `n − j_0`.
    pub fn n0(&self) -> usize {
        self.n - self.j0()
    }

    /// `m_j` with `m_0 = 0`.
    pub fn m(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.m[j - 1]
        }
    }

    /// Smallest truncation size for which the inner boundary generators are
    /// null: `n_0 + m_{j_0}`.
    pub fn min_truncation(&self) -> usize {
        self.n0() + self.m(self.j0())
    }

    /// Region `j` of a row index: `m_j < k < m_{j+1}`, or `None` when `k` is
    /// itself a degeneration index.
    pub fn region(&self, k: usize) -> Option<usize> {
        if self.m.contains(&k) {
            return None;
        }
        Some(self.m.iter().filter(|&&mj| mj < k).count())
    }

    pub fn is_degeneration(&self, k: usize) -> bool {
        self.m.contains(&k)
    }
}

impl BandMatrix {
    /// `diagonals[i]` must have length `size − i` for `i = 0..=n`.
    pub fn new(n: usize, diagonals: Vec<Vec<f64>>) -> Result<Self, BandMatrixError> {
        if n == 0 {
            return Err(BandMatrixError::ZeroHalfWidth);
        }
        if diagonals.len() != n + 1 {
            return Err(BandMatrixError::DiagonalCount { expected: n + 1, got: diagonals.len() });
        }
        let size = diagonals[0].len();
        for (i, d) in diagonals.iter().enumerate() {
            let expected = size.saturating_sub(i);
            if d.len() != expected {
                return Err(BandMatrixError::DiagonalLength { diagonal: i, expected, got: d.len() });
            }
            if let Some(k) = d.iter().position(|v| !v.is_finite()) {
                return Err(BandMatrixError::NonFinite { diagonal: i, index: k + 1 });
            }
        }
        Ok(Self { n, size, diagonals, truncation: true })
    }

    /// Reads the band of a dense symmetric matrix (upper triangle).
    pub fn from_dense(n: usize, a: &DMatrix<f64>) -> Result<Self, BandMatrixError> {
        let size = a.nrows();
        let diagonals = (0..=n)
            .map(|i| (0..size.saturating_sub(i)).map(|k| a[(k, k + i)]).collect())
            .collect();
        Self::new(n, diagonals)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Whether the matrix stands for the upper-left corner of an infinite one.
    pub fn is_truncation(&self) -> bool {
        self.truncation
    }

    pub fn set_truncation(&mut self, truncation: bool) {
        self.truncation = truncation;
    }

    pub fn diagonal(&self, i: usize) -> &[f64] {
        &self.diagonals[i]
    }

    pub fn diagonals(&self) -> &[Vec<f64>] {
        &self.diagonals
    }

    /// `d_k^{(i)}` (1-based `k`); zero outside the stored band.
    pub fn d(&self, i: usize, k: usize) -> f64 {
        if i > self.n || k == 0 {
            return 0.0;
        }
        self.diagonals[i].get(k - 1).copied().unwrap_or(0.0)
    }

    /// Dense entry at 1-based `(row, col)`.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let (lo, hi) = if row <= col { (row, col) } else { (col, row) };
        self.d(hi - lo, lo)
    }

    pub fn truncate(&self, size: usize) -> Result<Self, BandMatrixError> {
        if size > self.size {
            return Err(BandMatrixError::SizeExceeded { requested: size, size: self.size });
        }
        let diagonals = self
            .diagonals
            .iter()
            .enumerate()
            .map(|(i, d)| d[..size.saturating_sub(i)].to_vec())
            .collect();
        Ok(Self { n: self.n, size, diagonals, truncation: self.truncation })
    }

    /// The upper-left `size×size` corner as a dense symmetric matrix.
    pub fn dense(&self, size: usize) -> Result<DMatrix<f64>, BandMatrixError> {
        if size > self.size {
            return Err(BandMatrixError::SizeExceeded { requested: size, size: self.size });
        }
        let mut a = DMatrix::zeros(size, size);
        for (i, d) in self.diagonals.iter().enumerate() {
            for (k, &v) in d.iter().enumerate().take(size.saturating_sub(i)) {
                a[(k, k + i)] = v;
                a[(k + i, k)] = v;
            }
        }
        Ok(a)
    }

    /// Infers the degeneration profile from the sign pattern of the outer
    /// diagonals and checks the class conditions.
    ///
    /// Diagonal `n − j` must be strictly positive on `(m_j, m_{j+1})` and
    /// exactly zero from `m_{j+1}` on; entries up to `m_j` are free. A
    /// diagonal that stays positive to the end of the truncation does not
    /// degenerate.
    pub fn validate(&self) -> Result<DegenerationProfile, BandMatrixError> {
        let n = self.n;
        let mut m: Vec<usize> = Vec::new();
        for j in 0..n {
            let diagonal = n - j;
            let d = &self.diagonals[diagonal];
            let prev = m.last().copied().unwrap_or(0);
            let mut k = prev + 1;
            while k <= d.len() && d[k - 1] > 0.0 {
                k += 1;
            }
            if k > d.len() {
                return Ok(DegenerationProfile { n, m });
            }
            if d[k - 1] != 0.0 {
                return Err(BandMatrixError::BadSignPattern {
                    diagonal,
                    index: k,
                    reason: "negative entry where positive is required",
                });
            }
            if j == 0 && k == 1 {
                return Err(BandMatrixError::BadSignPattern {
                    diagonal,
                    index: 1,
                    reason: "outermost diagonal must start positive",
                });
            }
            if j > 0 && k < prev + 2 {
                return Err(BandMatrixError::BadGap { diagonal, m_prev: prev, m_next: k });
            }
            if let Some(off) = d[k..].iter().position(|&v| v != 0.0) {
                return Err(BandMatrixError::BadSignPattern {
                    diagonal,
                    index: k + 1 + off,
                    reason: "nonzero entry after degeneration",
                });
            }
            if j + 1 == n {
                return Err(BandMatrixError::TooManyDegenerations { diagonal, n });
            }
            m.push(k);
        }
        unreachable!("loop returns once a diagonal stays positive or errors at the innermost one")
    }

    /// Block Jacobi view of the tail left after removing the first
    /// `n_0 + m_{j_0} − 1` rows and columns.
    pub fn block_jacobi_tail(&self, profile: &DegenerationProfile) -> Result<BlockJacobiTail, BandMatrixError> {
        let n0 = profile.n0();
        let start = (n0 + profile.m(profile.j0())).saturating_sub(1);
        let rows = self.size.saturating_sub(start);
        if rows < 2 * n0 {
            return Err(BandMatrixError::TailTooShort { start, rows, needed: 2 * n0 });
        }
        let count = rows / n0;
        let block = |br: usize, bc: usize| {
            DMatrix::from_fn(n0, n0, |a, b| self.entry(start + br * n0 + a + 1, start + bc * n0 + b + 1))
        };
        let q = (0..count).map(|k| block(k, k)).collect();
        let b = (0..count - 1).map(|k| block(k + 1, k)).collect();
        Ok(BlockJacobiTail { n0, start, q, b })
    }
}

/// Tail of a class member in `n_0×n_0` blocks: `Q_k` on the block
/// diagonal, `B_k` below it (upper triangular).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobiTail {
    pub n0: usize,
    /// Number of leading rows removed.
    pub start: usize,
    pub q: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirzoevRecord {
    pub k: usize,
    pub invertible: bool,
    /// `‖Q_k⁻¹‖`, `None` when `Q_k` is singular.
    pub q_inverse_norm: Option<f64>,
    /// `‖Q_k⁻¹B_k‖ + ‖Q_k⁻¹B_kᵀ‖`, `None` when `Q_k` is singular.
    pub coupling: Option<f64>,
}

impl BlockJacobiTail {
    /// Dense reassembly of the tail.
    pub fn dense(&self) -> DMatrix<f64> {
        let n0 = self.n0;
        let size = n0 * self.q.len();
        let mut a = DMatrix::zeros(size, size);
        for (k, q) in self.q.iter().enumerate() {
            a.view_mut((k * n0, k * n0), (n0, n0)).copy_from(q);
        }
        for (k, b) in self.b.iter().enumerate() {
            a.view_mut(((k + 1) * n0, k * n0), (n0, n0)).copy_from(b);
            a.view_mut((k * n0, (k + 1) * n0), (n0, n0)).copy_from(&b.transpose());
        }
        a
    }

    /// Partial sums `Σ_{j ≤ K} 1/‖B_j‖` for `K = 1, 2, …`.
    pub fn carleman_report(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.b
            .iter()
            .map(|b| {
                acc += 1.0 / linalg::spectral_norm(b);
                acc
            })
            .collect()
    }

    /// `‖Q_k⁻¹‖` and `‖Q_k⁻¹B_k‖ + ‖Q_k⁻¹B_kᵀ‖` for each `k` with a `B_k`.
    pub fn mirzoev_report(&self) -> Vec<MirzoevRecord> {
        self.b
            .iter()
            .zip(&self.q)
            .enumerate()
            .map(|(k, (b, q))| {
                let scale = linalg::max_abs(q).max(linalg::max_abs(b)).max(f64::MIN_POSITIVE);
                let ev = linalg::symmetric_eigenvalues(q);
                let min_abs = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
                let inverse = if min_abs > 1e-12 * scale { q.clone().try_inverse() } else { None };
                match inverse {
                    Some(qi) => MirzoevRecord {
                        k: k + 1,
                        invertible: true,
                        q_inverse_norm: Some(linalg::spectral_norm(&qi)),
                        coupling: Some(
                            linalg::spectral_norm(&(&qi * b)) + linalg::spectral_norm(&(&qi * b.transpose())),
                        ),
                    },
                    None => MirzoevRecord { k: k + 1, invertible: false, q_inverse_norm: None, coupling: None },
                }
            })
            .collect()
    }
}

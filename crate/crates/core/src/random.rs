//! Seeded generators for class members and initial conditions.
//!
//! Free entries are uniform in `[−2, 2]`, entries the class requires to be
//! positive are uniform in `[0.5, 2]`, and required zeros are exact.

use nalgebra::DMatrix;
use rand::{Rng, RngExt};
use thiserror::Error;

use crate::bandmatrix::{BandMatrix, BandMatrixError, DegenerationProfile};
use crate::recurrence::InitialConditions;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RandomSpecError {
    #[error("degeneration indices {0:?} violate m_1 > 1 or m_(j+1) >= m_j + 2")]
    BadIndices(Vec<usize>),
    #[error("{j0} degenerations need half-width above {j0}, got {n}")]
    TooMany { n: usize, j0: usize },
    #[error("size {size} is below {needed}, the smallest size showing every degeneration")]
    TooSmall { size: usize, needed: usize },
    #[error(transparent)]
    Matrix(#[from] BandMatrixError),
}

/// Shape of a random class member: half-width, size and degeneration indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpec {
    pub n: usize,
    pub size: usize,
    pub m: Vec<usize>,
}

impl ClassSpec {
    pub fn new(n: usize, size: usize, m: Vec<usize>) -> Self {
        Self { n, size, m }
    }

    pub fn profile(&self) -> DegenerationProfile {
        DegenerationProfile { n: self.n, m: self.m.clone() }
    }

    /// Smallest size whose band still stores the zero that marks the last
    /// degeneration: `n_0 + m_{j_0} + 1`.
    pub fn min_visible_size(&self) -> usize {
        self.profile().min_truncation() + 1
    }

    fn check(&self) -> Result<(), RandomSpecError> {
        let j0 = self.m.len();
        if j0 >= self.n {
            return Err(RandomSpecError::TooMany { n: self.n, j0 });
        }
        let mut prev = 0;
        for (j, &mj) in self.m.iter().enumerate() {
            let ok = if j == 0 { mj > 1 } else { mj >= prev + 2 };
            if !ok {
                return Err(RandomSpecError::BadIndices(self.m.clone()));
            }
            prev = mj;
        }
        if self.size < self.min_visible_size() {
            return Err(RandomSpecError::TooSmall { size: self.size, needed: self.min_visible_size() });
        }
        Ok(())
    }
}

/// Draws a member of 𝓜(n, size) with exactly the requested degenerations.
pub fn random_member<R: Rng + ?Sized>(spec: &ClassSpec, rng: &mut R) -> Result<BandMatrix, RandomSpecError> {
    spec.check()?;
    let (n, size) = (spec.n, spec.size);
    let profile = spec.profile();
    let j0 = profile.j0();
    let mut diagonals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let len = size.saturating_sub(i);
        let d = (1..=len)
            .map(|k| {
                if i < n - j0 {
                    return rng.random_range(-2.0..=2.0);
                }
                let j = n - i;
                let lower = profile.m(j);
                let upper = if j < j0 { profile.m(j + 1) } else { usize::MAX };
                if k <= lower {
                    rng.random_range(-2.0..=2.0)
                } else if k < upper {
                    rng.random_range(0.5..=2.0)
                } else {
                    0.0
                }
            })
            .collect();
        diagonals.push(d);
    }
    Ok(BandMatrix::new(n, diagonals)?)
}

/// Upper-triangular initial conditions with diagonal in `[0.5, 2]` and
/// off-diagonal entries in `[−1, 1]`.
pub fn random_initial_conditions<R: Rng + ?Sized>(n: usize, rng: &mut R) -> InitialConditions {
    let t = DMatrix::from_fn(n, n, |r, c| match r.cmp(&c) {
        std::cmp::Ordering::Less => rng.random_range(-1.0..=1.0),
        std::cmp::Ordering::Equal => rng.random_range(0.5..=2.0),
        std::cmp::Ordering::Greater => 0.0,
    });
    InitialConditions::new(t).expect("positive diagonal")
}

/// Random degeneration indices for half-width `n`: `j_0` uniform in
/// `0..n`, first index in `2..=4`, gaps in `2..=4`.
pub fn random_profile<R: Rng + ?Sized>(n: usize, max_j0: usize, rng: &mut R) -> Vec<usize> {
    let j0 = rng.random_range(0..=max_j0.min(n - 1));
    let mut m = Vec::with_capacity(j0);
    let mut at = 0;
    for _ in 0..j0 {
        at += rng.random_range(2..=4);
        m.push(at);
    }
    m
}

//! Vector polynomials with values in ℝⁿ and their height grading.
//!
//! A vector polynomial `r(z) = (R_1(z), …, R_n(z))ᵀ` is stored as a flat
//! coefficient array indexed by *height slot*: slot `s = n·d + (j − 1)` holds
//! the coefficient of `z^d` in component `j`. With this layout the height of
//! a nonzero polynomial is simply the index of its last nonzero slot, and the
//! canonical polynomial `e_m` is the indicator of slot `m − 1`.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VecPolyError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("coefficient vector of length {got} in a polynomial of dimension {n}")]
    BadCoefficientLength { n: usize, got: usize },
    #[error("dimension must be positive")]
    ZeroDimension,
}

/// Height of a vector polynomial. `Bottom` is the height of the zero
/// polynomial and compares below every finite height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Height {
    Bottom,
    Value(usize),
}

impl Height {
    pub fn value(self) -> Option<usize> {
        match self {
            Height::Bottom => None,
            Height::Value(h) => Some(h),
        }
    }

    pub fn is_bottom(self) -> bool {
        matches!(self, Height::Bottom)
    }
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Height::Bottom => write!(f, "-inf"),
            Height::Value(h) => write!(f, "{h}"),
        }
    }
}

impl PartialEq<usize> for Height {
    fn eq(&self, other: &usize) -> bool {
        *self == Height::Value(*other)
    }
}

impl PartialOrd<usize> for Height {
    fn partial_cmp(&self, other: &usize) -> Option<Ordering> {
        Some(self.cmp(&Height::Value(*other)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorPolynomial {
    n: usize,
    slots: Vec<f64>,
}

impl VectorPolynomial {
    pub fn zero(n: usize) -> Self {
        assert!(n > 0, "vector polynomial dimension must be positive");
        Self { n, slots: Vec::new() }
    }

    /// Builds a polynomial from per-degree coefficient vectors,
    /// `coeffs[d]` being the coefficient of `z^d`.
    pub fn from_coefficients(n: usize, coeffs: &[Vec<f64>]) -> Result<Self, VecPolyError> {
        if n == 0 {
            return Err(VecPolyError::ZeroDimension);
        }
        let mut slots = Vec::with_capacity(n * coeffs.len());
        for c in coeffs {
            if c.len() != n {
                return Err(VecPolyError::BadCoefficientLength { n, got: c.len() });
            }
            slots.extend_from_slice(c);
        }
        Ok(Self::from_slots(n, slots))
    }

    /// Builds a polynomial from its height-slot coefficients.
    pub fn from_slots(n: usize, mut slots: Vec<f64>) -> Self {
        assert!(n > 0, "vector polynomial dimension must be positive");
        while slots.last() == Some(&0.0) {
            slots.pop();
        }
        Self { n, slots }
    }

    /// A constant polynomial.
    pub fn constant(v: &[f64]) -> Self {
        Self::from_slots(v.len(), v.to_vec())
    }

    /// `e_m(z) = z^k e_i` where `m = n·k + i`, `1 ≤ i ≤ n`.
    pub fn canonical(m: usize, n: usize) -> Self {
        assert!(m >= 1, "canonical index starts at 1");
        let mut slots = vec![0.0; m];
        slots[m - 1] = 1.0;
        Self::from_slots(n, slots)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.slots.is_empty()
    }

    /// Degree of the highest nonzero coefficient vector, `None` for zero.
    pub fn degree(&self) -> Option<usize> {
        self.height().value().map(|h| h / self.n)
    }

    pub fn height(&self) -> Height {
        match self.slots.len() {
            0 => Height::Bottom,
            len => Height::Value(len - 1),
        }
    }

    /// Coefficient at a height slot (zero beyond the stored range).
    pub fn slot(&self, s: usize) -> f64 {
        self.slots.get(s).copied().unwrap_or(0.0)
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    /// Coefficient of `z^d` in component `j` (0-based component).
    pub fn coeff(&self, d: usize, j: usize) -> f64 {
        assert!(j < self.n);
        self.slot(d * self.n + j)
    }

    /// Coefficient at the height slot, `None` for the zero polynomial.
    pub fn leading(&self) -> Option<f64> {
        self.slots.last().copied()
    }

    /// Per-degree coefficient vectors, padded to whole degrees.
    pub fn coefficient_vectors(&self) -> Vec<Vec<f64>> {
        self.slots
            .chunks(self.n)
            .map(|c| {
                let mut v = c.to_vec();
                v.resize(self.n, 0.0);
                v
            })
            .collect()
    }

    fn check_dim(&self, other: &Self) -> Result<(), VecPolyError> {
        if self.n != other.n {
            return Err(VecPolyError::DimensionMismatch { left: self.n, right: other.n });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, VecPolyError> {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, VecPolyError> {
        self.linear_combination(1.0, other, -1.0)
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self, VecPolyError> {
        self.check_dim(other)?;
        let len = self.slots.len().max(other.slots.len());
        let slots = (0..len).map(|s| a * self.slot(s) + b * other.slot(s)).collect();
        Ok(Self::from_slots(self.n, slots))
    }

    /// In-place `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<(), VecPolyError> {
        self.check_dim(other)?;
        if self.slots.len() < other.slots.len() {
            self.slots.resize(other.slots.len(), 0.0);
        }
        for (dst, src) in self.slots.iter_mut().zip(&other.slots) {
            *dst += a * src;
        }
        while self.slots.last() == Some(&0.0) {
            self.slots.pop();
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_slots(self.n, self.slots.iter().map(|v| c * v).collect())
    }

    /// Multiplication by `z`.
    pub fn shift(&self) -> Self {
        self.shift_by(1)
    }

    /// Multiplication by `z^l`.
    pub fn shift_by(&self, l: usize) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let mut slots = vec![0.0; l * self.n];
        slots.extend_from_slice(&self.slots);
        Self { n: self.n, slots }
    }

    /// Multiplication by the scalar polynomial `Σ_d r[d] z^d`.
    pub fn mul_scalar_poly(&self, r: &[f64]) -> Self {
        let mut out = vec![0.0; self.slots.len() + self.n * r.len().saturating_sub(1)];
        for (d, &rd) in r.iter().enumerate() {
            if rd == 0.0 {
                continue;
            }
            for (s, &c) in self.slots.iter().enumerate() {
                out[s + d * self.n] += rd * c;
            }
        }
        Self::from_slots(self.n, out)
    }

    /// Value at a real point, each component by compensated Horner.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        (0..self.n).map(|j| compensated_horner(self.component_coeffs(j), x)).collect()
    }

    /// Value of the polynomial with absolute coefficients at `|x|`; the
    /// magnitude of the terms before cancellation.
    pub fn evaluate_abs(&self, x: f64) -> Vec<f64> {
        let ax = x.abs();
        (0..self.n)
            .map(|j| {
                self.component_coeffs(j)
                    .rev()
                    .fold(0.0, |acc, c| acc * ax + c.abs())
            })
            .collect()
    }

    fn component_coeffs(&self, j: usize) -> impl DoubleEndedIterator<Item = f64> + '_ {
        self.slots.iter().skip(j).step_by(self.n).copied()
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Horner's scheme with error-free transformations; as accurate as plain
/// Horner in doubled working precision. Coefficients are given low to high.
pub fn compensated_horner(coeffs: impl DoubleEndedIterator<Item = f64>, x: f64) -> f64 {
    let mut rev = coeffs.rev();
    let Some(mut s) = rev.next() else { return 0.0 };
    let mut err = 0.0;
    for c in rev {
        let (p, pi) = two_prod(s, x);
        let (t, sigma) = two_sum(p, c);
        s = t;
        err = err * x + (pi + sigma);
    }
    s + err
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z2_3z() -> VectorPolynomial {
        VectorPolynomial::from_coefficients(2, &[vec![0.0, 0.0], vec![0.0, 3.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn height_examples() {
        assert_eq!(VectorPolynomial::zero(3).height(), Height::Bottom);
        for n in 1..5 {
            for k in 1..=n {
                assert_eq!(VectorPolynomial::canonical(k, n).height(), k - 1);
            }
        }
        assert_eq!(z2_3z().height(), 4);
        assert!(Height::Bottom < Height::Value(0));
    }

    #[test]
    fn canonical_examples() {
        let e1 = VectorPolynomial::canonical(1, 3);
        assert_eq!(e1.coefficient_vectors(), vec![vec![1.0, 0.0, 0.0]]);
        let c = VectorPolynomial::canonical(5, 2);
        assert_eq!(c.coefficient_vectors(), vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(c.height(), 4);
        let wrap = VectorPolynomial::canonical(4, 3);
        assert_eq!(wrap.coeff(1, 0), 1.0);
        assert_eq!(wrap.degree(), Some(1));
    }

    #[test]
    fn arithmetic_examples() {
        let e1 = VectorPolynomial::canonical(1, 2);
        assert_eq!(e1.shift(), VectorPolynomial::canonical(3, 2));
        let r = z2_3z();
        assert!(r.add(&r.scale(-1.0)).unwrap().is_zero());
        assert_eq!(e1.mul_scalar_poly(&[0.0, 0.0, 1.0]), VectorPolynomial::canonical(5, 2));
        let err = r.add(&VectorPolynomial::zero(3)).unwrap_err();
        assert_eq!(err, VecPolyError::DimensionMismatch { left: 2, right: 3 });
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(VectorPolynomial::canonical(1, 4).evaluate(7.3), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(z2_3z().evaluate(2.0), vec![4.0, 6.0]);
        assert_eq!(VectorPolynomial::zero(2).evaluate(1.5), vec![0.0, 0.0]);
    }

    #[test]
    fn compensated_horner_beats_cancellation() {
        // (x - 1)^7 expanded, evaluated next to its root.
        let c = [-1.0, 7.0, -21.0, 35.0, -35.0, 21.0, -7.0, 1.0];
        let x = 1.0 + 1e-3;
        let exact = 1e-21;
        let v = compensated_horner(c.iter().copied(), x);
        assert!((v - exact).abs() < 1e-27, "{v}");
    }

    fn poly_strategy(n: usize) -> impl Strategy<Value = VectorPolynomial> {
        prop::collection::vec(-5.0f64..5.0, 1..12)
            .prop_map(move |v| VectorPolynomial::from_slots(n, v))
    }

    proptest! {
        #[test]
        fn shift_adds_n_to_height(n in 1usize..5, l in 0usize..4, seed in prop::collection::vec(-3.0f64..3.0, 1..10)) {
            let r = VectorPolynomial::from_slots(n, seed);
            prop_assume!(!r.is_zero());
            let h = r.height().value().unwrap();
            prop_assert_eq!(r.shift_by(l).height(), h + n * l);
        }

        #[test]
        fn canonical_height(n in 1usize..6, m in 1usize..40) {
            prop_assert_eq!(VectorPolynomial::canonical(m, n).height(), m - 1);
        }

        #[test]
        fn sum_height_bounded((r, s) in (1usize..4).prop_flat_map(|n| (poly_strategy(n), poly_strategy(n)))) {
            let sum = r.add(&s).unwrap();
            let hmax = r.height().max(s.height());
            prop_assert!(sum.height() <= hmax);
            if r.height() != s.height() {
                prop_assert_eq!(sum.height(), hmax);
            }
        }

        #[test]
        fn distinct_heights_combination(n in 1usize..4, hs in prop::collection::btree_set(0usize..20, 1..6), coeffs in prop::collection::vec(0.1f64..3.0, 6)) {
            let mut acc = VectorPolynomial::zero(n);
            for (h, c) in hs.iter().zip(&coeffs) {
                // a polynomial of height h with arbitrary lower terms
                let mut slots: Vec<f64> = (0..*h).map(|s| (s as f64).sin()).collect();
                slots.push(1.0);
                acc.axpy(*c, &VectorPolynomial::from_slots(n, slots)).unwrap();
            }
            prop_assert_eq!(acc.height(), *hs.iter().max().unwrap());
        }
    }
}

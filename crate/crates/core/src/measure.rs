//! Discrete matrix-valued measures, their moments, and the `L₂(ℝ, σ)` inner
//! product on vector polynomials.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, CompensatedSum};
use crate::recurrence::InitialConditions;
use crate::vecpoly::{VecPolyError, VectorPolynomial};

/// Default relative threshold for zero-norm decisions.
pub const DEFAULT_EPS_ZERO: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const SINGULAR_CONDITION: f64 = 1e12;
const RANK_TOL: f64 = 1e-10;
const COMPENSATE_ABOVE: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("measure dimension must be positive")]
    ZeroDimension,
    #[error("atom {atom}: weight is {rows}x{cols}, expected {n}x{n}")]
    WeightShape { atom: usize, rows: usize, cols: usize, n: usize },
    #[error("atom {atom}: non-finite node or weight")]
    NonFinite { atom: usize },
    #[error("atom {atom}: weight is not symmetric (entry ({row},{col}))")]
    NotSymmetric { atom: usize, row: usize, col: usize },
    #[error("atom {atom} (x = {x}): weight has eigenvalue {eigenvalue}")]
    NonPsdWeight { atom: usize, x: f64, eigenvalue: f64 },
    #[error("S_0 is singular (condition number {condition:e})")]
    SingularS0 { condition: f64 },
    #[error("total rank {rank} is below the required {required}")]
    InsufficientRank { rank: usize, required: usize },
    #[error(transparent)]
    Polynomial(#[from] VecPolyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub x: f64,
    pub weight: DMatrix<f64>,
}

/// A finite atomic measure with `n×n` symmetric PSD weights. Nodes are kept
/// strictly increasing; atoms at equal nodes are merged by summing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMeasure {
    n: usize,
    atoms: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub atom_count: usize,
    pub total_rank: usize,
    pub s0_condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence {
    pub n: usize,
    pub moments: Vec<DMatrix<f64>>,
}

impl MomentSequence {
    /// The `(m+1)n × (m+1)n` block Hankel section `[S_{i+j}]_{i,j ≤ m}`.
    pub fn block_hankel(&self, m: usize) -> Option<DMatrix<f64>> {
        if 2 * m >= self.moments.len() {
            return None;
        }
        let n = self.n;
        let mut h = DMatrix::zeros((m + 1) * n, (m + 1) * n);
        for i in 0..=m {
            for j in 0..=m {
                h.view_mut((i * n, j * n), (n, n)).copy_from(&self.moments[i + j]);
            }
        }
        Some(h)
    }
}

impl MatrixMeasure {
    pub fn new(n: usize, atoms: impl IntoIterator<Item = (f64, DMatrix<f64>)>) -> Result<Self, MeasureError> {
        if n == 0 {
            return Err(MeasureError::ZeroDimension);
        }
        let mut list: Vec<Atom> = Vec::new();
        for (idx, (x, w)) in atoms.into_iter().enumerate() {
            if w.nrows() != n || w.ncols() != n {
                return Err(MeasureError::WeightShape { atom: idx, rows: w.nrows(), cols: w.ncols(), n });
            }
            if !x.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(MeasureError::NonFinite { atom: idx });
            }
            let scale = linalg::max_abs(&w).max(f64::MIN_POSITIVE);
            for i in 0..n {
                for j in 0..i {
                    if (w[(i, j)] - w[(j, i)]).abs() > SYMMETRY_TOL * scale {
                        return Err(MeasureError::NotSymmetric { atom: idx, row: i, col: j });
                    }
                }
            }
            list.push(Atom { x, weight: linalg::symmetrize(&w) });
        }
        list.sort_by(|a, b| a.x.total_cmp(&b.x));
        let mut atoms: Vec<Atom> = Vec::with_capacity(list.len());
        for atom in list {
            match atoms.last_mut() {
                Some(last) if last.x == atom.x => last.weight += atom.weight,
                _ => atoms.push(atom),
            }
        }
        Ok(Self { n, atoms })
    }

    /// Scalar (`n = 1`) measure from `(node, mass)` pairs.
    pub fn scalar(atoms: &[(f64, f64)]) -> Result<Self, MeasureError> {
        Self::new(1, atoms.iter().map(|&(x, w)| (x, DMatrix::from_element(1, 1, w))))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.x)
    }

    /// Sum of the numerical ranks of all weights.
    pub fn total_rank(&self) -> usize {
        self.atoms.iter().map(|a| linalg::psd_rank(&a.weight, RANK_TOL)).sum()
    }

    /// Checks PSD weights, invertibility of `S_0`, and that the total rank
    /// reaches `required_rank`.
    pub fn validate(&self, required_rank: usize) -> Result<MeasureReport, MeasureError> {
        for (idx, atom) in self.atoms.iter().enumerate() {
            let ev = linalg::symmetric_eigenvalues(&atom.weight);
            let norm = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if let Some(&min) = ev.first() {
                if min < -PSD_TOL * norm {
                    return Err(MeasureError::NonPsdWeight { atom: idx, x: atom.x, eigenvalue: min });
                }
            }
        }
        let s0 = self.moment(0);
        let ev = linalg::symmetric_eigenvalues(&s0);
        let (min, max) = (ev[0], ev[ev.len() - 1]);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition < SINGULAR_CONDITION) {
            return Err(MeasureError::SingularS0 { condition });
        }
        let total_rank = self.total_rank();
        if total_rank < required_rank {
            return Err(MeasureError::InsufficientRank { rank: total_rank, required: required_rank });
        }
        Ok(MeasureReport { atom_count: self.atoms.len(), total_rank, s0_condition: condition })
    }

    /// `S_k = Σ_l x_l^k W_l`.
    pub fn moment(&self, k: usize) -> DMatrix<f64> {
        let n = self.n;
        let power = |x: f64| x.powi(k as i32);
        if self.atoms.len() <= COMPENSATE_ABOVE {
            return self
                .atoms
                .iter()
                .fold(DMatrix::zeros(n, n), |acc, a| acc + &a.weight * power(a.x));
        }
        let mut sums = vec![CompensatedSum::default(); n * n];
        for a in &self.atoms {
            let p = power(a.x);
            for (s, w) in sums.iter_mut().zip(a.weight.iter()) {
                s.add(p * w);
            }
        }
        DMatrix::from_iterator(n, n, sums.iter().map(CompensatedSum::value))
    }

    pub fn moments(&self, up_to: usize) -> MomentSequence {
        MomentSequence { n: self.n, moments: (0..=up_to).map(|k| self.moment(k)).collect() }
    }

    fn check_poly(&self, r: &VectorPolynomial) -> Result<(), MeasureError> {
        if r.n() != self.n {
            return Err(VecPolyError::DimensionMismatch { left: r.n(), right: self.n }.into());
        }
        Ok(())
    }

    /// `⟨r, s⟩ = Σ_l r(x_l)ᵀ W_l s(x_l)`.
    pub fn inner(&self, r: &VectorPolynomial, s: &VectorPolynomial) -> Result<f64, MeasureError> {
        self.check_poly(r)?;
        self.check_poly(s)?;
        let mut acc = CompensatedSum::default();
        for a in &self.atoms {
            let (rv, sv) = (r.evaluate(a.x), s.evaluate(a.x));
            acc.add(weighted_dot(&a.weight, &rv, &sv));
        }
        Ok(acc.value())
    }

    pub fn norm(&self, r: &VectorPolynomial) -> Result<f64, MeasureError> {
        Ok(self.inner(r, r)?.max(0.0).sqrt())
    }

    /// Reference magnitude for zero-norm decisions:
    /// `Σ_l ‖W_l‖·‖|r|(|x_l|)‖²`, where `|r|` has the absolute coefficients
    /// of `r`. It bounds `⟨r, r⟩` and scales like it under both measure and
    /// polynomial scaling.
    pub fn zero_class_scale(&self, r: &VectorPolynomial) -> Result<f64, MeasureError> {
        self.check_poly(r)?;
        Ok(self
            .atoms
            .iter()
            .map(|a| {
                let v = r.evaluate_abs(a.x);
                linalg::spectral_norm(&a.weight) * v.iter().map(|c| c * c).sum::<f64>()
            })
            .sum())
    }

    /// Whether `r` lies in the equivalence class of zero, relative to
    /// [`Self::zero_class_scale`].
    pub fn is_zero_class(&self, r: &VectorPolynomial, eps_zero: f64) -> Result<bool, MeasureError> {
        let norm2 = self.inner(r, r)?.max(0.0);
        let scale = self.zero_class_scale(r)?;
        Ok(norm2 <= eps_zero * eps_zero * scale)
    }

    /// `σ_𝒯 = 𝒯 σ 𝒯ᵀ`, atom by atom.
    pub fn conjugate_by(&self, t: &InitialConditions) -> Self {
        let tm = t.matrix();
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { x: a.x, weight: linalg::symmetrize(&(tm * &a.weight * tm.transpose())) })
            .collect();
        Self { n: self.n, atoms }
    }

    /// Cumulative step function: for each atom, the node and the sum of all
    /// weights up to and including it.
    pub fn step_function(&self) -> Vec<(f64, DMatrix<f64>)> {
        let mut acc = DMatrix::zeros(self.n, self.n);
        self.atoms
            .iter()
            .map(|a| {
                acc += &a.weight;
                (a.x, acc.clone())
            })
            .collect()
    }

    /// Values of vector data sampled at the nodes under the measure:
    /// `Σ_l u_lᵀ W_l v_l` where `u_l, v_l` are the atom-major slices.
    pub fn inner_sampled(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = CompensatedSum::default();
        for (l, a) in self.atoms.iter().enumerate() {
            acc.add(weighted_dot(&a.weight, &u[l * n..(l + 1) * n], &v[l * n..(l + 1) * n]));
        }
        acc.value()
    }
}

fn weighted_dot(w: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        if u[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += w[(i, j)] * v[j];
        }
        s += u[i] * row;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_atoms() -> MatrixMeasure {
        MatrixMeasure::scalar(&[(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)]).unwrap()
    }

    fn poly1(c: &[f64]) -> VectorPolynomial {
        VectorPolynomial::from_slots(1, c.to_vec())
    }

    #[test]
    fn validate_examples() {
        let two = MatrixMeasure::scalar(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let report = two.validate(2).unwrap();
        assert_eq!(report.total_rank, 2);
        assert_eq!(two.moment(0)[(0, 0)], 1.0);

        let singular =
            MatrixMeasure::new(2, [(0.0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))]).unwrap();
        assert!(matches!(singular.validate(1), Err(MeasureError::SingularS0 { .. })));

        let negative = MatrixMeasure::new(
            2,
            [
                (0.0, DMatrix::identity(2, 2)),
                (1.0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1])),
            ],
        )
        .unwrap();
        assert!(matches!(negative.validate(1), Err(MeasureError::NonPsdWeight { atom: 1, .. })));
        assert!(matches!(two.validate(3), Err(MeasureError::InsufficientRank { rank: 2, required: 3 })));
    }

    #[test]
    fn moment_examples() {
        let m = three_atoms();
        // S_2 = (1 + 0 + 1)/3
        assert!((m.moment(2)[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        let two = MatrixMeasure::scalar(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        for k in [1, 3, 5, 7] {
            assert_eq!(two.moment(k)[(0, 0)], 0.0);
        }
        assert_eq!(m.moment(0)[(0, 0)], m.atoms().iter().map(|a| a.weight[(0, 0)]).sum::<f64>());
    }

    #[test]
    fn merges_duplicate_nodes() {
        let m = MatrixMeasure::scalar(&[(1.0, 0.25), (-1.0, 0.5), (1.0, 0.25)]).unwrap();
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.atoms()[1].weight[(0, 0)], 0.5);
        assert_eq!(m.atoms()[0].x, -1.0);
    }

    #[test]
    fn inner_examples() {
        let m = three_atoms();
        let one = poly1(&[1.0]);
        assert!((m.inner(&one, &one).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.inner(&one, &VectorPolynomial::zero(1)).unwrap(), 0.0);
        let z = poly1(&[0.0, 1.0]);
        assert!((m.inner(&z, &z).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.inner(&VectorPolynomial::zero(2), &one).is_err());
    }

    #[test]
    fn zero_class_examples() {
        let m = three_atoms();
        let zero = VectorPolynomial::zero(1);
        assert_eq!(m.norm(&zero).unwrap(), 0.0);
        assert!(m.is_zero_class(&zero, DEFAULT_EPS_ZERO).unwrap());
        let cubic = poly1(&[0.0, -1.0, 0.0, 1.0]);
        assert!(m.is_zero_class(&cubic, DEFAULT_EPS_ZERO).unwrap());
        assert!(!m.is_zero_class(&poly1(&[1.0]), DEFAULT_EPS_ZERO).unwrap());
        // nodes perturbed at round-off level still give a zero class
        let fuzzy = MatrixMeasure::scalar(&[(-1.0 + 2e-16, 0.3), (1e-17, 0.3), (1.0 - 1e-16, 0.4)]).unwrap();
        assert!(fuzzy.is_zero_class(&cubic, DEFAULT_EPS_ZERO).unwrap());
    }

    #[test]
    fn conjugation_examples() {
        let m = three_atoms();
        let id = InitialConditions::identity(1);
        assert_eq!(m.conjugate_by(&id), m);
        let t = InitialConditions::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let single = MatrixMeasure::scalar(&[(0.0, 1.0)]).unwrap();
        assert_eq!(single.conjugate_by(&t).atoms()[0].weight[(0, 0)], 4.0);

        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m2 = MatrixMeasure::new(2, [(-0.5, w.clone()), (1.5, DMatrix::identity(2, 2))]).unwrap();
        let t2 = InitialConditions::new(DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 3.0])).unwrap();
        let conj = m2.conjugate_by(&t2);
        for k in 0..4 {
            let expected = t2.matrix() * m2.moment(k) * t2.matrix().transpose();
            assert!((conj.moment(k) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn compensated_moments_agree() {
        let atoms: Vec<(f64, f64)> = (0..200).map(|i| (-1.0 + i as f64 / 100.0, 1.0 / 200.0)).collect();
        let m = MatrixMeasure::scalar(&atoms).unwrap();
        let plain: f64 = atoms.iter().map(|(x, w)| x * x * w).sum();
        assert!((m.moment(2)[(0, 0)] - plain).abs() < 1e-14);
    }

    fn random_measure(n: usize, seed: &[f64]) -> MatrixMeasure {
        let atoms = seed.chunks(1 + n * n).filter(|c| c.len() == 1 + n * n).map(|c| {
            let f = DMatrix::from_row_slice(n, n, &c[1..]);
            (c[0] * 2.0, &f * f.transpose())
        });
        MatrixMeasure::new(n, atoms).unwrap()
    }

    fn random_poly(n: usize, c: &[f64]) -> VectorPolynomial {
        VectorPolynomial::from_slots(n, c.to_vec())
    }

    proptest! {
        #[test]
        fn canonical_inner_matches_moments(n in 1usize..4, seed in prop::collection::vec(-1.0f64..1.0, 60), a in 1usize..9, b in 1usize..9) {
            let m = random_measure(n, &seed);
            let ea = VectorPolynomial::canonical(a, n);
            let eb = VectorPolynomial::canonical(b, n);
            let (ka, ia) = ((a - 1) / n, (a - 1) % n);
            let (kb, ib) = ((b - 1) / n, (b - 1) % n);
            let via_moment = m.moment(ka + kb)[(ia, ib)];
            let via_inner = m.inner(&ea, &eb).unwrap();
            prop_assert!((via_moment - via_inner).abs() <= 1e-12 * via_moment.abs().max(1e-300) + 1e-300);
        }

        #[test]
        fn cauchy_schwarz(n in 1usize..4, seed in prop::collection::vec(-1.0f64..1.0, 60), r in prop::collection::vec(-2.0f64..2.0, 1..10), s in prop::collection::vec(-2.0f64..2.0, 1..10)) {
            let m = random_measure(n, &seed);
            let (r, s) = (random_poly(n, &r), random_poly(n, &s));
            let rs = m.inner(&r, &s).unwrap();
            let sr = m.inner(&s, &r).unwrap();
            let rr = m.inner(&r, &r).unwrap();
            let ss = m.inner(&s, &s).unwrap();
            prop_assert!(rr >= -1e-12 && ss >= -1e-12);
            prop_assert!((rs - sr).abs() <= 1e-12 * (rr * ss).sqrt().max(1e-12));
            prop_assert!(rs * rs <= rr * ss * (1.0 + 1e-10) + 1e-300);
        }

        #[test]
        fn zero_class_is_a_module(nodes in prop::collection::btree_set(-20i32..20, 2..6), multiplier in prop::collection::vec(-2.0f64..2.0, 1..4)) {
            // two-dimensional measure of rank one at each node: weight (1,1)(1,1)ᵀ,
            // so r = (R, -R) is null for any scalar R, and so is (z - x_0)…(z - x_k) e_1.
            let xs: Vec<f64> = nodes.iter().map(|&v| v as f64 / 10.0).collect();
            let w = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
            let m = MatrixMeasure::new(2, xs.iter().map(|&x| (x, w.clone()))).unwrap();
            let mut vanishing = vec![1.0];
            for &x in &xs {
                let mut next = vec![0.0; vanishing.len() + 1];
                for (d, c) in vanishing.iter().enumerate() {
                    next[d + 1] += c;
                    next[d] -= x * c;
                }
                vanishing = next;
            }
            let e1 = VectorPolynomial::canonical(1, 2);
            let null_a = e1.mul_scalar_poly(&vanishing);
            let null_b = VectorPolynomial::constant(&[1.0, -1.0]);
            for r in [null_a, null_b] {
                prop_assert!(m.is_zero_class(&r, DEFAULT_EPS_ZERO).unwrap());
                prop_assert!(m.is_zero_class(&r.mul_scalar_poly(&multiplier), DEFAULT_EPS_ZERO).unwrap());
            }
            prop_assert!(!m.is_zero_class(&e1, DEFAULT_EPS_ZERO).unwrap());
        }
    }
}

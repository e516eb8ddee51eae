//! The vector polynomials `p_k` generated by a band matrix and initial
//! conditions 𝒯, and the inner-boundary generators `q_j`.
//!
//! Row `k` of the matrix, read as `Σ_i A[k,i] p_i = z p_k`, determines the
//! topmost polynomial it touches, `p_{k+n−j}` for `m_j < k < m_{j+1}`.
//! Rows `k = m_j` produce nothing new; they define `q_j` instead. The same
//! recursion runs on coefficient vectors ([`VectorPolynomial`]) or directly
//! on values at a set of nodes ([`NodeValues`]) through [`RecurrenceSpace`].

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::compensated::CompensatedValues;
use crate::bandmatrix::{BandMatrix, BandMatrixError, DegenerationProfile};
use crate::vecpoly::{Height, VectorPolynomial};

/// Coefficient growth is unchecked beyond this many polynomials.
pub const DEFAULT_MAX_POLYNOMIALS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecurrenceError {
    #[error("initial conditions must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("initial conditions must be upper triangular: entry ({row},{col}) is nonzero")]
    NotUpperTriangular { row: usize, col: usize },
    #[error("initial conditions are singular: diagonal entry {index} is zero")]
    SingularInitial { index: usize },
    #[error("initial conditions are {t}x{t} but the matrix half-width is {n}")]
    DimensionMismatch { t: usize, n: usize },
    #[error("row {row}: coefficient d^({diagonal}) is zero, the class requires it positive")]
    ZeroLeadingCoefficient { row: usize, diagonal: usize },
    #[error("{requested} polynomials need a matrix of size at least {requested}, got {size}")]
    InsufficientSize { requested: usize, size: usize },
    #[error("{requested} polynomials exceed the cap of {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error("q_{j} needs p up to index {needed}, only {have} generated")]
    InsufficientPrefix { j: usize, needed: usize, have: usize },
    #[error("non-finite coefficients in polynomial {index}")]
    Overflow { index: usize },
    #[error(transparent)]
    Matrix(#[from] BandMatrixError),
}

/// The `n×n` upper-triangular matrix 𝒯 = {t_ji} with nonzero diagonal. Its
/// columns are the first `n` polynomials: `p_k = 𝒯 e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    t: DMatrix<f64>,
}

impl InitialConditions {
    pub fn new(t: DMatrix<f64>) -> Result<Self, RecurrenceError> {
        if t.nrows() != t.ncols() || t.nrows() == 0 {
            return Err(RecurrenceError::NotSquare { rows: t.nrows(), cols: t.ncols() });
        }
        let n = t.nrows();
        for r in 0..n {
            for c in 0..r {
                if t[(r, c)] != 0.0 {
                    return Err(RecurrenceError::NotUpperTriangular { row: r + 1, col: c + 1 });
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| t[(i, i)] == 0.0 || !t[(i, i)].is_finite()) {
            return Err(RecurrenceError::SingularInitial { index: i + 1 });
        }
        Ok(Self { t })
    }

    pub fn identity(n: usize) -> Self {
        Self { t: DMatrix::identity(n, n) }
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// `𝒯 e_k` for 1-based `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.t.column(k - 1).iter().copied().collect()
    }

    pub fn has_positive_diagonal(&self) -> bool {
        (0..self.n()).all(|i| self.t[(i, i)] > 0.0)
    }
}

/// A vector space closed under multiplication by `z`, over which the
/// recurrence can be run.
pub trait RecurrenceSpace: Clone {
    fn zero_like(&self) -> Self;
    fn shifted(&self) -> Self;
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale_mut(&mut self, c: f64);
    fn div_mut(&mut self, c: f64) {
        self.scale_mut(1.0 / c);
    }
    fn is_finite(&self) -> bool;
}

impl RecurrenceSpace for VectorPolynomial {
    fn zero_like(&self) -> Self {
        VectorPolynomial::zero(self.n())
    }

    fn shifted(&self) -> Self {
        self.shift()
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        VectorPolynomial::axpy(self, a, x).expect("recurrence terms share the dimension");
    }

    fn scale_mut(&mut self, c: f64) {
        *self = self.scale(c);
    }

    fn is_finite(&self) -> bool {
        self.slots().iter().all(|v| v.is_finite())
    }
}

/// Values of a vector polynomial at a fixed set of nodes, atom-major:
/// `values[l·n + i]` is component `i` at node `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeValues {
    nodes: Arc<[f64]>,
    n: usize,
    values: Vec<f64>,
}

impl NodeValues {
    pub fn new(nodes: Arc<[f64]>, n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), nodes.len() * n);
        Self { nodes, n, values }
    }

    /// The constant vector `v` at every node.
    pub fn constant(nodes: Arc<[f64]>, v: &[f64]) -> Self {
        let values = nodes.iter().flat_map(|_| v.iter().copied()).collect();
        Self { n: v.len(), nodes, values }
    }

    /// Samples a polynomial (compensated Horner per node).
    pub fn sample(nodes: Arc<[f64]>, r: &VectorPolynomial) -> Self {
        let values = nodes.iter().flat_map(|&x| r.evaluate(x)).collect();
        Self { n: r.n(), nodes, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &Arc<[f64]> {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, l: usize) -> &[f64] {
        &self.values[l * self.n..(l + 1) * self.n]
    }
}

impl RecurrenceSpace for NodeValues {
    fn zero_like(&self) -> Self {
        Self { nodes: self.nodes.clone(), n: self.n, values: vec![0.0; self.values.len()] }
    }

    fn shifted(&self) -> Self {
        let mut out = self.clone();
        for (l, &x) in self.nodes.iter().enumerate() {
            for v in &mut out.values[l * self.n..(l + 1) * self.n] {
                *v *= x;
            }
        }
        out
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for (d, s) in self.values.iter_mut().zip(&x.values) {
            *d += a * s;
        }
    }

    fn scale_mut(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Runs the recurrence until `count` elements `p_1..p_count` exist.
/// `initial` holds `p_1..p_n`.
pub fn run_recurrence<S: RecurrenceSpace>(
    a: &BandMatrix,
    profile: &DegenerationProfile,
    initial: Vec<S>,
    count: usize,
) -> Result<Vec<S>, RecurrenceError> {
    let n = a.n();
    if count > a.size() {
        return Err(RecurrenceError::InsufficientSize { requested: count, size: a.size() });
    }
    let mut p = initial;
    p.truncate(count);
    let mut k = 0;
    while p.len() < count {
        k += 1;
        let Some(j) = profile.region(k) else { continue };
        let top = k + n - j;
        debug_assert_eq!(top, p.len() + 1, "row {k} must produce the next polynomial");
        let lead = a.d(n - j, k);
        if lead == 0.0 {
            return Err(RecurrenceError::ZeroLeadingCoefficient { row: k, diagonal: n - j });
        }
        let mut next = row_residual(a, &p, k, n - j - 1);
        next.div_mut(lead);
        if !next.is_finite() {
            return Err(RecurrenceError::Overflow { index: top });
        }
        p.push(next);
    }
    Ok(p)
}

/// `z p_k − Σ_{s=1}^{n} d^{(s)}_{k−s} p_{k−s} − d_k^{(0)} p_k − Σ_{i=1}^{upper} d_k^{(i)} p_{k+i}`.
fn row_residual<S: RecurrenceSpace>(a: &BandMatrix, p: &[S], k: usize, upper: usize) -> S {
    let pk = &p[k - 1];
    let mut out = pk.shifted();
    for s in 1..=a.n() {
        if s < k {
            let c = a.d(s, k - s);
            if c != 0.0 {
                out.axpy(-c, &p[k - s - 1]);
            }
        }
    }
    out.axpy(-a.d(0, k), pk);
    for i in 1..=upper {
        let c = a.d(i, k);
        if c != 0.0 {
            out.axpy(-c, &p[k + i - 1]);
        }
    }
    out
}

/// `q_j` for every degeneration, from the row `m_j` equations.
pub fn run_generators<S: RecurrenceSpace>(
    a: &BandMatrix,
    profile: &DegenerationProfile,
    p: &[S],
) -> Result<Vec<S>, RecurrenceError> {
    let n = a.n();
    (1..=profile.j0())
        .map(|j| {
            let mj = profile.m(j);
            let needed = mj + n - j;
            if p.len() < needed {
                return Err(RecurrenceError::InsufficientPrefix { j, needed, have: p.len() });
            }
            Ok(row_residual(a, p, mj, n - j))
        })
        .collect()
}

/// Heights `h(p_1)..h(p_count)` from the profile alone, by the law
/// `h(p_{k+n−j}) = h(p_k) + n` (pure integer arithmetic).
pub fn heights_from_profile(profile: &DegenerationProfile, count: usize) -> Vec<usize> {
    let n = profile.n;
    let mut h: Vec<usize> = (0..n.min(count)).collect();
    let mut k = 0;
    while h.len() < count {
        k += 1;
        if let Some(j) = profile.region(k) {
            debug_assert_eq!(k + n - j, h.len() + 1);
            h.push(h[k - 1] + n);
        }
    }
    h
}

/// `h(q_j) = h(p_{m_j}) + n` for every degeneration.
pub fn generator_heights_from_profile(profile: &DegenerationProfile) -> Vec<usize> {
    let last = profile.m.last().copied().unwrap_or(0);
    let h = heights_from_profile(profile, last.max(1));
    profile.m.iter().map(|&mj| h[mj - 1] + profile.n).collect()
}

/// The polynomials `p_1..p_K` and generators `q_1..q_{j_0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSystem {
    pub p: Vec<VectorPolynomial>,
    pub q: Vec<VectorPolynomial>,
    pub profile: DegenerationProfile,
}

fn check_dims(a: &BandMatrix, t: &InitialConditions) -> Result<DegenerationProfile, RecurrenceError> {
    if t.n() != a.n() {
        return Err(RecurrenceError::DimensionMismatch { t: t.n(), n: a.n() });
    }
    Ok(a.validate()?)
}

/// Generates `p_1..p_count` from `p_k = 𝒯 e_k` (`k ≤ n`) and the recurrence.
pub fn generate_p(a: &BandMatrix, t: &InitialConditions, count: usize) -> Result<PolynomialSystem, RecurrenceError> {
    generate_p_capped(a, t, count, DEFAULT_MAX_POLYNOMIALS)
}

pub fn generate_p_capped(
    a: &BandMatrix,
    t: &InitialConditions,
    count: usize,
    cap: usize,
) -> Result<PolynomialSystem, RecurrenceError> {
    if count > cap {
        return Err(RecurrenceError::CapExceeded { requested: count, cap });
    }
    let profile = check_dims(a, t)?;
    let initial = (1..=a.n()).map(|k| VectorPolynomial::constant(&t.column(k))).collect();
    let p = run_recurrence(a, &profile, initial, count)?;
    Ok(PolynomialSystem { p, q: Vec::new(), profile })
}

/// Builds `q_1..q_{j_0}`; the system must reach index `m_{j_0} + n − j_0`.
pub fn generate_q(a: &BandMatrix, system: &PolynomialSystem) -> Result<Vec<VectorPolynomial>, RecurrenceError> {
    run_generators(a, &system.profile, &system.p)
}

/// `generate_p` followed by `generate_q`.
pub fn generate_system(a: &BandMatrix, t: &InitialConditions, count: usize) -> Result<PolynomialSystem, RecurrenceError> {
    let mut system = generate_p(a, t, count)?;
    system.q = generate_q(a, &system)?;
    Ok(system)
}

/// `p_1..p_count` and `q_1..q_{j_0}` evaluated at `nodes` by running the
/// recurrence on values in double-double, without forming coefficients.
pub fn evaluate_system(
    a: &BandMatrix,
    t: &InitialConditions,
    nodes: Arc<[f64]>,
    count: usize,
) -> Result<(Vec<NodeValues>, Vec<NodeValues>), RecurrenceError> {
    let profile = check_dims(a, t)?;
    let initial = (1..=a.n()).map(|k| CompensatedValues::constant(nodes.clone(), &t.column(k))).collect();
    let p = run_recurrence(a, &profile, initial, count)?;
    let q = if p.len() >= profile.m(profile.j0()) + profile.n0() {
        run_generators(a, &profile, &p)?
    } else {
        Vec::new()
    };
    let round = |v: &[CompensatedValues]| v.iter().map(CompensatedValues::rounded).collect();
    Ok((round(&p), round(&q)))
}

impl PolynomialSystem {
    pub fn p_heights(&self) -> Vec<usize> {
        self.p.iter().map(height_of).collect()
    }

    pub fn q_heights(&self) -> Vec<usize> {
        self.q.iter().map(height_of).collect()
    }

    /// Every `s ≤ h_max` equals some `h(p_k)` or some `h(q_j) + n·l`, where
    /// `h_max` is the largest height fully decided by the generated prefix.
    /// Returns false when `max_height` exceeds what the prefix decides.
    pub fn height_coverage_check(&self, max_height: usize) -> bool {
        let n = self.profile.n;
        let p = self.p_heights();
        let Some(&decided) = p.last() else { return false };
        if max_height > decided {
            return false;
        }
        let q = self.q_heights();
        (0..=max_height).all(|s| p.contains(&s) || q.iter().any(|&h| s >= h && (s - h) % n == 0))
    }

    /// `h(p_{k+n−j}) = h(p_k) + n` for every producing row `k` inside the prefix.
    pub fn height_law_holds(&self) -> bool {
        let n = self.profile.n;
        let h = self.p_heights();
        let mut k = 0;
        loop {
            k += 1;
            let Some(j) = self.profile.region(k) else { continue };
            let top = k + n - j;
            if top > h.len() {
                return true;
            }
            if h[top - 1] != h[k - 1] + n {
                return false;
            }
        }
    }
}

fn height_of(r: &VectorPolynomial) -> usize {
    match r.height() {
        Height::Value(h) => h,
        Height::Bottom => panic!("recurrence produced a zero polynomial"),
    }
}

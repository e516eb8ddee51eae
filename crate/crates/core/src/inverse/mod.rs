//! Reconstruction of a band matrix from a matrix-valued measure.
//!
//! Canonical vector polynomials are orthonormalized in order of height.
//! Slots whose residual has zero norm become generators `q̃`; slots that are
//! shifts of an earlier generator are skipped. The orthonormal family `p̃`
//! then yields the band entries `c_lk = ⟨p̃_l, z p̃_k⟩`.
//!
//! The residual for slot `h ≥ n` is built from `z p̃` at slot `h − n`
//! instead of the bare monomial. Both carry the same leading term and
//! differ by lower slots only, so after projection the results agree up to
//! a zero-class polynomial of lower height; [`ReconstructionState::literal_form`]
//! removes that part. Inner products are taken in a factored node space
//! (`W_l = F_l F_lᵀ`, coordinates `F_lᵀ r(x_l)`) where multiplication by `z`
//! scales each node block by `x_l`.

mod oracle;

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bandmatrix::{BandMatrix, BandMatrixError, DegenerationProfile};
use crate::linalg;
use crate::measure::{MatrixMeasure, MeasureError, DEFAULT_EPS_ZERO};
use crate::recurrence::{InitialConditions, RecurrenceError};
use crate::vecpoly::VectorPolynomial;

pub use oracle::{cholesky_oracle, OracleResult, DEFAULT_PIVOT_TOL};

/// Relative band tolerance for rounding reconstructed entries to zero.
pub const DEFAULT_BAND_TOL: f64 = 1e-8;
/// Default width of the ambiguity band above `ε_zero²`, as a factor.
pub const AMBIGUITY_FACTOR: f64 = 100.0;
/// Weight eigenvalues below this fraction of the largest are dropped.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InverseError {
    #[error("zero/nonzero decision at height {height} is ambiguous: relative squared norm {ratio:e} lies in ({lower:e}, {upper:e})")]
    ToleranceAmbiguous { height: usize, ratio: f64, lower: f64, upper: f64 },
    #[error("skipped height {height} is not in the zero class")]
    SkipNotZero { height: usize },
    #[error("need at least {needed} orthonormal polynomials, found {have}")]
    InsufficientBasis { have: usize, needed: usize },
    #[error("generator {generator} at height {height} has no orthonormal polynomial at height {target}")]
    NoMatchingHeight { generator: usize, height: usize, target: usize },
    #[error("tolerances must be positive and finite")]
    InvalidTolerance,
    #[error("class violation after rounding: {0}")]
    ClassViolation(BandMatrixError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Recurrence(#[from] RecurrenceError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionOptions {
    /// Stop after this many orthonormal polynomials; `None` runs to exhaustion.
    pub k_max: Option<usize>,
    pub eps_zero: f64,
    /// Decisions with relative squared norm in `(ε², factor·ε²)` are
    /// reported as ambiguous.
    pub ambiguity_factor: f64,
    /// Check that every skipped slot is in the zero class.
    pub verify_skips: bool,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self { k_max: None, eps_zero: DEFAULT_EPS_ZERO, ambiguity_factor: AMBIGUITY_FACTOR, verify_skips: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `k_max` orthonormal polynomials found.
    KmaxReached,
    /// As many orthonormal polynomials as the total rank of the measure,
    /// followed by generators in every remaining residue class.
    Exhausted,
}

/// A zero-norm generator `q̃`, scaled to leading coefficient 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub poly: VectorPolynomial,
    pub height: usize,
    /// Found while the measure still had unused rank, i.e. a genuine inner
    /// boundary condition rather than a sign of finite support.
    pub structural: bool,
}

/// Node geometry of the factored inner product.
#[derive(Debug, Clone)]
struct NodeSpace {
    n: usize,
    nodes: Arc<[f64]>,
    /// Per atom, `F_lᵀ` (rank × n).
    factors: Vec<DMatrix<f64>>,
    /// Node of every coordinate.
    coord_x: Vec<f64>,
}

impl NodeSpace {
    fn new(sigma: &MatrixMeasure) -> Self {
        let n = sigma.n();
        let mut factors = Vec::with_capacity(sigma.atoms().len());
        let mut coord_x = Vec::new();
        for atom in sigma.atoms() {
            let f = linalg::psd_factor(&atom.weight);
            let norms: Vec<f64> = (0..n).map(|c| f.column(c).norm_squared()).collect();
            let top = norms.iter().copied().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..n).filter(|&c| norms[c] > RANK_TOL * top).collect();
            let ft = DMatrix::from_fn(keep.len(), n, |r, c| f[(c, keep[r])]);
            coord_x.extend(std::iter::repeat_n(atom.x, keep.len()));
            factors.push(ft);
        }
        let nodes: Arc<[f64]> = sigma.nodes().collect::<Vec<_>>().into();
        Self { n, nodes, factors, coord_x }
    }

    /// Coordinates of the constant polynomial `e_{j+1}`.
    fn unit(&self, j: usize) -> Vec<f64> {
        self.factors.iter().flat_map(|ft| ft.column(j).iter().copied().collect::<Vec<_>>()).collect()
    }

    fn shift(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.coord_x).map(|(v, x)| v * x).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (d, s) in y.iter_mut().zip(x) {
        *d += a * s;
    }
}

/// Output of [`gram_schmidt_reconstruct`].
#[derive(Debug, Clone)]
pub struct ReconstructionState {
    pub n: usize,
    pub p: Vec<VectorPolynomial>,
    pub p_heights: Vec<usize>,
    pub q: Vec<Generator>,
    /// Heights skipped as shifts of earlier generators.
    pub skipped: Vec<usize>,
    /// Number of height slots examined.
    pub slots_scanned: usize,
    /// `(height, ‖ŝ‖²/‖u‖²)` for every zero/nonzero decision taken.
    pub decisions: Vec<(usize, f64)>,
    pub termination: Termination,
    pub total_rank: usize,
    space: NodeSpace,
    p_coords: Vec<Vec<f64>>,
    q_coords: Vec<Vec<f64>>,
}

impl ReconstructionState {
    pub fn is_exhausted(&self) -> bool {
        self.termination == Termination::Exhausted
    }

    /// Rows of the coefficient table whose band partners were all found.
    pub fn certified_rows(&self) -> usize {
        if self.is_exhausted() {
            self.p.len()
        } else {
            self.p.len().saturating_sub(self.n)
        }
    }

    pub fn structural_generators(&self) -> impl Iterator<Item = &Generator> {
        self.q.iter().filter(|g| g.structural)
    }

    pub fn nodes(&self) -> &Arc<[f64]> {
        &self.space.nodes
    }

    /// `max |⟨p̃_a, p̃_b⟩ − δ_ab|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (a, ya) in self.p_coords.iter().enumerate() {
            for (b, yb) in self.p_coords.iter().enumerate().skip(a) {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot(ya, yb) - target).abs());
            }
        }
        worst
    }

    /// Inner products of `Σ_i R_i(z) q̃_i` with every `p̃`, for scalar
    /// polynomial multipliers `R_i` (coefficients low to high).
    pub fn project_generator_combination(&self, multipliers: &[Vec<f64>]) -> Vec<f64> {
        let dim = self.space.coord_x.len();
        let mut y = vec![0.0; dim];
        for (coords, r) in self.q_coords.iter().zip(multipliers) {
            let mut power = coords.clone();
            for &c in r {
                axpy(&mut y, c, &power);
                power = self.space.shift(&power);
            }
        }
        self.p_coords.iter().map(|yp| dot(yp, &y)).collect()
    }

    /// The flow chart's polynomials: every `p̃` and `q̃` reduced so that its
    /// coefficients vanish at all zero-class heights below its own.
    pub fn literal_form(&self) -> (Vec<VectorPolynomial>, Vec<VectorPolynomial>) {
        let n = self.n;
        let mut reduced_q: Vec<(usize, VectorPolynomial)> = Vec::with_capacity(self.q.len());
        for g in &self.q {
            let r = reduce(&g.poly, g.height, &reduced_q, n);
            reduced_q.push((g.height, r));
        }
        let p = self.p.iter().zip(&self.p_heights).map(|(r, &h)| reduce(r, h, &reduced_q, n)).collect();
        (p, reduced_q.into_iter().map(|(_, r)| r).collect())
    }
}

/// Clears every slot below `height` that is a shift of a reduced generator.
fn reduce(r: &VectorPolynomial, height: usize, gens: &[(usize, VectorPolynomial)], n: usize) -> VectorPolynomial {
    let mut out = r.clone();
    for s in (0..height).rev() {
        let c = out.slot(s);
        if c == 0.0 {
            continue;
        }
        if let Some((h, g)) = gens.iter().find(|(h, _)| s >= *h && (s - h) % n == 0) {
            out.axpy(-c, &g.shift_by((s - h) / n)).expect("same dimension");
        }
    }
    out
}

/// Runs the Gram-Schmidt flow chart on `sigma`.
pub fn gram_schmidt_reconstruct(
    sigma: &MatrixMeasure,
    options: &ReconstructionOptions,
) -> Result<ReconstructionState, InverseError> {
    let eps = options.eps_zero;
    if !(eps > 0.0 && eps.is_finite() && options.ambiguity_factor >= 1.0) {
        return Err(InverseError::InvalidTolerance);
    }
    let n = sigma.n();
    let total_rank = sigma.validate(0)?.total_rank;
    let space = NodeSpace::new(sigma);
    let (lower, upper) = (eps * eps, options.ambiguity_factor * eps * eps);

    let mut p: Vec<VectorPolynomial> = Vec::new();
    let mut p_heights: Vec<usize> = Vec::new();
    let mut p_coords: Vec<Vec<f64>> = Vec::new();
    let mut q: Vec<Generator> = Vec::new();
    let mut q_coords: Vec<Vec<f64>> = Vec::new();
    let mut skipped = Vec::new();
    let mut decisions = Vec::new();
    let mut height = 0usize;

    let termination = loop {
        if options.k_max == Some(p.len()) {
            break Termination::KmaxReached;
        }
        if q.len() == n {
            break Termination::Exhausted;
        }
        let h = height;
        height += 1;

        if let Some((i, gen)) = q.iter().enumerate().find(|(_, g)| h > g.height && (h - g.height).is_multiple_of(n)) {
            if options.verify_skips && skip_ratio(&space, &q_coords[i], gen.height, h) > lower {
                return Err(InverseError::SkipNotZero { height: h });
            }
            skipped.push(h);
            continue;
        }

        let (mut poly, mut coords) = if h < n {
            (VectorPolynomial::canonical(h + 1, n), space.unit(h))
        } else {
            let idx = p_heights.iter().position(|&ph| ph == h - n).expect("slot h − n holds an orthonormal polynomial");
            (p[idx].shift(), space.shift(&p_coords[idx]))
        };
        let reference = dot(&coords, &coords);

        for _ in 0..2 {
            for (pi, yi) in p.iter().zip(&p_coords) {
                let c = dot(yi, &coords);
                axpy(&mut coords, -c, yi);
                poly.axpy(-c, pi).expect("same dimension");
            }
        }
        let norm2 = dot(&coords, &coords);
        let ratio = if reference > 0.0 { norm2 / reference } else { 0.0 };
        decisions.push((h, ratio));

        if ratio <= lower {
            let lead = poly.slot(h);
            let scale = 1.0 / lead;
            coords.iter_mut().for_each(|v| *v *= scale);
            q.push(Generator { poly: poly.scale(scale), height: h, structural: p.len() < total_rank });
            q_coords.push(coords);
        } else if ratio < upper {
            return Err(InverseError::ToleranceAmbiguous { height: h, ratio, lower, upper });
        } else {
            let scale = 1.0 / norm2.sqrt();
            coords.iter_mut().for_each(|v| *v *= scale);
            p.push(poly.scale(scale));
            p_heights.push(h);
            p_coords.push(coords);
        }
    };

    Ok(ReconstructionState {
        n,
        p,
        p_heights,
        q,
        skipped,
        slots_scanned: height,
        decisions,
        termination,
        total_rank,
        space,
        p_coords,
        q_coords,
    })
}

/// `‖z^l q̃‖² / ‖e_{h+1}‖²` for the skipped height `h = h(q̃) + n·l`.
fn skip_ratio(space: &NodeSpace, q_coords: &[f64], q_height: usize, h: usize) -> f64 {
    let n = space.n;
    let mut y = q_coords.to_vec();
    for _ in 0..(h - q_height) / n {
        y = space.shift(&y);
    }
    let mut e = space.unit(h % n);
    for _ in 0..h / n {
        e = space.shift(&e);
    }
    let reference = dot(&e, &e);
    if reference > 0.0 {
        dot(&y, &y) / reference
    } else {
        0.0
    }
}

/// The symmetric table `c_lk = ⟨p̃_l, z p̃_k⟩` (0-based storage).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub n: usize,
    pub c: DMatrix<f64>,
    /// Largest `|c_lk − c_kl|` before symmetrization.
    pub asymmetry: f64,
    pub certified_rows: usize,
}

impl CoefficientTable {
    pub fn size(&self) -> usize {
        self.c.nrows()
    }

    /// Largest `|c_lk|` over certified rows.
    pub fn max_certified(&self) -> f64 {
        let rows = self.certified_rows.min(self.size());
        (0..rows)
            .flat_map(|k| (0..self.size()).map(move |l| (l, k)))
            .fold(0.0f64, |a, (l, k)| a.max(self.c[(l, k)].abs()))
    }

    /// Largest `|c_lk|` with `|l − k| > n`.
    pub fn max_out_of_band(&self) -> f64 {
        let size = self.size();
        let mut worst = 0.0f64;
        for l in 0..size {
            for k in 0..size {
                if l.abs_diff(k) > self.n {
                    worst = worst.max(self.c[(l, k)].abs());
                }
            }
        }
        worst
    }

    /// Whether `c_{k+n−j,k} > 0` on every certified row `k` of region `j`
    /// whose outer partner lies inside the table.
    pub fn leading_entries_positive(&self, profile: &DegenerationProfile) -> bool {
        (1..=self.certified_rows.min(self.size())).all(|k| match profile.region(k) {
            Some(j) if k + self.n - j <= self.size() => self.c[(k + self.n - j - 1, k - 1)] > 0.0,
            _ => true,
        })
    }
}

/// `c_lk = ⟨p̃_l, z p̃_k⟩` for all `l, k ≤ K_p`, symmetrized by averaging.
pub fn recover_coefficients(state: &ReconstructionState) -> Result<CoefficientTable, InverseError> {
    let size = state.p.len();
    if size < state.n + 1 {
        return Err(InverseError::InsufficientBasis { have: size, needed: state.n + 1 });
    }
    let shifted: Vec<Vec<f64>> = state.p_coords.iter().map(|y| state.space.shift(y)).collect();
    let raw = DMatrix::from_fn(size, size, |l, k| dot(&state.p_coords[l], &shifted[k]));
    let asymmetry = (&raw - raw.transpose()).amax();
    Ok(CoefficientTable { n: state.n, c: linalg::symmetrize(&raw), asymmetry, certified_rows: state.certified_rows() })
}

/// Band matrix with `d_k^(i) = c_{k+i,k}`, entries below
/// `band_tol·max|c|` set to zero, validated against the class.
pub fn assemble_matrix(table: &CoefficientTable, band_tol: f64) -> Result<(BandMatrix, DegenerationProfile), InverseError> {
    if !(band_tol > 0.0 && band_tol.is_finite()) {
        return Err(InverseError::InvalidTolerance);
    }
    let n = table.n;
    let size = table.size();
    let cut = band_tol * table.max_certified();
    let diagonals = (0..=n)
        .map(|i| {
            (0..size.saturating_sub(i))
                .map(|k| {
                    let v = table.c[(k + i, k)];
                    if v.abs() < cut {
                        0.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let matrix = BandMatrix::new(n, diagonals).map_err(InverseError::ClassViolation)?;
    let profile = matrix.validate().map_err(InverseError::ClassViolation)?;
    Ok((matrix, profile))
}

/// `m_j` = index (1-based) of the `p̃` at height `h(q̃_j) − n`, for the
/// structural generators.
pub fn detect_degenerations(state: &ReconstructionState) -> Result<Vec<usize>, InverseError> {
    state
        .q
        .iter()
        .enumerate()
        .filter(|(_, g)| g.structural)
        .map(|(i, g)| {
            let target = g.height.checked_sub(state.n);
            target
                .and_then(|t| state.p_heights.iter().position(|&h| h == t))
                .map(|idx| idx + 1)
                .ok_or(InverseError::NoMatchingHeight {
                    generator: i + 1,
                    height: g.height,
                    target: target.unwrap_or(0),
                })
        })
        .collect()
}

/// 𝒯 with column `k` the constant coefficient vector of `p̃_k`, `k ≤ n`.
pub fn extract_t(state: &ReconstructionState) -> Result<InitialConditions, InverseError> {
    let n = state.n;
    if state.p.len() < n || state.p_heights[..n] != (0..n).collect::<Vec<_>>()[..] {
        return Err(InverseError::InsufficientBasis { have: state.p.len(), needed: n });
    }
    let t = DMatrix::from_fn(n, n, |j, k| state.p[k].coeff(0, j));
    Ok(InitialConditions::new(t)?)
}

/// Everything the inverse problem produces from one measure.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub state: ReconstructionState,
    pub table: CoefficientTable,
    pub matrix: BandMatrix,
    pub profile: DegenerationProfile,
    pub degenerations: Vec<usize>,
    pub t: InitialConditions,
}

/// Gram-Schmidt, coefficient recovery, assembly, degeneration detection
/// and 𝒯 extraction in one call.
pub fn reconstruct(
    sigma: &MatrixMeasure,
    options: &ReconstructionOptions,
    band_tol: f64,
) -> Result<Reconstruction, InverseError> {
    let state = gram_schmidt_reconstruct(sigma, options)?;
    let table = recover_coefficients(&state)?;
    let (matrix, profile) = assemble_matrix(&table, band_tol)?;
    let degenerations = detect_degenerations(&state)?;
    let t = extract_t(&state)?;
    Ok(Reconstruction { state, table, matrix, profile, degenerations, t })
}

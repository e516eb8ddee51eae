//! Independent reconstruction through the Gram matrix of canonical vector
//! polynomials: `⟨e_a, e_b⟩` is an entry of the moment `S_{d_a + d_b}`, and a
//! semi-definite factorization in natural order orthonormalizes
//! `e_1, e_2, …` exactly as the literal flow chart would.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::measure::MatrixMeasure;
use crate::vecpoly::VectorPolynomial;

/// A pivot below this fraction of its diagonal Gram entry counts as zero.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Orthonormal polynomials, one per nonzero pivot, in order.
    pub p: Vec<VectorPolynomial>,
    /// Heights (0-based slots) with zero pivot.
    pub zero_pivots: Vec<usize>,
    /// `e_k` minus its projection on the preceding `p`, for every zero pivot.
    pub zero_residuals: Vec<VectorPolynomial>,
    /// Pivot values `R_kk²`, zero pivots included.
    pub pivots: Vec<f64>,
}

/// Orthonormalizes `e_1..e_K` under `sigma` via its moments. The Gram
/// matrix of a measure with floating-point atoms is dyadic, so the
/// factorization `G = Uᵀ D U` runs in exact rational arithmetic and only the
/// final coefficients are rounded.
pub fn cholesky_oracle(sigma: &MatrixMeasure, k: usize, pivot_tol: f64) -> OracleResult {
    let n = sigma.n();
    if k == 0 {
        return OracleResult { p: Vec::new(), zero_pivots: Vec::new(), zero_residuals: Vec::new(), pivots: Vec::new() };
    }
    let gram = exact_gram(sigma, k);

    // Unit upper U and pivots d with G_PP = U_PPᵀ D U_PP on the nonzero pivots.
    let zero = BigRational::zero;
    let mut u = vec![vec![zero(); k]; k];
    let mut d = vec![zero(); k];
    let mut pivots = Vec::with_capacity(k);
    let mut nonzero: Vec<usize> = Vec::new();
    let mut zero_pivots = Vec::new();
    for i in 0..k {
        let mut pivot = gram[i][i].clone();
        for &m in &nonzero {
            pivot -= &d[m] * &u[m][i] * &u[m][i];
        }
        let pivot_f = to_f64(&pivot);
        let diag_f = to_f64(&gram[i][i]);
        pivots.push(pivot_f.max(0.0));
        if !gram[i][i].is_positive() || !pivot.is_positive() || pivot_f <= pivot_tol * diag_f {
            zero_pivots.push(i);
            continue;
        }
        u[i][i] = BigRational::one();
        for j in i + 1..k {
            let mut s = gram[i][j].clone();
            for &m in &nonzero {
                s -= &d[m] * &u[m][i] * &u[m][j];
            }
            u[i][j] = s / &pivot;
        }
        d[i] = pivot;
        nonzero.push(i);
    }

    // Columns of U_PP⁻¹ D_P^(-1/2) are the coefficient vectors of the
    // orthonormal family.
    let dim = nonzero.len();
    let upp: Vec<Vec<BigRational>> = nonzero.iter().map(|&a| nonzero.iter().map(|&b| u[a][b].clone()).collect()).collect();
    let inv = invert_unit_upper(&upp);
    let to_poly = |coeffs: Vec<(usize, f64)>| {
        let top = coeffs.iter().map(|&(s, _)| s).max().unwrap_or(0);
        let mut slots = vec![0.0; top + 1];
        for (s, c) in coeffs {
            slots[s] += c;
        }
        VectorPolynomial::from_slots(n, slots)
    };
    let p = (0..dim)
        .map(|b| {
            let scale = to_f64(&d[nonzero[b]]).sqrt();
            to_poly((0..=b).map(|a| (nonzero[a], to_f64(&inv[a][b]) / scale)).collect())
        })
        .collect();
    let zero_residuals = zero_pivots
        .iter()
        .map(|&z| {
            let mut coeffs = vec![zero(); z + 1];
            coeffs[z] = BigRational::one();
            for (b, &pb) in nonzero.iter().enumerate() {
                if pb < z {
                    for a in 0..=b {
                        coeffs[nonzero[a]] -= &u[pb][z] * &inv[a][b];
                    }
                }
            }
            to_poly(coeffs.iter().enumerate().map(|(s, c)| (s, to_f64(c))).collect())
        })
        .collect();
    OracleResult { p, zero_pivots, zero_residuals, pivots }
}

/// `⟨e_a, e_b⟩ = Σ_l x_l^(a/n + b/n) W_l[a mod n, b mod n]`, exactly.
fn exact_gram(sigma: &MatrixMeasure, k: usize) -> Vec<Vec<BigRational>> {
    let n = sigma.n();
    let top = 2 * ((k - 1) / n);
    let atoms: Vec<(Vec<BigRational>, Vec<BigRational>)> = sigma
        .atoms()
        .iter()
        .map(|at| {
            let x = exact(at.x);
            let mut powers = vec![BigRational::one()];
            for _ in 0..top {
                let next = powers.last().unwrap() * &x;
                powers.push(next);
            }
            (powers, at.weight.iter().map(|&w| exact(w)).collect())
        })
        .collect();
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    let (e, i, j) = (a / n + b / n, a % n, b % n);
                    atoms.iter().fold(BigRational::zero(), |acc, (powers, w)| acc + &powers[e] * &w[i + j * n])
                })
                .collect()
        })
        .collect()
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite measure data")
}

fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn invert_unit_upper(u: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let m = u.len();
    let mut inv = vec![vec![BigRational::zero(); m]; m];
    for j in 0..m {
        inv[j][j] = BigRational::one();
        for i in (0..j).rev() {
            let mut s = BigRational::zero();
            for l in i + 1..=j {
                s += &u[i][l] * &inv[l][j];
            }
            inv[i][j] = -s;
        }
    }
    inv
}

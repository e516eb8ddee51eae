//! C interface to `bandspec`.
//!
//! Objects live behind opaque handles created by `bs_*_new`, `bs_*_from_*`
//! or an operation, and are released with the matching `bs_*_free`. Every
//! fallible call returns a [`BsStatus`]; on failure the message is kept per
//! thread and read back with [`bs_last_error_message`].
//!
//! Pointer arguments must be null or valid for the access the call makes:
//! arrays for the stated number of `double`s, strings NUL-terminated UTF-8,
//! handles obtained from this library and not yet freed. Matrices cross the
//! boundary row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bandspec::cli::CliError;
use bandspec::forward::spectral_function;
use bandspec::inverse::{reconstruct, Reconstruction, ReconstructionOptions, AMBIGUITY_FACTOR, DEFAULT_BAND_TOL};
use bandspec::io::{MatrixFile, MeasureFile};
use bandspec::measure::DEFAULT_EPS_ZERO;
use bandspec::{BandMatrix, InitialConditions, MatrixMeasure};
use nalgebra::DMatrix;

/// Return codes. The nonzero values below 5 match the exit codes of the
/// `bandspec` command.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    Failure = 1,
    Invalid = 2,
    Ambiguous = 3,
    Numerical = 4,
    NullPointer = 5,
    Panic = 6,
}

pub struct BsMatrix(BandMatrix);

pub struct BsInitial(InitialConditions);

pub struct BsMeasure(MatrixMeasure);

pub struct BsReconstruction(Reconstruction);

/// Options for [`bs_inverse`]. `k_max = 0` runs to exhaustion.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsInverseOptions {
    pub k_max: usize,
    pub eps_zero: f64,
    pub ambiguity_factor: f64,
    pub band_tol: f64,
    pub verify_skips: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(BsStatus, String);

impl<E: Into<CliError>> From<E> for Fail {
    fn from(e: E) -> Self {
        let e: CliError = e.into();
        let status = match e {
            CliError::Validation(_) => BsStatus::Invalid,
            CliError::Ambiguous(_) => BsStatus::Ambiguous,
            CliError::Numerical(_) => BsStatus::Numerical,
            CliError::Failure(_) => BsStatus::Failure,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(BsStatus::Invalid, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn run(f: impl FnOnce() -> Result<(), Fail>) -> BsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BsStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(BsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(BsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail(BsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(BsStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(BsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(BsStatus::NullPointer, "output pointer is null".into()));
    }
    *out = CString::new(s).map_err(|_| Fail(BsStatus::Failure, "string contains NUL".into()))?.into_raw();
    Ok(())
}

unsafe fn put_indices(out: *mut usize, cap: usize, len: *mut usize, values: &[usize]) -> Result<(), Fail> {
    if len.is_null() {
        return Err(Fail(BsStatus::NullPointer, "length pointer is null".into()));
    }
    *len = values.len();
    if !out.is_null() {
        for (i, &v) in values.iter().take(cap).enumerate() {
            *out.add(i) = v;
        }
    }
    Ok(())
}

fn row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.ncols();
    for r in 0..m.nrows() {
        for c in 0..n {
            out[r * n + c] = m[(r, c)];
        }
    }
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn bs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn bs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A band matrix from its diagonals `d^(0), d^(1), …, d^(n)` stored one
/// after another (`size`, `size − 1`, …, `size − n` entries).
#[no_mangle]
pub unsafe extern "C" fn bs_matrix_from_diagonals(
    n: usize,
    size: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut BsMatrix,
) -> BsStatus {
    run(|| {
        if n == 0 || size <= n {
            return Err(invalid(format!("need n >= 1 and size > n, got n = {n}, size = {size}")));
        }
        let expected: usize = (0..=n).map(|i| size - i).sum();
        if len != expected {
            return Err(invalid(format!("expected {expected} diagonal entries, got {len}")));
        }
        let data = slice(data, len, "data")?;
        let mut diagonals = Vec::with_capacity(n + 1);
        let mut at = 0;
        for i in 0..=n {
            diagonals.push(data[at..at + size - i].to_vec());
            at += size - i;
        }
        put(out, BsMatrix(BandMatrix::new(n, diagonals)?))
    })
}

/// A band matrix from the JSON matrix file format.
#[no_mangle]
pub unsafe extern "C" fn bs_matrix_from_json(json: *const c_char, out: *mut *mut BsMatrix) -> BsStatus {
    run(|| {
        let file: MatrixFile = serde_json::from_str(string(json, "json")?).map_err(|e| invalid(e.to_string()))?;
        put(out, BsMatrix(file.to_matrix()?))
    })
}

/// JSON matrix file text, to be released with [`bs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bs_matrix_to_json(m: *const BsMatrix, out: *mut *mut c_char) -> BsStatus {
    run(|| {
        let a = &handle(m, "matrix")?.0;
        let degenerations = a.validate().map(|p| p.m).unwrap_or_default();
        let text = serde_json::to_string(&MatrixFile::from_matrix(a, degenerations, None))
            .map_err(|e| Fail(BsStatus::Failure, e.to_string()))?;
        put_string(out, text)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_matrix_free(m: *mut BsMatrix) {
    free(m);
}

/// Band half-width `n`, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn bs_matrix_n(m: *const BsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n())
}

/// Order `N`, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn bs_matrix_size(m: *const BsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.size())
}

/// `d_k^(i)` for `0 ≤ i ≤ n` and 1-based `k ≤ N − i`.
#[no_mangle]
pub unsafe extern "C" fn bs_matrix_entry(m: *const BsMatrix, i: usize, k: usize, out: *mut f64) -> BsStatus {
    run(|| {
        let a = &handle(m, "matrix")?.0;
        if i > a.n() || k == 0 || k + i > a.size() {
            return Err(invalid(format!("no entry d_{k}^({i}) in a matrix with n = {}, N = {}", a.n(), a.size())));
        }
        let out = slice_mut(out, 1, "out")?;
        out[0] = a.d(i, k);
        Ok(())
    })
}

/// Checks class membership. The degeneration profile `m_1 < … < m_j0` is
/// written to `m` (at most `cap` entries, `m` may be null) and `j0` to `len`.
#[no_mangle]
pub unsafe extern "C" fn bs_matrix_validate(m: *const BsMatrix, out: *mut usize, cap: usize, len: *mut usize) -> BsStatus {
    run(|| {
        let profile = handle(m, "matrix")?.0.validate()?;
        put_indices(out, cap, len, &profile.m)
    })
}

/// Initial conditions 𝒯 from `n·n` row-major entries.
#[no_mangle]
pub unsafe extern "C" fn bs_initial_new(n: usize, rows: *const f64, out: *mut *mut BsInitial) -> BsStatus {
    run(|| {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let data = slice(rows, n * n, "rows")?;
        let t = InitialConditions::new(DMatrix::from_row_slice(n, n, data)).map_err(|e| invalid(e.to_string()))?;
        put(out, BsInitial(t))
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_initial_identity(n: usize, out: *mut *mut BsInitial) -> BsStatus {
    run(|| {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        put(out, BsInitial(InitialConditions::identity(n)))
    })
}

/// Writes 𝒯 row-major into `n·n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_initial_get(t: *const BsInitial, out: *mut f64) -> BsStatus {
    run(|| {
        let t = &handle(t, "initial conditions")?.0;
        row_major(t.matrix(), slice_mut(out, t.n() * t.n(), "out")?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_initial_free(t: *mut BsInitial) {
    free(t);
}

/// The spectral function of the leading `size × size` block of `m` under `t`.
#[no_mangle]
pub unsafe extern "C" fn bs_forward(
    m: *const BsMatrix,
    t: *const BsInitial,
    size: usize,
    out: *mut *mut BsMeasure,
) -> BsStatus {
    run(|| {
        let a = &handle(m, "matrix")?.0;
        let t = &handle(t, "initial conditions")?.0;
        put(out, BsMeasure(spectral_function(a, t, size)?))
    })
}

/// A measure with `count` atoms at `nodes`, weights as `count` row-major
/// `n × n` blocks.
#[no_mangle]
pub unsafe extern "C" fn bs_measure_new(
    n: usize,
    count: usize,
    nodes: *const f64,
    weights: *const f64,
    out: *mut *mut BsMeasure,
) -> BsStatus {
    run(|| {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let nodes = slice(nodes, count, "nodes")?;
        let weights = slice(weights, count * n * n, "weights")?;
        let atoms = nodes
            .iter()
            .zip(weights.chunks_exact(n * n))
            .map(|(&x, w)| (x, DMatrix::from_row_slice(n, n, w)));
        put(out, BsMeasure(MatrixMeasure::new(n, atoms).map_err(|e| invalid(e.to_string()))?))
    })
}

/// A measure from the JSON measure file format.
#[no_mangle]
pub unsafe extern "C" fn bs_measure_from_json(json: *const c_char, out: *mut *mut BsMeasure) -> BsStatus {
    run(|| {
        let file: MeasureFile = serde_json::from_str(string(json, "json")?).map_err(|e| invalid(e.to_string()))?;
        put(out, BsMeasure(file.to_measure()?))
    })
}

/// JSON measure file text, to be released with [`bs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bs_measure_to_json(s: *const BsMeasure, out: *mut *mut c_char) -> BsStatus {
    run(|| {
        let sigma = &handle(s, "measure")?.0;
        let text = serde_json::to_string(&MeasureFile::from_measure(sigma, None))
            .map_err(|e| Fail(BsStatus::Failure, e.to_string()))?;
        put_string(out, text)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bs_measure_free(s: *mut BsMeasure) {
    free(s);
}

#[no_mangle]
pub unsafe extern "C" fn bs_measure_n(s: *const BsMeasure) -> usize {
    s.as_ref().map_or(0, |s| s.0.n())
}

#[no_mangle]
pub unsafe extern "C" fn bs_measure_atom_count(s: *const BsMeasure) -> usize {
    s.as_ref().map_or(0, |s| s.0.atoms().len())
}

/// Node and row-major weight of atom `l` (0-based, ascending nodes).
#[no_mangle]
pub unsafe extern "C" fn bs_measure_atom(s: *const BsMeasure, l: usize, x: *mut f64, weight: *mut f64) -> BsStatus {
    run(|| {
        let sigma = &handle(s, "measure")?.0;
        let atom = sigma
            .atoms()
            .get(l)
            .ok_or_else(|| invalid(format!("atom {l} out of range ({} atoms)", sigma.atoms().len())))?;
        slice_mut(x, 1, "x")?[0] = atom.x;
        let n = sigma.n();
        row_major(&atom.weight, slice_mut(weight, n * n, "weight")?);
        Ok(())
    })
}

/// The moment `S_k = Σ x_l^k W_l`, row-major.
#[no_mangle]
pub unsafe extern "C" fn bs_measure_moment(s: *const BsMeasure, k: usize, out: *mut f64) -> BsStatus {
    run(|| {
        let sigma = &handle(s, "measure")?.0;
        let n = sigma.n();
        row_major(&sigma.moment(k), slice_mut(out, n * n, "out")?);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn bs_inverse_options_default() -> BsInverseOptions {
    BsInverseOptions {
        k_max: 0,
        eps_zero: DEFAULT_EPS_ZERO,
        ambiguity_factor: AMBIGUITY_FACTOR,
        band_tol: DEFAULT_BAND_TOL,
        verify_skips: false,
    }
}

/// Reconstructs the matrix and 𝒯 from a measure. `options` may be null for
/// the defaults.
#[no_mangle]
pub unsafe extern "C" fn bs_inverse(
    s: *const BsMeasure,
    options: *const BsInverseOptions,
    out: *mut *mut BsReconstruction,
) -> BsStatus {
    run(|| {
        let sigma = &handle(s, "measure")?.0;
        let o = options.as_ref().copied().unwrap_or_else(|| bs_inverse_options_default());
        let opts = ReconstructionOptions {
            k_max: (o.k_max > 0).then_some(o.k_max),
            eps_zero: o.eps_zero,
            ambiguity_factor: o.ambiguity_factor,
            verify_skips: o.verify_skips,
        };
        put(out, BsReconstruction(reconstruct(sigma, &opts, o.band_tol)?))
    })
}

/// A new handle holding the reconstructed matrix.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_matrix(r: *const BsReconstruction, out: *mut *mut BsMatrix) -> BsStatus {
    run(|| put(out, BsMatrix(handle(r, "reconstruction")?.0.matrix.clone())))
}

/// A new handle holding the extracted 𝒯.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_initial(r: *const BsReconstruction, out: *mut *mut BsInitial) -> BsStatus {
    run(|| put(out, BsInitial(handle(r, "reconstruction")?.0.t.clone())))
}

/// Degenerations detected from the generators, written like
/// [`bs_matrix_validate`].
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_degenerations(
    r: *const BsReconstruction,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> BsStatus {
    run(|| put_indices(out, cap, len, &handle(r, "reconstruction")?.0.degenerations))
}

#[no_mangle]
pub unsafe extern "C" fn bs_reconstruction_free(r: *mut BsReconstruction) {
    free(r);
}

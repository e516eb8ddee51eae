//! Band symmetric matrices with diagonal degenerations and their
//! matrix-valued spectral functions: the direct map (eigenvectors to
//! spectral function) and the inverse map (Gram-Schmidt on canonical
//! vector polynomials back to the matrix).

pub mod bandmatrix;
pub mod cli;
mod compensated;
pub mod forward;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod measure;
pub mod random;
pub mod recurrence;
pub mod roundtrip;
pub mod vecpoly;

pub use bandmatrix::{BandMatrix, BandMatrixError, DegenerationProfile};
pub use measure::{MatrixMeasure, MeasureError};
pub use recurrence::{InitialConditions, PolynomialSystem};
pub use vecpoly::{Height, VectorPolynomial};

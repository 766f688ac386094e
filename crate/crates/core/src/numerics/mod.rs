//! Dense complex linear algebra kernels shared by the rest of the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`; this module adds the few
//! operations the rest of the crate needs on top (commutators, Kronecker
//! products, entrywise norms), a scaling-and-squaring matrix exponential, a
//! one-sided Jacobi SVD for nullspace extraction, and an Adam optimizer.

mod adam;
mod expm;
mod matrix;
mod svd;

pub use adam::AdamState;
pub use expm::expm;
pub use matrix::{
    c64, commutator, frobenius_norm, frobenius_norm_sq, identity, is_finite, kron, l1_norm,
    max_abs_diff, real_matrix, to_pairs, zeros, CMatrix, CVector,
};
pub use num_complex::Complex64;
pub use svd::{svd, svd_values_and_nullspace, Svd};

//! Learning Lie algebra representations from structure constants.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense complex matrices, the matrix exponential, a Jacobi
//!   SVD used for nullspace extraction, and an Adam optimizer.
//! * [`algebra`]: structure constants and the built-in algebras so(3),
//!   so(2,1) and so(3,1).
//! * [`reps`]: explicit representations (analytic ladder constructions,
//!   direct sums, tensor products) and their JSON form.
//! * [`learnrep`]: gradient descent on the structure-constant violation to
//!   discover representations numerically.
//! * [`clebsch`]: Clebsch-Gordan constraint systems, the singular-value
//!   diagnostic ratio, Schur isomorphism tests and tensor-product tables.
//! * [`spacetimenet`]: a Poincare-equivariant point-cloud network built from
//!   Clebsch-Gordan tensors, with hand-written reverse-mode gradients.
//! * [`dataset`]: IDX ingestion and MNIST-Live spacetime point clouds.
//!
//! Data-parallel loops (LearnRep restarts, Clebsch-Gordan grid cells, batch
//! forward/backward, cloud generation) run on rayon when the `parallel`
//! feature is enabled and an [`Execution::Parallel`] mode is requested.
//! Without the feature every loop runs sequentially.

pub mod algebra;
pub mod clebsch;
pub mod dataset;
mod error;
pub mod learnrep;
pub mod numerics;
pub mod parallel;
pub mod reps;
pub mod spacetimenet;

pub use error::{Error, Result};
pub use parallel::Execution;

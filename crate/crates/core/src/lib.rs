//! Numerical toolkit for Bergman kernels of high tensor powers of a
//! positive line bundle: the Gaussian model kernel, its polynomial calculus,
//! and a lattice realisation on the flat torus.

pub mod bergman;
pub mod cli;
pub mod eigensolver;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod kernel_calculus;
pub mod model_kernel;
pub mod poly;
pub mod toeplitz;
pub mod torus;

pub use error::{Error, Result};

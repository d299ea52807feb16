//! Numerical toolkit for the variable-exponent p(x)-Laplacian on rectangular grids.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: rectangular grids in 1-3 dimensions, node-sampled scalar fields,
//!   finite-difference calculus and trapezoid quadrature, analytic bump test functions;
//! - [`expr`]: the closed-form expression language used for exponent fields;
//! - [`exponent`]: exponent fields p(x) with certified bounds and case classification;
//! - [`spaces`]: modulars, Luxemburg norms and the norm-modular inequalities of
//!   variable-exponent Lebesgue/Sobolev spaces;
//! - [`infconv`]: infimal-convolution regularization (quadratic and q-power kernels),
//!   semiconcavity and gradient-bound checks, concave-part mollification;
//! - [`operator`]: pointwise nondivergence evaluation of the operator, delta-regularized
//!   variants, weak residuals against bump test functions, and lower-bound certificates;
//! - [`solver`]: Dirichlet energy minimization by Armijo descent with nested-refinement
//!   initialization, plus an independent 1D two-point oracle;
//! - [`verify`]: weak / viscosity / comparison supersolution classifiers and the
//!   equivalence experiment that cross-checks them;
//! - [`cli`]: run configuration, report emission and the command drivers behind the
//!   `varlap` binary.

pub mod cli;
pub mod error;
pub mod exponent;
pub mod expr;
pub mod grid;
pub mod infconv;
pub mod linalg;
pub mod operator;
pub mod solver;
pub mod spaces;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

//! Low-level kernels: quadrature, small dense and tridiagonal solvers, and
//! streaming moment accumulation.

pub mod linalg;
pub mod quadrature;
pub mod stats;

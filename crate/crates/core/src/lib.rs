//! Numerical solver and verification harness for the variable-exponent
//! infinity-Laplace equation `-Delta_{X,inf(x)} u = 0` with respect to a
//! frame of vector fields on a rectangle.
//!
//! The solution is built as the `k -> inf` limit of `k p(x)`-Laplace
//! Dirichlet problems, and checked against the Jensen auxiliary equations,
//! the comparison principle and a Harnack inequality.

// `!(a > b)` is used on purpose so that NaN inputs are rejected; index
// loops read better than zipped iterators in the stencil code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli_io;
pub mod error;
pub mod expr;
pub mod grid;
pub mod operators;
pub mod problem;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
pub use expr::{parse, Expr, ExprError};
pub use grid::{
    grad_ln_p, riemannian_distance, riemannian_gradient, sample_frame, symmetrized_hessian,
    FrameExprs, FrameField, Grid2D, MatrixField, Node, ScalarField, Sym2, VectorField,
};
pub use operators::{
    energy_functional, infinity_residual_at, infinity_x_residual_at, infinity_x_residual_field,
    max_form_residual, min_form_residual, pk_residual_at, sup_extremal, ExponentData, PointJet,
};
pub use problem::{
    BoundarySpec, DomainSpec, LinearSolver, NonlinearMethod, Problem, ProblemSpec, SolverConfig,
};
pub use solvers::{
    continue_k, harmonic_extension, solve_dirichlet_infinity, solve_jensen, solve_linear_weighted,
    solve_pk, SolveReport,
};

//! Summation-by-parts (SBP) differentiation operators that are exact on
//! general finite-dimensional function spaces, together with the quadrature
//! rules that induce them and multi-block SAT solvers built on top.
//!
//! The pipeline is:
//!
//! 1. [`basis::make_space`] describes the function space (polynomial,
//!    trigonometric, exponential, cubic RBF cardinal).
//! 2. [`quadrature`] finds a positive rule exact on the derivative-of-products
//!    space of that function space.
//! 3. [`operator::build_operator`] assembles `D = P⁻¹Q` from the rule.
//! 4. [`solver::run`] maps the operator onto uniform blocks and integrates
//!    advection or Burgers problems with SSPRK(3,3).

pub mod basis;
pub mod cli;
pub mod diagnostics;
mod error;
pub(crate) mod linalg;
pub mod operator;
pub mod quadrature;
pub mod solver;

pub use basis::{make_space, FunctionSpace, Interval, SpaceKind};
pub use error::{FsbpError, Result};

pub use operator::{build_operator, verify_sbp, FsbpOperator, SbpReport};
pub use quadrature::{
    find_positive_rule, gauss_lobatto_rule, least_squares_rule, trapezoid_rule, verify_exactness,
    QuadratureRule,
};

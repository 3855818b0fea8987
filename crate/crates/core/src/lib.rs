//! Higher-order Lagrangian mechanics on jet coordinates.
//!
//! A Lagrangian of derivative order `N`, written in a small expression
//! language, is turned into three equivalent first-order systems:
//!
//! * the Euler–Lagrange equations, solved for the derivative of order `2N`
//!   ([`lagrangian`]);
//! * Ostrogradsky's canonical equations on the `2nN`-dimensional phase space
//!   ([`ostrogradsky`]);
//! * the Pontryagin equations of the equivalent constrained problem on
//!   `j_1(j_{N-1}(V))`, both in the full `(q, z, p)` form and reduced to the
//!   stationarity submanifold ([`pontryagin`]).
//!
//! [`integrator`] integrates any of them; the test suites check the routes
//! against each other and against closed-form solutions.

pub mod expr;
pub mod integrator;
pub mod lagrangian;
pub mod linalg;
pub mod ostrogradsky;
pub mod pontryagin;

use thiserror::Error;

pub use expr::{Expr, ExprError, JetSymbol};
pub use integrator::{integrate, Method, Options, Route, Trajectory};
pub use lagrangian::{JetPoint, LagrangianProblem};
pub use ostrogradsky::{OstrogradskySystem, PhaseState};
pub use pontryagin::{from_higher_order, ConstrainedProblem, ContactState, DiscreteSection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("singular {what} (|det| = {det:e})")]
    Singular { what: &'static str, det: f64 },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("integration failed at t = {t}: {source}")]
    Integration { t: f64, source: Box<Error> },
    #[error("adaptive step underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

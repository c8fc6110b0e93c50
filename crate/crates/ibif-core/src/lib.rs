//! Bifurcation analysis for one-dimensional discrete dynamical systems defined
//! implicitly by a relation `F(x_n, x_{n+1}, alpha) = 0`.
//!
//! The crate finds p-periodic orbits of such systems by Newton iteration on the
//! cyclic residual system, evaluates closed-form first, second, third, parameter
//! and mixed derivatives of the p-fold composition along an orbit, and classifies
//! codimension-1 bifurcation candidates (fold, transcritical, pitchfork, flip)
//! from the standard condition sets evaluated on those derivatives.
//!
//! Maps are defined by textual expressions in `x`, `y`, `alpha` ([`expr`]), from
//! which every required partial derivative is generated symbolically ([`model`]).
//! Implicit one-step ODE integrators (backward Euler, trapezoid) are available as
//! map constructors with the step size as the bifurcation parameter ([`numstep`]).
//! A finite-difference oracle ([`oracle`]) provides independent cross-checks of
//! every analytic quantity.

pub mod bifurcation;
pub mod deriv;
pub mod diagram;
pub mod expr;
pub mod model;
pub mod numstep;
pub mod oracle;
pub mod orbit;

mod linalg;

pub use bifurcation::{
    classify, solve_bifurcation, solve_pitchfork, BifurcationCandidate, BifurcationError,
    BifurcationKind, BifurcationReport, ClassifyThresholds, ConditionEntry,
};
pub use deriv::{DerivativeBundle, DerivError};
pub use expr::{Bindings, EvalError, Expression, ParseError, Var};
pub use model::{ImplicitMap, ModelError, PartialKey};
pub use numstep::OdeModel;
pub use oracle::{Derivative, FdPolicy, OracleError};
pub use orbit::{GuessPolicy, Orbit, OrbitError, OrbitOptions};

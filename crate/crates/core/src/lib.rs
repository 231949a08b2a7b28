//! Sign-changing periodic solutions of Abel equations of the second kind,
//! `x ẋ = A(t) + B(t) x + C(t) x²`.
//!
//! The pipeline is
//!
//! 1. [`conditions::analyze_conditions`] evaluates the existence condition,
//! 2. [`conditions::find_zeros`] locates and classifies the zeros of `A`,
//! 3. [`construction::solve`] shoots along the invariant manifold of the
//!    planar system `dt/ds = x, dx/ds = A + Bx + Cx²` at each zero and glues
//!    the branches into one periodic solution,
//! 4. [`analysis`] exhibits instability, uniqueness and sharpness numerically.
//!
//! All numerics are generic over [`Real`] (`f32`/`f64`); the aliases below
//! fix `f64`, which is what the tolerances are calibrated for.

pub mod analysis;
pub mod coefficients;
pub mod conditions;
pub mod construction;
pub mod error;
pub mod lienard;
mod ode;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Coefficient = coefficients::PeriodicCoefficient<f64>;
pub type System = coefficients::AbelSystem<f64>;
pub type GeneralSystem = coefficients::GeneralAbelSystem<f64>;
pub type Report = conditions::ConditionReport<f64>;
pub type Zero = conditions::ZeroOfA<f64>;
pub type Interval = conditions::SignInterval<f64>;
pub type Branch = construction::SolutionBranch<f64>;
pub type Solution = construction::PeriodicSolution<f64>;
pub type Options = construction::SolverOptions<f64>;
pub type Witness = analysis::InstabilityWitness<f64>;
pub type Scan = analysis::PoincareScan<f64>;

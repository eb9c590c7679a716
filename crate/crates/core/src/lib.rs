//! Discrete-time isoholonomic optimal control of the planar three-link
//! Purcell swimmer.
//!
//! The swimmer's position and heading live on SE(2) and its two joint angles
//! on the shape space. Low-Reynolds-number drag ties body velocity to shape
//! velocity through a local connection `A(alpha)`, and the problem is to find
//! the cheapest closed shape loop whose holonomy is a prescribed rigid motion.
//!
//! - [`se2`]: group operations, exponential and logarithm, trivialized
//!   derivatives.
//! - [`swimmer`]: resistive-force drag and the local connection.
//! - [`integrator`]: the structure-preserving discrete kinematics.
//! - [`pmp`]: the discrete maximum principle, residual checks and extremal
//!   propagation.
//! - [`solver`]: a direct augmented-Lagrangian solver and an indirect
//!   shooting solver.

pub mod error;
pub mod integrator;
pub mod pmp;
pub mod se2;
pub mod solver;
pub mod swimmer;

pub use error::{Error, Result};
pub use integrator::{DiscretizationParams, StateTrajectory};
pub use pmp::{AbnormalityFlag, Costate, ResidualReport};
pub use se2::{AlgebraCovector, AlgebraVector, GroupElement};
pub use solver::{InitialGuess, Method, ProblemSpec, Solution, SolverConfig};
pub use swimmer::{ControlVector, ShapeState, SwimmerGeometry};

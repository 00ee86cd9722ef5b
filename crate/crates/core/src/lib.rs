//! Gradient systems, NESS saddle problems and slow-fast EDP reduction.
//!
//! Bottom layer: [`gradsys`] (energies, dissipation potentials, flows),
//! [`saddle`] (generic concave-convex solver). On top sit [`bfunction`],
//! [`slowfast`] and the worked fixtures [`quadratic`], [`reactions`], [`membrane`].

// `!(x > 0.0)` is the NaN-rejecting form used in every domain check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gradsys;
pub mod linalg;
pub mod numerics;
pub mod saddle;
pub mod bfunction;
pub mod slowfast;
pub mod quadratic;
pub mod reactions;

pub use error::{Error, Result};
pub use gradsys::{DualDissipation, Energy, GradientSystem, Space, Trajectory};
pub use linalg::{AffineConstraint, Matrix, Vector};
pub use saddle::{SaddleProblem, SaddleResult};
pub mod membrane;

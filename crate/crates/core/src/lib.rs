//! Desk-scale 2D cutting laboratory for multi-material objects.
//!
//! An object is a block of soft elastoplastic material attached to a rigid
//! core of unknown shape, resting on a chopping board. A thin knife descends
//! in 2 mm moves and must remove as much soft material as possible without
//! striking the core.
//!
//! The crate provides the full closed loop:
//!
//! * [`geometry`]: core shape families, signed distance fields, the knife.
//! * [`sim`]: explicit MLS-MPM simulation of the soft material with one-way
//!   rigid coupling against knife, core and board.
//! * [`objectives`]: the multi-objective cutting loss (mass, collision, energy).
//! * [`opt`]: gradient-based trajectory optimization with a hand-written
//!   reverse-mode adjoint of the simulator and checkpointed replay.
//! * [`estimator`]: Bayesian core-shape estimation from collision evidence.
//! * [`policy`]: contour-following cutting policy with an adaptive safety
//!   tolerance schedule.
//! * [`runner`]: closed-loop episodes, baselines and evaluation metrics.
//! * [`io`]: versioned JSON artifacts and CSV metric tables.
//! * [`render`]: deterministic SVG views of episodes and plans.

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod io;
pub mod objectives;
pub mod opt;
pub mod policy;
pub mod render;
pub mod rng;
pub mod runner;
pub mod scene;
pub mod sim;

pub use error::Error;

/// Scalar type used throughout the crate.
pub type Real = f64;
/// 2D vector.
pub type Vec2 = nalgebra::Vector2<Real>;
/// 2x2 matrix.
pub type Mat2 = nalgebra::Matrix2<Real>;

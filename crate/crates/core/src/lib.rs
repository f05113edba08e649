//! Hybrid B-spline neural operator for a closed-loop quadrotor.
//!
//! A branch network maps an initial state to B-spline control points; a
//! fixed clamped basis turns those into a continuous trajectory. The crate
//! also carries the pieces needed to produce training data (dynamics, LQR,
//! RK4, least-squares fitting) and the experiment harness behind the
//! `splineop` binary.

pub mod bspline;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod harness;
pub mod integrate;
pub mod lqr;
pub mod neural;
pub mod operator;

pub use error::{Error, Result};

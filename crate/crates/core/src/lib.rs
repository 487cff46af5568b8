//! Shared camera control for an arm-mounted camera.
//!
//! The engine turns helper and worker interactions plus autonomous
//! behaviours into a weighted set of objectives, and solves a
//! box-constrained minimization over the arm's joint angles every tick.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arbitration;
pub mod error;
pub mod geometry;
pub mod history;
pub mod kinematics;
pub mod objectives;
pub mod optimizer;
pub mod perception;
pub mod session;

pub use error::{Error, Result};

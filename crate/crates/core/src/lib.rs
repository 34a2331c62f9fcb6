//! Collision-free velocity-level inverse kinematics for redundant serial arms.
//!
//! Every control tick the [`planner`] linearizes the arm(s) around the
//! current joint configuration and solves one small dense QP ([`qp`]) for the
//! joint velocities that best track a task-space reference, with joint
//! position/velocity limits and linearized clearance constraints from the
//! [`collision`] model enforced as hard constraints. [`scenarios`] wires this
//! into reproducible runs and trajectory metrics.

// Checks written as `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod collision;
pub mod data;
pub mod planner;
pub mod qp;
pub mod scenarios;

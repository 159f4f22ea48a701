//! Cooperative motion planning for fleets of connected vehicles.
//!
//! The fleet is split into independent subgraphs of potentially interacting
//! vehicles. Each subgraph's trajectory problem is convexified around nominal
//! trajectories and solved by a dual consensus ADMM in which every vehicle
//! only exchanges data with its communication neighbors. A receding-horizon
//! loop executes the first steps of each plan and re-plans.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod ocp;
pub mod oracle;
pub mod partition;
pub mod road;
pub mod scaling;
pub mod sim;
pub mod vehicle;
pub mod verify;

pub use error::{PlanError, Result};
pub use exec::Execution;

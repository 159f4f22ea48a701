//! Dual consensus ADMM for one subgraph.
//!
//! Each agent keeps local copies of the dual variables for the coupling rows
//! it holds, reconciles them with its communication neighbors, and solves an
//! LQ subproblem for its own trajectory perturbation every iteration.

mod box_block;
mod layout;
mod lqr;
mod projection;
mod solver;

pub use box_block::{dual_update_box, BlockVars, BoxBounds};
pub use layout::{AgentLayout, HeldGroup, Layout, RowGroup, SolverVariant};
pub use lqr::{solve_lqr, LqrSubproblem};
pub use projection::{clamp, dual_prox, project_box_cone};
pub use solver::{
    admm_solve_naive, admm_solve_subgraph, check_start, AdmmEngine, DualState, IterateSnapshot, IterateSnapshotRef,
    SolveOptions, SolveReport, SubgraphProblem, TraceRow, WORK_PER_PARTNER, WORK_PER_ROW,
};

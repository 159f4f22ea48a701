//! Road network, route search, path smoothing and reference generation.

mod graph;
mod grid;
mod guidance;
mod kdtree;
mod smoothing;

pub use graph::{astar_route, NodeId, RoadEdge, RoadGraph, RoadNode};
pub use grid::{generate_grid_map, GridMapConfig};
pub use guidance::{reference_window, smooth_path, GuidanceTrajectory, ReferencePoint, Waypoint};
pub use kdtree::WaypointIndex;
pub use smoothing::savgol_filter;

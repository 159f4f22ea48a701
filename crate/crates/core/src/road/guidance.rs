//! Guidance trajectories: smoothed routes and per-horizon reference windows.

use std::fmt::Write as _;

use nalgebra::Vector2;

use super::graph::{NodeId, RoadGraph};
use super::kdtree::WaypointIndex;
use super::smoothing::savgol_filter;
use crate::error::{PlanError, Result};
use crate::vehicle::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceTrajectory {
    pub waypoints: Vec<Waypoint>,
    pub v_ref: f64,
}

impl GuidanceTrajectory {
    /// Builds a trajectory from positions, dropping consecutive duplicates and
    /// assigning headings from forward differences.
    pub fn from_points(points: &[(f64, f64)], v_ref: f64) -> Self {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for &p in points {
            if pts
                .last()
                .is_none_or(|q: &(f64, f64)| (q.0 - p.0).hypot(q.1 - p.1) > 1e-9)
            {
                pts.push(p);
            }
        }
        let mut waypoints: Vec<Waypoint> = pts.iter().map(|&(x, y)| Waypoint { x, y, phi: 0.0 }).collect();
        assign_headings(&mut waypoints);
        Self { waypoints, v_ref }
    }

    pub fn from_route(g: &RoadGraph, route: &[NodeId], v_ref: f64) -> Result<Self> {
        let pts = route
            .iter()
            .map(|&id| g.node(id).map(|n| (n.x, n.y)).ok_or(PlanError::UnknownNode(id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_points(&pts, v_ref))
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn position(&self, k: usize) -> Vector2<f64> {
        Vector2::new(self.waypoints[k].x, self.waypoints[k].y)
    }

    pub fn last(&self) -> Option<&Waypoint> {
        self.waypoints.last()
    }

    pub fn index(&self) -> WaypointIndex {
        WaypointIndex::from_xy(self.waypoints.iter().map(|w| (w.x, w.y)))
    }

    pub fn arc_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum()
    }

    /// Position and heading at arc length `s` from the first waypoint,
    /// clamped to the ends.
    pub fn point_at(&self, s: f64) -> Waypoint {
        let mut acc = 0.0;
        for w in self.waypoints.windows(2) {
            let len = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            if acc + len >= s && len > 0.0 {
                let t = ((s - acc) / len).max(0.0);
                return Waypoint {
                    x: w[0].x + t * (w[1].x - w[0].x),
                    y: w[0].y + t * (w[1].y - w[0].y),
                    phi: w[0].phi,
                };
            }
            acc += len;
        }
        *self.waypoints.last().expect("non-empty trajectory")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("idx,x,y,phi\n");
        for (k, w) in self.waypoints.iter().enumerate() {
            let _ = writeln!(s, "{k},{},{},{}", w.x, w.y, w.phi);
        }
        s
    }
}

fn assign_headings(wps: &mut [Waypoint]) {
    let n = wps.len();
    for k in 0..n {
        let (a, b) = if k + 1 < n {
            (k, k + 1)
        } else if k > 0 {
            (k - 1, k)
        } else {
            (k, k)
        };
        if a != b {
            wps[k].phi = (wps[b].y - wps[a].y).atan2(wps[b].x - wps[a].x);
        }
    }
}

/// Smooths x and y independently and recomputes headings.
pub fn smooth_path(traj: &GuidanceTrajectory, window: usize, order: usize) -> Result<GuidanceTrajectory> {
    let xs: Vec<f64> = traj.waypoints.iter().map(|w| w.x).collect();
    let ys: Vec<f64> = traj.waypoints.iter().map(|w| w.y).collect();
    let xs = savgol_filter(&xs, window, order)?;
    let ys = savgol_filter(&ys, window, order)?;
    let pts: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    Ok(GuidanceTrajectory::from_points(&pts, traj.v_ref))
}

/// One reference sample: position, heading and speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl ReferencePoint {
    pub fn as_state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.theta, self.v)
    }
}

/// References for `t_s + 1` knots, starting at the waypoint nearest to `z`
/// and advancing `v_ref * dt` of arc length per step.
pub fn reference_window(
    traj: &GuidanceTrajectory,
    idx: &WaypointIndex,
    z: &VehicleState,
    t_s: usize,
    dt: f64,
) -> Vec<ReferencePoint> {
    assert!(!traj.is_empty(), "reference window on an empty trajectory");
    let start = idx.nearest(&z.position());
    let step = traj.v_ref * dt;
    let wps = &traj.waypoints;

    let mut out = Vec::with_capacity(t_s + 1);
    let mut seg = start;
    let mut along = 0.0;
    for k in 0..=t_s {
        if k > 0 {
            let mut remaining = step;
            while seg + 1 < wps.len() {
                let len = (wps[seg + 1].x - wps[seg].x).hypot(wps[seg + 1].y - wps[seg].y);
                if along + remaining <= len {
                    along += remaining;
                    break;
                }
                remaining -= len - along;
                seg += 1;
                along = 0.0;
            }
        }
        let p = if seg + 1 < wps.len() {
            let a = &wps[seg];
            let b = &wps[seg + 1];
            let len = (b.x - a.x).hypot(b.y - a.y);
            let t = if len > 0.0 { along / len } else { 0.0 };
            ReferencePoint {
                x: a.x + t * (b.x - a.x),
                y: a.y + t * (b.y - a.y),
                theta: a.phi,
                v: traj.v_ref,
            }
        } else {
            let w = &wps[wps.len() - 1];
            ReferencePoint {
                x: w.x,
                y: w.y,
                theta: w.phi,
                v: traj.v_ref,
            }
        };
        out.push(p);
    }
    out
}

//! Fleet partitioning into independent subgraphs.
//!
//! Two vehicles are adjacent when their Manhattan distance is below a
//! heading-dependent safe distance; connected components of that adjacency
//! are solved as separate problems. Inside a component, communication edges
//! join members that are within radio range of each other.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotVehicle {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_ref: f64,
    pub r_tele: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FleetSnapshot {
    pub vehicles: Vec<SnapshotVehicle>,
}

impl FleetSnapshot {
    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn manhattan(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.vehicles[i], &self.vehicles[j]);
        (a.x - b.x).abs() + (a.y - b.y).abs()
    }

    /// Heading difference folded into `[0, π]`.
    pub fn heading_gap(&self, i: usize, j: usize) -> f64 {
        let d = (self.vehicles[i].theta - self.vehicles[j].theta).rem_euclid(TAU);
        if d > PI {
            TAU - d
        } else {
            d
        }
    }

    pub fn safe_distance(&self, i: usize, j: usize, horizon: f64) -> f64 {
        safe_distance(
            self.vehicles[i].v_ref,
            self.vehicles[j].v_ref,
            self.heading_gap(i, j),
            horizon,
        )
    }
}

/// Distance within which two vehicles may interact during `horizon` seconds:
/// the faster one's travel for similar headings, both travels otherwise.
pub fn safe_distance(v_i: f64, v_j: f64, dtheta: f64, horizon: f64) -> f64 {
    if dtheta < FRAC_PI_4 {
        horizon * v_i.max(v_j)
    } else {
        horizon * (v_i + v_j)
    }
}

/// A connected group of vehicles solved together. Members are fleet indices in
/// ascending order; neighbor lists hold local positions into `members`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    pub members: Vec<usize>,
    /// Communication edges as local index pairs `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    pub neighbors: Vec<Vec<usize>>,
    /// True when the communication edges leave the component disconnected.
    pub comm_disconnected: bool,
}

impl Subgraph {
    /// Builds a subgraph over local indices `0..n` with the given edges.
    pub fn from_edges(members: Vec<usize>, edges: &[(usize, usize)]) -> Self {
        let n = members.len();
        let mut neighbors = vec![Vec::new(); n];
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            assert!(a < n && b < n && a != b, "edge ({a}, {b}) outside subgraph of {n}");
            let e = (a.min(b), a.max(b));
            if !norm.contains(&e) {
                norm.push(e);
                neighbors[e.0].push(e.1);
                neighbors[e.1].push(e.0);
            }
        }
        norm.sort_unstable();
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let comm_disconnected = !is_connected(&neighbors);
        Self {
            members,
            edges: norm,
            neighbors,
            comm_disconnected,
        }
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::from_edges((0..n).collect(), &edges)
    }

    pub fn ring(n: usize) -> Self {
        let edges: Vec<(usize, usize)> = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|a| (a, (a + 1) % n)).collect(),
        };
        Self::from_edges((0..n).collect(), &edges)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn degree(&self, local: usize) -> usize {
        self.neighbors[local].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }
}

fn is_connected(neighbors: &[Vec<usize>]) -> bool {
    if neighbors.is_empty() {
        return true;
    }
    let mut seen = vec![false; neighbors.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(a) = queue.pop_front() {
        for &b in &neighbors[a] {
            if !seen[b] {
                seen[b] = true;
                count += 1;
                queue.push_back(b);
            }
        }
    }
    count == neighbors.len()
}

/// Splits the fleet into subgraphs: BFS components of the safe-distance
/// adjacency, then radio-range edges within each component.
pub fn build_partition(snap: &FleetSnapshot, horizon: f64) -> Vec<Subgraph> {
    let m = snap.len();
    let mut adjacency = vec![Vec::new(); m];
    for i in 0..m {
        for j in i + 1..m {
            if snap.manhattan(i, j) < snap.safe_distance(i, j, horizon) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }

    let mut component = vec![usize::MAX; m];
    let mut parts = Vec::new();
    for root in 0..m {
        if component[root] != usize::MAX {
            continue;
        }
        let id = parts.len();
        let mut members = vec![root];
        component[root] = id;
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            for &b in &adjacency[a] {
                if component[b] == usize::MAX {
                    component[b] = id;
                    members.push(b);
                    queue.push_back(b);
                }
            }
        }
        members.sort_unstable();
        let mut edges = Vec::new();
        for (la, &a) in members.iter().enumerate() {
            for (lb, &b) in members.iter().enumerate().skip(la + 1) {
                let range = snap.vehicles[a].r_tele.min(snap.vehicles[b].r_tele);
                if snap.manhattan(a, b) <= range {
                    edges.push((la, lb));
                }
            }
        }
        parts.push(Subgraph::from_edges(members, &edges));
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn veh(x: f64, y: f64) -> SnapshotVehicle {
        SnapshotVehicle {
            x,
            y,
            theta: 0.0,
            v_ref: 10.0,
            r_tele: 40.0,
        }
    }

    #[test]
    fn safe_distance_branches() {
        assert_eq!(safe_distance(10.0, 10.0, 0.0, 1.5), 15.0);
        assert_eq!(safe_distance(5.0, 20.0, PI / 2.0, 1.5), 37.5);
        assert_eq!(safe_distance(0.0, 0.0, 0.0, 1.5), 0.0);
        assert_eq!(safe_distance(0.0, 0.0, PI, 1.5), 0.0);
    }

    #[test]
    fn heading_gap_wraps() {
        let mut s = FleetSnapshot {
            vehicles: vec![veh(0.0, 0.0), veh(1.0, 0.0)],
        };
        s.vehicles[0].theta = 3.0;
        s.vehicles[1].theta = -3.0;
        assert!((s.heading_gap(0, 1) - (TAU - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn far_apart_vehicles_split() {
        let s = FleetSnapshot {
            vehicles: vec![veh(0.0, 0.0), veh(1000.0, 0.0)],
        };
        let p = build_partition(&s, 1.5);
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|g| g.len() == 1 && g.edges.is_empty()));
    }

    #[test]
    fn chain_forms_one_component() {
        let s = FleetSnapshot {
            vehicles: vec![veh(0.0, 0.0), veh(10.0, 0.0), veh(20.0, 0.0)],
        };
        let p = build_partition(&s, 1.5);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].members, vec![0, 1, 2]);
        assert_eq!(p[0].edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn short_radio_range_is_recorded() {
        let mut s = FleetSnapshot {
            vehicles: vec![veh(0.0, 0.0), veh(12.0, 0.0)],
        };
        for v in &mut s.vehicles {
            v.r_tele = 5.0;
        }
        let p = build_partition(&s, 1.5);
        assert_eq!(p.len(), 1);
        assert!(p[0].edges.is_empty());
        assert!(p[0].comm_disconnected);
    }

    #[test]
    fn ring_and_complete_shapes() {
        assert_eq!(Subgraph::ring(5).max_degree(), 2);
        assert_eq!(Subgraph::ring(2).edges, vec![(0, 1)]);
        assert_eq!(Subgraph::complete(4).edges.len(), 6);
        assert!(Subgraph::complete(4).has_edge(3, 1));
    }
}

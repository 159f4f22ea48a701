//! Synthetic Manhattan-style road network.
//!
//! Roads run along `x = k * spacing` and `y = k * spacing` for
//! `k = -half_count..=half_count`. Every road carries one lane per direction
//! (right-hand traffic) sampled at a fixed interval. At each junction the
//! incoming lanes stop `junction_half` short of the crossing and connect to
//! the outgoing lanes by straight segments or quadratic Bézier turns.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::graph::{NodeId, RoadGraph};
use crate::error::{PlanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridMapConfig {
    /// Number of roads on each side of the central one, per axis.
    pub half_count: i32,
    pub spacing: f64,
    pub lane_offset: f64,
    pub junction_half: f64,
    pub sample_step: f64,
}

impl Default for GridMapConfig {
    fn default() -> Self {
        Self {
            half_count: 2,
            spacing: 100.0,
            lane_offset: 2.5,
            junction_half: 10.0,
            sample_step: 1.0,
        }
    }
}

/// Direction of travel along a lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Heading {
    East,
    North,
    West,
    South,
}

impl Heading {
    const ALL: [Heading; 4] = [Heading::East, Heading::North, Heading::West, Heading::South];

    fn dir(self) -> Vector2<f64> {
        match self {
            Heading::East => Vector2::new(1.0, 0.0),
            Heading::North => Vector2::new(0.0, 1.0),
            Heading::West => Vector2::new(-1.0, 0.0),
            Heading::South => Vector2::new(0.0, -1.0),
        }
    }

    /// Lateral offset to the right-hand lane.
    fn right(self) -> Vector2<f64> {
        let d = self.dir();
        Vector2::new(d.y, -d.x)
    }

    fn opposite(self) -> Heading {
        match self {
            Heading::East => Heading::West,
            Heading::North => Heading::South,
            Heading::West => Heading::East,
            Heading::South => Heading::North,
        }
    }
}

struct Builder {
    nodes: Vec<(NodeId, f64, f64)>,
    edges: Vec<(NodeId, NodeId)>,
}

impl Builder {
    fn add(&mut self, p: Vector2<f64>) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push((id, p.x, p.y));
        id
    }

    /// Adds interior samples of a curve between two existing nodes.
    fn connect(&mut self, from: NodeId, to: NodeId, interior: &[Vector2<f64>]) {
        let mut prev = from;
        for &p in interior {
            let id = self.add(p);
            self.edges.push((prev, id));
            prev = id;
        }
        self.edges.push((prev, to));
    }
}

fn samples(len: f64, step: f64) -> usize {
    ((len / step).round() as usize).max(1)
}

/// Generates the grid road network.
pub fn generate_grid_map(cfg: &GridMapConfig) -> Result<RoadGraph> {
    if cfg.half_count < 0
        || !(cfg.spacing > 2.0 * cfg.junction_half)
        || !(cfg.junction_half > cfg.lane_offset)
        || !(cfg.sample_step > 0.0)
    {
        return Err(PlanError::Config("grid map dimensions are inconsistent".into()));
    }
    let n = cfg.half_count;
    let s = cfg.spacing;
    let h = cfg.junction_half;
    let w = cfg.lane_offset;
    let extent = n as f64 * s + s / 2.0;
    let mut b = Builder {
        nodes: Vec::new(),
        edges: Vec::new(),
    };

    // Lane stretches between junctions. For each junction and each heading we
    // record the node where a lane enters it and the node where it leaves.
    let count = (2 * n + 1) as usize;
    let jidx = |i: i32, j: i32| ((i + n) as usize) * count + (j + n) as usize;
    let mut entry: Vec<[Option<NodeId>; 4]> = vec![[None; 4]; count * count];
    let mut exit: Vec<[Option<NodeId>; 4]> = vec![[None; 4]; count * count];

    for (hi, heading) in Heading::ALL.iter().enumerate() {
        let d = heading.dir();
        for road in -n..=n {
            // Lane center line: origin of the road shifted to the right-hand side.
            let base = match heading {
                Heading::East | Heading::West => Vector2::new(0.0, road as f64 * s),
                Heading::North | Heading::South => Vector2::new(road as f64 * s, 0.0),
            } + heading.right() * w;
            // Travel direction is along one axis, so `base · d == 0`.
            // Stretches in travel order, interrupted by every crossing road.
            let mut stops = vec![-extent];
            for k in -n..=n {
                stops.push(k as f64 * s - h);
                stops.push(k as f64 * s + h);
            }
            stops.push(extent);
            let point = |t: f64| base + d * t;
            let junction_of = |t: f64| -> (i32, i32) {
                let p = point(t);
                ((p.x / s).round() as i32, (p.y / s).round() as i32)
            };
            for seg in 0..stops.len() / 2 {
                let (t0, t1) = (stops[2 * seg], stops[2 * seg + 1]);
                let m = samples(t1 - t0, cfg.sample_step);
                let ids: Vec<NodeId> = (0..=m)
                    .map(|k| b.add(point(t0 + (t1 - t0) * k as f64 / m as f64)))
                    .collect();
                for pair in ids.windows(2) {
                    b.edges.push((pair[0], pair[1]));
                }
                if seg > 0 {
                    let (i, j) = junction_of(t0 - h);
                    exit[jidx(i, j)][hi] = Some(ids[0]);
                }
                if seg + 1 < stops.len() / 2 {
                    let (i, j) = junction_of(t1 + h);
                    entry[jidx(i, j)][hi] = Some(*ids.last().unwrap());
                }
            }
        }
    }

    for i in -n..=n {
        for j in -n..=n {
            let k = jidx(i, j);
            for (hin, heading) in Heading::ALL.iter().enumerate() {
                let Some(from) = entry[k][hin] else { continue };
                for (hout, out) in Heading::ALL.iter().enumerate() {
                    if *out == heading.opposite() {
                        continue;
                    }
                    let Some(to) = exit[k][hout] else { continue };
                    let p0 = node_pos(&b, from);
                    let p2 = node_pos(&b, to);
                    let interior: Vec<Vector2<f64>> = if out == heading {
                        let m = samples((p2 - p0).norm(), cfg.sample_step);
                        (1..m).map(|q| p0 + (p2 - p0) * (q as f64 / m as f64)).collect()
                    } else {
                        // Control point where the two lane center lines cross.
                        let d0 = heading.dir();
                        let d1 = out.dir();
                        let t = cross(p2 - p0, d1) / cross(d0, d1);
                        let p1 = p0 + d0 * t;
                        let approx = (p1 - p0).norm() + (p2 - p1).norm();
                        let m = samples(approx, cfg.sample_step);
                        (1..m)
                            .map(|q| {
                                let u = q as f64 / m as f64;
                                p0 * (1.0 - u) * (1.0 - u) + p1 * 2.0 * u * (1.0 - u) + p2 * u * u
                            })
                            .collect()
                    };
                    b.connect(from, to, &interior);
                }
            }
        }
    }
    RoadGraph::new(b.nodes, &b.edges)
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn node_pos(b: &Builder, id: NodeId) -> Vector2<f64> {
    let (_, x, y) = b.nodes[id as usize];
    Vector2::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::graph::astar_route;

    #[test]
    fn single_junction_has_twelve_turns() {
        let g = generate_grid_map(&GridMapConfig {
            half_count: 0,
            ..Default::default()
        })
        .unwrap();
        // Every node of the inbound stretches must lead somewhere.
        let dead_ends = g.nodes().iter().filter(|nd| g.out_degree(nd.id) == 0).count();
        // Only the four outbound lane ends are sinks.
        assert_eq!(dead_ends, 4);
        let branching = g.nodes().iter().filter(|nd| g.out_degree(nd.id) == 3).count();
        assert_eq!(branching, 4);
    }

    #[test]
    fn edges_have_sample_length() {
        let g = generate_grid_map(&GridMapConfig::default()).unwrap();
        for e in g.edges() {
            assert!(e.length > 0.3 && e.length < 1.7, "edge length {}", e.length);
        }
    }

    #[test]
    fn lanes_drive_on_the_right() {
        let g = generate_grid_map(&GridMapConfig {
            half_count: 0,
            ..Default::default()
        })
        .unwrap();
        for e in g.edges() {
            let a = g.node(e.from).unwrap();
            let b = g.node(e.to).unwrap();
            if (b.x - a.x).abs() > 0.9 && a.x.abs() > 12.0 {
                // East-bound traffic sits below the road axis.
                assert_eq!((b.x - a.x).signum(), -a.y.signum());
            }
        }
    }

    #[test]
    fn routes_exist_across_the_grid() {
        let g = generate_grid_map(&GridMapConfig::default()).unwrap();
        let near = |x: f64, y: f64| {
            g.nodes()
                .iter()
                .min_by(|a, b| (a.x - x).hypot(a.y - y).total_cmp(&(b.x - x).hypot(b.y - y)))
                .unwrap()
                .id
        };
        let route = astar_route(&g, near(-150.0, -2.5), near(152.5, 150.0)).unwrap();
        assert!(route.len() > 300);
    }
}

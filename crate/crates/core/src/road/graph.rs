//! Directed waypoint graph and shortest-route search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};

pub type NodeId = u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
}

/// On-disk form: nodes as `[id, x, y]`, edges as `[from, to]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RoadGraphFile {
    nodes: Vec<(NodeId, f64, f64)>,
    edges: Vec<(NodeId, NodeId)>,
}

/// Immutable directed graph with Euclidean edge lengths.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<RoadNode>,
    index: HashMap<NodeId, usize>,
    /// Outgoing adjacency by dense node index: (target index, length).
    out: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
}

impl RoadGraph {
    pub fn new(nodes: Vec<(NodeId, f64, f64)>, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        let nodes: Vec<RoadNode> = nodes.into_iter().map(|(id, x, y)| RoadNode { id, x, y }).collect();
        for (k, n) in nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(PlanError::Config(format!("node {} has non-finite coordinates", n.id)));
            }
            if index.insert(n.id, k).is_some() {
                return Err(PlanError::Config(format!("duplicate node id {}", n.id)));
            }
        }
        let mut out = vec![Vec::new(); nodes.len()];
        for &(from, to) in edges {
            let a = *index.get(&from).ok_or(PlanError::UnknownNode(from))?;
            let b = *index.get(&to).ok_or(PlanError::UnknownNode(to))?;
            let length = (nodes[a].x - nodes[b].x).hypot(nodes[a].y - nodes[b].y);
            out[a].push((b, length));
        }
        Ok(Self {
            nodes,
            index,
            out,
            edge_count: edges.len(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RoadGraphFile =
            serde_json::from_str(text).map_err(|e| PlanError::Config(format!("road graph: {e}")))?;
        Self::new(file.nodes, &file.edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PlanError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = RoadGraphFile {
            nodes: self.nodes.iter().map(|n| (n.id, n.x, n.y)).collect(),
            edges: self.edges().map(|e| (e.from, e.to)).collect(),
        };
        serde_json::to_string(&file).expect("road graph serializes")
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&RoadNode> {
        self.index.get(&id).map(|&k| &self.nodes[k])
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn edges(&self) -> impl Iterator<Item = RoadEdge> + '_ {
        self.out.iter().enumerate().flat_map(move |(a, outs)| {
            outs.iter().map(move |&(b, length)| RoadEdge {
                from: self.nodes[a].id,
                to: self.nodes[b].id,
                length,
            })
        })
    }

    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let k = self.index.get(&id).copied();
        k.into_iter()
            .flat_map(move |k| self.out[k].iter().map(move |&(b, l)| (self.nodes[b].id, l)))
    }

    pub fn out_degree(&self, id: NodeId) -> usize {
        self.index.get(&id).map_or(0, |&k| self.out[k].len())
    }

    fn dense(&self, id: NodeId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(PlanError::UnknownNode(id))
    }

    /// Sum of edge lengths along consecutive nodes of `path`.
    pub fn path_length(&self, path: &[NodeId]) -> Result<f64> {
        let mut total = 0.0;
        for w in path.windows(2) {
            let a = self.dense(w[0])?;
            let b = self.dense(w[1])?;
            let l = self.out[a]
                .iter()
                .filter(|&&(t, _)| t == b)
                .map(|&(_, l)| l)
                .fold(f64::INFINITY, f64::min);
            if !l.is_finite() {
                return Err(PlanError::Config(format!("no edge {} -> {}", w[0], w[1])));
            }
            total += l;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, ties broken toward larger g (deeper nodes) then node index.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* search with the straight-line distance heuristic.
pub fn astar_route(g: &RoadGraph, start: NodeId, goal: NodeId) -> Result<Vec<NodeId>> {
    let s = g.dense(start)?;
    let t = g.dense(goal)?;
    let goal_node = g.nodes[t];
    let h = |k: usize| (g.nodes[k].x - goal_node.x).hypot(g.nodes[k].y - goal_node.y);

    let n = g.nodes.len();
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[s] = 0.0;
    heap.push(Open {
        f: h(s),
        g: 0.0,
        node: s,
    });

    while let Some(Open { g: cost, node, .. }) = heap.pop() {
        if closed[node] {
            continue;
        }
        if node == t {
            let mut path = vec![g.nodes[t].id];
            let mut k = t;
            while k != s {
                k = parent[k];
                path.push(g.nodes[k].id);
            }
            path.reverse();
            return Ok(path);
        }
        closed[node] = true;
        for &(next, len) in &g.out[node] {
            let cand = cost + len;
            if cand < best[next] {
                best[next] = cand;
                parent[next] = node;
                heap.push(Open {
                    f: cand + h(next),
                    g: cand,
                    node: next,
                });
            }
        }
    }
    Err(PlanError::NoRoute { start, goal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_equals_goal() {
        let g = RoadGraph::new(vec![(7, 0.0, 0.0)], &[]).unwrap();
        assert_eq!(astar_route(&g, 7, 7).unwrap(), vec![7]);
    }

    #[test]
    fn single_edge() {
        let g = RoadGraph::new(vec![(1, 0.0, 0.0), (2, 3.0, 4.0)], &[(1, 2)]).unwrap();
        assert_eq!(astar_route(&g, 1, 2).unwrap(), vec![1, 2]);
        assert_eq!(g.edges().next().unwrap().length, 5.0);
        assert!(matches!(astar_route(&g, 2, 1), Err(PlanError::NoRoute { .. })));
    }

    #[test]
    fn prefers_shorter_detour() {
        let g = RoadGraph::new(
            vec![(0, 0.0, 0.0), (1, 5.0, 5.0), (2, 5.0, -1.0), (3, 10.0, 0.0)],
            &[(0, 1), (1, 3), (0, 2), (2, 3)],
        )
        .unwrap();
        assert_eq!(astar_route(&g, 0, 3).unwrap(), vec![0, 2, 3]);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"nodes":[[1,0.0,0.0],[2,1.0,0.0]],"edges":[[1,2]]}"#;
        let g = RoadGraph::from_json(text).unwrap();
        let back = RoadGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edge_count(), 1);
    }

    #[test]
    fn rejects_unknown_and_duplicate_nodes() {
        assert!(matches!(
            RoadGraph::new(vec![(1, 0.0, 0.0)], &[(1, 9)]),
            Err(PlanError::UnknownNode(9))
        ));
        assert!(RoadGraph::new(vec![(1, 0.0, 0.0), (1, 1.0, 0.0)], &[]).is_err());
    }
}

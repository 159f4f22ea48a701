//! Which coupling rows each agent keeps dual copies of, and with whom it
//! reconciles them.
//!
//! Rows are handled in groups that share a holder set. Each holder keeps one
//! local copy of the group's duals and averages it with the copies of the
//! holders it communicates with (its partners). The shared offset `k` and the
//! constraint set are split evenly across holders.
//!
//! * The full layout gives every agent every row and uses all of its
//!   neighbors as partners, so per-agent storage grows with `N²`.
//! * The local layout keeps a collision group only at agents adjacent to both
//!   vehicles of the pair, and agent `i`'s box rows only at `i` and its
//!   neighbors. Storage and work per agent then depend on its degree alone.
//!   On a complete graph both layouts coincide row by row.

use crate::ocp::{pair_index, Coupling};
use crate::partition::Subgraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverVariant {
    /// Degree-local dual storage.
    Improved,
    /// Full-length dual vectors at every agent.
    Naive,
}

impl std::str::FromStr for SolverVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "improved" => Ok(Self::Improved),
            "naive" => Ok(Self::Naive),
            other => Err(format!("unknown solver variant `{other}` (expected improved|naive)")),
        }
    }
}

impl std::fmt::Display for SolverVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Improved => "improved",
            Self::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowGroup {
    /// Global coupling rows, in local storage order.
    pub rows: Vec<usize>,
    pub holders: Vec<usize>,
    pub collision: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldGroup {
    pub group: usize,
    /// Offset of the group's first row in this agent's dual vectors.
    pub offset: usize,
    pub len: usize,
    /// Partner agents and the offset of the same group in their vectors.
    pub partners: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentLayout {
    pub held: Vec<HeldGroup>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub variant: SolverVariant,
    pub groups: Vec<RowGroup>,
    pub agents: Vec<AgentLayout>,
    /// Number of rows in the global coupling space.
    pub global_rows: usize,
}

impl Layout {
    pub fn new(sub: &Subgraph, t: usize, variant: SolverVariant) -> Self {
        let n = sub.len();
        let probe = Coupling { n, t, rows: Vec::new() };
        let global_rows = probe.collision_rows() + probe.box_rows();
        let collision_rows_of = |j: usize, k: usize| -> Vec<usize> {
            let mut rows = Vec::with_capacity(2 * (t + 1));
            for tau in 0..=t {
                let base = tau * n * (n - 1) + 2 * pair_index(n, j, k);
                rows.push(base);
                rows.push(base + 1);
            }
            rows
        };
        let box_rows_of = |i: usize| -> Vec<usize> {
            let o = probe.box_block_offset(i);
            (o..o + 3 * t + 1).collect()
        };

        let mut groups = Vec::new();
        match variant {
            SolverVariant::Naive => {
                let all: Vec<usize> = (0..n).collect();
                groups.push(RowGroup {
                    rows: (0..probe.collision_rows()).collect(),
                    holders: all.clone(),
                    collision: true,
                });
                groups.push(RowGroup {
                    rows: (probe.collision_rows()..global_rows).collect(),
                    holders: all,
                    collision: false,
                });
            }
            SolverVariant::Improved => {
                let closed = |v: usize, a: usize| v == a || sub.has_edge(v, a);
                for &(j, k) in &sub.edges {
                    let holders = (0..n).filter(|&v| closed(v, j) && closed(v, k)).collect();
                    groups.push(RowGroup {
                        rows: collision_rows_of(j, k),
                        holders,
                        collision: true,
                    });
                }
                for i in 0..n {
                    let holders = (0..n).filter(|&v| closed(v, i)).collect();
                    groups.push(RowGroup {
                        rows: box_rows_of(i),
                        holders,
                        collision: false,
                    });
                }
            }
        }

        let mut agents: Vec<AgentLayout> = (0..n)
            .map(|_| AgentLayout {
                held: Vec::new(),
                len: 0,
            })
            .collect();
        let mut offset_of = vec![vec![usize::MAX; groups.len()]; n];
        for (gi, g) in groups.iter().enumerate() {
            for &v in &g.holders {
                let a = &mut agents[v];
                offset_of[v][gi] = a.len;
                a.held.push(HeldGroup {
                    group: gi,
                    offset: a.len,
                    len: g.rows.len(),
                    partners: Vec::new(),
                });
                a.len += g.rows.len();
            }
        }
        for (v, agent) in agents.iter_mut().enumerate() {
            for held in &mut agent.held {
                let g = &groups[held.group];
                held.partners = sub.neighbors[v]
                    .iter()
                    .filter(|u| g.holders.binary_search(u).is_ok())
                    .map(|&u| (u, offset_of[u][held.group]))
                    .collect();
            }
        }
        Self {
            variant,
            groups,
            agents,
            global_rows,
        }
    }

    pub fn share(&self, group: usize) -> f64 {
        self.groups[group].holders.len() as f64
    }

    /// Local slot of global `row` at `agent`, if held.
    pub fn slot_of(&self, agent: usize, row: usize) -> Option<usize> {
        self.agents[agent].held.iter().find_map(|h| {
            self.groups[h.group]
                .rows
                .iter()
                .position(|&r| r == row)
                .map(|p| h.offset + p)
        })
    }

    pub fn total_slots(&self) -> usize {
        self.agents.iter().map(|a| a.len).sum()
    }
}

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::keys::NodeId;

pub const MAX_TOPOLOGY_ATTEMPTS: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    fn distance2(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Node placement in a square arena. Two nodes are linked iff their distance
/// is at most the transmission range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Topology {
    pub arena_m: f64,
    pub transmission_range_m: f64,
    pub interference_range_m: f64,
    pub positions: Vec<Position>,
    #[serde(skip)]
    adjacency: Vec<Vec<NodeId>>,
    #[serde(skip)]
    interferers: Vec<Vec<bool>>,
}

impl Topology {
    pub fn from_positions(positions: Vec<Position>, arena_m: f64, transmission_range_m: f64, interference_range_m: f64) -> Self {
        let adjacency = compute_adjacency(&positions, transmission_range_m);
        let ir2 = interference_range_m * interference_range_m;
        let interferers = positions.iter().map(|p| positions.iter().map(|q| p.distance2(q) <= ir2).collect()).collect();
        Topology { arena_m, transmission_range_m, interference_range_m, positions, adjacency, interferers }
    }

    /// Every node within range of every other.
    pub fn fully_connected(n: usize) -> Self {
        let positions = (0..n).map(|i| Position { x: i as f64, y: 0.0 }).collect();
        Topology::from_positions(positions, n as f64, n as f64 + 1.0, n as f64 + 1.0)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(NodeId::from)
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.index()]
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].binary_search(&b).is_ok()
    }

    pub fn interferes(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.interferers[a.index()][b.index()]
    }

    /// Stored adjacency is symmetric and matches a fresh recomputation.
    pub fn adjacency_consistent(&self) -> bool {
        let fresh = compute_adjacency(&self.positions, self.transmission_range_m);
        let symmetric = self.nodes().all(|a| self.neighbors(a).iter().all(|&b| self.adjacent(b, a)));
        fresh == self.adjacency && symmetric
    }

    /// Connectivity of the subgraph induced by `allowed` nodes.
    pub fn is_connected_among(&self, allowed: impl Fn(NodeId) -> bool) -> bool {
        let members: Vec<NodeId> = self.nodes().filter(|&n| allowed(n)).collect();
        let Some(&start) = members.first() else {
            return true;
        };
        let reached = self.bfs(start, &allowed);
        members.iter().all(|m| reached[m.index()].is_some())
    }

    pub fn is_connected(&self) -> bool {
        self.is_connected_among(|_| true)
    }

    /// BFS hop counts from `start`, restricted to `allowed` nodes.
    fn bfs(&self, start: NodeId, allowed: &impl Fn(NodeId) -> bool) -> Vec<Option<(usize, NodeId)>> {
        let mut seen: Vec<Option<(usize, NodeId)>> = vec![None; self.len()];
        if !allowed(start) {
            return seen;
        }
        seen[start.index()] = Some((0, start));
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let d = seen[u.index()].map(|(d, _)| d).unwrap_or(0);
            for &v in self.neighbors(u) {
                if seen[v.index()].is_none() && allowed(v) {
                    seen[v.index()] = Some((d + 1, u));
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Shortest path (fewest hops, lowest ids first on ties) including both
    /// endpoints, through `allowed` nodes only.
    pub fn shortest_path(&self, from: NodeId, to: NodeId, allowed: impl Fn(NodeId) -> bool) -> Option<Vec<NodeId>> {
        let seen = self.bfs(from, &allowed);
        seen[to.index()]?;
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            let (_, prev) = seen[cur.index()]?;
            path.push(prev);
            cur = prev;
        }
        path.reverse();
        Some(path)
    }

    /// Mean shortest-path hop count over ordered pairs of distinct nodes.
    pub fn mean_hops(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mut total = 0usize;
        let mut pairs = 0usize;
        for a in self.nodes() {
            for (i, entry) in self.bfs(a, &|_| true).iter().enumerate() {
                if i != a.index() {
                    if let Some((d, _)) = entry {
                        total += d;
                        pairs += 1;
                    }
                }
            }
        }
        if pairs == 0 {
            0.0
        } else {
            total as f64 / pairs as f64
        }
    }

    /// Longest shortest path, in hops, among connected pairs.
    pub fn diameter(&self) -> usize {
        self.nodes().flat_map(|a| self.bfs(a, &|_| true).into_iter().flatten().map(|(d, _)| d)).max().unwrap_or(0)
    }
}

fn compute_adjacency(positions: &[Position], range_m: f64) -> Vec<Vec<NodeId>> {
    let r2 = range_m * range_m;
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| positions.iter().enumerate().filter(|&(j, q)| j != i && p.distance2(q) <= r2).map(|(j, _)| NodeId::from(j)).collect())
        .collect()
}

/// Uniform random placement, redrawn until the link graph is connected.
pub fn build_random_topology<R: Rng>(
    n: usize,
    arena_m: f64,
    transmission_range_m: f64,
    interference_range_m: f64,
    rng: &mut R,
) -> Result<Topology, SimError> {
    if n == 0 {
        return Err(SimError::NoNodes);
    }
    for _ in 0..MAX_TOPOLOGY_ATTEMPTS {
        let positions = (0..n).map(|_| Position { x: rng.gen::<f64>() * arena_m, y: rng.gen::<f64>() * arena_m }).collect();
        let topo = Topology::from_positions(positions, arena_m, transmission_range_m, interference_range_m);
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(SimError::CannotConnect { attempts: MAX_TOPOLOGY_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn table_three_layout_is_connected() {
        let topo = build_random_topology(15, 100.0, 50.0, 60.0, &mut seeded(1)).unwrap();
        assert_eq!(topo.len(), 15);
        assert!(topo.is_connected());
        assert!(topo.adjacency_consistent());
    }

    #[test]
    fn single_node_is_trivially_connected() {
        let topo = build_random_topology(1, 100.0, 50.0, 60.0, &mut seeded(1)).unwrap();
        assert!(topo.is_connected());
        assert!(topo.neighbors(NodeId(0)).is_empty());
    }

    #[test]
    fn same_seed_same_positions() {
        let a = build_random_topology(15, 100.0, 50.0, 60.0, &mut seeded(42)).unwrap();
        let b = build_random_topology(15, 100.0, 50.0, 60.0, &mut seeded(42)).unwrap();
        assert_eq!(a.positions, b.positions);
    }

    #[test]
    fn impossible_arena_reports_cannot_connect() {
        let err = build_random_topology(15, 100_000.0, 1.0, 1.0, &mut seeded(3)).unwrap_err();
        assert_eq!(err, SimError::CannotConnect { attempts: MAX_TOPOLOGY_ATTEMPTS });
    }

    #[test]
    fn line_paths() {
        let positions = (0..4).map(|i| Position { x: i as f64 * 40.0, y: 0.0 }).collect();
        let topo = Topology::from_positions(positions, 200.0, 50.0, 60.0);
        let path = topo.shortest_path(NodeId(0), NodeId(3), |_| true).unwrap();
        assert_eq!(path, [NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
        assert!(topo.shortest_path(NodeId(0), NodeId(3), |n| n != NodeId(2)).is_none());
        assert!(!topo.is_connected_among(|n| n != NodeId(1)));
        // ordered pairs: 6 at distance 1, 4 at distance 2, 2 at distance 3
        assert!((topo.mean_hops() - 20.0 / 12.0).abs() < 1e-12);
    }
}

//! Shortest-path expert over a hand-made waypoint graph.
//!
//! All-pairs shortest paths are computed once at construction (one Dijkstra
//! per node), so `next` is a nearest-node scan plus a table lookup and the
//! planner is immutable and freely shareable afterwards.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::env::MazeGeometry;
use crate::error::PlannerError;
use crate::goal_mdp::{goal_reached, Goal, GoalSpec, NextGoal};

pub const GRAPH_VERSION: u32 = 1;

/// Interpolation points used when checking an edge against the maze.
const EDGE_SAMPLES: usize = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphFile {
    version: u32,
    #[serde(default)]
    env: Option<String>,
    nodes: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalGraph {
    nodes: Vec<Goal>,
    edges: Vec<(usize, usize)>,
    /// `adjacency[v]` = `(neighbour, euclidean weight)`, sorted by neighbour.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl GoalGraph {
    pub fn new(nodes: Vec<Goal>, edges: Vec<(usize, usize)>) -> Result<Self, PlannerError> {
        if nodes.is_empty() {
            return Err(PlannerError::EmptyGraph);
        }
        let dim = nodes[0].dim();
        if let Some(bad) = nodes.iter().find(|n| n.dim() != dim) {
            return Err(PlannerError::DimensionMismatch {
                goal: bad.dim(),
                graph: dim,
            });
        }
        if nodes.iter().any(|n| !n.is_finite()) {
            return Err(PlannerError::InvalidGraph("non-finite node coordinate".into()));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b) in &edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(PlannerError::InvalidGraph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(PlannerError::InvalidGraph(format!("self loop on node {a}")));
            }
            let w = nodes[a].distance(&nodes[b]);
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(n, _)| n);
            adj.dedup_by_key(|&mut (n, _)| n);
        }
        let graph = Self {
            nodes,
            edges,
            adjacency,
        };
        let dist = graph.dijkstra(0).0;
        if let Some(v) = dist.iter().position(|d| d.is_infinite()) {
            return Err(PlannerError::Disconnected { from: 0, to: v });
        }
        Ok(graph)
    }

    pub fn from_toml(text: &str, goal_dim: usize) -> Result<Self, PlannerError> {
        let file: GraphFile = toml::from_str(text).map_err(|e| PlannerError::InvalidGraph(e.to_string()))?;
        if file.version != GRAPH_VERSION {
            return Err(PlannerError::InvalidGraph(format!(
                "unsupported graph version {}",
                file.version
            )));
        }
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for n in &file.nodes {
            if n.len() != goal_dim {
                return Err(PlannerError::DimensionMismatch {
                    goal: goal_dim,
                    graph: n.len(),
                });
            }
            nodes.push(Goal::new(n));
        }
        Self::new(nodes, file.edges.iter().map(|e| (e[0], e[1])).collect())
    }

    /// Every node and every edge (sampled at 100 points) must lie in free space.
    pub fn validate_against(&self, geometry: Option<&MazeGeometry>) -> Result<(), PlannerError> {
        let Some(g) = geometry else {
            return Ok(());
        };
        if self.dim() != 2 {
            return Err(PlannerError::DimensionMismatch {
                goal: 2,
                graph: self.dim(),
            });
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let p = n.as_slice();
            if !g.is_free(p[0], p[1]) {
                return Err(PlannerError::InvalidGraph(format!("node {i} {n:?} is inside a wall")));
            }
        }
        for &(a, b) in &self.edges {
            let (pa, pb) = (self.nodes[a].as_slice(), self.nodes[b].as_slice());
            for k in 0..EDGE_SAMPLES {
                let t = k as f64 / (EDGE_SAMPLES - 1) as f64;
                let x = pa[0] + t * (pb[0] - pa[0]);
                let y = pa[1] + t * (pb[1] - pa[1]);
                if !g.is_free(x, y) {
                    return Err(PlannerError::InvalidGraph(format!("edge ({a}, {b}) crosses a wall")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    pub fn nodes(&self) -> &[Goal] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Goal {
        self.nodes[id]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, id: usize) -> &[(usize, f64)] {
        &self.adjacency[id]
    }

    /// Closest node; ties go to the lowest id.
    pub fn nearest_node(&self, point: &Goal) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.distance(point);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Single-source Dijkstra: distances and predecessor (parent) ids.
    pub fn dijkstra(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry { dist: 0.0, node: source });
        while let Some(Entry { dist: d, node: v }) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            for &(u, w) in &self.adjacency[v] {
                let nd = d + w;
                if nd < dist[u] {
                    dist[u] = nd;
                    parent[u] = Some(v);
                    heap.push(Entry { dist: nd, node: u });
                }
            }
        }
        (dist, parent)
    }

    /// Node sequence of a shortest path `from → to`, both ends included.
    pub fn shortest_node_path(&self, from: usize, to: usize) -> Result<Vec<usize>, PlannerError> {
        // Dijkstra rooted at `to`: parents then point one hop towards `to`.
        let (dist, parent) = self.dijkstra(to);
        if dist[from].is_infinite() {
            return Err(PlannerError::Disconnected { from, to });
        }
        let mut out = vec![from];
        let mut v = from;
        while v != to {
            v = parent[v].expect("reachable nodes have parents");
            out.push(v);
        }
        Ok(out)
    }

    pub fn path_length(&self, path: &[usize]) -> f64 {
        path.windows(2)
            .map(|w| self.nodes[w[0]].distance(&self.nodes[w[1]]))
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    dist: f64,
    node: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // min-heap on (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Graph planner with a precomputed next-hop table.
#[derive(Debug, Clone)]
pub struct Planner {
    graph: GoalGraph,
    spec: GoalSpec,
    /// `dist[a * n + b]`.
    dist: Vec<f64>,
    /// `hop[a * n + b]` = node after `a` on the chosen shortest path to `b`.
    hop: Vec<usize>,
}

impl Planner {
    pub fn new(graph: GoalGraph, spec: GoalSpec) -> Result<Self, PlannerError> {
        if graph.dim() != spec.env.goal_dim() {
            return Err(PlannerError::DimensionMismatch {
                goal: spec.env.goal_dim(),
                graph: graph.dim(),
            });
        }
        let n = graph.len();
        let mut dist = vec![f64::INFINITY; n * n];
        let mut hop = vec![usize::MAX; n * n];
        for to in 0..n {
            let (d, parent) = graph.dijkstra(to);
            for from in 0..n {
                if d[from].is_infinite() {
                    return Err(PlannerError::Disconnected { from, to });
                }
                dist[from * n + to] = d[from];
                hop[from * n + to] = parent[from].unwrap_or(to);
            }
        }
        Ok(Self {
            graph,
            spec,
            dist,
            hop,
        })
    }

    pub fn graph(&self) -> &GoalGraph {
        &self.graph
    }

    pub fn spec(&self) -> &GoalSpec {
        &self.spec
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.graph.len() + b]
    }

    fn hop(&self, a: usize, b: usize) -> usize {
        self.hop[a * self.graph.len() + b]
    }

    pub fn nearest_node(&self, point: &Goal) -> usize {
        self.graph.nearest_node(point)
    }

    fn check_dims(&self, s: &Goal, fg: &Goal) -> Result<(), PlannerError> {
        for g in [s, fg] {
            if g.dim() != self.graph.dim() {
                return Err(PlannerError::DimensionMismatch {
                    goal: g.dim(),
                    graph: self.graph.dim(),
                });
            }
        }
        Ok(())
    }

    fn reached(&self, a: &Goal, b: &Goal) -> bool {
        goal_reached(&self.spec, a, b)
    }

    /// Goal sequence from `s` (a state's goal-space projection) to `fg`,
    /// always ending in the literal `fg`. The node nearest `s` is skipped when
    /// `s` already satisfies it; `fg` alone is returned once `s` reaches it or
    /// `fg` lies within reach of the node nearest `s`.
    pub fn path(&self, s: &Goal, fg: &Goal) -> Result<Vec<Goal>, PlannerError> {
        self.check_dims(s, fg)?;
        let ns = self.nearest_node(s);
        if self.reached(s, fg) || self.reached(&self.graph.node(ns), fg) {
            return Ok(vec![*fg]);
        }
        let nf = self.nearest_node(fg);
        let mut nodes = vec![ns];
        let mut v = ns;
        while v != nf {
            v = self.hop(v, nf);
            nodes.push(v);
        }
        Ok(self.finish_path(s, ns, nodes, fg))
    }

    fn finish_path(&self, s: &Goal, ns: usize, mut nodes: Vec<usize>, fg: &Goal) -> Vec<Goal> {
        if self.reached(s, &self.graph.node(ns)) {
            nodes.remove(0);
        }
        nodes.pop();
        let mut out: Vec<Goal> = nodes.into_iter().map(|i| self.graph.node(i)).collect();
        out.push(*fg);
        out
    }

    /// `path(s, fg)[0]` without building the path.
    pub fn next(&self, s: &Goal, fg: &Goal) -> Result<Goal, PlannerError> {
        self.check_dims(s, fg)?;
        let ns = self.nearest_node(s);
        if self.reached(s, fg) || self.reached(&self.graph.node(ns), fg) {
            return Ok(*fg);
        }
        let nf = self.nearest_node(fg);
        if ns == nf {
            return Ok(*fg);
        }
        if !self.reached(s, &self.graph.node(ns)) {
            return Ok(self.graph.node(ns));
        }
        let second = self.hop(ns, nf);
        Ok(if second == nf { *fg } else { self.graph.node(second) })
    }

    /// Same answer as [`Planner::next`], recomputed from scratch by Dijkstra.
    pub fn next_unmemoized(&self, s: &Goal, fg: &Goal) -> Result<Goal, PlannerError> {
        self.check_dims(s, fg)?;
        let ns = self.nearest_node(s);
        if self.reached(s, fg) || self.reached(&self.graph.node(ns), fg) {
            return Ok(*fg);
        }
        let nf = self.nearest_node(fg);
        let nodes = self.graph.shortest_node_path(ns, nf)?;
        Ok(self.finish_path(s, ns, nodes, fg)[0])
    }
}

impl NextGoal for Planner {
    fn next_goal(&self, from: &Goal, fg: &Goal) -> Result<Goal, PlannerError> {
        self.next(from, fg)
    }
}

//! Actor path planning over the estimate and path-proximity weighting.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::grid::{Action, CellIndex, GridMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Movement penalty added to every traversed cell.
    pub a: f64,
    /// Cells with value above this threshold are treated as obstacles.
    pub epsilon: f64,
    pub actions: Vec<Action>,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self { a: 0.025, epsilon: 0.501, actions: Action::ALL.to_vec() }
    }
}

/// Traversal cost of one cell; obstacles cost `n·(ε + a)` so that any
/// obstacle-free route is cheaper.
pub fn cell_cost(value: f64, params: &PlannerParams, n: usize) -> f64 {
    if value <= params.epsilon {
        value + params.a
    } else {
        n as f64 * (params.epsilon + params.a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<CellIndex>,
    pub cost: f64,
}

impl Path {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> CellIndex {
        self.nodes[0]
    }

    pub fn goal(&self) -> CellIndex {
        self.nodes[self.nodes.len() - 1]
    }
}

/// Cost of visiting `nodes` in order, summed left to right.
pub fn path_cost(field: &GridMap, nodes: &[CellIndex], params: &PlannerParams) -> f64 {
    nodes.iter().fold(0.0, |acc, c| acc + cell_cost(field.value(*c), params, field.len()))
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    flat: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (cost, flat)
        other.cost.total_cmp(&self.cost).then_with(|| other.flat.cmp(&self.flat))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum node-cost path from `start` to `goal` on `field` (Dijkstra).
///
/// The path cost counts every node, the start included. Equal-cost
/// alternatives resolve toward the predecessor settled first, with nodes
/// settled in `(cost, flat index)` order and neighbours expanded in action order.
pub fn shortest_path(field: &GridMap, start: CellIndex, goal: CellIndex, params: &PlannerParams) -> Path {
    let n = field.len();
    let cost = |j: usize| cell_cost(field.values()[j], params, n);
    let (s, g) = (field.flat(start), field.flat(goal));
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[s] = cost(s);
    heap.push(Entry { cost: dist[s], flat: s });
    while let Some(Entry { cost: d, flat }) = heap.pop() {
        if done[flat] {
            continue;
        }
        done[flat] = true;
        if flat == g {
            break;
        }
        let here = field.cell(flat);
        for &action in &params.actions {
            let Some(next) = field.step(here, action) else { continue };
            let j = field.flat(next);
            if done[j] {
                continue;
            }
            let nd = d + cost(j);
            if nd < dist[j] {
                dist[j] = nd;
                parent[j] = flat;
                heap.push(Entry { cost: nd, flat: j });
            }
        }
    }
    let mut nodes = vec![goal];
    let mut cur = g;
    while cur != s {
        cur = parent[cur];
        nodes.push(field.cell(cur));
    }
    nodes.reverse();
    Path { nodes, cost: dist[g] }
}

/// Per-cell weights concentrating near the path and growing toward the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWeightField {
    pub values: Vec<f64>,
    pub v: f64,
}

/// `w(p) = (|π_d| / |π|)·exp(−d²/(2v))` where `d` is the Euclidean distance
/// to the nearest path node and `|π_d|` that node's 1-based position along the
/// path. Equidistant nodes resolve to the later one.
pub fn path_weights(path: &Path, map: &GridMap, v: f64) -> PathWeightField {
    let total = path.len() as f64;
    let values = (0..map.len())
        .map(|j| {
            let p = map.cell(j);
            let mut best = (usize::MAX, 0usize);
            for (k, node) in path.nodes.iter().enumerate() {
                let dr = p.row.abs_diff(node.row);
                let dc = p.col.abs_diff(node.col);
                let d2 = dr * dr + dc * dc;
                if d2 <= best.0 {
                    best = (d2, k);
                }
            }
            let (d2, k) = best;
            (k + 1) as f64 / total * (-(d2 as f64) / (2.0 * v)).exp()
        })
        .collect();
    PathWeightField { values, v }
}

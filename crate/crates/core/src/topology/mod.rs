//! Radial feeder topology.
//!
//! A feeder is a tree rooted at the substation, node `0`. Non-root nodes are
//! numbered densely `1..=n` and node `i` maps to row/column `i - 1` of every
//! sensitivity matrix. Each non-root node is fed by exactly one line from its
//! parent, so lines are stored indexed by their downstream node.

mod random;

pub(crate) use random::uniform_open_closed;
pub use random::{random_tree, DegreeDistribution, RandomInstance};

use nalgebra::DMatrix;
use thiserror::Error;

/// Dense node index; `0` is the substation.
pub type NodeId = usize;

/// The substation node.
pub const ROOT: NodeId = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: NodeId,
    pub to: NodeId,
    /// Resistance (per-unit).
    pub r: f64,
    /// Reactance (per-unit).
    pub x: f64,
}

impl Line {
    pub fn new(from: NodeId, to: NodeId, r: f64, x: f64) -> Self {
        Self { from, to, r, x }
    }
}

/// Per-bus injections and limits, all per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct BusData {
    pub p_c: f64,
    pub p_g: f64,
    pub q_c: f64,
    pub v_nom: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub is_actuator: bool,
}

impl Default for BusData {
    fn default() -> Self {
        Self {
            p_c: 0.0,
            p_g: 0.0,
            q_c: 0.0,
            v_nom: 1.0,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
            is_actuator: true,
        }
    }
}

impl BusData {
    /// A bus without loads or a controller.
    pub fn passive() -> Self {
        Self {
            is_actuator: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("network has no nodes besides the root")]
    Empty,
    #[error("line ({from},{to}) references unknown node")]
    UnknownNode { from: NodeId, to: NodeId },
    #[error("node {node} is not a non-root node of this network")]
    NotANode { node: NodeId },
    #[error("line ({from},{to}) has non-positive reactance {x}")]
    NonpositiveReactance { from: NodeId, to: NodeId, x: f64 },
    #[error("line ({from},{to}) has negative resistance {r}")]
    NegativeResistance { from: NodeId, to: NodeId, r: f64 },
    #[error("cycle through node {node}")]
    Cycle { node: NodeId },
    #[error("node {node} is not connected to the root")]
    Disconnected { node: NodeId },
    #[error("root must have exactly one child, found {count}")]
    MultiRootChild { count: usize },
    #[error("actuator bus {node} has reactive box [{q_min}, {q_max}] excluding 0")]
    InvalidBox { node: NodeId, q_min: f64, q_max: f64 },
}

/// A validated radial network. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct RadialNetwork {
    v0: f64,
    labels: Vec<String>,
    buses: Vec<BusData>,
    /// `lines[i - 1]` feeds node `i`.
    lines: Vec<Line>,
    children: Vec<Vec<NodeId>>,
    depth: Vec<usize>,
    /// Non-root nodes in depth-first preorder.
    preorder: Vec<NodeId>,
    /// Position of each node in `preorder` (index 0 unused).
    position: Vec<usize>,
    /// Number of nodes in the subtree of each node, itself included.
    subtree_size: Vec<usize>,
}

impl RadialNetwork {
    /// Validates and builds a network. `buses[i - 1]` describes node `i`.
    pub fn new(v0: f64, buses: Vec<BusData>, lines: Vec<Line>) -> Result<Self, TopologyError> {
        let labels = (0..=buses.len()).map(|i| i.to_string()).collect();
        Self::with_labels(v0, buses, lines, labels)
    }

    /// Like [`RadialNetwork::new`] but keeps external bus labels (`labels[0]`
    /// is the root).
    pub fn with_labels(
        v0: f64,
        buses: Vec<BusData>,
        lines: Vec<Line>,
        labels: Vec<String>,
    ) -> Result<Self, TopologyError> {
        let n = buses.len();
        assert_eq!(labels.len(), n + 1, "one label per node including the root");
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        validate_lines(n, &lines)?;
        for (k, bus) in buses.iter().enumerate() {
            if bus.is_actuator && !(bus.q_min <= 0.0 && 0.0 <= bus.q_max) {
                return Err(TopologyError::InvalidBox {
                    node: k + 1,
                    q_min: bus.q_min,
                    q_max: bus.q_max,
                });
            }
        }

        let mut feeding: Vec<Option<Line>> = vec![None; n + 1];
        for line in &lines {
            if line.to == ROOT || line.from == line.to || feeding[line.to].is_some() {
                return Err(TopologyError::Cycle { node: line.to });
            }
            feeding[line.to] = Some(*line);
        }
        if let Some(node) = (1..=n).find(|&i| feeding[i].is_none()) {
            return Err(TopologyError::Disconnected { node });
        }
        let lines: Vec<Line> = feeding.into_iter().skip(1).flatten().collect();

        let mut children = vec![Vec::new(); n + 1];
        for line in &lines {
            children[line.from].push(line.to);
        }
        if children[ROOT].len() != 1 {
            return Err(TopologyError::MultiRootChild {
                count: children[ROOT].len(),
            });
        }

        // Iterative DFS from the root; nodes never reached sit on a parent cycle.
        let mut depth = vec![0usize; n + 1];
        let mut preorder = Vec::with_capacity(n);
        let mut position = vec![0usize; n + 1];
        let mut stack = vec![ROOT];
        while let Some(u) = stack.pop() {
            if u != ROOT {
                position[u] = preorder.len();
                preorder.push(u);
            }
            for &c in children[u].iter().rev() {
                depth[c] = depth[u] + 1;
                stack.push(c);
            }
        }
        if preorder.len() != n {
            let mut seen = vec![false; n + 1];
            for &u in &preorder {
                seen[u] = true;
            }
            let node = (1..=n).find(|&i| !seen[i]).unwrap_or(1);
            return Err(TopologyError::Cycle { node });
        }

        let mut subtree_size = vec![1usize; n + 1];
        subtree_size[ROOT] = n + 1;
        for &u in preorder.iter().rev() {
            let p = lines[u - 1].from;
            if p != ROOT {
                subtree_size[p] += subtree_size[u];
            }
        }

        Ok(Self {
            v0,
            labels,
            buses,
            lines,
            children,
            depth,
            preorder,
            position,
            subtree_size,
        })
    }

    /// Number of non-root nodes.
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node]
    }

    pub fn buses(&self) -> &[BusData] {
        &self.buses
    }

    pub fn bus(&self, node: NodeId) -> &BusData {
        &self.buses[node - 1]
    }

    /// Lines ordered by downstream node: `lines()[i - 1].to == i`.
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// The line feeding `node`.
    pub fn feeder_line(&self, node: NodeId) -> &Line {
        &self.lines[node - 1]
    }

    pub fn parent(&self, node: NodeId) -> NodeId {
        self.lines[node - 1].from
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node]
    }

    /// The unique child of the root.
    pub fn root_child(&self) -> NodeId {
        self.children[ROOT][0]
    }

    pub fn depth(&self, node: NodeId) -> usize {
        self.depth[node]
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Non-root nodes in depth-first preorder; every subtree is contiguous.
    pub fn preorder(&self) -> &[NodeId] {
        &self.preorder
    }

    /// Preorder positions covered by the subtree of `node`.
    pub fn subtree_range(&self, node: NodeId) -> std::ops::Range<usize> {
        let start = self.position[node];
        start..start + self.subtree_size[node]
    }

    /// Indices (0-based) of actuator buses, in node order.
    pub fn actuator_indices(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_actuator)
            .map(|(k, _)| k)
            .collect()
    }

    /// Copy of the network with the given per-bus data.
    pub fn with_buses(&self, buses: Vec<BusData>) -> Result<Self, TopologyError> {
        Self::with_labels(self.v0, buses, self.lines.clone(), self.labels.clone())
    }

    pub fn with_v0(&self, v0: f64) -> Self {
        Self { v0, ..self.clone() }
    }

    fn check_node(&self, node: NodeId) -> Result<(), TopologyError> {
        if node == ROOT || node > self.n() {
            Err(TopologyError::NotANode { node })
        } else {
            Ok(())
        }
    }

    /// Lines on the path from the root to `node`, root first.
    pub fn path_to_root(&self, node: NodeId) -> Result<Vec<Line>, TopologyError> {
        self.check_node(node)?;
        let mut path = Vec::with_capacity(self.depth[node]);
        let mut u = node;
        while u != ROOT {
            let line = self.lines[u - 1];
            path.push(line);
            u = line.from;
        }
        path.reverse();
        Ok(path)
    }

    /// Lines shared by the root paths of `i` and `j`: a common prefix of both.
    pub fn path_intersection(&self, i: NodeId, j: NodeId) -> Result<Vec<Line>, TopologyError> {
        let pi = self.path_to_root(i)?;
        let pj = self.path_to_root(j)?;
        Ok(pi
            .into_iter()
            .zip(pj)
            .take_while(|(a, b)| a.to == b.to)
            .map(|(a, _)| a)
            .collect())
    }

    /// Weighted Laplacian of the inverse tree over non-root nodes: line
    /// weights `1/x`, the root line left out.
    pub fn inverse_tree_laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut lap = DMatrix::zeros(n, n);
        for line in &self.lines {
            if line.from == ROOT {
                continue;
            }
            let (p, c) = (line.from - 1, line.to - 1);
            let w = 1.0 / line.x;
            lap[(p, c)] -= w;
            lap[(c, p)] -= w;
            lap[(p, p)] += w;
            lap[(c, c)] += w;
        }
        lap
    }

    /// Stable content hash of topology and impedances.
    pub fn topology_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for line in &self.lines {
            h.update((line.from as u64).to_le_bytes());
            h.update((line.to as u64).to_le_bytes());
            h.update(line.r.to_le_bytes());
            h.update(line.x.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn validate_lines(n: usize, lines: &[Line]) -> Result<(), TopologyError> {
    for line in lines {
        if line.from > n || line.to > n {
            return Err(TopologyError::UnknownNode {
                from: line.from,
                to: line.to,
            });
        }
        if !(line.x > 0.0) || !line.x.is_finite() {
            return Err(TopologyError::NonpositiveReactance {
                from: line.from,
                to: line.to,
                x: line.x,
            });
        }
        if !(line.r >= 0.0) || !line.r.is_finite() {
            return Err(TopologyError::NegativeResistance {
                from: line.from,
                to: line.to,
                r: line.r,
            });
        }
    }
    Ok(())
}

/// Chain `0 -> 1 -> ... -> n` with the given reactances and zero resistance.
pub fn chain(reactances: &[f64]) -> Result<RadialNetwork, TopologyError> {
    let lines = reactances
        .iter()
        .enumerate()
        .map(|(k, &x)| Line::new(k, k + 1, 0.0, x))
        .collect();
    RadialNetwork::new(1.0, vec![BusData::default(); reactances.len()], lines)
}

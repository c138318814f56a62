//! Cell-based architectures as node-labeled DAGs.
//!
//! Operations live on nodes. Every vocabulary starts with three reserved
//! operations: `input` (0), `output` (1) and `none` (2). A node labeled `none`
//! is pruned: it carries no edges and is ignored by aggregation, which is how
//! padded and unreachable nodes are represented without changing matrix
//! shapes.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OP_INPUT: usize = 0;
pub const OP_OUTPUT: usize = 1;
pub const OP_NONE: usize = 2;
pub const NUM_RESERVED_OPS: usize = 3;
pub const RESERVED_OP_NAMES: [&str; NUM_RESERVED_OPS] = ["input", "output", "none"];

/// Operation names for one search space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpVocabulary {
    pub space_id: u32,
    op_names: Vec<String>,
}

impl OpVocabulary {
    /// Builds a vocabulary from the space's own operations; the reserved
    /// operations are prepended.
    pub fn with_ops<S: AsRef<str>>(space_id: u32, ops: &[S]) -> Result<Self> {
        let mut names: Vec<String> = RESERVED_OP_NAMES.iter().map(|s| s.to_string()).collect();
        names.extend(ops.iter().map(|s| s.as_ref().to_string()));
        Self::from_names(space_id, names)
    }

    /// Builds a vocabulary from a full name list, reserved operations included.
    pub fn from_names(space_id: u32, op_names: Vec<String>) -> Result<Self> {
        if op_names.len() < NUM_RESERVED_OPS
            || op_names[..NUM_RESERVED_OPS]
                .iter()
                .zip(RESERVED_OP_NAMES)
                .any(|(a, b)| a != b)
        {
            return Err(Error::invalid(format!(
                "vocabulary must start with {RESERVED_OP_NAMES:?}"
            )));
        }
        let mut seen = HashSet::new();
        for name in &op_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate operation name `{name}`")));
            }
        }
        Ok(Self { space_id, op_names })
    }

    pub fn size(&self) -> usize {
        self.op_names.len()
    }

    /// Number of non-reserved operations.
    pub fn num_choices(&self) -> usize {
        self.op_names.len() - NUM_RESERVED_OPS
    }

    pub fn names(&self) -> &[String] {
        &self.op_names
    }

    pub fn name(&self, op: usize) -> Option<&str> {
        self.op_names.get(op).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.op_names.iter().position(|n| n == name)
    }
}

/// The first violated invariant found by [`CellGraph::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    Shape { rows: usize, expected: usize },
    TooSmall(usize),
    SelfLoop(usize),
    Cycle,
    OpOutOfRange { node: usize, op: usize, vocab_size: usize },
    SpaceMismatch { cell: u32, vocab: u32 },
    InputCount(usize),
    OutputCount(usize),
    InputHasInEdges(usize),
    OutputHasOutEdges(usize),
    PrunedWithEdges(usize),
    Disconnected(usize),
    CellCount(usize),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Shape { rows, expected } => {
                write!(f, "adjacency row {rows} does not have {expected} entries")
            }
            Diagnostic::TooSmall(n) => write!(f, "cell has {n} nodes, need at least 2"),
            Diagnostic::SelfLoop(i) => write!(f, "self-loop at node {i}"),
            Diagnostic::Cycle => write!(f, "adjacency contains a cycle"),
            Diagnostic::OpOutOfRange { node, op, vocab_size } => write!(
                f,
                "node {node} has op {op}, outside vocabulary of size {vocab_size}"
            ),
            Diagnostic::SpaceMismatch { cell, vocab } => {
                write!(f, "cell belongs to space {cell}, vocabulary to space {vocab}")
            }
            Diagnostic::InputCount(n) => write!(f, "expected one input node, found {n}"),
            Diagnostic::OutputCount(n) => write!(f, "expected one output node, found {n}"),
            Diagnostic::InputHasInEdges(i) => write!(f, "input node {i} has incoming edges"),
            Diagnostic::OutputHasOutEdges(i) => write!(f, "output node {i} has outgoing edges"),
            Diagnostic::PrunedWithEdges(i) => write!(f, "pruned node {i} has edges"),
            Diagnostic::Disconnected(i) => {
                write!(f, "node {i} is not on any input-to-output path")
            }
            Diagnostic::CellCount(n) => write!(f, "architecture has {n} cells, expected 1 or 2"),
        }
    }
}

/// One cell: `adjacency[i * n + j] == true` means an edge `i -> j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellGraph {
    num_nodes: usize,
    adjacency: Vec<bool>,
    op_ids: Vec<usize>,
    pub space_id: u32,
}

impl CellGraph {
    /// Builds a cell from adjacency rows. Only the matrix shape is checked
    /// here; semantic checks belong to [`CellGraph::validate`].
    pub fn new(adjacency: &[Vec<u8>], op_ids: Vec<usize>, space_id: u32) -> Result<Self> {
        let n = op_ids.len();
        if adjacency.len() != n {
            return Err(Error::shape(
                "cell",
                format!("{} adjacency rows for {n} operations", adjacency.len()),
            ));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidCell(Diagnostic::Shape { rows: i, expected: n }));
            }
            for &bit in row {
                match bit {
                    0 => flat.push(false),
                    1 => flat.push(true),
                    other => {
                        return Err(Error::invalid(format!("adjacency entry {other} is not 0/1")))
                    }
                }
            }
        }
        Ok(Self {
            num_nodes: n,
            adjacency: flat,
            op_ids,
            space_id,
        })
    }

    /// Builds a cell from an edge list.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)], op_ids: Vec<usize>, space_id: u32) -> Result<Self> {
        if op_ids.len() != num_nodes {
            return Err(Error::shape(
                "cell",
                format!("{} operations for {num_nodes} nodes", op_ids.len()),
            ));
        }
        let mut adjacency = vec![false; num_nodes * num_nodes];
        for &(i, j) in edges {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::invalid(format!("edge {i}->{j} out of range")));
            }
            adjacency[i * num_nodes + j] = true;
        }
        Ok(Self {
            num_nodes,
            adjacency,
            op_ids,
            space_id,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn op_ids(&self) -> &[usize] {
        &self.op_ids
    }

    pub fn op(&self, node: usize) -> usize {
        self.op_ids[node]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.num_nodes + to]
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        self.adjacency
            .chunks(self.num_nodes.max(1))
            .take(self.num_nodes)
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.num_nodes;
        (0..n * n).filter(|&k| self.adjacency[k]).map(move |k| (k / n, k % n))
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().filter(|&&b| b).count()
    }

    pub fn successors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes).filter(move |&j| self.has_edge(node, j))
    }

    pub fn predecessors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes).filter(move |&i| self.has_edge(i, node))
    }

    pub fn is_pruned(&self, node: usize) -> bool {
        self.op_ids[node] == OP_NONE
    }

    pub fn num_active_nodes(&self) -> usize {
        self.op_ids.iter().filter(|&&op| op != OP_NONE).count()
    }

    /// True when every edge goes from a lower to a higher index.
    pub fn is_upper_triangular(&self) -> bool {
        self.edges().all(|(i, j)| i < j)
    }

    pub fn input_node(&self) -> Option<usize> {
        self.op_ids.iter().position(|&op| op == OP_INPUT)
    }

    pub fn output_node(&self) -> Option<usize> {
        self.op_ids.iter().position(|&op| op == OP_OUTPUT)
    }

    /// Kahn's algorithm with smallest-index tie breaking; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.num_nodes;
        let mut indegree: Vec<usize> = (0..n).map(|j| self.predecessors(j).count()).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&j| indegree[j] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&node) = ready.iter().next() {
            ready.remove(&node);
            order.push(node);
            for succ in self.successors(node) {
                indegree[succ] -= 1;
                if indegree[succ] == 0 {
                    ready.insert(succ);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Checks every structural invariant against the space's vocabulary and
    /// returns the first violation.
    pub fn validate(&self, vocab: &OpVocabulary) -> std::result::Result<(), Diagnostic> {
        let n = self.num_nodes;
        if n < 2 {
            return Err(Diagnostic::TooSmall(n));
        }
        if self.space_id != vocab.space_id {
            return Err(Diagnostic::SpaceMismatch {
                cell: self.space_id,
                vocab: vocab.space_id,
            });
        }
        for i in 0..n {
            if self.has_edge(i, i) {
                return Err(Diagnostic::SelfLoop(i));
            }
        }
        let order = self.topological_order().ok_or(Diagnostic::Cycle)?;
        for (node, &op) in self.op_ids.iter().enumerate() {
            if op >= vocab.size() {
                return Err(Diagnostic::OpOutOfRange {
                    node,
                    op,
                    vocab_size: vocab.size(),
                });
            }
        }
        let inputs = self.op_ids.iter().filter(|&&op| op == OP_INPUT).count();
        if inputs != 1 {
            return Err(Diagnostic::InputCount(inputs));
        }
        let outputs = self.op_ids.iter().filter(|&&op| op == OP_OUTPUT).count();
        if outputs != 1 {
            return Err(Diagnostic::OutputCount(outputs));
        }
        let input = self.input_node().expect("counted above");
        let output = self.output_node().expect("counted above");
        if self.predecessors(input).next().is_some() {
            return Err(Diagnostic::InputHasInEdges(input));
        }
        if self.successors(output).next().is_some() {
            return Err(Diagnostic::OutputHasOutEdges(output));
        }
        for node in 0..n {
            if self.is_pruned(node)
                && (self.successors(node).next().is_some() || self.predecessors(node).next().is_some())
            {
                return Err(Diagnostic::PrunedWithEdges(node));
            }
        }

        // forward reachability from input, backward from output
        let mut from_input = vec![false; n];
        from_input[input] = true;
        for &node in &order {
            if from_input[node] {
                for succ in self.successors(node) {
                    from_input[succ] = true;
                }
            }
        }
        let mut to_output = vec![false; n];
        to_output[output] = true;
        for &node in order.iter().rev() {
            if self.successors(node).any(|s| to_output[s]) {
                to_output[node] = true;
            }
        }
        for node in 0..n {
            if !self.is_pruned(node) && !(from_input[node] && to_output[node]) {
                return Err(Diagnostic::Disconnected(node));
            }
        }
        Ok(())
    }

    /// Zero-pads to `target_nodes`, labeling new nodes `none`.
    pub fn pad(&self, target_nodes: usize) -> Result<CellGraph> {
        let n = self.num_nodes;
        if target_nodes < n {
            return Err(Error::invalid(format!(
                "cannot pad a {n}-node cell to {target_nodes} nodes"
            )));
        }
        let mut adjacency = vec![false; target_nodes * target_nodes];
        for (i, j) in self.edges() {
            adjacency[i * target_nodes + j] = true;
        }
        let mut op_ids = self.op_ids.clone();
        op_ids.resize(target_nodes, OP_NONE);
        Ok(CellGraph {
            num_nodes: target_nodes,
            adjacency,
            op_ids,
            space_id: self.space_id,
        })
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<CellGraph> {
        let n = self.num_nodes;
        check_permutation(perm, n)?;
        let mut adjacency = vec![false; n * n];
        for (i, j) in self.edges() {
            adjacency[perm[i] * n + perm[j]] = true;
        }
        let mut op_ids = vec![0; n];
        for (i, &op) in self.op_ids.iter().enumerate() {
            op_ids[perm[i]] = op;
        }
        Ok(CellGraph {
            num_nodes: n,
            adjacency,
            op_ids,
            space_id: self.space_id,
        })
    }

    /// Node index sequences of every input-to-output path.
    pub fn io_paths(&self) -> Vec<Vec<usize>> {
        let (Some(input), Some(output)) = (self.input_node(), self.output_node()) else {
            return Vec::new();
        };
        let mut paths = Vec::new();
        let mut stack = vec![input];
        self.walk_paths(input, output, &mut stack, &mut paths);
        paths
    }

    fn walk_paths(&self, node: usize, output: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if node == output {
            out.push(stack.clone());
            return;
        }
        for succ in self.successors(node) {
            stack.push(succ);
            self.walk_paths(succ, output, stack, out);
            stack.pop();
        }
    }
}

pub fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::invalid(format!(
            "permutation of length {} for {n} nodes",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::invalid(format!("{perm:?} is not a bijection")));
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// One architecture: a single cell, or a normal/reduce pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellArch {
    pub arch_id: u64,
    pub cells: Vec<CellGraph>,
}

impl CellArch {
    pub fn new(arch_id: u64, cells: Vec<CellGraph>) -> Self {
        Self { arch_id, cells }
    }

    pub fn single(arch_id: u64, cell: CellGraph) -> Self {
        Self::new(arch_id, vec![cell])
    }

    pub fn space_id(&self) -> u32 {
        self.cells.first().map(|c| c.space_id).unwrap_or_default()
    }

    pub fn validate(&self, vocab: &OpVocabulary) -> std::result::Result<(), Diagnostic> {
        if self.cells.is_empty() || self.cells.len() > 2 {
            return Err(Diagnostic::CellCount(self.cells.len()));
        }
        self.cells.iter().try_for_each(|c| c.validate(vocab))
    }

    pub fn pad(&self, target_nodes: usize) -> Result<CellArch> {
        let cells = self
            .cells
            .iter()
            .map(|c| c.pad(target_nodes))
            .collect::<Result<_>>()?;
        Ok(CellArch::new(self.arch_id, cells))
    }

    /// Applies the same permutation to every cell.
    pub fn permute(&self, perm: &[usize]) -> Result<CellArch> {
        let cells = self
            .cells
            .iter()
            .map(|c| c.permute(perm))
            .collect::<Result<_>>()?;
        Ok(CellArch::new(self.arch_id, cells))
    }
}

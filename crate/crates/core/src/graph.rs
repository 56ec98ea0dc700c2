//! DAG task model: node attributes, precedence, heights, level sets,
//! critical paths, and runtime graph mutations.
//!
//! Graphs are immutable values: every mutation produces a new `DagSpec` and
//! leaves the original untouched, so they can be shared freely across
//! threads. Node and DAG identifiers are opaque strings; whenever an order
//! matters, ties break lexicographically so that every derived structure is
//! deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::time::{Duration, TimePoint};

/// Opaque node identifier, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Opaque DAG (template) identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DagId(pub String);

impl DagId {
    pub fn new(s: impl Into<String>) -> Self {
        DagId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DagId {
    fn from(s: &str) -> Self {
        DagId(s.to_string())
    }
}

/// Whether a node may be split by stage refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Partitionable,
    Atomic,
}

/// The node's role in a shared-encoder stage, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    SharedEncoder,
    Decoder,
    Ordinary,
}

/// Per-node attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAttrs {
    /// Worst-case execution time measured in isolation.
    pub wcet: Duration,
    /// Memory footprint in MB; drives heaviest-co-runner selection.
    pub mem: f64,
    pub kind: NodeKind,
    pub role: NodeRole,
    /// Predicted release offset relative to the owning instance's arrival.
    pub next_release: TimePoint,
    /// Identifier of the physical shared-encoder weights this node uses.
    /// Required for `SharedEncoder` nodes; optionally present on a refinable
    /// stage to name the weights its refined encoder will share (stages in
    /// different templates merge only when these match).
    pub encoder_ref: Option<String>,
    /// Encoder cost of a refinable stage.
    pub enc_cost: Option<Duration>,
    /// Per-decoder costs of a refinable stage.
    pub dec_costs: Option<Vec<Duration>>,
}

impl NodeAttrs {
    /// Plain partitionable node with the given WCET and no stage structure.
    pub fn basic(wcet: Duration) -> Self {
        NodeAttrs {
            wcet,
            mem: 0.0,
            kind: NodeKind::Partitionable,
            role: NodeRole::Ordinary,
            next_release: TimePoint::ZERO,
            encoder_ref: None,
            enc_cost: None,
            dec_costs: None,
        }
    }

    /// True when the node carries a full encoder/decoder cost decomposition
    /// and is allowed to be split.
    pub fn is_refinable(&self) -> bool {
        self.kind == NodeKind::Partitionable && self.enc_cost.is_some() && self.dec_costs.is_some()
    }

    fn check(&self, id: &NodeId) -> Result<(), GraphError> {
        if !self.wcet.is_positive() {
            return Err(GraphError::InvalidNode {
                node: id.clone(),
                reason: "wcet must be positive".into(),
            });
        }
        if self.mem < 0.0 {
            return Err(GraphError::InvalidNode {
                node: id.clone(),
                reason: "mem must be non-negative".into(),
            });
        }
        if self.next_release.as_ns() < 0 {
            return Err(GraphError::InvalidNode {
                node: id.clone(),
                reason: "next_release must be non-negative".into(),
            });
        }
        match self.role {
            NodeRole::SharedEncoder if self.encoder_ref.is_none() => {
                return Err(GraphError::InvalidNode {
                    node: id.clone(),
                    reason: "shared-encoder node requires encoder_ref".into(),
                });
            }
            NodeRole::Decoder | NodeRole::Ordinary
                if self.encoder_ref.is_some() && !self.is_refinable() =>
            {
                return Err(GraphError::InvalidNode {
                    node: id.clone(),
                    reason: "encoder_ref is only valid on shared-encoder nodes or refinable stages"
                        .into(),
                });
            }
            _ => {}
        }
        match (&self.enc_cost, &self.dec_costs) {
            (Some(enc), Some(decs)) => {
                if decs.is_empty() {
                    return Err(GraphError::InvalidNode {
                        node: id.clone(),
                        reason: "dec_costs must name at least one decoder".into(),
                    });
                }
                if !enc.is_positive() || decs.iter().any(|d| !d.is_positive()) {
                    return Err(GraphError::InvalidNode {
                        node: id.clone(),
                        reason: "stage cost decomposition entries must be positive".into(),
                    });
                }
                let max_dec = decs.iter().copied().max().unwrap_or(Duration::ZERO);
                if *enc + max_dec > self.wcet {
                    return Err(GraphError::InvalidNode {
                        node: id.clone(),
                        reason: "enc_cost + max(dec_costs) exceeds wcet".into(),
                    });
                }
            }
            (None, None) => {}
            _ => {
                return Err(GraphError::InvalidNode {
                    node: id.clone(),
                    reason: "enc_cost and dec_costs must be given together".into(),
                });
            }
        }
        Ok(())
    }
}

/// A released DAG instance template: nodes, precedence edges, end-to-end
/// deadline and arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct DagSpec {
    pub id: DagId,
    pub nodes: BTreeMap<NodeId, NodeAttrs>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
    /// Relative end-to-end deadline.
    pub deadline: Duration,
    /// Absolute release time.
    pub arrival: TimePoint,
}

impl DagSpec {
    pub fn new(id: impl Into<String>, deadline: Duration) -> Self {
        DagSpec {
            id: DagId::new(id),
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            deadline,
            arrival: TimePoint::ZERO,
        }
    }

    pub fn with_node(mut self, id: impl Into<String>, attrs: NodeAttrs) -> Self {
        self.nodes.insert(NodeId::new(id), attrs);
        self
    }

    pub fn with_edge(mut self, from: &str, to: &str) -> Self {
        self.edges.insert((NodeId::new(from), NodeId::new(to)));
        self
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn predecessors<'a>(&'a self, v: &'a NodeId) -> impl Iterator<Item = &'a NodeId> {
        self.edges.iter().filter(move |(_, t)| t == v).map(|(s, _)| s)
    }

    pub fn successors<'a>(&'a self, v: &'a NodeId) -> impl Iterator<Item = &'a NodeId> {
        // BTreeSet range scan: all edges with the given source.
        self.edges
            .range((v.clone(), NodeId::new(""))..)
            .take_while(move |(s, _)| s == v)
            .map(|(_, t)| t)
    }

    pub fn sources(&self) -> Vec<NodeId> {
        let targets: BTreeSet<&NodeId> = self.edges.iter().map(|(_, t)| t).collect();
        self.nodes.keys().filter(|n| !targets.contains(n)).cloned().collect()
    }

    pub fn sinks(&self) -> Vec<NodeId> {
        let sources: BTreeSet<&NodeId> = self.edges.iter().map(|(s, _)| s).collect();
        self.nodes.keys().filter(|n| !sources.contains(n)).cloned().collect()
    }

    /// All nodes reachable from `v` along edges, excluding `v` itself.
    pub fn descendants(&self, v: &NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = self.successors(v).cloned().collect();
        while let Some(n) = queue.pop_front() {
            if out.insert(n.clone()) {
                queue.extend(self.successors(&n).cloned());
            }
        }
        out
    }
}

/// A timed topology change applied to a named DAG template.
#[derive(Debug, Clone, PartialEq)]
pub struct Mutation {
    pub at: TimePoint,
    pub target_dag: DagId,
    pub op: MutationOp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MutationOp {
    AddNode {
        id: NodeId,
        attrs: NodeAttrs,
        incoming: Vec<NodeId>,
        outgoing: Vec<NodeId>,
    },
    RemoveNode(NodeId),
    AddEdge(NodeId, NodeId),
    RemoveEdge(NodeId, NodeId),
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("cycle detected: {}", path_to_string(.0))]
    CycleDetected(Vec<NodeId>),
    #[error("dangling edge ({0}, {1})")]
    DanglingEdge(NodeId, NodeId),
    #[error("deadline must be positive")]
    NonPositiveDeadline,
    #[error("invalid node {node}: {reason}")]
    InvalidNode { node: NodeId, reason: String },
    #[error("mutation breaks invariant: {0}")]
    MutationBreaksInvariant(String),
}

fn path_to_string(path: &[NodeId]) -> String {
    path.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(" -> ")
}

/// Checks every `DagSpec` invariant: node attributes, edge endpoints,
/// acyclicity (with a witness path on failure), and a positive deadline.
///
/// The empty DAG is valid; any non-empty acyclic graph necessarily has at
/// least one source and one sink.
pub fn validate(dag: &DagSpec) -> Result<(), GraphError> {
    if !dag.deadline.is_positive() {
        return Err(GraphError::NonPositiveDeadline);
    }
    for (id, attrs) in &dag.nodes {
        attrs.check(id)?;
    }
    for (u, v) in &dag.edges {
        if !dag.nodes.contains_key(u) || !dag.nodes.contains_key(v) {
            return Err(GraphError::DanglingEdge(u.clone(), v.clone()));
        }
        if u == v {
            return Err(GraphError::CycleDetected(vec![u.clone(), v.clone()]));
        }
    }
    if let Some(witness) = find_cycle(dag) {
        return Err(GraphError::CycleDetected(witness));
    }
    Ok(())
}

/// DFS cycle search returning a witness path `a -> ... -> a` when present.
fn find_cycle(dag: &DagSpec) -> Option<Vec<NodeId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut marks: BTreeMap<&NodeId, Mark> =
        dag.nodes.keys().map(|n| (n, Mark::White)).collect();
    let mut stack: Vec<NodeId> = Vec::new();

    fn visit<'a>(
        dag: &'a DagSpec,
        v: &'a NodeId,
        marks: &mut BTreeMap<&'a NodeId, Mark>,
        stack: &mut Vec<NodeId>,
    ) -> Option<Vec<NodeId>> {
        marks.insert(v, Mark::Grey);
        stack.push(v.clone());
        for succ in dag.successors(v) {
            match marks.get(succ) {
                Some(Mark::Grey) => {
                    let start = stack.iter().position(|n| n == succ).unwrap_or(0);
                    let mut witness: Vec<NodeId> = stack[start..].to_vec();
                    witness.push(succ.clone());
                    return Some(witness);
                }
                Some(Mark::White) => {
                    if let Some(w) = visit(dag, succ, marks, stack) {
                        return Some(w);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        marks.insert(v, Mark::Black);
        None
    }

    let keys: Vec<&NodeId> = dag.nodes.keys().collect();
    for v in keys {
        if marks[v] == Mark::White {
            if let Some(w) = visit(dag, v, &mut marks, &mut stack) {
                return Some(w);
            }
        }
    }
    None
}

/// Nodes in a topological order (Kahn), lexicographic among ready nodes.
///
/// Callers must hold a valid (acyclic) DAG.
pub fn topo_order(dag: &DagSpec) -> Vec<NodeId> {
    let mut indegree: BTreeMap<&NodeId, usize> = dag.nodes.keys().map(|n| (n, 0)).collect();
    for (_, v) in &dag.edges {
        if let Some(d) = indegree.get_mut(v) {
            *d += 1;
        }
    }
    let mut ready: BTreeSet<&NodeId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut order = Vec::with_capacity(dag.nodes.len());
    while let Some(v) = ready.pop_first() {
        order.push(v.clone());
        for succ in dag.successors(v) {
            let d = indegree.get_mut(succ).expect("validated edge endpoint");
            *d -= 1;
            if *d == 0 {
                ready.insert(succ);
            }
        }
    }
    debug_assert_eq!(order.len(), dag.nodes.len(), "graph must be acyclic");
    order
}

/// Longest-path depth of every node: sources map to 0, every other node to
/// one more than the maximum over its predecessors.
pub fn heights(dag: &DagSpec) -> BTreeMap<NodeId, usize> {
    let mut h: BTreeMap<NodeId, usize> = BTreeMap::new();
    for v in topo_order(dag) {
        let height = dag
            .predecessors(&v)
            .map(|u| h[u] + 1)
            .max()
            .unwrap_or(0);
        h.insert(v, height);
    }
    h
}

/// Partition of the nodes by height; entry `h` holds exactly the nodes at
/// height `h`. Empty for the empty DAG.
pub fn level_sets(dag: &DagSpec) -> Vec<BTreeSet<NodeId>> {
    let h = heights(dag);
    let max = match h.values().max() {
        Some(&m) => m,
        None => return Vec::new(),
    };
    let mut levels = vec![BTreeSet::new(); max + 1];
    for (node, height) in h {
        levels[height].insert(node);
    }
    levels
}

/// Maximum over all source-to-sink paths of the summed node WCETs, computed
/// in one topological pass.
pub fn critical_path_cost(dag: &DagSpec) -> Duration {
    let mut best: BTreeMap<NodeId, Duration> = BTreeMap::new();
    let mut max = Duration::ZERO;
    for v in topo_order(dag) {
        let incoming = dag
            .predecessors(&v)
            .map(|u| best[u])
            .max()
            .unwrap_or(Duration::ZERO);
        let total = incoming + dag.nodes[&v].wcet;
        max = max.max(total);
        best.insert(v, total);
    }
    max
}

/// Applies a mutation by value: returns the updated DAG, leaving the input
/// unchanged. The result is re-validated; any violation is reported as
/// `MutationBreaksInvariant`.
pub fn apply_mutation(dag: &DagSpec, m: &Mutation) -> Result<DagSpec, GraphError> {
    if m.target_dag != dag.id {
        return Err(GraphError::MutationBreaksInvariant(format!(
            "mutation targets {} but DAG is {}",
            m.target_dag, dag.id
        )));
    }
    let mut next = dag.clone();
    match &m.op {
        MutationOp::AddNode { id, attrs, incoming, outgoing } => {
            if next.nodes.contains_key(id) {
                return Err(GraphError::MutationBreaksInvariant(format!(
                    "node {id} already exists"
                )));
            }
            next.nodes.insert(id.clone(), attrs.clone());
            for u in incoming {
                next.edges.insert((u.clone(), id.clone()));
            }
            for v in outgoing {
                next.edges.insert((id.clone(), v.clone()));
            }
        }
        MutationOp::RemoveNode(id) => {
            if next.nodes.remove(id).is_none() {
                return Err(GraphError::MutationBreaksInvariant(format!(
                    "node {id} does not exist"
                )));
            }
            next.edges.retain(|(u, v)| u != id && v != id);
        }
        MutationOp::AddEdge(u, v) => {
            if !next.edges.insert((u.clone(), v.clone())) {
                return Err(GraphError::MutationBreaksInvariant(format!(
                    "edge ({u}, {v}) already exists"
                )));
            }
        }
        MutationOp::RemoveEdge(u, v) => {
            if !next.edges.remove(&(u.clone(), v.clone())) {
                return Err(GraphError::MutationBreaksInvariant(format!(
                    "edge ({u}, {v}) does not exist"
                )));
            }
        }
    }
    validate(&next).map_err(|e| GraphError::MutationBreaksInvariant(e.to_string()))?;
    Ok(next)
}

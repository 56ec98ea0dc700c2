//! Proportional intermediate-deadline assignment, online residual
//! reassignment, per-level capacity checking, and atomic-node deadline
//! computation with contention profiling.
//!
//! Level shares are computed with 128-bit rational arithmetic and cumulative
//! floor rounding, so the shares always sum to the budget exactly: the share
//! for height `h` is the difference of two running boundaries
//! `floor(budget * prefix_cost(h) / total_cost)`, which telescopes to the
//! budget with no accumulated drift.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{self, DagSpec, NodeId, NodeKind};
use crate::runtime::CostEstimator;
use crate::simulator::{
    self, DagTemplate, ExecModel, InterferenceWindow, PlatformModel, ReleasePattern,
    SchedulerConfig, SchedulerVariant, TraceKind, Workload,
};
use crate::time::{Duration, TimePoint};

/// Per-level shares and per-node absolute sub-deadlines.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeadlineAssignment {
    /// Share of the budget allotted to each height, indexed by height.
    pub level_shares: Vec<Duration>,
    /// Absolute sub-deadline of every node.
    pub node_subdeadlines: BTreeMap<NodeId, TimePoint>,
    /// The cost estimate used for each node at assignment time.
    pub basis_costs: BTreeMap<NodeId, Duration>,
}

impl DeadlineAssignment {
    pub fn budget(&self) -> Duration {
        self.level_shares.iter().copied().sum()
    }
}

/// Per-level capacity evaluation under an effective parallelism factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub per_level: Vec<LevelCapacity>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCapacity {
    pub level: usize,
    /// Total work at this level.
    pub work: Duration,
    /// The level's deadline share.
    pub bound: Duration,
    /// `work / rho <= bound`.
    pub paper_safe: bool,
    /// `work / rho + (1 - 1/rho) * max_cost <= bound`: the list-scheduling
    /// bound, strictly stronger for rho > 1 with non-preemptive nodes.
    pub graham_safe: bool,
}

impl CapacityReport {
    pub fn all_paper_safe(&self) -> bool {
        self.per_level.iter().all(|l| l.paper_safe)
    }

    pub fn all_graham_safe(&self) -> bool {
        self.per_level.iter().all(|l| l.graham_safe)
    }
}

/// Profiled maximum extra delay per (node, platform) under the heaviest
/// co-runner mix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContentionTable {
    entries: BTreeMap<(NodeId, String), Duration>,
}

impl ContentionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, platform: impl Into<String>, delta: Duration) {
        assert!(delta.as_ns() >= 0, "contention delay must be non-negative");
        self.entries.insert((node, platform.into()), delta);
    }

    pub fn get(&self, node: &NodeId, platform: &str) -> Option<Duration> {
        self.entries
            .get(&(node.clone(), platform.to_string()))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, String), &Duration)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DeadlineError {
    #[error("total cost is zero")]
    ZeroTotalCost,
    #[error("missing cost for node {0}")]
    MissingCost(NodeId),
    #[error("budget exhausted: elapsed >= budget")]
    BudgetExhausted,
    #[error("node {0} is not atomic")]
    NotAtomic(NodeId),
    #[error("no contention profile for node {0} on platform {1}")]
    NoProfile(NodeId, String),
    #[error("node {0} not found in workload")]
    NodeNotFound(NodeId),
}

/// Floor boundaries `floor(budget * prefix / total)` for each level; the
/// difference of consecutive boundaries is the level share.
fn share_boundaries(budget: Duration, level_costs: &[Duration]) -> Result<Vec<i64>, DeadlineError> {
    let total: i128 = level_costs.iter().map(|c| c.as_ns() as i128).sum();
    if total <= 0 {
        return Err(DeadlineError::ZeroTotalCost);
    }
    let budget = budget.as_ns() as i128;
    let mut prefix: i128 = 0;
    let mut boundaries = Vec::with_capacity(level_costs.len());
    for cost in level_costs {
        prefix += cost.as_ns() as i128;
        boundaries.push((budget * prefix / total) as i64);
    }
    Ok(boundaries)
}

fn assignment_from_costs(
    dag: &DagSpec,
    budget: Duration,
    costs: &BTreeMap<NodeId, Duration>,
    release_origin: TimePoint,
) -> Result<DeadlineAssignment, DeadlineError> {
    let levels = graph::level_sets(dag);
    if levels.is_empty() {
        return Ok(DeadlineAssignment::default());
    }
    let mut level_costs = Vec::with_capacity(levels.len());
    for level in &levels {
        let mut sum = Duration::ZERO;
        for node in level {
            let c = costs
                .get(node)
                .copied()
                .ok_or_else(|| DeadlineError::MissingCost(node.clone()))?;
            sum += c;
        }
        level_costs.push(sum);
    }
    let boundaries = share_boundaries(budget, &level_costs)?;
    let mut shares = Vec::with_capacity(boundaries.len());
    let mut prev = 0i64;
    for &b in &boundaries {
        shares.push(Duration::from_ns(b - prev));
        prev = b;
    }
    let mut subdeadlines = BTreeMap::new();
    for (h, level) in levels.iter().enumerate() {
        for node in level {
            subdeadlines.insert(node.clone(), release_origin + Duration::from_ns(boundaries[h]));
        }
    }
    Ok(DeadlineAssignment {
        level_shares: shares,
        node_subdeadlines: subdeadlines,
        basis_costs: costs.clone(),
    })
}

/// Assigns each height the share `budget * level_cost / total_cost` and each
/// node the absolute sub-deadline `release_origin + sum of shares up to its
/// height`. Shares sum to the budget exactly.
pub fn proportional_assign(
    dag: &DagSpec,
    budget: Duration,
    costs: &BTreeMap<NodeId, Duration>,
    release_origin: TimePoint,
) -> Result<DeadlineAssignment, DeadlineError> {
    assert!(budget.is_positive(), "budget must be positive");
    assignment_from_costs(dag, budget, costs, release_origin)
}

/// Reassigns the nodes that have not yet completed over the remaining budget
/// `budget - elapsed`, using moving-average cost estimates.
///
/// `completed` is normally a downward-closed prefix under precedence; nodes
/// retired by a topology mutation may additionally appear with live
/// ancestors. A node currently running is treated as not-yet-completed with
/// its cost estimate reduced by its elapsed running time (floored at zero),
/// so partial progress is not budgeted twice. `in_flight` maps running nodes
/// to that elapsed running time.
pub fn reassign_residual(
    dag: &DagSpec,
    completed: &BTreeSet<NodeId>,
    elapsed: Duration,
    budget: Duration,
    observed: &CostEstimator,
    in_flight: &BTreeMap<NodeId, Duration>,
) -> Result<DeadlineAssignment, DeadlineError> {
    let residual_nodes: BTreeMap<NodeId, _> = dag
        .nodes
        .iter()
        .filter(|(id, _)| !completed.contains(*id))
        .map(|(id, a)| (id.clone(), a.clone()))
        .collect();
    if residual_nodes.is_empty() {
        return Ok(DeadlineAssignment::default());
    }
    if elapsed >= budget {
        return Err(DeadlineError::BudgetExhausted);
    }
    let residual = DagSpec {
        id: dag.id.clone(),
        edges: dag
            .edges
            .iter()
            .filter(|(u, v)| residual_nodes.contains_key(u) && residual_nodes.contains_key(v))
            .cloned()
            .collect(),
        nodes: residual_nodes,
        deadline: budget - elapsed,
        arrival: dag.arrival,
    };
    let mut costs = BTreeMap::new();
    for (id, attrs) in &residual.nodes {
        let mut c = observed.estimate(&dag.id, id, attrs.wcet);
        if let Some(run) = in_flight.get(id) {
            c = (c - *run).clamp_min_zero();
        }
        costs.insert(id.clone(), c);
    }
    assignment_from_costs(&residual, budget - elapsed, &costs, dag.arrival + elapsed)
}

/// Evaluates both per-level capacity conditions for every height.
///
/// Panics if the assignment does not cover every node or `rho < 1`; both are
/// caller contract violations.
pub fn capacity_check(dag: &DagSpec, assignment: &DeadlineAssignment, rho: f64) -> CapacityReport {
    assert!(rho >= 1.0, "rho must be at least 1");
    let levels = graph::level_sets(dag);
    let mut per_level = Vec::with_capacity(levels.len());
    for (h, level) in levels.iter().enumerate() {
        let mut work = Duration::ZERO;
        let mut max_cost = Duration::ZERO;
        for node in level {
            let c = assignment
                .basis_costs
                .get(node)
                .copied()
                .unwrap_or_else(|| panic!("assignment does not cover node {node}"));
            work += c;
            max_cost = max_cost.max(c);
        }
        let bound = assignment.level_shares[h];
        let work_f = work.as_ns() as f64;
        let bound_f = bound.as_ns() as f64;
        let max_f = max_cost.as_ns() as f64;
        let paper_safe = work_f / rho <= bound_f;
        let graham_safe = work_f / rho + (1.0 - 1.0 / rho) * max_f <= bound_f;
        per_level.push(LevelCapacity {
            level: h,
            work,
            bound,
            paper_safe,
            graham_safe,
        });
    }
    CapacityReport { per_level }
}

/// Contention-aware deadline of an atomic node: isolated WCET plus the
/// profiled maximum contention delay.
pub fn atomic_deadline(
    node: &NodeId,
    attrs: &crate::graph::NodeAttrs,
    table: &ContentionTable,
    platform: &str,
) -> Result<Duration, DeadlineError> {
    if attrs.kind != NodeKind::Atomic {
        return Err(DeadlineError::NotAtomic(node.clone()));
    }
    let delta = table
        .get(node, platform)
        .ok_or_else(|| DeadlineError::NoProfile(node.clone(), platform.to_string()))?;
    Ok(attrs.wcet + delta)
}

/// Replaces the sub-deadline of every atomic node that has a contention
/// profile by `level start + wcet + delta`, leaving level shares untouched.
/// Returns the per-node relative deadline spans used for criticality
/// scoring: the atomic deadline for atomic nodes, the distance from the
/// release origin otherwise.
pub fn apply_atomic_deadlines(
    assignment: &mut DeadlineAssignment,
    dag: &DagSpec,
    release_origin: TimePoint,
    table: &ContentionTable,
    platform: &str,
) -> BTreeMap<NodeId, Duration> {
    let node_heights = graph::heights(dag);
    let mut spans = BTreeMap::new();
    for (node, attrs) in &dag.nodes {
        let Some(d_abs) = assignment.node_subdeadlines.get(node).copied() else {
            continue;
        };
        if attrs.kind == NodeKind::Atomic {
            if let Some(delta) = table.get(node, platform) {
                let h = node_heights[node];
                let level_start = d_abs - assignment.level_shares[h];
                let d_np = attrs.wcet + delta;
                assignment
                    .node_subdeadlines
                    .insert(node.clone(), level_start + d_np);
                spans.insert(node.clone(), d_np);
                continue;
            }
        }
        spans.insert(node.clone(), d_abs - release_origin);
    }
    spans
}

/// The heaviest simultaneously-runnable co-runner mix for `target`: the
/// pairwise-unordered node set maximizing combined memory footprint, with
/// ties broken on combined WCET and then lexicographically.
///
/// Nodes of the target's own DAG that are ordered relative to the target are
/// excluded; nodes of other DAGs are always candidates. Selection decomposes
/// per DAG because cross-DAG nodes are never ordered.
pub fn heaviest_corunner_mix(
    target_dag: &DagSpec,
    target: &NodeId,
    workload: &[DagSpec],
) -> Vec<(crate::graph::DagId, NodeId)> {
    let mut mix = Vec::new();
    for dag in workload {
        let candidates: Vec<NodeId> = if dag.id == target_dag.id {
            let mut related: BTreeSet<NodeId> = dag.descendants(target);
            related.insert(target.clone());
            for node in dag.nodes.keys() {
                if dag.descendants(node).contains(target) {
                    related.insert(node.clone());
                }
            }
            dag.nodes.keys().filter(|n| !related.contains(*n)).cloned().collect()
        } else {
            dag.nodes.keys().cloned().collect()
        };
        if let Some(best) = best_antichain(dag, &candidates) {
            mix.extend(best.into_iter().map(|n| (dag.id.clone(), n)));
        }
    }
    mix
}

/// Max-(mem, wcet, lexicographic) antichain among `candidates` of one DAG.
/// Exhaustive for up to 16 candidates; falls back to the heaviest level set
/// beyond that.
fn best_antichain(dag: &DagSpec, candidates: &[NodeId]) -> Option<Vec<NodeId>> {
    if candidates.is_empty() {
        return None;
    }
    let ordered_pair = |a: &NodeId, b: &NodeId| {
        dag.descendants(a).contains(b) || dag.descendants(b).contains(a)
    };
    let score = |set: &[NodeId]| {
        let mem: f64 = set.iter().map(|n| dag.nodes[n].mem).sum();
        let wcet: i64 = set.iter().map(|n| dag.nodes[n].wcet.as_ns()).sum();
        (mem, wcet)
    };
    let mut best: Option<(Vec<NodeId>, (f64, i64))> = None;
    let mut consider = |set: Vec<NodeId>| {
        if set.is_empty() {
            return;
        }
        let s = score(&set);
        let better = match &best {
            None => true,
            Some((cur_set, cur)) => {
                s.0 > cur.0 || (s.0 == cur.0 && (s.1 > cur.1 || (s.1 == cur.1 && set < *cur_set)))
            }
        };
        if better {
            best = Some((set, s));
        }
    };
    if candidates.len() <= 16 {
        for mask in 1u32..(1 << candidates.len()) {
            let set: Vec<NodeId> = (0..candidates.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| candidates[i].clone())
                .collect();
            let antichain = set
                .iter()
                .enumerate()
                .all(|(i, a)| set.iter().skip(i + 1).all(|b| !ordered_pair(a, b)));
            if antichain {
                consider(set);
            }
        }
    } else {
        // Any level set is an antichain.
        let cand: BTreeSet<&NodeId> = candidates.iter().collect();
        for level in graph::level_sets(dag) {
            let set: Vec<NodeId> = level.into_iter().filter(|n| cand.contains(n)).collect();
            consider(set);
        }
    }
    best.map(|(set, _)| set)
}

/// Profiles the maximum extra completion delay of `node` when co-run against
/// the heaviest co-runner mix, across the given seeds.
///
/// The probe and each co-runner are released simultaneously as single-node
/// DAGs; the co-runners carry earlier deadlines so EDF schedules them ahead
/// of the probe, exposing the worst queueing the mix can inflict. The result
/// is the maximum observed probe completion time minus its isolated WCET,
/// clipped at zero.
pub fn profile_contention(
    node: &NodeId,
    workload: &[DagSpec],
    platform: &PlatformModel,
    exec: &ExecModel,
    interference: &[InterferenceWindow],
    seeds: &[u64],
) -> Result<Duration, DeadlineError> {
    let target_dag = workload
        .iter()
        .find(|d| d.nodes.contains_key(node))
        .ok_or_else(|| DeadlineError::NodeNotFound(node.clone()))?;
    let attrs = &target_dag.nodes[node];
    let mix = heaviest_corunner_mix(target_dag, node, workload);

    let co_deadline = Duration::from_millis(1);
    let total_work: Duration = mix
        .iter()
        .map(|(d, n)| {
            workload
                .iter()
                .find(|t| &t.id == d)
                .map(|t| t.nodes[n].wcet)
                .unwrap_or(Duration::ZERO)
        })
        .sum();
    let probe_deadline = (total_work + attrs.wcet) * 10 + Duration::from_secs(1);

    let mut dags = Vec::new();
    let probe_id = format!("probe!{node}");
    dags.push(DagTemplate {
        spec: DagSpec::new(probe_id.clone(), probe_deadline)
            .with_node(node.as_str(), attrs.clone()),
        release: ReleasePattern::Sporadic {
            arrivals: vec![TimePoint::ZERO],
        },
    });
    for (dag_id, co) in &mix {
        let co_attrs = workload
            .iter()
            .find(|t| &t.id == dag_id)
            .map(|t| t.nodes[co].clone())
            .expect("mix node comes from workload");
        dags.push(DagTemplate {
            spec: DagSpec::new(format!("co!{dag_id}!{co}"), co_deadline)
                .with_node(co.as_str(), co_attrs),
            release: ReleasePattern::Sporadic {
                arrivals: vec![TimePoint::ZERO],
            },
        });
    }
    let probe_workload = Workload {
        dags,
        mutations: Vec::new(),
        interference: interference.to_vec(),
        contention: ContentionTable::default(),
        exec: exec.clone(),
        qoe_lambda: 1.0,
    };
    let cfg = SchedulerConfig::default();
    let mut worst = Duration::ZERO;
    for &seed in seeds {
        let trace = simulator::run(&probe_workload, platform, SchedulerVariant::Edf, &cfg, seed)
            .expect("profiling workload is closed and finite");
        let finish = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Finish && e.dag == format!("{probe_id}@0"))
            .map(|e| e.time)
            .max()
            .unwrap_or(TimePoint::ZERO);
        worst = worst.max(((finish - TimePoint::ZERO) - attrs.wcet).clamp_min_zero());
    }
    Ok(worst)
}

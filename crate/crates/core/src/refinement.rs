//! Stage refinement (encoder/decoder splitting), coalescing of
//! near-synchronous shared-encoder sub-tasks, and serialization-margin
//! computation.
//!
//! A refinable stage is a partitionable node carrying an encoder/decoder
//! cost decomposition. Refinement replaces it in place: one shared-encoder
//! node at the stage's height, its decoders one level below, former
//! predecessors feeding the encoder and former successors hanging off every
//! decoder. Refined node ids derive from the stage id with a `#` separator,
//! which is therefore reserved in user-supplied node ids.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{self, DagSpec, NodeAttrs, NodeId, NodeKind, NodeRole};
use crate::time::{Duration, TimePoint};

/// Description of the sub-DAG a refinable stage expands into.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedStage {
    /// The stage node this refinement replaces.
    pub origin: NodeId,
    pub encoder: NodeId,
    pub encoder_cost: Duration,
    /// Identifier of the physical encoder weights the stage shares.
    pub weights: String,
    pub decoders: Vec<(NodeId, Duration)>,
}

impl RefinedStage {
    pub fn q(&self) -> usize {
        self.decoders.len()
    }
}

/// A coalesced dispatch group of frontier sub-tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeUnit {
    /// Sub-task instance ids, sorted.
    pub members: Vec<String>,
    /// Physical encoder identifier shared by all members; `None` for an
    /// ordinary (non-encoder) singleton.
    pub shared_encoder: Option<String>,
    /// The smallest member sub-deadline, so EDF dispatch of the unit is
    /// conservative for every member.
    pub unit_deadline: TimePoint,
    /// Physical encoder runs this unit performs when dispatched: one for an
    /// encoder unit of any size, zero otherwise.
    pub encoder_executions: u32,
}

/// A frontier sub-task instance offered to `dynamic_merge`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTask {
    pub id: String,
    /// Physical encoder weights, present only for shared-encoder sub-tasks.
    pub encoder: Option<String>,
    pub height: usize,
    /// Predicted release time; drives the skew predicate.
    pub release: TimePoint,
    pub deadline: TimePoint,
}

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("stage {0} is not refinable")]
    NotRefinable(NodeId),
}

/// What `refine` would produce for `stage`, without building the graph.
pub fn refined_stage(dag: &DagSpec, stage: &NodeId) -> Result<RefinedStage, RefineError> {
    let attrs = dag
        .nodes
        .get(stage)
        .ok_or_else(|| RefineError::NotRefinable(stage.clone()))?;
    if !attrs.is_refinable() {
        return Err(RefineError::NotRefinable(stage.clone()));
    }
    let enc_cost = attrs.enc_cost.expect("refinable stage has enc_cost");
    let dec_costs = attrs.dec_costs.clone().expect("refinable stage has dec_costs");
    let weights = attrs
        .encoder_ref
        .clone()
        .unwrap_or_else(|| stage.as_str().to_string());
    Ok(RefinedStage {
        origin: stage.clone(),
        encoder: NodeId::new(format!("{stage}#enc")),
        encoder_cost: enc_cost,
        weights,
        decoders: dec_costs
            .iter()
            .enumerate()
            .map(|(j, c)| (NodeId::new(format!("{stage}#dec{j}")), *c))
            .collect(),
    })
}

/// Replaces `stage` with its encoder/decoder sub-DAG. Former predecessors
/// point at the encoder; former successors hang off every decoder, so all
/// downstream heights shift by exactly one.
pub fn refine(dag: &DagSpec, stage: &NodeId) -> Result<DagSpec, RefineError> {
    let plan = refined_stage(dag, stage)?;
    let attrs = dag.nodes[stage].clone();
    let preds: Vec<NodeId> = dag.predecessors(stage).cloned().collect();
    let succs: Vec<NodeId> = dag.successors(stage).cloned().collect();

    let mut out = dag.clone();
    out.nodes.remove(stage);
    out.edges.retain(|(u, v)| u != stage && v != stage);

    out.nodes.insert(
        plan.encoder.clone(),
        NodeAttrs {
            wcet: plan.encoder_cost,
            mem: attrs.mem,
            kind: NodeKind::Partitionable,
            role: NodeRole::SharedEncoder,
            next_release: attrs.next_release,
            encoder_ref: Some(plan.weights.clone()),
            enc_cost: None,
            dec_costs: None,
        },
    );
    for u in &preds {
        out.edges.insert((u.clone(), plan.encoder.clone()));
    }
    for (dec, cost) in &plan.decoders {
        out.nodes.insert(
            dec.clone(),
            NodeAttrs {
                wcet: *cost,
                mem: 0.0,
                kind: NodeKind::Partitionable,
                role: NodeRole::Decoder,
                next_release: attrs.next_release,
                encoder_ref: None,
                enc_cost: None,
                dec_costs: None,
            },
        );
        out.edges.insert((plan.encoder.clone(), dec.clone()));
        for v in &succs {
            out.edges.insert((dec.clone(), v.clone()));
        }
    }
    Ok(out)
}

/// All refinable stage ids, in lexicographic order.
pub fn refinable_stages(dag: &DagSpec) -> Vec<NodeId> {
    dag.nodes
        .iter()
        .filter(|(_, a)| a.is_refinable())
        .map(|(id, _)| id.clone())
        .collect()
}

/// Refines every refinable stage; non-refinable nodes are untouched.
pub fn refine_all(dag: &DagSpec) -> Result<DagSpec, RefineError> {
    let mut out = dag.clone();
    for stage in refinable_stages(dag) {
        out = refine(&out, &stage)?;
    }
    Ok(out)
}

/// Residual decoder serialisation cost when the platform cannot run all `q`
/// decoders in parallel: zero for `rho >= q`, otherwise the
/// longest-processing-time list-scheduling makespan of the decoders on
/// `floor(rho)` slots minus the largest decoder cost, never exceeding
/// `sum(dec) - max(dec)`.
pub fn serialization_margin(stage: &RefinedStage, rho: f64) -> Duration {
    assert!(rho >= 1.0, "rho must be at least 1");
    let q = stage.q();
    if rho >= q as f64 {
        return Duration::ZERO;
    }
    let slots = (rho.floor() as usize).max(1);
    let mut costs: Vec<Duration> = stage.decoders.iter().map(|(_, c)| *c).collect();
    costs.sort_unstable_by(|a, b| b.cmp(a));
    let mut loads = vec![Duration::ZERO; slots];
    for c in &costs {
        let least = loads
            .iter()
            .enumerate()
            .min_by_key(|(i, l)| (**l, *i))
            .map(|(i, _)| i)
            .expect("at least one slot");
        loads[least] += *c;
    }
    let makespan = loads.into_iter().max().unwrap_or(Duration::ZERO);
    let max_dec = costs.first().copied().unwrap_or(Duration::ZERO);
    let total: Duration = costs.iter().copied().sum();
    (makespan - max_dec).min(total - max_dec).clamp_min_zero()
}

/// Serialization margin of every refinable stage at the given parallelism.
pub fn refinement_margins(dag: &DagSpec, rho: f64) -> Vec<(NodeId, Duration)> {
    refinable_stages(dag)
        .into_iter()
        .map(|stage| {
            let plan = refined_stage(dag, &stage).expect("stage is refinable");
            let margin = serialization_margin(&plan, rho);
            (stage, margin)
        })
        .collect()
}

/// Critical-path cost of the fully refined DAG with each refined stage's
/// path evaluated as `enc + max(dec) + margin`: the margin is charged on the
/// encoder node, so every path through the stage carries it.
pub fn refined_critical_path_with_margin(dag: &DagSpec, rho: f64) -> Result<Duration, RefineError> {
    let margins: BTreeMap<NodeId, Duration> = refinement_margins(dag, rho).into_iter().collect();
    let mut refined = refine_all(dag)?;
    for (stage, margin) in &margins {
        let enc = NodeId::new(format!("{stage}#enc"));
        if let Some(attrs) = refined.nodes.get_mut(&enc) {
            attrs.wcet += *margin;
        }
    }
    Ok(graph::critical_path_cost(&refined))
}

/// Greedily coalesces frontier sub-tasks that share the same physical
/// encoder at the same height and whose predicted releases fall within a
/// `gamma` window anchored at the earliest member. Everything else becomes a
/// singleton unit. Units partition the frontier.
pub fn dynamic_merge(frontier: &[SubTask], gamma: Duration) -> Vec<MergeUnit> {
    let mut units = Vec::new();
    let mut groups: BTreeMap<(String, usize), Vec<&SubTask>> = BTreeMap::new();
    for task in frontier {
        match &task.encoder {
            Some(enc) => groups
                .entry((enc.clone(), task.height))
                .or_default()
                .push(task),
            None => units.push(MergeUnit {
                members: vec![task.id.clone()],
                shared_encoder: None,
                unit_deadline: task.deadline,
                encoder_executions: 0,
            }),
        }
    }
    for ((enc, _height), mut members) in groups {
        members.sort_by(|a, b| (a.release, &a.id).cmp(&(b.release, &b.id)));
        let mut i = 0;
        while i < members.len() {
            let anchor = members[i].release;
            let mut j = i + 1;
            while j < members.len() && members[j].release - anchor <= gamma {
                j += 1;
            }
            let window = &members[i..j];
            let mut ids: Vec<String> = window.iter().map(|t| t.id.clone()).collect();
            ids.sort();
            units.push(MergeUnit {
                members: ids,
                shared_encoder: Some(enc.clone()),
                unit_deadline: window
                    .iter()
                    .map(|t| t.deadline)
                    .min()
                    .expect("window is non-empty"),
                encoder_executions: 1,
            });
            i = j;
        }
    }
    units.sort_by(|a, b| (a.unit_deadline, &a.members).cmp(&(b.unit_deadline, &b.members)));
    units
}

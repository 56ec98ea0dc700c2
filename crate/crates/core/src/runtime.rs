//! Dispatch-side building blocks: the handler finite-state machine, barrier
//! kinds, EDF-ordered ready queue, same-height batching, and online cost
//! estimation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::graph::{DagId, NodeId};
use crate::time::{Duration, TimePoint};

/// Lifecycle phase of a node's execution handler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandlerPhase {
    Ready,
    Running,
    IoWait,
    Oom,
    Done,
}

/// Events driving handler transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandlerEvent {
    Dispatch,
    IoStart,
    IoEnd,
    MemFail,
    MemReclaim,
    Finish,
}

/// A node handler: current phase plus the time it was entered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerState {
    pub node: String,
    pub state: HandlerPhase,
    pub entered_at: TimePoint,
}

impl HandlerState {
    pub fn ready(node: impl Into<String>, at: TimePoint) -> Self {
        HandlerState {
            node: node.into(),
            state: HandlerPhase::Ready,
            entered_at: at,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RuntimeError {
    #[error("illegal transition: {state:?} on {event:?}")]
    IllegalTransition {
        state: HandlerPhase,
        event: HandlerEvent,
    },
    #[error("observed duration must be positive")]
    NonPositiveObservation,
}

/// Advances the handler FSM by one event.
///
/// Legal transitions: Ready--Dispatch-->Running;
/// Running--IoStart-->IoWait, Running--MemFail-->Oom,
/// Running--Finish-->Done; IoWait--IoEnd-->Running,
/// IoWait--Finish-->Done; Oom--MemReclaim-->Ready. Done is terminal.
pub fn fsm_step(
    h: &HandlerState,
    event: HandlerEvent,
    now: TimePoint,
) -> Result<HandlerState, RuntimeError> {
    use HandlerEvent::*;
    use HandlerPhase::*;
    let next = match (h.state, event) {
        (Ready, Dispatch) => Running,
        (Running, IoStart) => IoWait,
        (Running, MemFail) => Oom,
        (Running, Finish) => Done,
        (IoWait, IoEnd) => Running,
        (IoWait, Finish) => Done,
        (Oom, MemReclaim) => Ready,
        (state, event) => return Err(RuntimeError::IllegalTransition { state, event }),
    };
    Ok(HandlerState {
        node: h.node.clone(),
        state: next,
        entered_at: now,
    })
}

/// On-demand synchronization barrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub emitted_at: TimePoint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BarrierKind {
    /// Every node of the instance's level set at this height signalled Done.
    LevelComplete { dag: String, height: usize },
    /// A shared-encoder output is about to be consumed by its decoders.
    EncoderBroadcast { encoder: String },
    /// A handler transitioned from Running to Done.
    FsmDone { node: String },
    /// Fixed-interval synchronization scan used by the baseline schedulers
    /// that do not run the on-demand layer.
    Periodic,
}

impl BarrierKind {
    pub fn label(&self) -> &'static str {
        match self {
            BarrierKind::LevelComplete { .. } => "level_complete",
            BarrierKind::EncoderBroadcast { .. } => "encoder_broadcast",
            BarrierKind::FsmDone { .. } => "fsm_done",
            BarrierKind::Periodic => "periodic",
        }
    }
}

/// Moving-average execution-cost estimator over the last `k` observed
/// completions per node, falling back to the offline WCET until the first
/// observation lands.
#[derive(Debug, Clone, Default)]
pub struct CostEstimator {
    window: BTreeMap<(DagId, NodeId), VecDeque<Duration>>,
    k: usize,
}

impl CostEstimator {
    pub fn new(k: usize) -> Self {
        CostEstimator {
            window: BTreeMap::new(),
            k: k.max(1),
        }
    }

    pub fn estimate(&self, dag: &DagId, node: &NodeId, fallback: Duration) -> Duration {
        match self.window.get(&(dag.clone(), node.clone())) {
            Some(w) if !w.is_empty() => {
                let sum: i64 = w.iter().map(|d| d.as_ns()).sum();
                Duration::from_ns(sum / w.len() as i64)
            }
            _ => fallback,
        }
    }

    pub fn observe(
        &mut self,
        dag: &DagId,
        node: &NodeId,
        observed: Duration,
    ) -> Result<(), RuntimeError> {
        if !observed.is_positive() {
            return Err(RuntimeError::NonPositiveObservation);
        }
        let w = self.window.entry((dag.clone(), node.clone())).or_default();
        w.push_back(observed);
        while w.len() > self.k {
            w.pop_front();
        }
        Ok(())
    }
}

/// A dispatchable unit: one node instance, or a merged group of
/// shared-encoder node instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchUnit {
    /// Stable unit identifier; the EDF tie-break key.
    pub id: String,
    /// (instance, node) members; singletons everywhere except merged
    /// encoder units.
    pub members: Vec<(String, NodeId)>,
    pub deadline: TimePoint,
    pub height: usize,
    /// True when dispatching this unit performs one physical encoder run.
    pub encoder_run: bool,
}

/// Ready queue keyed by (absolute sub-deadline, unit id); pop always returns
/// the minimum key.
#[derive(Debug, Clone, Default)]
pub struct ReadyQueue {
    units: BTreeMap<(TimePoint, String), DispatchUnit>,
}

impl ReadyQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, unit: DispatchUnit) {
        self.units.insert((unit.deadline, unit.id.clone()), unit);
    }

    pub fn pop(&mut self) -> Option<DispatchUnit> {
        self.units.pop_first().map(|(_, u)| u)
    }

    pub fn remove(&mut self, deadline: TimePoint, id: &str) -> Option<DispatchUnit> {
        self.units.remove(&(deadline, id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DispatchUnit> {
        self.units.values()
    }

    pub fn drain(&mut self) -> Vec<DispatchUnit> {
        let drained: Vec<DispatchUnit> = std::mem::take(&mut self.units).into_values().collect();
        drained
    }
}

/// Takes up to `free_slots` units in EDF order (smallest absolute
/// sub-deadline first, ties by unit id).
pub fn edf_select(queue: &mut ReadyQueue, free_slots: usize) -> Vec<DispatchUnit> {
    let mut out = Vec::new();
    while out.len() < free_slots {
        match queue.pop() {
            Some(u) => out.push(u),
            None => break,
        }
    }
    out
}

/// Groups ready units by height, preserving EDF order inside each group.
/// Groups are returned in ascending height order.
pub fn batch_same_height(units: &[DispatchUnit]) -> Vec<(usize, Vec<DispatchUnit>)> {
    let mut groups: BTreeMap<usize, Vec<DispatchUnit>> = BTreeMap::new();
    let mut sorted: Vec<DispatchUnit> = units.to_vec();
    sorted.sort_by(|a, b| (a.deadline, &a.id).cmp(&(b.deadline, &b.id)));
    for u in sorted {
        groups.entry(u.height).or_default().push(u);
    }
    groups.into_iter().collect()
}

/// Tracks which on-demand barriers have already fired for an instance, so a
/// barrier is emitted exactly when its trigger condition first becomes true.
#[derive(Debug, Clone, Default)]
pub struct BarrierLedger {
    levels: BTreeSet<usize>,
    broadcasts: BTreeSet<NodeId>,
}

impl BarrierLedger {
    pub fn level_emitted(&self, height: usize) -> bool {
        self.levels.contains(&height)
    }

    /// Returns true the first time this level is marked.
    pub fn mark_level(&mut self, height: usize) -> bool {
        self.levels.insert(height)
    }

    pub fn mark_broadcast(&mut self, encoder: &NodeId) -> bool {
        self.broadcasts.insert(encoder.clone())
    }

    /// Rebuilds level bookkeeping after a topology change.
    pub fn reset_levels(&mut self, still_complete: impl Iterator<Item = usize>) {
        self.levels = still_complete.collect();
    }
}

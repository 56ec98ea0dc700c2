//! Deterministic discrete-event engine: releases, mutations, interference,
//! execution-time sampling, dispatch, synchronization, shedding, and trace
//! production for the four scheduler variants.
//!
//! The platform is `floor(rho)` identical non-preemptive slots plus, when
//! `rho` is fractional, one slot running at the fractional speed. A node at
//! height `h` becomes dispatchable once its instance's level `h - 1` has
//! completed. The variants differ in when that completion is observed and
//! acted on: the full scheduler reacts within the event cycle where the
//! completion happens (on-demand synchronization), the baselines only at the
//! periodic scheduler tick. Everything — event order, tie-breaks, sampling —
//! is a pure function of (workload, platform, variant, config, seed), so a
//! rerun reproduces a byte-identical trace.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::deadlines::{self, ContentionTable, DeadlineError};
use crate::graph::{self, DagId, DagSpec, Mutation, NodeId, NodeRole};
use crate::overload::{self, BurstConfig, HealthSample};
use crate::refinement::{self, SubTask};
use crate::runtime::{
    fsm_step, BarrierKind, CostEstimator, DispatchUnit, HandlerEvent, HandlerPhase, HandlerState,
    ReadyQueue,
};
use crate::time::{Duration, TimePoint};

/// Execution platform: effective parallelism, scheduler quantum, and an
/// informational memory capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformModel {
    pub name: String,
    pub rho: f64,
    pub tick: Duration,
    pub mem_capacity: f64,
}

impl Default for PlatformModel {
    fn default() -> Self {
        PlatformModel {
            name: "default".to_string(),
            rho: 2.0,
            tick: Duration::from_millis(5),
            mem_capacity: 32_768.0,
        }
    }
}

/// A window during which execution times inflate multiplicatively.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceWindow {
    pub start: TimePoint,
    pub end: TimePoint,
    pub slowdown: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecDistribution {
    /// Every node runs for exactly its WCET.
    Deterministic,
    /// Uniform in [alpha * wcet, wcet].
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecModel {
    pub distribution: ExecDistribution,
    pub alpha: f64,
}

impl Default for ExecModel {
    fn default() -> Self {
        ExecModel {
            distribution: ExecDistribution::Deterministic,
            alpha: 0.7,
        }
    }
}

/// The four scheduler variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SchedulerVariant {
    /// Strict EDF over the unrefined DAG: no refinement, no intermediate
    /// deadlines, no reassignment, periodic synchronization.
    Edf,
    /// Refinement plus initial proportional deadlines, then EDF.
    RedFg,
    /// RedFg plus online residual reassignment.
    RedIda,
    /// RedIda plus on-demand synchronization, merging, and burst shedding.
    Red,
}

impl SchedulerVariant {
    pub const ALL: [SchedulerVariant; 4] = [
        SchedulerVariant::Edf,
        SchedulerVariant::RedFg,
        SchedulerVariant::RedIda,
        SchedulerVariant::Red,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerVariant::Edf => "edf",
            SchedulerVariant::RedFg => "red-fg",
            SchedulerVariant::RedIda => "red-ida",
            SchedulerVariant::Red => "red",
        }
    }

    pub fn parse(s: &str) -> Option<SchedulerVariant> {
        match s.to_ascii_lowercase().as_str() {
            "edf" => Some(SchedulerVariant::Edf),
            "red-fg" | "red_fg" | "redfg" => Some(SchedulerVariant::RedFg),
            "red-ida" | "red_ida" | "redida" => Some(SchedulerVariant::RedIda),
            "red" => Some(SchedulerVariant::Red),
            _ => None,
        }
    }

    fn refines(&self) -> bool {
        !matches!(self, SchedulerVariant::Edf)
    }

    fn proportional(&self) -> bool {
        !matches!(self, SchedulerVariant::Edf)
    }

    fn reassigns(&self) -> bool {
        matches!(self, SchedulerVariant::RedIda | SchedulerVariant::Red)
    }

    fn on_demand(&self) -> bool {
        matches!(self, SchedulerVariant::Red)
    }

    fn merges(&self) -> bool {
        matches!(self, SchedulerVariant::Red)
    }

    fn bursts(&self) -> bool {
        matches!(self, SchedulerVariant::Red)
    }
}

impl std::fmt::Display for SchedulerVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-node OOM injection: the chosen release index fails once at dispatch
/// and retries after the reclaim delay.
#[derive(Debug, Clone, PartialEq)]
pub struct OomInject {
    pub instance: u64,
    pub reclaim: Duration,
}

/// Scheduler parameters shared by all variants; capability flags only apply
/// where the variant runs the corresponding mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    /// Merge window for near-synchronous shared-encoder sub-tasks.
    pub gamma: Duration,
    /// Moving-average window length for cost estimation.
    pub cost_window: usize,
    /// Simulated cost charged per emitted barrier: dispatches in a cycle are
    /// stretched by `barriers_emitted * overhead`. Zero by default.
    pub barrier_overhead: Duration,
    pub burst: BurstConfig,
    pub burst_enabled: bool,
    pub merge_enabled: bool,
    /// Post-execution I/O drain per (template, node); exercises the IoWait
    /// handler path.
    pub io_inject: BTreeMap<(DagId, NodeId), Duration>,
    /// One-shot memory failure per (template, node); exercises the OOM
    /// handler path.
    pub oom_inject: BTreeMap<(DagId, NodeId), OomInject>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            gamma: Duration::from_millis(100),
            cost_window: 8,
            barrier_overhead: Duration::ZERO,
            burst: BurstConfig::default(),
            burst_enabled: true,
            merge_enabled: true,
            io_inject: BTreeMap::new(),
            oom_inject: BTreeMap::new(),
        }
    }
}

/// How instances of one DAG template are released.
#[derive(Debug, Clone, PartialEq)]
pub enum ReleasePattern {
    Periodic {
        offset: TimePoint,
        period: Duration,
        count: u64,
    },
    Sporadic {
        arrivals: Vec<TimePoint>,
    },
}

impl ReleasePattern {
    pub fn arrivals(&self) -> Vec<TimePoint> {
        match self {
            ReleasePattern::Periodic { offset, period, count } => {
                (0..*count).map(|k| *offset + *period * k as i64).collect()
            }
            ReleasePattern::Sporadic { arrivals } => arrivals.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagTemplate {
    pub spec: DagSpec,
    pub release: ReleasePattern,
}

/// A fully resolved simulation input.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub dags: Vec<DagTemplate>,
    pub mutations: Vec<Mutation>,
    pub interference: Vec<InterferenceWindow>,
    pub contention: ContentionTable,
    pub exec: ExecModel,
    pub qoe_lambda: f64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            dags: Vec::new(),
            mutations: Vec::new(),
            interference: Vec::new(),
            contention: ContentionTable::default(),
            exec: ExecModel::default(),
            qoe_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Release,
    Dispatch,
    Finish,
    Barrier,
    Drop,
    Mutation,
    Overload,
}

impl TraceKind {
    pub fn label(&self) -> &'static str {
        match self {
            TraceKind::Release => "release",
            TraceKind::Dispatch => "dispatch",
            TraceKind::Finish => "finish",
            TraceKind::Barrier => "barrier",
            TraceKind::Drop => "drop",
            TraceKind::Mutation => "mutation",
            TraceKind::Overload => "overload",
        }
    }
}

/// One timestamped trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: TimePoint,
    pub kind: TraceKind,
    /// Instance id (`template@k`), template id for mutations, or `-`.
    pub dag: String,
    /// Node id or `-`.
    pub node: String,
    /// Stable `key=value` pairs separated by `;`.
    pub extra: String,
}

/// Ordered event log; the ground truth for every property check.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub events: Vec<TraceEvent>,
}

impl SimTrace {
    /// Tab-separated rendering: time_ns, kind, dag_id, node_id, extra.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.time.as_ns(),
                e.kind.label(),
                e.dag,
                e.node,
                e.extra
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("horizon exceeded: {0}")]
    HorizonExceeded(String),
}

/// Samples one execution duration: the distribution draw, multiplied by the
/// product of active interference slowdowns, never exceeding
/// `wcet * slowdown` and never below one nanosecond.
pub fn sample_exec(
    wcet: Duration,
    model: &ExecModel,
    slowdown: f64,
    rng: &mut ChaCha8Rng,
) -> Duration {
    let base = match model.distribution {
        ExecDistribution::Deterministic => wcet,
        ExecDistribution::Uniform => {
            let u: f64 = rng.gen_range(model.alpha..=1.0);
            Duration::from_ns(((wcet.as_ns() as f64 * u).round() as i64).clamp(1, wcet.as_ns()))
        }
    };
    Duration::from_ns(((base.as_ns() as f64 * slowdown).round() as i64).max(1))
}

/// Product of slowdowns of every interference window active at `t`.
pub fn active_slowdown(windows: &[InterferenceWindow], t: TimePoint) -> f64 {
    windows
        .iter()
        .filter(|w| w.start <= t && t < w.end)
        .map(|w| w.slowdown)
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EvPriority {
    SlotFinish = 0,
    IoDone = 1,
    MutationDue = 2,
    Release = 3,
    OomReclaim = 4,
    Tick = 5,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum EvPayload {
    SlotFinish { slot: usize },
    IoDone { instance: String, node: NodeId },
    MutationDue { index: usize },
    Release { template: DagId, index: u64 },
    OomReclaim { instance: String, node: NodeId },
    Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Ev {
    time: TimePoint,
    prio: EvPriority,
    seq: u64,
    payload: EvPayload,
}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.prio, self.seq).cmp(&(other.time, other.prio, other.seq))
    }
}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct RunningUnit {
    unit: DispatchUnit,
    started: TimePoint,
    exec: Duration,
}

struct Slot {
    speed: f64,
    busy: Option<RunningUnit>,
}

struct Instance {
    id: String,
    template: DagId,
    arrival: TimePoint,
    abs_deadline: TimePoint,
    shape: DagSpec,
    heights: BTreeMap<NodeId, usize>,
    level_count: usize,
    node_deadline: BTreeMap<NodeId, TimePoint>,
    span: BTreeMap<NodeId, Duration>,
    fsm: BTreeMap<NodeId, HandlerState>,
    done: BTreeSet<NodeId>,
    cancelled: BTreeSet<NodeId>,
    /// Nodes currently in the ready queue or running.
    queued: BTreeSet<NodeId>,
    running: BTreeMap<NodeId, TimePoint>,
    levels_marked: BTreeSet<usize>,
    broadcasts_marked: BTreeSet<NodeId>,
    dropped: bool,
    finished_at: Option<TimePoint>,
    reassign_dirty: bool,
}

impl Instance {
    fn active(&self) -> bool {
        !self.dropped && self.finished_at.is_none()
    }

    fn level_nodes(&self, h: usize) -> impl Iterator<Item = (&NodeId, &usize)> {
        self.heights.iter().filter(move |(_, height)| **height == h)
    }

    fn level_complete(&self, h: usize) -> bool {
        self.level_nodes(h)
            .all(|(n, _)| self.done.contains(n) || self.cancelled.contains(n))
    }

    fn pending_work(&self) -> bool {
        self.shape
            .nodes
            .keys()
            .any(|n| !self.done.contains(n) && !self.cancelled.contains(n))
    }

    fn unlocked(&self, node: &NodeId) -> bool {
        match self.heights.get(node) {
            Some(0) => true,
            Some(h) => self.levels_marked.contains(&(h - 1)),
            None => false,
        }
    }
}

struct Engine<'a> {
    workload: &'a Workload,
    platform: &'a PlatformModel,
    variant: SchedulerVariant,
    cfg: &'a SchedulerConfig,
    rng: ChaCha8Rng,
    now: TimePoint,
    events: BinaryHeap<Reverse<Ev>>,
    seq: u64,
    templates: BTreeMap<DagId, DagSpec>,
    instances: BTreeMap<String, Instance>,
    queue: ReadyQueue,
    slots: Vec<Slot>,
    estimator: CostEstimator,
    health: Vec<HealthSample>,
    trace: Vec<TraceEvent>,
    horizon: TimePoint,
    tick_scheduled: Option<TimePoint>,
    oom_armed: BTreeSet<(DagId, NodeId)>,
}

pub fn run(
    workload: &Workload,
    platform: &PlatformModel,
    variant: SchedulerVariant,
    cfg: &SchedulerConfig,
    seed: u64,
) -> Result<SimTrace, SimError> {
    validate_workload(workload, platform, cfg)?;
    let mut engine = Engine::new(workload, platform, variant, cfg, seed);
    engine.schedule_initial();
    engine.run_loop()?;
    Ok(SimTrace {
        events: engine.trace,
    })
}

fn validate_workload(
    workload: &Workload,
    platform: &PlatformModel,
    cfg: &SchedulerConfig,
) -> Result<(), SimError> {
    if platform.rho < 1.0 {
        return Err(SimError::InvalidWorkload("rho must be at least 1".into()));
    }
    if !platform.tick.is_positive() {
        return Err(SimError::InvalidWorkload("tick must be positive".into()));
    }
    cfg.burst
        .validate()
        .map_err(|e| SimError::InvalidWorkload(e.to_string()))?;
    let mut ids = BTreeSet::new();
    for t in &workload.dags {
        graph::validate(&t.spec)
            .map_err(|e| SimError::InvalidWorkload(format!("dag {}: {e}", t.spec.id)))?;
        if !ids.insert(t.spec.id.clone()) {
            return Err(SimError::InvalidWorkload(format!(
                "duplicate dag id {}",
                t.spec.id
            )));
        }
        for node in t.spec.nodes.keys() {
            if node.as_str().contains('#') {
                return Err(SimError::InvalidWorkload(format!(
                    "node id {node} uses the reserved '#' separator"
                )));
            }
        }
    }
    for w in &workload.interference {
        if w.start >= w.end || w.slowdown < 1.0 {
            return Err(SimError::InvalidWorkload(
                "interference window needs start < end and slowdown >= 1".into(),
            ));
        }
    }
    for m in &workload.mutations {
        if !ids.contains(&m.target_dag) {
            return Err(SimError::InvalidWorkload(format!(
                "mutation targets unknown dag {}",
                m.target_dag
            )));
        }
    }
    if !(workload.exec.alpha > 0.0 && workload.exec.alpha <= 1.0) {
        return Err(SimError::InvalidWorkload("alpha must be in (0, 1]".into()));
    }
    Ok(())
}

impl<'a> Engine<'a> {
    fn new(
        workload: &'a Workload,
        platform: &'a PlatformModel,
        variant: SchedulerVariant,
        cfg: &'a SchedulerConfig,
        seed: u64,
    ) -> Self {
        let full = platform.rho.floor() as usize;
        let frac = platform.rho - full as f64;
        let mut slots: Vec<Slot> = (0..full).map(|_| Slot { speed: 1.0, busy: None }).collect();
        if frac > 1e-9 {
            slots.push(Slot { speed: frac, busy: None });
        }
        Engine {
            workload,
            platform,
            variant,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: TimePoint::ZERO,
            events: BinaryHeap::new(),
            seq: 0,
            templates: workload
                .dags
                .iter()
                .map(|t| (t.spec.id.clone(), t.spec.clone()))
                .collect(),
            instances: BTreeMap::new(),
            queue: ReadyQueue::new(),
            slots,
            estimator: CostEstimator::new(cfg.cost_window),
            health: Vec::new(),
            trace: Vec::new(),
            horizon: TimePoint::ZERO,
            tick_scheduled: None,
            oom_armed: cfg
                .oom_inject
                .keys()
                .map(|(d, n)| (d.clone(), n.clone()))
                .collect(),
        }
    }

    fn push_event(&mut self, time: TimePoint, prio: EvPriority, payload: EvPayload) {
        self.seq += 1;
        self.events.push(Reverse(Ev {
            time,
            prio,
            seq: self.seq,
            payload,
        }));
    }

    fn emit(&mut self, kind: TraceKind, dag: impl Into<String>, node: impl Into<String>, extra: String) {
        self.trace.push(TraceEvent {
            time: self.now,
            kind,
            dag: dag.into(),
            node: node.into(),
            extra,
        });
    }

    fn schedule_initial(&mut self) {
        let mut horizon = TimePoint::ZERO;
        for t in &self.workload.dags {
            for (k, arrival) in t.release.arrivals().into_iter().enumerate() {
                self.push_event(
                    arrival,
                    EvPriority::Release,
                    EvPayload::Release {
                        template: t.spec.id.clone(),
                        index: k as u64,
                    },
                );
                horizon = horizon.max(arrival + t.spec.deadline * 10);
            }
        }
        for (i, m) in self.workload.mutations.iter().enumerate() {
            self.push_event(m.at, EvPriority::MutationDue, EvPayload::MutationDue { index: i });
            horizon = horizon.max(m.at + Duration::from_secs(1));
        }
        self.horizon = horizon;
        self.schedule_tick(TimePoint::ZERO);
    }

    fn schedule_tick(&mut self, at: TimePoint) {
        if self.tick_scheduled.map_or(true, |t| at < t) {
            self.tick_scheduled = Some(at);
            self.push_event(at, EvPriority::Tick, EvPayload::Tick);
        }
    }

    fn has_live_work(&self) -> bool {
        self.instances.values().any(|i| i.active() && i.pending_work())
            || self.slots.iter().any(|s| s.busy.is_some())
    }

    fn next_event_time(&self) -> Option<TimePoint> {
        self.events.peek().map(|Reverse(e)| e.time)
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(head)) = self.events.peek() {
            let t = head.time;
            if t > self.horizon {
                break;
            }
            self.now = t;
            let mut was_tick = false;
            while let Some(Reverse(head)) = self.events.peek() {
                if head.time != t {
                    break;
                }
                let Reverse(ev) = self.events.pop().expect("peeked");
                match ev.payload {
                    EvPayload::SlotFinish { slot } => self.on_slot_finish(slot),
                    EvPayload::IoDone { instance, node } => self.on_io_done(&instance, &node),
                    EvPayload::MutationDue { index } => self.on_mutation(index),
                    EvPayload::Release { template, index } => self.on_release(&template, index),
                    EvPayload::OomReclaim { instance, node } => self.on_oom_reclaim(&instance, &node),
                    EvPayload::Tick => {
                        was_tick = true;
                        self.tick_scheduled = None;
                    }
                }
            }
            if self.variant.on_demand() || was_tick {
                self.cycle(was_tick);
            }
            if was_tick {
                if self.has_live_work() {
                    self.schedule_tick(self.now + self.platform.tick);
                } else if let Some(next) = self.next_event_time() {
                    self.schedule_tick(next.align_up(self.platform.tick).max(next));
                }
            }
        }
        let unfinished: Vec<&String> = self
            .instances
            .values()
            .filter(|i| i.active() && i.pending_work())
            .map(|i| &i.id)
            .collect();
        if !unfinished.is_empty() {
            return Err(SimError::HorizonExceeded(format!(
                "{} instances still pending at {} (first: {})",
                unfinished.len(),
                self.horizon,
                unfinished[0]
            )));
        }
        Ok(())
    }

    // ----- event handlers -----

    fn on_release(&mut self, template: &DagId, index: u64) {
        let spec = self.templates[template].clone();
        let id = format!("{template}@{index}");
        let mut shape = if self.variant.refines() {
            refinement::refine_all(&spec).expect("validated workload stages refine")
        } else {
            spec
        };
        shape.arrival = self.now;
        let abs_deadline = self.now + shape.deadline;
        let heights = graph::heights(&shape);
        let level_count = heights.values().max().map_or(0, |m| m + 1);
        let fsm = shape
            .nodes
            .keys()
            .map(|n| (n.clone(), HandlerState::ready(n.as_str(), self.now)))
            .collect();
        let mut inst = Instance {
            id: id.clone(),
            template: template.clone(),
            arrival: self.now,
            abs_deadline,
            shape,
            heights,
            level_count,
            node_deadline: BTreeMap::new(),
            span: BTreeMap::new(),
            fsm,
            done: BTreeSet::new(),
            cancelled: BTreeSet::new(),
            queued: BTreeSet::new(),
            running: BTreeMap::new(),
            levels_marked: BTreeSet::new(),
            broadcasts_marked: BTreeSet::new(),
            dropped: false,
            finished_at: None,
            reassign_dirty: false,
        };
        self.assign_initial(&mut inst);
        self.emit(
            TraceKind::Release,
            id.clone(),
            "-",
            format!("deadline={};template={}", abs_deadline.as_ns(), template),
        );
        if !inst.pending_work() {
            inst.finished_at = Some(self.now);
        }
        self.instances.insert(id, inst);
    }

    fn assign_initial(&mut self, inst: &mut Instance) {
        if self.variant.proportional() {
            let costs: BTreeMap<NodeId, Duration> = inst
                .shape
                .nodes
                .iter()
                .map(|(n, a)| (n.clone(), a.wcet))
                .collect();
            match deadlines::proportional_assign(
                &inst.shape,
                inst.shape.deadline,
                &costs,
                inst.arrival,
            ) {
                Ok(mut assignment) => {
                    let spans = deadlines::apply_atomic_deadlines(
                        &mut assignment,
                        &inst.shape,
                        inst.arrival,
                        &self.workload.contention,
                        &self.platform.name,
                    );
                    inst.node_deadline = assignment.node_subdeadlines;
                    inst.span = spans;
                }
                Err(_) => self.assign_end_to_end(inst),
            }
        } else {
            self.assign_end_to_end(inst);
        }
    }

    fn assign_end_to_end(&self, inst: &mut Instance) {
        inst.node_deadline = inst
            .shape
            .nodes
            .keys()
            .map(|n| (n.clone(), inst.abs_deadline))
            .collect();
        inst.span = inst
            .shape
            .nodes
            .keys()
            .map(|n| (n.clone(), inst.shape.deadline))
            .collect();
    }

    fn on_mutation(&mut self, index: usize) {
        let m = self.workload.mutations[index].clone();
        let current = self.templates[&m.target_dag].clone();
        match graph::apply_mutation(&current, &m) {
            Ok(next) => {
                self.templates.insert(m.target_dag.clone(), next);
                self.emit(
                    TraceKind::Mutation,
                    m.target_dag.as_str().to_string(),
                    mutation_node_label(&m),
                    format!("op={};applied=true", mutation_op_label(&m)),
                );
                self.reshape_instances(&m.target_dag);
            }
            Err(e) => {
                self.emit(
                    TraceKind::Mutation,
                    m.target_dag.as_str().to_string(),
                    mutation_node_label(&m),
                    format!("op={};applied=false;reason={}", mutation_op_label(&m), compact(&e.to_string())),
                );
            }
        }
    }

    /// Re-derives the shape of every in-flight instance of a mutated
    /// template. Completed and running nodes keep their state. Nodes that
    /// disappeared, and the not-yet-started old-shape descendants of removed
    /// nodes, are cancelled and traced as mutation drops.
    fn reshape_instances(&mut self, template: &DagId) {
        let new_template = self.templates[template].clone();
        let ids: Vec<String> = self
            .instances
            .values()
            .filter(|i| &i.template == template && i.active())
            .map(|i| i.id.clone())
            .collect();
        for id in ids {
            let mut inst = self.instances.remove(&id).expect("instance exists");
            let old_shape = inst.shape.clone();
            let mut new_shape = if self.variant.refines() {
                refinement::refine_all(&new_template).expect("validated stages refine")
            } else {
                new_template.clone()
            };
            new_shape.arrival = inst.arrival;

            let mut cancel: BTreeSet<NodeId> = BTreeSet::new();
            for old_node in old_shape.nodes.keys() {
                if !new_shape.nodes.contains_key(old_node) {
                    for d in old_shape.descendants(old_node) {
                        cancel.insert(d);
                    }
                    cancel.insert(old_node.clone());
                }
            }
            cancel.retain(|n| !inst.done.contains(n) && !inst.running.contains_key(n));

            for n in &cancel {
                if new_shape.nodes.contains_key(n) || old_shape.nodes.contains_key(n) {
                    self.emit(
                        TraceKind::Drop,
                        inst.id.clone(),
                        n.as_str().to_string(),
                        "reason=mutation".to_string(),
                    );
                }
                if inst.queued.remove(n) {
                    if let Some(d) = inst.node_deadline.get(n) {
                        self.queue.remove(*d, &format!("{}/{}", inst.id, n));
                    }
                }
            }
            inst.cancelled.extend(cancel);

            for n in new_shape.nodes.keys() {
                inst.fsm
                    .entry(n.clone())
                    .or_insert_with(|| HandlerState::ready(n.as_str(), self.now));
            }
            inst.heights = graph::heights(&new_shape);
            inst.level_count = inst.heights.values().max().map_or(0, |m| m + 1);
            inst.shape = new_shape;

            // Queued-but-not-running units with stale deadlines are rebuilt
            // by the assignment below; drop their queue entries first.
            let requeue: Vec<NodeId> = inst
                .queued
                .iter()
                .filter(|n| !inst.running.contains_key(*n))
                .cloned()
                .collect();
            for n in &requeue {
                if let Some(d) = inst.node_deadline.get(n) {
                    self.queue.remove(*d, &format!("{}/{}", inst.id, n));
                }
                inst.queued.remove(n);
            }

            inst.levels_marked = (0..inst.level_count)
                .filter(|h| inst.level_complete(*h))
                .collect();

            self.reassign_after_change(&mut inst);

            if !inst.pending_work() {
                inst.finished_at = Some(self.now);
            }
            self.instances.insert(inst.id.clone(), inst);
        }
    }

    /// Fresh deadlines for an instance whose shape just changed.
    fn reassign_after_change(&mut self, inst: &mut Instance) {
        if !self.variant.proportional() {
            self.assign_end_to_end(inst);
            return;
        }
        if self.variant.reassigns() {
            self.residual_reassign(inst);
        } else {
            self.assign_initial(inst);
        }
        inst.reassign_dirty = false;
    }

    fn residual_reassign(&mut self, inst: &mut Instance) {
        let retired: BTreeSet<NodeId> = inst
            .done
            .iter()
            .chain(inst.cancelled.iter())
            .filter(|n| inst.shape.nodes.contains_key(*n))
            .cloned()
            .collect();
        let elapsed = self.now - inst.arrival;
        let in_flight: BTreeMap<NodeId, Duration> = inst
            .running
            .iter()
            .map(|(n, started)| (n.clone(), self.now - *started))
            .collect();
        match deadlines::reassign_residual(
            &inst.shape,
            &retired,
            elapsed,
            inst.shape.deadline,
            &self.estimator,
            &in_flight,
        ) {
            Ok(mut assignment) => {
                let spans = deadlines::apply_atomic_deadlines(
                    &mut assignment,
                    &residual_shape(&inst.shape, &retired),
                    inst.arrival,
                    &self.workload.contention,
                    &self.platform.name,
                );
                for (n, d) in assignment.node_subdeadlines {
                    inst.node_deadline.insert(n, d);
                }
                for (n, s) in spans {
                    inst.span.insert(n, s);
                }
            }
            Err(DeadlineError::BudgetExhausted) | Err(DeadlineError::ZeroTotalCost) => {
                // The instance is already past (or has no measurable residual
                // work); keep the previous deadlines and let it run out.
            }
            Err(e) => panic!("residual reassignment failed: {e}"),
        }
    }

    fn on_slot_finish(&mut self, slot: usize) {
        let running = self.slots[slot].busy.take().expect("slot was busy");
        let duration = self.now - running.started;
        for (inst_id, node) in &running.unit.members {
            let io = {
                let inst = &self.instances[inst_id];
                self.cfg.io_inject.get(&(inst.template.clone(), node.clone())).copied()
            };
            match io {
                Some(wait) if wait.is_positive() => {
                    let inst = self.instances.get_mut(inst_id).expect("instance exists");
                    let h = inst.fsm.get_mut(node).expect("handler exists");
                    *h = fsm_step(h, HandlerEvent::IoStart, self.now).expect("running handler can io-wait");
                    self.push_event(
                        self.now + wait,
                        EvPriority::IoDone,
                        EvPayload::IoDone {
                            instance: inst_id.clone(),
                            node: node.clone(),
                        },
                    );
                }
                _ => self.complete_node(inst_id, node, duration),
            }
        }
    }

    fn on_io_done(&mut self, inst_id: &str, node: &NodeId) {
        {
            let inst = self.instances.get_mut(inst_id).expect("instance exists");
            let h = inst.fsm.get_mut(node).expect("handler exists");
            *h = fsm_step(h, HandlerEvent::IoEnd, self.now).expect("io-wait handler resumes");
        }
        let started = self.instances[inst_id].running[node];
        self.complete_node(inst_id, node, self.now - started);
    }

    fn on_oom_reclaim(&mut self, inst_id: &str, node: &NodeId) {
        let inst = self.instances.get_mut(inst_id).expect("instance exists");
        let h = inst.fsm.get_mut(node).expect("handler exists");
        *h = fsm_step(h, HandlerEvent::MemReclaim, self.now).expect("oom handler reclaims");
        inst.queued.remove(node);
    }

    fn complete_node(&mut self, inst_id: &str, node: &NodeId, observed: Duration) {
        let template = self.instances[inst_id].template.clone();
        if observed.is_positive() {
            self.estimator
                .observe(&template, node, observed)
                .expect("positive observation");
        }
        {
            let inst = self.instances.get_mut(inst_id).expect("instance exists");
            let h = inst.fsm.get_mut(node).expect("handler exists");
            *h = fsm_step(h, HandlerEvent::Finish, self.now).expect("running handler finishes");
            inst.running.remove(node);
            inst.queued.remove(node);
            inst.done.insert(node.clone());
            inst.reassign_dirty = true;
            if !inst.dropped && inst.finished_at.is_none() && !inst.pending_work() {
                inst.finished_at = Some(self.now);
            }
        }
        self.emit(TraceKind::Finish, inst_id.to_string(), node.as_str().to_string(), String::new());
        if self.variant.on_demand() {
            self.emit(
                TraceKind::Barrier,
                inst_id.to_string(),
                node.as_str().to_string(),
                format!("kind={}", BarrierKind::FsmDone { node: node.as_str().to_string() }.label()),
            );
        }
    }

    // ----- the dispatch cycle -----

    fn cycle(&mut self, is_tick: bool) {
        let barriers_emitted = self.sync_pass(is_tick);
        if self.variant.reassigns() {
            self.reassign_pass();
        }
        self.readiness_pass();
        if is_tick && self.variant.bursts() && self.cfg.burst_enabled {
            self.burst_pass();
        }
        self.dispatch_pass(barriers_emitted);
    }

    /// Marks newly completed levels and encoder broadcasts. The on-demand
    /// variant emits the corresponding barrier events as the conditions
    /// become true; the baselines emit one periodic barrier per scan and
    /// record completions silently.
    fn sync_pass(&mut self, is_tick: bool) -> usize {
        let mut emitted = 0;
        let on_demand = self.variant.on_demand();
        let ids: Vec<String> = self
            .instances
            .values()
            .filter(|i| i.active())
            .map(|i| i.id.clone())
            .collect();
        for id in ids {
            let mut events = Vec::new();
            {
                let inst = self.instances.get_mut(&id).expect("instance exists");
                for h in 0..inst.level_count {
                    if !inst.levels_marked.contains(&h) && inst.level_complete(h) {
                        inst.levels_marked.insert(h);
                        if on_demand {
                            events.push((
                                "-".to_string(),
                                format!("kind=level_complete;height={h}"),
                            ));
                        }
                    }
                }
                if on_demand {
                    let encoders: Vec<NodeId> = inst
                        .shape
                        .nodes
                        .iter()
                        .filter(|(n, a)| {
                            a.role == NodeRole::SharedEncoder
                                && inst.done.contains(*n)
                                && !inst.broadcasts_marked.contains(*n)
                        })
                        .map(|(n, _)| n.clone())
                        .collect();
                    for enc in encoders {
                        let has_pending_decoder = inst
                            .shape
                            .successors(&enc)
                            .any(|d| !inst.done.contains(d) && !inst.cancelled.contains(d));
                        if has_pending_decoder {
                            inst.broadcasts_marked.insert(enc.clone());
                            events.push((
                                enc.as_str().to_string(),
                                "kind=encoder_broadcast".to_string(),
                            ));
                        }
                    }
                }
            }
            emitted += events.len();
            for (node, extra) in events {
                self.emit(TraceKind::Barrier, id.clone(), node, extra);
            }
        }
        if !on_demand && is_tick {
            let any_active = self.instances.values().any(|i| i.active() && i.pending_work())
                || self.slots.iter().any(|s| s.busy.is_some());
            if any_active {
                self.emit(TraceKind::Barrier, "-", "-", "kind=periodic".to_string());
                emitted += 1;
            }
        }
        // FsmDone barriers are emitted at completion; they count toward the
        // running total through the trace itself.
        emitted
    }

    fn reassign_pass(&mut self) {
        let ids: Vec<String> = self
            .instances
            .values()
            .filter(|i| i.active() && i.reassign_dirty)
            .map(|i| i.id.clone())
            .collect();
        for id in ids {
            let mut inst = self.instances.remove(&id).expect("instance exists");
            // Units already in the queue are re-keyed under the new deadlines.
            let requeue: Vec<NodeId> = inst
                .queued
                .iter()
                .filter(|n| !inst.running.contains_key(*n))
                .cloned()
                .collect();
            for n in &requeue {
                if let Some(d) = inst.node_deadline.get(n) {
                    self.queue.remove(*d, &format!("{}/{}", inst.id, n));
                }
                inst.queued.remove(n);
            }
            self.residual_reassign(&mut inst);
            inst.reassign_dirty = false;
            self.instances.insert(id, inst);
        }
    }

    fn readiness_pass(&mut self) {
        let mut pushes: Vec<DispatchUnit> = Vec::new();
        for inst in self.instances.values_mut().filter(|i| i.active()) {
            let candidates: Vec<NodeId> = inst
                .shape
                .nodes
                .keys()
                .filter(|n| {
                    !inst.done.contains(*n)
                        && !inst.cancelled.contains(*n)
                        && !inst.queued.contains(*n)
                        && inst.fsm[*n].state == HandlerPhase::Ready
                        && inst.unlocked(n)
                })
                .cloned()
                .collect();
            for n in candidates {
                let attrs = &inst.shape.nodes[&n];
                let deadline = inst.node_deadline.get(&n).copied().unwrap_or(inst.abs_deadline);
                inst.queued.insert(n.clone());
                pushes.push(DispatchUnit {
                    id: format!("{}/{}", inst.id, n),
                    members: vec![(inst.id.clone(), n.clone())],
                    deadline,
                    height: inst.heights[&n],
                    encoder_run: attrs.role == NodeRole::SharedEncoder || attrs.is_refinable(),
                });
            }
        }
        for u in pushes {
            self.queue.push(u);
        }
    }

    fn burst_pass(&mut self) {
        let sample = self.sample_health();
        self.health.push(sample);
        let w = self.cfg.burst.w;
        if self.health.len() > w {
            let excess = self.health.len() - w;
            self.health.drain(..excess);
        }
        if !overload::detect_overload(&self.health, &self.cfg.burst) {
            return;
        }
        let health = self.health.last().expect("just pushed").clone();
        let scores = self.unit_scores(&health);
        let hi: Vec<String> = {
            let mut set: BTreeSet<String> = BTreeSet::new();
            for u in self.queue.iter() {
                if scores.get(&u.id).copied().unwrap_or(0.0) >= 0.8 {
                    for (inst, _) in &u.members {
                        set.insert(inst.clone());
                    }
                }
            }
            set.into_iter().collect()
        };
        let smax = scores.values().copied().fold(0.0f64, f64::max);
        self.emit(
            TraceKind::Overload,
            "-",
            "-",
            format!(
                "u={:.4};q={};smax={smax:.3};hi={}",
                health.u_gpu,
                health.q_len,
                hi.join(",")
            ),
        );
        let tick = self.cfg.burst.tick;
        let capacity: f64 = self.slots.iter().map(|s| s.speed).sum::<f64>() * tick.as_ns() as f64;
        let busy: f64 = self
            .slots
            .iter()
            .filter_map(|s| s.busy.as_ref().map(|r| {
                let remaining = (r.started + r.exec) - self.now;
                remaining.clamp_min_zero().min(tick).as_ns() as f64 * s.speed
            }))
            .sum();
        let n_slots = self.slots.len();
        let estimates: BTreeMap<String, Duration> = self
            .queue
            .iter()
            .map(|u| (u.id.clone(), self.unit_estimate(u)))
            .collect();
        let projector = move |q: &ReadyQueue| -> f64 {
            let admitted: f64 = q
                .iter()
                .take(n_slots)
                .map(|u| {
                    estimates
                        .get(&u.id)
                        .copied()
                        .unwrap_or(Duration::ZERO)
                        .min(tick)
                        .as_ns() as f64
                })
                .sum();
            (busy + admitted) / capacity
        };
        let outcome =
            overload::proactive_drop(&self.queue, &scores, &self.cfg.burst, &health, &projector);
        if outcome.dropped.is_empty() {
            return;
        }
        let mut victims: BTreeSet<String> = BTreeSet::new();
        for u in outcome.dropped.iter().chain(outcome.cascaded.iter()) {
            for (inst, _) in &u.members {
                victims.insert(inst.clone());
            }
        }
        self.queue = outcome.queue;
        for inst_id in victims {
            let mut drops = Vec::new();
            {
                let inst = self.instances.get_mut(&inst_id).expect("instance exists");
                inst.dropped = true;
                for n in inst.shape.nodes.keys() {
                    if !inst.done.contains(n)
                        && !inst.cancelled.contains(n)
                        && !inst.running.contains_key(n)
                    {
                        drops.push(n.clone());
                    }
                }
                for n in &drops {
                    inst.cancelled.insert(n.clone());
                    inst.queued.remove(n);
                }
            }
            for n in drops {
                self.emit(
                    TraceKind::Drop,
                    inst_id.clone(),
                    n.as_str().to_string(),
                    "reason=burst".to_string(),
                );
            }
        }
    }

    fn sample_health(&self) -> HealthSample {
        let total: f64 = self.slots.iter().map(|s| s.speed).sum();
        let busy: f64 = self
            .slots
            .iter()
            .filter(|s| s.busy.is_some())
            .map(|s| s.speed)
            .sum();
        let slack: BTreeMap<String, Duration> = self
            .queue
            .iter()
            .map(|u| (u.id.clone(), u.deadline - self.now))
            .collect();
        HealthSample {
            tick: (self.now.as_ns() / self.platform.tick.as_ns().max(1)) as u64,
            u_gpu: if total > 0.0 { busy / total } else { 0.0 },
            q_len: self.queue.len(),
            slack,
        }
    }

    fn unit_scores(&self, health: &HealthSample) -> BTreeMap<String, f64> {
        let mut scores = BTreeMap::new();
        for u in self.queue.iter() {
            let (inst_id, node) = &u.members[0];
            let inst = &self.instances[inst_id];
            let span = inst
                .span
                .get(node)
                .copied()
                .unwrap_or(inst.shape.deadline)
                .max(Duration::from_ns(1));
            let slack = health.slack.get(&u.id).copied().unwrap_or(Duration::ZERO);
            let score = overload::criticality_score(slack, span).unwrap_or(1.0);
            scores.insert(u.id.clone(), score);
        }
        scores
    }

    fn unit_estimate(&self, unit: &DispatchUnit) -> Duration {
        unit.members
            .iter()
            .map(|(inst_id, node)| {
                let inst = &self.instances[inst_id];
                let wcet = inst.shape.nodes[node].wcet;
                self.estimator.estimate(&inst.template, node, wcet)
            })
            .max()
            .unwrap_or(Duration::ZERO)
    }

    fn dispatch_pass(&mut self, barriers_emitted: usize) {
        loop {
            // Full-speed slots first, so work lands on them before the
            // fractional slot.
            let mut free: Vec<usize> = self
                .slots
                .iter()
                .enumerate()
                .filter(|(_, s)| s.busy.is_none())
                .map(|(i, _)| i)
                .collect();
            free.sort_by(|a, b| {
                self.slots[*b]
                    .speed
                    .total_cmp(&self.slots[*a].speed)
                    .then(a.cmp(b))
            });
            if free.is_empty() || self.queue.is_empty() {
                break;
            }
            let candidates = self.build_candidates();
            let mut progressed = false;
            for (unit, slot) in candidates.into_iter().zip(free.into_iter()) {
                self.dispatch_unit(unit, slot, barriers_emitted);
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        // Work conservation: a slot stays idle only when nothing is ready.
        debug_assert!(
            self.queue.is_empty() || self.slots.iter().all(|s| s.busy.is_some())
        );
    }

    /// The EDF-ordered dispatch candidates for this cycle: ready singletons,
    /// with near-synchronous shared-encoder units coalesced per height when
    /// the variant merges. Merged groups that do not dispatch this cycle
    /// dissolve back into their queued singletons.
    fn build_candidates(&mut self) -> Vec<DispatchUnit> {
        let singles: Vec<DispatchUnit> = self.queue.iter().cloned().collect();
        if !(self.variant.merges() && self.cfg.merge_enabled) {
            let mut out = singles;
            out.sort_by(|a, b| (a.deadline, &a.id).cmp(&(b.deadline, &b.id)));
            return out;
        }
        let mut merged: Vec<DispatchUnit> = Vec::new();
        let by_unit: BTreeMap<String, DispatchUnit> =
            singles.iter().map(|u| (u.id.clone(), u.clone())).collect();
        for (_height, group) in crate::runtime::batch_same_height(&singles) {
            let mut subtasks = Vec::new();
            let mut passthrough = Vec::new();
            for u in group {
                let (inst_id, node) = &u.members[0];
                let inst = &self.instances[inst_id];
                let attrs = &inst.shape.nodes[node];
                match (&attrs.role, &attrs.encoder_ref) {
                    (NodeRole::SharedEncoder, Some(weights)) => subtasks.push(SubTask {
                        id: u.id.clone(),
                        encoder: Some(weights.clone()),
                        height: u.height,
                        release: inst.arrival + (attrs.next_release - TimePoint::ZERO),
                        deadline: u.deadline,
                    }),
                    _ => passthrough.push(u),
                }
            }
            merged.extend(passthrough);
            for mu in refinement::dynamic_merge(&subtasks, self.cfg.gamma) {
                let members: Vec<(String, NodeId)> = mu
                    .members
                    .iter()
                    .flat_map(|id| by_unit[id].members.clone())
                    .collect();
                let height = by_unit[&mu.members[0]].height;
                merged.push(DispatchUnit {
                    id: mu.members.join("+"),
                    members,
                    deadline: mu.unit_deadline,
                    height,
                    encoder_run: true,
                });
            }
        }
        merged.sort_by(|a, b| (a.deadline, &a.id).cmp(&(b.deadline, &b.id)));
        merged
    }

    fn dispatch_unit(&mut self, unit: DispatchUnit, slot: usize, barriers_emitted: usize) {
        // Consume the member singletons from the queue.
        for (inst_id, node) in &unit.members {
            let inst = &self.instances[inst_id];
            let d = inst.node_deadline.get(node).copied().unwrap_or(inst.abs_deadline);
            self.queue.remove(d, &format!("{inst_id}/{node}"));
        }

        // One-shot OOM injection applies to unmerged units only.
        if unit.members.len() == 1 {
            let (inst_id, node) = unit.members[0].clone();
            let key = {
                let inst = &self.instances[&inst_id];
                (inst.template.clone(), node.clone())
            };
            let index: u64 = inst_id
                .rsplit('@')
                .next()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let fires = self
                .cfg
                .oom_inject
                .get(&key)
                .is_some_and(|oom| oom.instance == index)
                && self.oom_armed.remove(&key);
            if fires {
                let reclaim = self.cfg.oom_inject[&key].reclaim;
                self.emit(
                    TraceKind::Dispatch,
                    inst_id.clone(),
                    node.as_str().to_string(),
                    format!("unit={};slot={slot};merged=1;enc=0;oom=1", unit.id),
                );
                let inst = self.instances.get_mut(&inst_id).expect("instance exists");
                let h = inst.fsm.get_mut(&node).expect("handler exists");
                *h = fsm_step(h, HandlerEvent::Dispatch, self.now).expect("ready handler dispatches");
                *h = fsm_step(h, HandlerEvent::MemFail, self.now).expect("running handler can fail");
                self.push_event(
                    self.now + reclaim,
                    EvPriority::OomReclaim,
                    EvPayload::OomReclaim {
                        instance: inst_id,
                        node,
                    },
                );
                return;
            }
        }

        // Sample one physical run; merged members share it.
        let slowdown = active_slowdown(&self.workload.interference, self.now);
        let rep_wcet = unit
            .members
            .iter()
            .map(|(inst_id, node)| self.instances[inst_id].shape.nodes[node].wcet)
            .max()
            .expect("unit has members");
        let mut exec = sample_exec(rep_wcet, &self.workload.exec, slowdown, &mut self.rng);
        if self.cfg.barrier_overhead.is_positive() && barriers_emitted > 0 {
            exec += self.cfg.barrier_overhead * barriers_emitted as i64;
        }
        let speed = self.slots[slot].speed;
        let wall = Duration::from_ns(((exec.as_ns() as f64 / speed).ceil() as i64).max(1));

        let merged = unit.members.len();
        let mut first = true;
        for (inst_id, node) in &unit.members {
            let enc = if unit.encoder_run && first { 1 } else { 0 };
            first = false;
            self.emit(
                TraceKind::Dispatch,
                inst_id.clone(),
                node.as_str().to_string(),
                format!("unit={};slot={slot};merged={merged};enc={enc}", unit.id),
            );
            let inst = self.instances.get_mut(inst_id).expect("instance exists");
            let h = inst.fsm.get_mut(node).expect("handler exists");
            *h = fsm_step(h, HandlerEvent::Dispatch, self.now).expect("ready handler dispatches");
            inst.running.insert(node.clone(), self.now);
            inst.queued.insert(node.clone());
        }
        self.slots[slot].busy = Some(RunningUnit {
            unit,
            started: self.now,
            exec: wall,
        });
        self.push_event(
            self.now + wall,
            EvPriority::SlotFinish,
            EvPayload::SlotFinish { slot },
        );
    }
}

fn residual_shape(shape: &DagSpec, retired: &BTreeSet<NodeId>) -> DagSpec {
    DagSpec {
        id: shape.id.clone(),
        nodes: shape
            .nodes
            .iter()
            .filter(|(n, _)| !retired.contains(*n))
            .map(|(n, a)| (n.clone(), a.clone()))
            .collect(),
        edges: shape
            .edges
            .iter()
            .filter(|(u, v)| !retired.contains(u) && !retired.contains(v))
            .cloned()
            .collect(),
        deadline: shape.deadline,
        arrival: shape.arrival,
    }
}

fn mutation_op_label(m: &Mutation) -> &'static str {
    match &m.op {
        crate::graph::MutationOp::AddNode { .. } => "add_node",
        crate::graph::MutationOp::RemoveNode(_) => "remove_node",
        crate::graph::MutationOp::AddEdge(_, _) => "add_edge",
        crate::graph::MutationOp::RemoveEdge(_, _) => "remove_edge",
    }
}

fn mutation_node_label(m: &Mutation) -> String {
    match &m.op {
        crate::graph::MutationOp::AddNode { id, .. } => id.as_str().to_string(),
        crate::graph::MutationOp::RemoveNode(id) => id.as_str().to_string(),
        crate::graph::MutationOp::AddEdge(u, v) | crate::graph::MutationOp::RemoveEdge(u, v) => {
            format!("{u}>{v}")
        }
    }
}

fn compact(s: &str) -> String {
    s.replace(['\t', '\n', ';'], " ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{MutationOp, NodeAttrs};

    fn chain_template() -> DagTemplate {
        let spec = DagSpec::new("chain", Duration::from_secs(120))
            .with_node("A", NodeAttrs::basic(Duration::from_secs(20)))
            .with_node("B", NodeAttrs::basic(Duration::from_secs(20)))
            .with_node("C", NodeAttrs::basic(Duration::from_secs(40)))
            .with_edge("A", "B")
            .with_edge("B", "C");
        DagTemplate {
            spec,
            release: ReleasePattern::Sporadic {
                arrivals: vec![TimePoint::ZERO],
            },
        }
    }

    fn platform(rho: f64) -> PlatformModel {
        PlatformModel {
            name: "test".to_string(),
            rho,
            tick: Duration::from_millis(5),
            mem_capacity: 8192.0,
        }
    }

    fn finish_time(trace: &SimTrace, instance: &str) -> TimePoint {
        trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Finish && e.dag == instance)
            .map(|e| e.time)
            .max()
            .expect("instance finished")
    }

    #[test]
    fn deterministic_chain_finishes_at_the_cost_sum() {
        let workload = Workload {
            dags: vec![chain_template()],
            ..Workload::default()
        };
        let cfg = SchedulerConfig::default();
        for variant in SchedulerVariant::ALL {
            let trace = run(&workload, &platform(1.0), variant, &cfg, 1).unwrap();
            assert_eq!(
                finish_time(&trace, "chain@0"),
                TimePoint::ZERO + Duration::from_secs(80),
                "variant {variant}"
            );
        }
    }

    #[test]
    fn empty_workload_gives_an_empty_trace() {
        let trace = run(
            &Workload::default(),
            &platform(2.0),
            SchedulerVariant::Red,
            &SchedulerConfig::default(),
            1,
        )
        .unwrap();
        assert!(trace.events.is_empty());
    }

    #[test]
    fn independent_nodes_run_in_parallel_slots() {
        let spec = DagSpec::new("pair", Duration::from_secs(1))
            .with_node("x", NodeAttrs::basic(Duration::from_millis(10)))
            .with_node("y", NodeAttrs::basic(Duration::from_millis(10)));
        let workload = Workload {
            dags: vec![DagTemplate {
                spec,
                release: ReleasePattern::Sporadic {
                    arrivals: vec![TimePoint::ZERO],
                },
            }],
            ..Workload::default()
        };
        let trace = run(
            &workload,
            &platform(2.0),
            SchedulerVariant::Edf,
            &SchedulerConfig::default(),
            1,
        )
        .unwrap();
        let finishes: Vec<TimePoint> = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Finish)
            .map(|e| e.time)
            .collect();
        assert_eq!(
            finishes,
            vec![
                TimePoint::ZERO + Duration::from_millis(10),
                TimePoint::ZERO + Duration::from_millis(10)
            ]
        );
    }

    #[test]
    fn deterministic_sampling_honors_slowdown() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = ExecModel::default();
        assert_eq!(
            sample_exec(Duration::from_millis(100), &model, 1.0, &mut rng),
            Duration::from_millis(100)
        );
        assert_eq!(
            sample_exec(Duration::from_millis(100), &model, 1.5, &mut rng),
            Duration::from_millis(150)
        );
    }

    #[test]
    fn uniform_sampling_stays_in_bounds_with_expected_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = ExecModel {
            distribution: ExecDistribution::Uniform,
            alpha: 0.7,
        };
        let wcet = Duration::from_millis(100);
        let n = 10_000;
        let mut sum = 0i64;
        for _ in 0..n {
            let s = sample_exec(wcet, &model, 1.0, &mut rng);
            assert!(s >= Duration::from_millis(70) && s <= wcet);
            sum += s.as_ns();
        }
        let mean = sum as f64 / n as f64;
        let expected = 0.85 * wcet.as_ns() as f64;
        assert!((mean - expected).abs() / expected < 0.02);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let mut workload = Workload {
            dags: vec![chain_template()],
            exec: ExecModel {
                distribution: ExecDistribution::Uniform,
                alpha: 0.7,
            },
            ..Workload::default()
        };
        workload.interference.push(InterferenceWindow {
            start: TimePoint::ZERO + Duration::from_secs(10),
            end: TimePoint::ZERO + Duration::from_secs(30),
            slowdown: 1.5,
        });
        for variant in SchedulerVariant::ALL {
            let a = run(&workload, &platform(2.0), variant, &SchedulerConfig::default(), 7).unwrap();
            let b = run(&workload, &platform(2.0), variant, &SchedulerConfig::default(), 7).unwrap();
            assert_eq!(a.render(), b.render(), "variant {variant}");
        }
    }

    #[test]
    fn mutation_events_are_traced_and_applied() {
        let spec = DagSpec::new("nav", Duration::from_secs(2))
            .with_node("A", NodeAttrs::basic(Duration::from_millis(50)))
            .with_node("B", NodeAttrs::basic(Duration::from_millis(30)))
            .with_edge("A", "B");
        let period = Duration::from_secs(2);
        let workload = Workload {
            dags: vec![DagTemplate {
                spec,
                release: ReleasePattern::Periodic {
                    offset: TimePoint::ZERO,
                    period,
                    count: 9,
                },
            }],
            mutations: vec![
                Mutation {
                    at: TimePoint::ZERO + period * 3,
                    target_dag: DagId::new("nav"),
                    op: MutationOp::AddNode {
                        id: NodeId::new("C"),
                        attrs: NodeAttrs::basic(Duration::from_millis(50)),
                        incoming: vec![NodeId::new("A")],
                        outgoing: vec![NodeId::new("B")],
                    },
                },
                Mutation {
                    at: TimePoint::ZERO + period * 6,
                    target_dag: DagId::new("nav"),
                    op: MutationOp::RemoveNode(NodeId::new("C")),
                },
            ],
            ..Workload::default()
        };
        let trace = run(
            &workload,
            &platform(2.0),
            SchedulerVariant::Red,
            &SchedulerConfig::default(),
            3,
        )
        .unwrap();
        let mutations: Vec<&TraceEvent> = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Mutation)
            .collect();
        assert_eq!(mutations.len(), 2);
        assert!(mutations.iter().all(|e| e.extra.contains("applied=true")));
        // Instances 3..=5 execute C; the rest do not.
        let c_dispatches: Vec<&str> = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Dispatch && e.node == "C")
            .map(|e| e.dag.as_str())
            .collect();
        assert_eq!(c_dispatches, vec!["nav@3", "nav@4", "nav@5"]);
    }

    #[test]
    fn cyclic_mutation_is_skipped_and_annotated() {
        let workload = Workload {
            dags: vec![chain_template()],
            mutations: vec![Mutation {
                at: TimePoint::ZERO + Duration::from_secs(1),
                target_dag: DagId::new("chain"),
                op: MutationOp::AddEdge(NodeId::new("C"), NodeId::new("A")),
            }],
            ..Workload::default()
        };
        let trace = run(
            &workload,
            &platform(1.0),
            SchedulerVariant::Red,
            &SchedulerConfig::default(),
            1,
        )
        .unwrap();
        let m = trace
            .events
            .iter()
            .find(|e| e.kind == TraceKind::Mutation)
            .expect("mutation traced");
        assert!(m.extra.contains("applied=false"));
        assert_eq!(finish_time(&trace, "chain@0"), TimePoint::ZERO + Duration::from_secs(80));
    }

    #[test]
    fn released_nodes_finish_or_drop_exactly_once() {
        let spec = DagSpec::new("w", Duration::from_millis(400))
            .with_node("a", NodeAttrs::basic(Duration::from_millis(40)))
            .with_node("b", NodeAttrs::basic(Duration::from_millis(40)))
            .with_node("c", NodeAttrs::basic(Duration::from_millis(40)))
            .with_edge("a", "b")
            .with_edge("a", "c");
        let workload = Workload {
            dags: vec![DagTemplate {
                spec,
                release: ReleasePattern::Periodic {
                    offset: TimePoint::ZERO,
                    period: Duration::from_millis(100),
                    count: 20,
                },
            }],
            exec: ExecModel {
                distribution: ExecDistribution::Uniform,
                alpha: 0.7,
            },
            ..Workload::default()
        };
        for variant in SchedulerVariant::ALL {
            let trace = run(&workload, &platform(2.0), variant, &SchedulerConfig::default(), 11).unwrap();
            let mut terminal: BTreeMap<(String, String), u64> = BTreeMap::new();
            for e in &trace.events {
                if matches!(e.kind, TraceKind::Finish | TraceKind::Drop) {
                    *terminal.entry((e.dag.clone(), e.node.clone())).or_insert(0) += 1;
                }
            }
            assert_eq!(terminal.len(), 20 * 3, "variant {variant}");
            assert!(terminal.values().all(|&c| c == 1), "variant {variant}");
        }
    }

    #[test]
    fn io_injection_exercises_iowait_and_delays_successors() {
        let spec = DagSpec::new("io", Duration::from_secs(1))
            .with_node("a", NodeAttrs::basic(Duration::from_millis(10)))
            .with_node("b", NodeAttrs::basic(Duration::from_millis(10)))
            .with_edge("a", "b");
        let workload = Workload {
            dags: vec![DagTemplate {
                spec,
                release: ReleasePattern::Sporadic {
                    arrivals: vec![TimePoint::ZERO],
                },
            }],
            ..Workload::default()
        };
        let mut cfg = SchedulerConfig::default();
        cfg.io_inject
            .insert((DagId::new("io"), NodeId::new("a")), Duration::from_millis(7));
        let trace = run(&workload, &platform(1.0), SchedulerVariant::Red, &cfg, 1).unwrap();
        // a runs 10ms then drains 7ms; b starts only after the drain.
        let b_dispatch = trace
            .events
            .iter()
            .find(|e| e.kind == TraceKind::Dispatch && e.node == "b")
            .unwrap()
            .time;
        assert_eq!(b_dispatch, TimePoint::ZERO + Duration::from_millis(17));
        assert_eq!(finish_time(&trace, "io@0"), TimePoint::ZERO + Duration::from_millis(27));
    }

    #[test]
    fn oom_injection_requeues_and_retries() {
        let spec = DagSpec::new("m", Duration::from_secs(1))
            .with_node("a", NodeAttrs::basic(Duration::from_millis(10)));
        let workload = Workload {
            dags: vec![DagTemplate {
                spec,
                release: ReleasePattern::Sporadic {
                    arrivals: vec![TimePoint::ZERO],
                },
            }],
            ..Workload::default()
        };
        let mut cfg = SchedulerConfig::default();
        cfg.oom_inject.insert(
            (DagId::new("m"), NodeId::new("a")),
            OomInject {
                instance: 0,
                reclaim: Duration::from_millis(5),
            },
        );
        let trace = run(&workload, &platform(1.0), SchedulerVariant::Red, &cfg, 1).unwrap();
        let dispatches = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Dispatch && e.node == "a")
            .count();
        assert_eq!(dispatches, 2);
        assert_eq!(finish_time(&trace, "m@0"), TimePoint::ZERO + Duration::from_millis(15));
    }

    #[test]
    fn on_demand_barriers_fire_only_on_state_changes() {
        let workload = Workload {
            dags: vec![chain_template()],
            ..Workload::default()
        };
        let trace = run(
            &workload,
            &platform(1.0),
            SchedulerVariant::Red,
            &SchedulerConfig::default(),
            1,
        )
        .unwrap();
        let barrier_times: Vec<TimePoint> = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Barrier)
            .map(|e| e.time)
            .collect();
        // Barriers only at the three completion instants: 20s, 40s, 80s.
        let completion_instants: BTreeSet<TimePoint> = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Finish)
            .map(|e| e.time)
            .collect();
        assert!(!barrier_times.is_empty());
        for t in barrier_times {
            assert!(completion_instants.contains(&t));
        }
        // No periodic barriers under the on-demand variant.
        assert!(trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Barrier)
            .all(|e| !e.extra.contains("periodic")));
    }

    #[test]
    fn baseline_emits_periodic_barriers() {
        let workload = Workload {
            dags: vec![chain_template()],
            ..Workload::default()
        };
        let trace = run(
            &workload,
            &platform(1.0),
            SchedulerVariant::Edf,
            &SchedulerConfig::default(),
            1,
        )
        .unwrap();
        let periodic = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceKind::Barrier && e.extra.contains("periodic"))
            .count();
        // 80 seconds of activity at a 5ms tick.
        assert!(periodic >= 16_000, "got {periodic}");
    }
}

//! Deadline-aware real-time DAG scheduling library with a deterministic
//! discrete-event simulator.
//!
//! The library models released DAG workloads with end-to-end deadlines,
//! assigns proportional per-level intermediate deadlines, refines
//! shared-encoder stages into encoder/decoder sub-graphs, dispatches with
//! EDF over a bounded-parallelism platform, and sheds low-criticality work
//! under sustained overload. Four scheduler variants (`edf`, `red-fg`,
//! `red-ida`, `red`) run on identical seeded workloads so their policies can
//! be compared trace-for-trace.

pub mod deadlines;
pub mod graph;
pub mod metrics;
pub mod overload;
pub mod refinement;
pub mod runtime;
pub mod simulator;
pub mod synth;
pub mod time;

pub use graph::{DagId, DagSpec, Mutation, MutationOp, NodeAttrs, NodeId, NodeKind, NodeRole};
pub use simulator::{
    run, PlatformModel, SchedulerConfig, SchedulerVariant, SimTrace, Workload,
};
pub use time::{Duration, TimePoint};

//! Workload files, built-in scenario generators, and the experiment runner
//! for the `red-core` scheduling library.

pub mod runner;
pub mod scenario;
pub mod workload;

pub use scenario::{generate_scenario, GenOptions, Scenario, Tightness};
pub use workload::{parse_workload, WorkloadError, WorkloadFile};

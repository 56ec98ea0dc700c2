//! Built-in scenario generators: navigation-style pipelines with synthetic
//! costs proportional to the per-model compute ratios, scaled by a
//! milliseconds-per-unit factor. Deadlines are derived from a deterministic
//! makespan probe of each pipeline on the target platform: tight deadlines
//! leave 5% headroom, loose ones 50%.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use red_core::deadlines;
use red_core::graph::NodeId;
use red_core::simulator::{
    self, PlatformModel, SchedulerConfig, SchedulerVariant, TraceKind, Workload,
};

use crate::workload::{
    ContentionSection, DagSection, ExecSection, InterferenceSection, MutationSection, NodeSection,
    PlatformSection, SchedulerSection, WorkloadError, WorkloadFile, WORKLOAD_VERSION,
};

/// Relative compute cost and memory footprint of each model family.
mod model {
    /// (cost units, memory MB)
    pub const LANE: (f64, f64) = (4.111, 3329.0);
    pub const SEG: (f64, f64) = (2.655, 3359.0);
    pub const CONTROL: (f64, f64) = (0.465, 3680.0);
    pub const DETECT: (f64, f64) = (0.283, 3593.0);
    /// Shared multi-task backbone and its per-task heads. Encoder plus the
    /// segmentation head equals the standalone segmentation cost.
    pub const ENCODER: f64 = 1.8;
    pub const HEAD_SEG: f64 = 0.855;
    pub const HEAD_DETECT: f64 = 0.4;
    pub const HEAD_LANE: f64 = 1.0;
    pub const MIMO_MEM: f64 = 3718.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tightness {
    Tight,
    Loose,
}

impl Tightness {
    pub fn factor(&self) -> f64 {
        match self {
            Tightness::Tight => 1.05,
            Tightness::Loose => 1.50,
        }
    }

    pub fn parse(s: &str) -> Option<Tightness> {
        match s {
            "tight" => Some(Tightness::Tight),
            "loose" => Some(Tightness::Loose),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceSpec {
    pub slowdown: f64,
    /// Fraction of each window period spent slowed down.
    pub duty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    /// Milliseconds per cost unit.
    pub scale: f64,
    pub seed: u64,
    pub deadline: Tightness,
    /// Instance count override.
    pub instances: Option<u64>,
    /// Optional periodic interference injection.
    pub interference: Option<InterferenceSpec>,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            scale: 10.0,
            seed: 0,
            deadline: Tightness::Tight,
            instances: None,
            interference: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Cruise,
    Obstacle,
    Urban,
    Emergency,
    Night,
    DynamicMutation,
    AsyncPair,
    Burst { pct: u8 },
    NonPartitionable { pct: u8 },
}

impl Scenario {
    /// Accepts `name` or `name:pct` for the parameterized scenarios.
    pub fn parse(s: &str) -> Option<Scenario> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let pct = |default: u8| -> Option<u8> {
            match arg {
                Some(a) => a.parse().ok().filter(|p| *p <= 100),
                None => Some(default),
            }
        };
        match name {
            "cruise" => Some(Scenario::Cruise),
            "obstacle" => Some(Scenario::Obstacle),
            "urban" => Some(Scenario::Urban),
            "emergency" => Some(Scenario::Emergency),
            "night" => Some(Scenario::Night),
            "dynamic_mutation" => Some(Scenario::DynamicMutation),
            "async_pair" => Some(Scenario::AsyncPair),
            "burst" => pct(100).map(|pct| Scenario::Burst { pct }),
            "nonpartitionable" => pct(50).map(|pct| Scenario::NonPartitionable { pct }),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 9] = [
        "cruise",
        "obstacle",
        "urban",
        "emergency",
        "night",
        "dynamic_mutation",
        "async_pair",
        "burst",
        "nonpartitionable",
    ];
}

fn node(cost_units: f64, mem: f64, scale: f64) -> NodeSection {
    NodeSection::basic(cost_units * scale, mem)
}

/// A refinable multi-task stage sharing the named encoder weights: the
/// unrefined node costs encoder plus all heads (they run back to back when
/// the stage is not split).
fn stage(weights: &str, heads: &[f64], scale: f64) -> NodeSection {
    let total = model::ENCODER + heads.iter().sum::<f64>();
    let mut n = NodeSection::basic(total * scale, model::MIMO_MEM);
    n.encoder_ref = Some(weights.to_string());
    n.enc_cost_ms = Some(model::ENCODER * scale);
    n.dec_costs_ms = Some(heads.iter().map(|h| h * scale).collect());
    n
}

struct PipelineSpec {
    id: &'static str,
    /// Stage layers: (node name, section).
    layers: Vec<Vec<(&'static str, NodeSection)>>,
}

impl PipelineSpec {
    fn into_section(self, deadline_ms: f64) -> DagSection {
        let mut nodes = BTreeMap::new();
        let mut edges = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            for (name, section) in layer {
                nodes.insert(name.to_string(), section.clone());
            }
            if li > 0 {
                for (prev, _) in &self.layers[li - 1] {
                    for (cur, _) in layer {
                        edges.push((prev.to_string(), cur.to_string()));
                    }
                }
            }
        }
        DagSection {
            id: self.id.to_string(),
            deadline_ms,
            period_ms: None,
            offset_ms: None,
            count: None,
            arrivals_ms: None,
            nodes,
            edges,
        }
    }
}

fn base_file(platform_rho: f64) -> WorkloadFile {
    WorkloadFile {
        version: WORKLOAD_VERSION,
        qoe_lambda: 1.0,
        platform: PlatformSection {
            name: "sim".to_string(),
            rho: platform_rho,
            tick_ms: 5.0,
            mem_capacity_mb: 32_768.0,
        },
        exec: ExecSection {
            distribution: "uniform".to_string(),
            alpha: 0.7,
        },
        scheduler: SchedulerSection::default(),
        dags: Vec::new(),
        mutations: Vec::new(),
        interference: Vec::new(),
        contention: Vec::new(),
        io_inject: Vec::new(),
        oom_inject: Vec::new(),
    }
}

/// Deterministic single-instance completion time of one template running
/// alone on the platform under the full scheduler.
fn probe_makespan(section: &DagSection, platform: &PlatformSection) -> Result<f64, WorkloadError> {
    let mut probe = base_file(platform.rho);
    probe.platform = platform.clone();
    probe.exec = ExecSection {
        distribution: "deterministic".to_string(),
        alpha: 0.7,
    };
    let mut dag = section.clone();
    let provisional: f64 = dag.nodes.values().map(|n| n.wcet_ms).sum::<f64>() * 10.0 + 1000.0;
    dag.deadline_ms = provisional;
    dag.period_ms = None;
    dag.count = None;
    dag.offset_ms = None;
    dag.arrivals_ms = Some(vec![0.0]);
    probe.dags.push(dag);
    let (workload, platform_model, cfg) = probe.lower()?;
    let trace = simulator::run(&workload, &platform_model, SchedulerVariant::Red, &cfg, 0)
        .map_err(|e| WorkloadError::Validation {
            field: format!("dag.{}", section.id),
            reason: format!("makespan probe failed: {e}"),
        })?;
    let finish = trace
        .events
        .iter()
        .filter(|e| e.kind == TraceKind::Finish)
        .map(|e| e.time.as_ns())
        .max()
        .unwrap_or(0);
    Ok(finish as f64 / 1e6)
}

/// Gives the template a probed deadline and an implicit period, returning
/// the period in milliseconds.
fn finalize_periodic(
    dag: &mut DagSection,
    platform: &PlatformSection,
    opts: &GenOptions,
    count: u64,
) -> Result<f64, WorkloadError> {
    let makespan = probe_makespan(dag, platform)?;
    let deadline = round_ms(makespan * opts.deadline.factor());
    dag.deadline_ms = deadline;
    dag.period_ms = Some(deadline);
    dag.count = Some(count);
    Ok(deadline)
}

/// Periodic interference windows covering `duty` of each `period_ms` block
/// over the workload span.
fn interference_windows(spec: InterferenceSpec, period_ms: f64, span_ms: f64) -> Vec<InterferenceSection> {
    let mut out = Vec::new();
    let mut start = 0.0;
    while start < span_ms {
        out.push(InterferenceSection {
            start_ms: round_ms(start),
            end_ms: round_ms(start + period_ms * spec.duty),
            slowdown: spec.slowdown,
        });
        start += period_ms;
    }
    out
}

fn round_ms(ms: f64) -> f64 {
    (ms * 1e3).round() / 1e3
}

/// Produces the named workload; a pure function of (scenario, options).
pub fn generate_scenario(
    scenario: Scenario,
    opts: &GenOptions,
) -> Result<WorkloadFile, WorkloadError> {
    let s = opts.scale;
    match scenario {
        Scenario::Cruise => {
            pipeline_workload(cruise_pipeline(s), opts, opts.instances.unwrap_or(10), 2.0)
        }
        Scenario::Obstacle => {
            let p = PipelineSpec {
                id: "obstacle",
                layers: vec![
                    vec![("lane", node(model::LANE.0, model::LANE.1, s))],
                    vec![
                        ("seg_stage", stage("mimo", &[model::HEAD_SEG], s)),
                        ("detect_stage", stage("mimo", &[model::HEAD_DETECT], s)),
                    ],
                    vec![("control", node(model::CONTROL.0, model::CONTROL.1, s))],
                ],
            };
            pipeline_workload(p, opts, opts.instances.unwrap_or(10), 2.0)
        }
        Scenario::Urban => {
            let p = PipelineSpec {
                id: "urban",
                layers: vec![
                    vec![
                        ("lane", node(model::LANE.0, model::LANE.1, s)),
                        ("detect_front", node(model::DETECT.0, model::DETECT.1, s)),
                    ],
                    vec![
                        ("seg_stage", stage("mimo", &[model::HEAD_SEG], s)),
                        ("detect_stage", stage("mimo", &[model::HEAD_DETECT], s)),
                    ],
                    vec![("control", node(model::CONTROL.0, model::CONTROL.1, s))],
                ],
            };
            pipeline_workload(p, opts, opts.instances.unwrap_or(10), 2.0)
        }
        Scenario::Emergency => {
            let p = PipelineSpec {
                id: "emergency",
                layers: vec![
                    vec![("detect", node(model::DETECT.0, model::DETECT.1, s))],
                    vec![
                        ("lane_stage", stage("mimo", &[model::HEAD_LANE], s)),
                        ("seg_stage", stage("mimo", &[model::HEAD_SEG], s)),
                    ],
                    vec![("control", node(model::CONTROL.0, model::CONTROL.1, s))],
                ],
            };
            pipeline_workload(p, opts, opts.instances.unwrap_or(10), 2.0)
        }
        Scenario::Night => {
            let p = PipelineSpec {
                id: "night",
                layers: vec![
                    vec![("control1", node(model::CONTROL.0, model::CONTROL.1, s))],
                    vec![("control2", node(model::CONTROL.0, model::CONTROL.1, s))],
                    vec![("control3", node(model::CONTROL.0, model::CONTROL.1, s))],
                ],
            };
            pipeline_workload(p, opts, opts.instances.unwrap_or(10), 2.0)
        }
        Scenario::DynamicMutation => dynamic_mutation_workload(opts),
        Scenario::AsyncPair => async_pair_workload(opts),
        Scenario::Burst { pct } => burst_workload(opts, pct),
        Scenario::NonPartitionable { pct } => nonpartitionable_workload(opts, pct),
    }
}

fn cruise_pipeline(s: f64) -> PipelineSpec {
    PipelineSpec {
        id: "cruise",
        layers: vec![
            vec![("lane", node(model::LANE.0, model::LANE.1, s))],
            vec![("seg", node(model::SEG.0, model::SEG.1, s))],
            vec![("control", node(model::CONTROL.0, model::CONTROL.1, s))],
        ],
    }
}

fn pipeline_workload(
    p: PipelineSpec,
    opts: &GenOptions,
    count: u64,
    rho: f64,
) -> Result<WorkloadFile, WorkloadError> {
    let mut file = base_file(rho);
    let mut dag = p.into_section(1.0);
    let period = finalize_periodic(&mut dag, &file.platform, opts, count)?;
    file.dags.push(dag);
    if let Some(spec) = opts.interference {
        let span = period * count as f64;
        file.interference = interference_windows(spec, period, span);
    }
    file.lower()?;
    Ok(file)
}

/// The three-phase dynamic workload: a cruising pipeline in which an extra
/// detection task joins at phase two and leaves at phase three.
fn dynamic_mutation_workload(opts: &GenOptions) -> Result<WorkloadFile, WorkloadError> {
    let s = opts.scale;
    let count = opts.instances.unwrap_or(9);
    let mut file = base_file(2.0);
    let mut dag = cruise_pipeline(s).into_section(1.0);
    let period = finalize_periodic(&mut dag, &file.platform, opts, count)?;
    file.dags.push(dag);
    file.mutations = vec![
        MutationSection {
            at_ms: round_ms(period * 3.0),
            dag: "cruise".to_string(),
            op: "add_node".to_string(),
            node: Some("detect".to_string()),
            from: None,
            to: None,
            incoming: vec!["lane".to_string()],
            outgoing: vec!["control".to_string()],
            attrs: Some(node(model::DETECT.0, model::DETECT.1, s)),
        },
        MutationSection {
            at_ms: round_ms(period * 6.0),
            dag: "cruise".to_string(),
            op: "remove_node".to_string(),
            node: Some("detect".to_string()),
            from: None,
            to: None,
            incoming: vec![],
            outgoing: vec![],
            attrs: None,
        },
    ];
    if let Some(spec) = opts.interference {
        file.interference = interference_windows(spec, period, period * count as f64);
    }
    file.lower()?;
    Ok(file)
}

/// Two periodic pipelines with slightly mismatched rates and a precedence
/// edge inside the slower one, so the rate drift periodically aligns their
/// demand.
fn async_pair_workload(opts: &GenOptions) -> Result<WorkloadFile, WorkloadError> {
    let s = opts.scale;
    let count = opts.instances.unwrap_or(30);
    let mut file = base_file(1.0);
    let deadline_ms = 30.0;
    let mut ctl_nodes = BTreeMap::new();
    ctl_nodes.insert("detect".to_string(), node(model::DETECT.0, model::DETECT.1, s));
    ctl_nodes.insert("cruise".to_string(), node(model::CONTROL.0, model::CONTROL.1, s));
    file.dags.push(DagSection {
        id: "ctl_pipe".to_string(),
        deadline_ms,
        period_ms: Some(33.33),
        offset_ms: None,
        count: Some(count),
        arrivals_ms: None,
        nodes: ctl_nodes,
        edges: vec![("detect".to_string(), "cruise".to_string())],
    });
    let mut det_nodes = BTreeMap::new();
    det_nodes.insert("detect".to_string(), node(model::DETECT.0, model::DETECT.1, s));
    file.dags.push(DagSection {
        id: "det_pipe".to_string(),
        deadline_ms,
        period_ms: Some(30.30),
        offset_ms: None,
        count: Some(count + count / 10),
        arrivals_ms: None,
        nodes: det_nodes,
        edges: vec![],
    });
    file.lower()?;
    Ok(file)
}

/// Two offset cruising pipelines flooded by sporadic surge kernels over the
/// leading `pct` percent of their span. The pipelines keep both slots warm,
/// so surge blocking shows up as real queueing on the short pipeline stages.
fn burst_workload(opts: &GenOptions, pct: u8) -> Result<WorkloadFile, WorkloadError> {
    let s = opts.scale;
    let count = opts.instances.unwrap_or(20);
    let mut file = base_file(2.0);
    let mut a = cruise_pipeline(s).into_section(1.0);
    a.id = "cruise_a".to_string();
    let period = finalize_periodic(&mut a, &file.platform, opts, count)?;
    let mut b = a.clone();
    b.id = "cruise_b".to_string();
    b.offset_ms = Some(round_ms(period / 2.0));
    file.dags.push(a);
    file.dags.push(b);
    let span = period * count as f64;
    let burst_until = span * pct as f64 / 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let step = 1.5 * s;
    let jitter = 0.3 * s;
    let mut arrivals = Vec::new();
    let mut t = 0.0;
    while t < burst_until {
        let j = rng.gen_range(-jitter..=jitter);
        arrivals.push(round_ms((t + j).max(0.0)));
        t += step;
    }
    if !arrivals.is_empty() {
        let mut surge_nodes = BTreeMap::new();
        let mut surge = NodeSection::basic(6.0 * s, 3500.0);
        surge.kind = "atomic".to_string();
        surge_nodes.insert("surge".to_string(), surge);
        file.dags.push(DagSection {
            id: "surge".to_string(),
            deadline_ms: 50.0 * s,
            period_ms: None,
            offset_ms: None,
            count: None,
            arrivals_ms: Some(arrivals),
            nodes: surge_nodes,
            edges: vec![],
        });
    }
    if let Some(spec) = opts.interference {
        file.interference = interference_windows(spec, period, span);
    }
    file.lower()?;
    Ok(file)
}

/// Two offset cruising pipelines under periodic interference, with the
/// heaviest `pct` percent of nodes marked atomic and profiled for
/// contention.
fn nonpartitionable_workload(opts: &GenOptions, pct: u8) -> Result<WorkloadFile, WorkloadError> {
    let s = opts.scale;
    let count = opts.instances.unwrap_or(12);
    let mut file = base_file(2.0);

    let mut a = cruise_pipeline(s).into_section(1.0);
    a.id = "cruise_a".to_string();
    let period = finalize_periodic(&mut a, &file.platform, opts, count)?;
    let mut b = a.clone();
    b.id = "cruise_b".to_string();
    b.offset_ms = Some(round_ms(period / 2.0));

    // Heaviest nodes go atomic first.
    let atomic_count = ((pct as f64 / 100.0) * 3.0).round() as usize;
    let mut by_cost: Vec<(String, f64)> = a
        .nodes
        .iter()
        .map(|(n, sec)| (n.clone(), sec.wcet_ms))
        .collect();
    by_cost.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let atomic: Vec<String> = by_cost.iter().take(atomic_count).map(|(n, _)| n.clone()).collect();
    for section in [&mut a, &mut b] {
        for name in &atomic {
            section.nodes.get_mut(name).expect("node exists").kind = "atomic".to_string();
        }
    }
    file.dags.push(a);
    file.dags.push(b);

    let spec = opts.interference.unwrap_or(InterferenceSpec {
        slowdown: 1.3,
        duty: 0.3,
    });
    let span = period * count as f64 + period;
    file.interference = interference_windows(spec, period, span);

    // Contention profiling for every atomic node against the whole workload.
    let (workload, platform, _cfg) = file.lower()?;
    let dag_specs: Vec<_> = workload.dags.iter().map(|t| t.spec.clone()).collect();
    for name in &atomic {
        let delta = deadlines::profile_contention(
            &NodeId::new(name.clone()),
            &dag_specs,
            &platform,
            &workload.exec,
            &workload.interference,
            &[101, 102, 103],
        )
        .map_err(|e| WorkloadError::Validation {
            field: format!("contention.{name}"),
            reason: e.to_string(),
        })?;
        file.contention.push(ContentionSection {
            node: name.clone(),
            platform: file.platform.name.clone(),
            delta_ms: round_ms(delta.as_ns() as f64 / 1e6),
        });
    }
    file.lower()?;
    Ok(file)
}

/// Library-level wrapper used by the command line and the test suites.
pub fn generate(
    name: &str,
    opts: &GenOptions,
) -> Result<WorkloadFile, WorkloadError> {
    let scenario = Scenario::parse(name).ok_or_else(|| WorkloadError::Validation {
        field: "scenario".to_string(),
        reason: format!(
            "unknown scenario {name:?} (expected one of {})",
            Scenario::NAMES.join(", ")
        ),
    })?;
    generate_scenario(scenario, opts)
}

// Convenience: resolve a whole file into simulator inputs.
pub fn lower_file(
    file: &WorkloadFile,
) -> Result<(Workload, PlatformModel, SchedulerConfig), WorkloadError> {
    file.lower()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cruise_is_a_three_stage_chain() {
        let file = generate("cruise", &GenOptions::default()).unwrap();
        let dag = &file.dags[0];
        assert_eq!(dag.nodes.len(), 3);
        assert!(dag.nodes.contains_key("lane"));
        assert!(dag.nodes.contains_key("seg"));
        assert!(dag.nodes.contains_key("control"));
        assert_eq!(dag.edges.len(), 2);
    }

    #[test]
    fn obstacle_has_two_parallel_stage_nodes_sharing_weights() {
        let file = generate("obstacle", &GenOptions::default()).unwrap();
        let dag = &file.dags[0];
        let seg = &dag.nodes["seg_stage"];
        let det = &dag.nodes["detect_stage"];
        assert_eq!(seg.encoder_ref.as_deref(), Some("mimo"));
        assert_eq!(det.encoder_ref.as_deref(), Some("mimo"));
        assert!(seg.enc_cost_ms.is_some() && det.dec_costs_ms.is_some());
        // Both hang off the lane stage and feed control.
        assert!(dag.edges.contains(&("lane".to_string(), "seg_stage".to_string())));
        assert!(dag.edges.contains(&("detect_stage".to_string(), "control".to_string())));
    }

    #[test]
    fn async_pair_has_mismatched_rates_and_a_dependency() {
        let file = generate("async_pair", &GenOptions::default()).unwrap();
        assert_eq!(file.dags.len(), 2);
        assert_eq!(file.dags[0].period_ms, Some(33.33));
        assert_eq!(file.dags[1].period_ms, Some(30.30));
        assert_eq!(file.dags[0].edges.len(), 1);
    }

    #[test]
    fn generation_is_pure_per_inputs() {
        let opts = GenOptions {
            seed: 42,
            ..GenOptions::default()
        };
        for name in Scenario::NAMES {
            let a = generate(name, &opts).unwrap();
            let b = generate(name, &opts).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn all_scenarios_round_trip_through_toml() {
        for name in Scenario::NAMES {
            let file = generate(name, &GenOptions::default()).unwrap();
            let text = file.serialize();
            let parsed = WorkloadFile::parse_str(&text).unwrap();
            assert_eq!(parsed, file, "{name}");
        }
    }

    #[test]
    fn unknown_scenario_is_reported() {
        assert!(generate("warp_drive", &GenOptions::default()).is_err());
    }

    #[test]
    fn tight_deadlines_are_tighter_than_loose() {
        let tight = generate("cruise", &GenOptions::default()).unwrap();
        let loose = generate(
            "cruise",
            &GenOptions {
                deadline: Tightness::Loose,
                ..GenOptions::default()
            },
        )
        .unwrap();
        assert!(tight.dags[0].deadline_ms < loose.dags[0].deadline_ms);
    }

    #[test]
    fn burst_pct_scales_surge_volume() {
        let full = generate("burst:100", &GenOptions::default()).unwrap();
        let half = generate("burst:50", &GenOptions::default()).unwrap();
        let none = generate("burst:0", &GenOptions::default()).unwrap();
        let surge_count = |f: &WorkloadFile| {
            f.dags
                .iter()
                .find(|d| d.id == "surge")
                .and_then(|d| d.arrivals_ms.as_ref())
                .map_or(0, |a| a.len())
        };
        assert!(surge_count(&full) > surge_count(&half));
        assert!(surge_count(&half) > 0);
        assert_eq!(surge_count(&none), 0);
    }

    #[test]
    fn nonpartitionable_marks_and_profiles_atomic_nodes() {
        let file = generate("nonpartitionable:50", &GenOptions::default()).unwrap();
        let atomic: Vec<&String> = file.dags[0]
            .nodes
            .iter()
            .filter(|(_, n)| n.kind == "atomic")
            .map(|(n, _)| n)
            .collect();
        // 50% of three nodes rounds to two, heaviest first.
        assert_eq!(atomic.len(), 2);
        assert_eq!(file.contention.len(), 2);
        assert!(file.contention.iter().all(|c| c.delta_ms >= 0.0));
    }
}

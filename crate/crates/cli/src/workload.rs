//! The on-disk workload format: a versioned, self-describing TOML schema
//! with explicit keys and all durations in milliseconds. `parse` validates
//! everything up front and names the offending field on failure; `lower`
//! converts the file into the resolved simulator input.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use red_core::deadlines::ContentionTable;
use red_core::graph::{self, DagId, DagSpec, Mutation, MutationOp, NodeAttrs, NodeId};
use red_core::simulator::{
    DagTemplate, ExecDistribution, ExecModel, InterferenceWindow, OomInject, PlatformModel,
    ReleasePattern, SchedulerConfig, Workload,
};
use red_core::overload::BurstConfig;
use red_core::time::{Duration, TimePoint};

pub const WORKLOAD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid field {field}: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> WorkloadError {
    WorkloadError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub version: u32,
    #[serde(default = "default_lambda")]
    pub qoe_lambda: f64,
    pub platform: PlatformSection,
    #[serde(default)]
    pub exec: ExecSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(rename = "dag")]
    pub dags: Vec<DagSection>,
    #[serde(rename = "mutation", default, skip_serializing_if = "Vec::is_empty")]
    pub mutations: Vec<MutationSection>,
    #[serde(rename = "interference", default, skip_serializing_if = "Vec::is_empty")]
    pub interference: Vec<InterferenceSection>,
    #[serde(rename = "contention", default, skip_serializing_if = "Vec::is_empty")]
    pub contention: Vec<ContentionSection>,
    #[serde(rename = "io_inject", default, skip_serializing_if = "Vec::is_empty")]
    pub io_inject: Vec<IoInjectSection>,
    #[serde(rename = "oom_inject", default, skip_serializing_if = "Vec::is_empty")]
    pub oom_inject: Vec<OomInjectSection>,
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformSection {
    pub name: String,
    pub rho: f64,
    pub tick_ms: f64,
    #[serde(default)]
    pub mem_capacity_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecSection {
    pub distribution: String,
    pub alpha: f64,
}

impl Default for ExecSection {
    fn default() -> Self {
        ExecSection {
            distribution: "deterministic".to_string(),
            alpha: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSection {
    pub gamma_ms: f64,
    pub cost_window: usize,
    pub barrier_overhead_ms: f64,
    pub merge_enabled: bool,
    pub burst: BurstSection,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        SchedulerSection {
            gamma_ms: 100.0,
            cost_window: 8,
            barrier_overhead_ms: 0.0,
            merge_enabled: true,
            burst: BurstSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstSection {
    pub enabled: bool,
    pub theta_u: f64,
    pub q_max: usize,
    pub w: usize,
    pub tick_ms: f64,
}

impl Default for BurstSection {
    fn default() -> Self {
        BurstSection {
            enabled: true,
            theta_u: 0.90,
            q_max: 8,
            w: 3,
            tick_ms: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSection {
    pub id: String,
    pub deadline_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals_ms: Option<Vec<f64>>,
    pub nodes: BTreeMap<String, NodeSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub wcet_ms: f64,
    #[serde(default)]
    pub mem_mb: f64,
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "default_role")]
    pub role: String,
    #[serde(default)]
    pub next_release_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enc_cost_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dec_costs_ms: Option<Vec<f64>>,
}

fn default_kind() -> String {
    "partitionable".to_string()
}

fn default_role() -> String {
    "ordinary".to_string()
}

impl NodeSection {
    pub fn basic(wcet_ms: f64, mem_mb: f64) -> Self {
        NodeSection {
            wcet_ms,
            mem_mb,
            kind: default_kind(),
            role: default_role(),
            next_release_ms: 0.0,
            encoder_ref: None,
            enc_cost_ms: None,
            dec_costs_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationSection {
    pub at_ms: f64,
    pub dag: String,
    /// One of add_node, remove_node, add_edge, remove_edge.
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub incoming: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outgoing: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<NodeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSection {
    pub start_ms: f64,
    pub end_ms: f64,
    pub slowdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentionSection {
    pub node: String,
    pub platform: String,
    pub delta_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoInjectSection {
    pub dag: String,
    pub node: String,
    pub wait_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OomInjectSection {
    pub dag: String,
    pub node: String,
    pub instance: u64,
    pub reclaim_ms: f64,
}

impl WorkloadFile {
    pub fn serialize(&self) -> String {
        toml::to_string_pretty(self).expect("workload file serializes")
    }

    pub fn parse_str(text: &str) -> Result<WorkloadFile, WorkloadError> {
        let file: WorkloadFile =
            toml::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
        file.lower()?;
        Ok(file)
    }

    /// Converts to the resolved simulator input, checking every embedded
    /// invariant along the way.
    pub fn lower(&self) -> Result<(Workload, PlatformModel, SchedulerConfig), WorkloadError> {
        if self.version != WORKLOAD_VERSION {
            return Err(invalid(
                "version",
                format!("unknown version {} (expected {WORKLOAD_VERSION})", self.version),
            ));
        }
        if self.platform.rho < 1.0 {
            return Err(invalid("platform.rho", "must be at least 1"));
        }
        if self.platform.tick_ms <= 0.0 {
            return Err(invalid("platform.tick_ms", "must be positive"));
        }
        let platform = PlatformModel {
            name: self.platform.name.clone(),
            rho: self.platform.rho,
            tick: Duration::from_ms_f64(self.platform.tick_ms),
            mem_capacity: self.platform.mem_capacity_mb,
        };
        let distribution = match self.exec.distribution.as_str() {
            "deterministic" => ExecDistribution::Deterministic,
            "uniform" => ExecDistribution::Uniform,
            other => {
                return Err(invalid(
                    "exec.distribution",
                    format!("unknown distribution {other:?}"),
                ))
            }
        };
        if !(self.exec.alpha > 0.0 && self.exec.alpha <= 1.0) {
            return Err(invalid("exec.alpha", "must be in (0, 1]"));
        }

        let mut dags = Vec::new();
        for d in &self.dags {
            let field = |f: &str| format!("dag.{}.{f}", d.id);
            if d.deadline_ms <= 0.0 {
                return Err(invalid(field("deadline_ms"), "must be positive"));
            }
            let mut spec = DagSpec::new(d.id.clone(), Duration::from_ms_f64(d.deadline_ms));
            for (name, node) in &d.nodes {
                spec.nodes
                    .insert(NodeId::new(name.clone()), lower_node(node, &field(&format!("nodes.{name}")))?);
            }
            for (u, v) in &d.edges {
                spec.edges.insert((NodeId::new(u.clone()), NodeId::new(v.clone())));
            }
            graph::validate(&spec).map_err(|e| invalid(field("edges"), e.to_string()))?;
            let release = match (&d.period_ms, &d.arrivals_ms) {
                (Some(p), None) => {
                    if *p <= 0.0 {
                        return Err(invalid(field("period_ms"), "must be positive"));
                    }
                    ReleasePattern::Periodic {
                        offset: TimePoint::from_ms_f64(d.offset_ms.unwrap_or(0.0)),
                        period: Duration::from_ms_f64(*p),
                        count: d.count.unwrap_or(1),
                    }
                }
                (None, Some(arrivals)) => {
                    if arrivals.is_empty() {
                        return Err(invalid(field("arrivals_ms"), "must not be empty"));
                    }
                    ReleasePattern::Sporadic {
                        arrivals: arrivals.iter().map(|a| TimePoint::from_ms_f64(*a)).collect(),
                    }
                }
                (Some(_), Some(_)) => {
                    return Err(invalid(
                        field("period_ms"),
                        "period_ms and arrivals_ms are mutually exclusive",
                    ))
                }
                (None, None) => {
                    return Err(invalid(
                        field("period_ms"),
                        "either period_ms or arrivals_ms is required",
                    ))
                }
            };
            dags.push(DagTemplate { spec, release });
        }

        let mut mutations = Vec::new();
        for (i, m) in self.mutations.iter().enumerate() {
            mutations.push(lower_mutation(m, &format!("mutation[{i}]"))?);
        }

        let mut interference = Vec::new();
        for (i, w) in self.interference.iter().enumerate() {
            if w.start_ms >= w.end_ms {
                return Err(invalid(format!("interference[{i}].start_ms"), "start must precede end"));
            }
            if w.slowdown < 1.0 {
                return Err(invalid(format!("interference[{i}].slowdown"), "must be at least 1"));
            }
            interference.push(InterferenceWindow {
                start: TimePoint::from_ms_f64(w.start_ms),
                end: TimePoint::from_ms_f64(w.end_ms),
                slowdown: w.slowdown,
            });
        }

        let mut contention = ContentionTable::new();
        for (i, c) in self.contention.iter().enumerate() {
            if c.delta_ms < 0.0 {
                return Err(invalid(format!("contention[{i}].delta_ms"), "must be non-negative"));
            }
            contention.insert(
                NodeId::new(c.node.clone()),
                c.platform.clone(),
                Duration::from_ms_f64(c.delta_ms),
            );
        }

        let burst = &self.scheduler.burst;
        let burst_cfg = BurstConfig {
            theta_u: burst.theta_u,
            q_max: burst.q_max,
            w: burst.w,
            tick: Duration::from_ms_f64(burst.tick_ms),
        };
        burst_cfg
            .validate()
            .map_err(|e| invalid("scheduler.burst", e.to_string()))?;

        let mut cfg = SchedulerConfig {
            gamma: Duration::from_ms_f64(self.scheduler.gamma_ms),
            cost_window: self.scheduler.cost_window.max(1),
            barrier_overhead: Duration::from_ms_f64(self.scheduler.barrier_overhead_ms),
            burst: burst_cfg,
            burst_enabled: burst.enabled,
            merge_enabled: self.scheduler.merge_enabled,
            io_inject: BTreeMap::new(),
            oom_inject: BTreeMap::new(),
        };
        for (i, io) in self.io_inject.iter().enumerate() {
            if io.wait_ms <= 0.0 {
                return Err(invalid(format!("io_inject[{i}].wait_ms"), "must be positive"));
            }
            cfg.io_inject.insert(
                (DagId::new(io.dag.clone()), NodeId::new(io.node.clone())),
                Duration::from_ms_f64(io.wait_ms),
            );
        }
        for (i, oom) in self.oom_inject.iter().enumerate() {
            if oom.reclaim_ms <= 0.0 {
                return Err(invalid(format!("oom_inject[{i}].reclaim_ms"), "must be positive"));
            }
            cfg.oom_inject.insert(
                (DagId::new(oom.dag.clone()), NodeId::new(oom.node.clone())),
                OomInject {
                    instance: oom.instance,
                    reclaim: Duration::from_ms_f64(oom.reclaim_ms),
                },
            );
        }

        let workload = Workload {
            dags,
            mutations,
            interference,
            contention,
            exec: ExecModel {
                distribution,
                alpha: self.exec.alpha,
            },
            qoe_lambda: self.qoe_lambda,
        };
        Ok((workload, platform, cfg))
    }
}

fn lower_node(n: &NodeSection, field: &str) -> Result<NodeAttrs, WorkloadError> {
    if n.wcet_ms <= 0.0 {
        return Err(invalid(format!("{field}.wcet_ms"), "must be positive"));
    }
    let kind = match n.kind.as_str() {
        "partitionable" => graph::NodeKind::Partitionable,
        "atomic" => graph::NodeKind::Atomic,
        other => return Err(invalid(format!("{field}.kind"), format!("unknown kind {other:?}"))),
    };
    let role = match n.role.as_str() {
        "ordinary" => graph::NodeRole::Ordinary,
        "shared_encoder" => graph::NodeRole::SharedEncoder,
        "decoder" => graph::NodeRole::Decoder,
        other => return Err(invalid(format!("{field}.role"), format!("unknown role {other:?}"))),
    };
    Ok(NodeAttrs {
        wcet: Duration::from_ms_f64(n.wcet_ms),
        mem: n.mem_mb,
        kind,
        role,
        next_release: TimePoint::from_ms_f64(n.next_release_ms),
        encoder_ref: n.encoder_ref.clone(),
        enc_cost: n.enc_cost_ms.map(Duration::from_ms_f64),
        dec_costs: n
            .dec_costs_ms
            .as_ref()
            .map(|v| v.iter().map(|c| Duration::from_ms_f64(*c)).collect()),
    })
}

fn lower_mutation(m: &MutationSection, field: &str) -> Result<Mutation, WorkloadError> {
    let need_node = || {
        m.node
            .clone()
            .ok_or_else(|| invalid(format!("{field}.node"), "required for this op"))
    };
    let need_edge = || -> Result<(NodeId, NodeId), WorkloadError> {
        let from = m
            .from
            .clone()
            .ok_or_else(|| invalid(format!("{field}.from"), "required for this op"))?;
        let to = m
            .to
            .clone()
            .ok_or_else(|| invalid(format!("{field}.to"), "required for this op"))?;
        Ok((NodeId::new(from), NodeId::new(to)))
    };
    let op = match m.op.as_str() {
        "add_node" => {
            let attrs = m
                .attrs
                .as_ref()
                .ok_or_else(|| invalid(format!("{field}.attrs"), "required for add_node"))?;
            MutationOp::AddNode {
                id: NodeId::new(need_node()?),
                attrs: lower_node(attrs, &format!("{field}.attrs"))?,
                incoming: m.incoming.iter().map(|s| NodeId::new(s.clone())).collect(),
                outgoing: m.outgoing.iter().map(|s| NodeId::new(s.clone())).collect(),
            }
        }
        "remove_node" => MutationOp::RemoveNode(NodeId::new(need_node()?)),
        "add_edge" => {
            let (u, v) = need_edge()?;
            MutationOp::AddEdge(u, v)
        }
        "remove_edge" => {
            let (u, v) = need_edge()?;
            MutationOp::RemoveEdge(u, v)
        }
        other => return Err(invalid(format!("{field}.op"), format!("unknown op {other:?}"))),
    };
    Ok(Mutation {
        at: TimePoint::from_ms_f64(m.at_ms),
        target_dag: DagId::new(m.dag.clone()),
        op,
    })
}

pub fn parse_workload(path: &Path) -> Result<WorkloadFile, WorkloadError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    WorkloadFile::parse_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> WorkloadFile {
        WorkloadFile {
            version: 1,
            qoe_lambda: 1.0,
            platform: PlatformSection {
                name: "sim".to_string(),
                rho: 2.0,
                tick_ms: 5.0,
                mem_capacity_mb: 8192.0,
            },
            exec: ExecSection::default(),
            scheduler: SchedulerSection::default(),
            dags: vec![DagSection {
                id: "solo".to_string(),
                deadline_ms: 100.0,
                period_ms: Some(100.0),
                offset_ms: None,
                count: Some(3),
                arrivals_ms: None,
                nodes: BTreeMap::from([("n".to_string(), NodeSection::basic(10.0, 100.0))]),
                edges: vec![],
            }],
            mutations: vec![],
            interference: vec![],
            contention: vec![],
            io_inject: vec![],
            oom_inject: vec![],
        }
    }

    #[test]
    fn minimal_file_parses() {
        let text = minimal().serialize();
        let parsed = WorkloadFile::parse_str(&text).unwrap();
        assert_eq!(parsed, minimal());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut w = minimal();
        w.version = 9;
        let err = WorkloadFile::parse_str(&w.serialize()).unwrap_err();
        assert!(matches!(err, WorkloadError::Validation { field, .. } if field == "version"));
    }

    #[test]
    fn cyclic_edges_are_rejected_with_a_witness() {
        let mut w = minimal();
        w.dags[0]
            .nodes
            .insert("m".to_string(), NodeSection::basic(5.0, 0.0));
        w.dags[0].edges = vec![
            ("n".to_string(), "m".to_string()),
            ("m".to_string(), "n".to_string()),
        ];
        let err = WorkloadFile::parse_str(&w.serialize()).unwrap_err();
        match err {
            WorkloadError::Validation { field, reason } => {
                assert!(field.contains("solo"));
                assert!(reason.contains("cycle"));
                assert!(reason.contains("->"), "witness path expected: {reason}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn period_and_arrivals_are_mutually_exclusive() {
        let mut w = minimal();
        w.dags[0].arrivals_ms = Some(vec![0.0]);
        assert!(WorkloadFile::parse_str(&w.serialize()).is_err());
    }

    #[test]
    fn garbage_is_a_parse_error() {
        assert!(matches!(
            WorkloadFile::parse_str("not { toml"),
            Err(WorkloadError::Parse(_))
        ));
    }
}

//! Per-task outcomes and aggregate latency, miss/drop rate, and QoE from
//! traces; cross-variant comparison.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::simulator::{SimTrace, TraceKind};
use crate::time::{Duration, TimePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeStatus {
    Met,
    Missed,
    Dropped,
}

impl OutcomeStatus {
    pub fn label(&self) -> &'static str {
        match self {
            OutcomeStatus::Met => "met",
            OutcomeStatus::Missed => "missed",
            OutcomeStatus::Dropped => "dropped",
        }
    }
}

/// Outcome of one released DAG instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub instance: String,
    pub release: TimePoint,
    /// First node dispatch, if any.
    pub start: Option<TimePoint>,
    /// Completion of the last node; absent for dropped instances.
    pub finish: Option<TimePoint>,
    pub deadline: TimePoint,
    pub status: OutcomeStatus,
}

impl TaskOutcome {
    pub fn response_time(&self) -> Option<Duration> {
        self.finish.map(|f| f - self.release)
    }
}

/// Aggregates over one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub released: u64,
    pub met: u64,
    pub missed: u64,
    pub dropped: u64,
    pub miss_drop_rate: f64,
    pub mean_response: Duration,
    pub p50_response: Duration,
    pub p95_response: Duration,
    pub p99_response: Duration,
    /// Mean QoE over completed (non-dropped) instances.
    pub qoe: f64,
    pub barrier_count: u64,
    /// Physical encoder runs dispatched.
    pub encoder_executions: u64,
    /// Node-level drop events per reason.
    pub drops_by_reason: BTreeMap<String, u64>,
    pub outcomes: Vec<TaskOutcome>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),
    #[error("mismatched experiment: {0}")]
    MismatchedExperiment(String),
}

/// Sigmoid-style user-experience score `1 / (1 + e^lambda * max(0, C - S))`
/// with the overrun expressed in seconds. Equals one exactly when the
/// execution time fits the slack.
pub fn qoe_score(exec_time: Duration, slack: Duration, lambda: f64) -> f64 {
    let overrun_s = (exec_time - slack).clamp_min_zero().as_secs_f64();
    if overrun_s <= 0.0 {
        return 1.0;
    }
    1.0 / (1.0 + lambda.exp() * overrun_s)
}

fn extra_field<'a>(extra: &'a str, key: &str) -> Option<&'a str> {
    extra
        .split(';')
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
}

/// Reconstructs per-instance outcomes and aggregates from a finished trace.
pub fn summarize(trace: &SimTrace, qoe_lambda: f64) -> Result<RunSummary, MetricsError> {
    struct Acc {
        release: TimePoint,
        deadline: TimePoint,
        start: Option<TimePoint>,
        finish: Option<TimePoint>,
        dropped: bool,
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    let mut barrier_count = 0u64;
    let mut encoder_executions = 0u64;
    let mut drops_by_reason: BTreeMap<String, u64> = BTreeMap::new();

    for e in &trace.events {
        match e.kind {
            TraceKind::Release => {
                let deadline = extra_field(&e.extra, "deadline")
                    .and_then(|v| v.parse::<i64>().ok())
                    .ok_or_else(|| {
                        MetricsError::IncompleteTrace(format!(
                            "release of {} lacks a deadline",
                            e.dag
                        ))
                    })?;
                acc.insert(
                    e.dag.clone(),
                    Acc {
                        release: e.time,
                        deadline: TimePoint::from_ns(deadline),
                        start: None,
                        finish: None,
                        dropped: false,
                    },
                );
            }
            TraceKind::Dispatch => {
                if let Some(a) = acc.get_mut(&e.dag) {
                    a.start.get_or_insert(e.time);
                }
                if extra_field(&e.extra, "enc") == Some("1") {
                    encoder_executions += 1;
                }
            }
            TraceKind::Finish => {
                if let Some(a) = acc.get_mut(&e.dag) {
                    a.finish = Some(a.finish.map_or(e.time, |f| f.max(e.time)));
                }
            }
            TraceKind::Barrier => barrier_count += 1,
            TraceKind::Drop => {
                let reason = extra_field(&e.extra, "reason").unwrap_or("unknown").to_string();
                *drops_by_reason.entry(reason.clone()).or_insert(0) += 1;
                if reason == "burst" {
                    if let Some(a) = acc.get_mut(&e.dag) {
                        a.dropped = true;
                    }
                }
            }
            TraceKind::Mutation | TraceKind::Overload => {}
        }
    }

    let mut outcomes = Vec::with_capacity(acc.len());
    let mut responses: Vec<Duration> = Vec::new();
    let mut qoe_sum = 0.0;
    let mut completed = 0u64;
    let (mut met, mut missed, mut dropped) = (0u64, 0u64, 0u64);
    for (instance, a) in acc {
        let status = if a.dropped {
            dropped += 1;
            OutcomeStatus::Dropped
        } else {
            let finish = a.finish.ok_or_else(|| {
                MetricsError::IncompleteTrace(format!("instance {instance} never finished"))
            })?;
            if finish <= a.deadline {
                met += 1;
                OutcomeStatus::Met
            } else {
                missed += 1;
                OutcomeStatus::Missed
            }
        };
        let finish = if status == OutcomeStatus::Dropped { None } else { a.finish };
        if let Some(f) = finish {
            responses.push(f - a.release);
            let start = a.start.unwrap_or(a.release);
            qoe_sum += qoe_score(f - start, a.deadline - start, qoe_lambda);
            completed += 1;
        }
        outcomes.push(TaskOutcome {
            instance,
            release: a.release,
            start: a.start,
            finish,
            deadline: a.deadline,
            status,
        });
    }

    responses.sort_unstable();
    let pct = |p: f64| -> Duration {
        if responses.is_empty() {
            return Duration::ZERO;
        }
        let rank = ((p * responses.len() as f64).ceil() as usize).clamp(1, responses.len());
        responses[rank - 1]
    };
    let mean_response = if responses.is_empty() {
        Duration::ZERO
    } else {
        let sum: i128 = responses.iter().map(|d| d.as_ns() as i128).sum();
        Duration::from_ns((sum / responses.len() as i128) as i64)
    };
    let released = outcomes.len() as u64;
    Ok(RunSummary {
        released,
        met,
        missed,
        dropped,
        miss_drop_rate: if released == 0 {
            0.0
        } else {
            (missed + dropped) as f64 / released as f64
        },
        mean_response,
        p50_response: pct(0.50),
        p95_response: pct(0.95),
        p99_response: pct(0.99),
        qoe: if completed == 0 { 0.0 } else { qoe_sum / completed as f64 },
        barrier_count,
        encoder_executions,
        drops_by_reason,
        outcomes,
    })
}

/// Per-variant aggregate over a set of seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantAggregate {
    pub variant: String,
    pub seeds: u64,
    pub mean_miss_drop_rate: f64,
    pub mean_response: Duration,
    pub mean_qoe: f64,
    pub mean_barriers: f64,
    pub mean_encoder_executions: f64,
}

/// Pairwise delta `a - b` per metric, plus the fraction of seeds where `a`
/// beats `b` (lower miss rate, lower response, higher QoE).
#[derive(Debug, Clone, PartialEq)]
pub struct PairDelta {
    pub a: String,
    pub b: String,
    pub miss_drop_delta: f64,
    pub response_delta_ns: f64,
    pub qoe_delta: f64,
    pub win_fraction_miss_drop: f64,
    pub win_fraction_response: f64,
    pub win_fraction_qoe: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub variants: Vec<VariantAggregate>,
    pub pairs: Vec<PairDelta>,
}

/// Compares per-(variant, seed) summaries. All variants must cover the same
/// seed set.
pub fn compare(
    summaries: &BTreeMap<(String, u64), RunSummary>,
) -> Result<ComparisonReport, MetricsError> {
    let mut by_variant: BTreeMap<&String, BTreeMap<u64, &RunSummary>> = BTreeMap::new();
    for ((variant, seed), summary) in summaries {
        by_variant.entry(variant).or_default().insert(*seed, summary);
    }
    let seed_sets: Vec<BTreeSet<u64>> = by_variant
        .values()
        .map(|m| m.keys().copied().collect())
        .collect();
    if let Some(first) = seed_sets.first() {
        if seed_sets.iter().any(|s| s != first) {
            return Err(MetricsError::MismatchedExperiment(
                "variants cover different seed sets".into(),
            ));
        }
    }
    let mut variants = Vec::new();
    for (variant, runs) in &by_variant {
        let n = runs.len() as f64;
        variants.push(VariantAggregate {
            variant: (*variant).clone(),
            seeds: runs.len() as u64,
            mean_miss_drop_rate: runs.values().map(|s| s.miss_drop_rate).sum::<f64>() / n,
            mean_response: Duration::from_ns(
                (runs.values().map(|s| s.mean_response.as_ns() as i128).sum::<i128>()
                    / runs.len() as i128) as i64,
            ),
            mean_qoe: runs.values().map(|s| s.qoe).sum::<f64>() / n,
            mean_barriers: runs.values().map(|s| s.barrier_count as f64).sum::<f64>() / n,
            mean_encoder_executions: runs
                .values()
                .map(|s| s.encoder_executions as f64)
                .sum::<f64>()
                / n,
        });
    }
    let mut pairs = Vec::new();
    let names: Vec<&String> = by_variant.keys().copied().collect();
    for a in &names {
        for b in &names {
            if a == b {
                continue;
            }
            let runs_a = &by_variant[*a];
            let runs_b = &by_variant[*b];
            let n = runs_a.len() as f64;
            let agg = |f: &dyn Fn(&RunSummary) -> f64, runs: &BTreeMap<u64, &RunSummary>| {
                runs.values().map(|s| f(s)).sum::<f64>() / n
            };
            let wins = |better: &dyn Fn(&RunSummary, &RunSummary) -> bool| {
                runs_a
                    .iter()
                    .filter(|(seed, sa)| better(sa, runs_b[*seed]))
                    .count() as f64
                    / n
            };
            pairs.push(PairDelta {
                a: (*a).clone(),
                b: (*b).clone(),
                miss_drop_delta: agg(&|s| s.miss_drop_rate, runs_a)
                    - agg(&|s| s.miss_drop_rate, runs_b),
                response_delta_ns: agg(&|s| s.mean_response.as_ns() as f64, runs_a)
                    - agg(&|s| s.mean_response.as_ns() as f64, runs_b),
                qoe_delta: agg(&|s| s.qoe, runs_a) - agg(&|s| s.qoe, runs_b),
                win_fraction_miss_drop: wins(&|sa, sb| sa.miss_drop_rate < sb.miss_drop_rate),
                win_fraction_response: wins(&|sa, sb| sa.mean_response < sb.mean_response),
                win_fraction_qoe: wins(&|sa, sb| sa.qoe > sb.qoe),
            });
        }
    }
    Ok(ComparisonReport { variants, pairs })
}

/// Outcome rows: one line per instance, stable column order.
pub fn outcomes_csv(summary: &RunSummary) -> String {
    let mut out =
        String::from("dag_id,instance,release_ns,start_ns,finish_ns,deadline_ns,status,response_ns\n");
    for o in &summary.outcomes {
        let (dag_id, index) = o.instance.rsplit_once('@').unwrap_or((o.instance.as_str(), "0"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            dag_id,
            index,
            o.release.as_ns(),
            o.start.map_or(String::new(), |t| t.as_ns().to_string()),
            o.finish.map_or(String::new(), |t| t.as_ns().to_string()),
            o.deadline.as_ns(),
            o.status.label(),
            o.response_time().map_or(String::new(), |d| d.as_ns().to_string()),
        ));
    }
    out
}

pub const SUMMARY_CSV_HEADER: &str = "variant,seed,released,met,missed,dropped,miss_drop_rate,\
mean_response_ns,p50_ns,p95_ns,p99_ns,qoe,barrier_count,encoder_executions,drops_burst,drops_mutation\n";

pub fn summary_csv_row(variant: &str, seed: u64, s: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{},{:.6},{},{},{},{},{:.6},{},{},{},{}\n",
        variant,
        seed,
        s.released,
        s.met,
        s.missed,
        s.dropped,
        s.miss_drop_rate,
        s.mean_response.as_ns(),
        s.p50_response.as_ns(),
        s.p95_response.as_ns(),
        s.p99_response.as_ns(),
        s.qoe,
        s.barrier_count,
        s.encoder_executions,
        s.drops_by_reason.get("burst").copied().unwrap_or(0),
        s.drops_by_reason.get("mutation").copied().unwrap_or(0),
    )
}

pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut out = String::from(
        "section,a,b,miss_drop,response_ns,qoe,win_miss_drop,win_response,win_qoe\n",
    );
    for v in &report.variants {
        out.push_str(&format!(
            "variant,{},,{:.6},{:.0},{:.6},,,\n",
            v.variant,
            v.mean_miss_drop_rate,
            v.mean_response.as_ns() as f64,
            v.mean_qoe,
        ));
    }
    for p in &report.pairs {
        out.push_str(&format!(
            "pair,{},{},{:.6},{:.0},{:.6},{:.4},{:.4},{:.4}\n",
            p.a,
            p.b,
            p.miss_drop_delta,
            p.response_delta_ns,
            p.qoe_delta,
            p.win_fraction_miss_drop,
            p.win_fraction_response,
            p.win_fraction_qoe,
        ));
    }
    out
}

//! System-health monitoring and criticality-scored proactive shedding under
//! sustained overload.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::runtime::{DispatchUnit, ReadyQueue};
use crate::time::Duration;

/// One health observation per scheduler tick.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthSample {
    pub tick: u64,
    /// Busy fraction of the slot capacity at the tick, in [0, 1].
    pub u_gpu: f64,
    /// Ready-queue length.
    pub q_len: usize,
    /// Slack of each ready unit: sub-deadline minus now.
    pub slack: BTreeMap<String, Duration>,
}

/// Burst-detection thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstConfig {
    /// Utilization threshold.
    pub theta_u: f64,
    /// Ready-queue cap.
    pub q_max: usize,
    /// Sustained-overload window in ticks.
    pub w: usize,
    /// Scheduler quantum.
    pub tick: Duration,
}

impl Default for BurstConfig {
    fn default() -> Self {
        BurstConfig {
            theta_u: 0.90,
            q_max: 8,
            w: 3,
            tick: Duration::from_millis(5),
        }
    }
}

impl BurstConfig {
    pub fn validate(&self) -> Result<(), OverloadError> {
        if !(self.theta_u > 0.0 && self.theta_u <= 1.0) {
            return Err(OverloadError::InvalidConfig("theta_u must be in (0, 1]".into()));
        }
        if self.q_max < 1 {
            return Err(OverloadError::InvalidConfig("q_max must be at least 1".into()));
        }
        if self.w < 1 {
            return Err(OverloadError::InvalidConfig("w must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OverloadError {
    #[error("deadline span must be positive")]
    NonPositiveDeadlineSpan,
    #[error("invalid burst config: {0}")]
    InvalidConfig(String),
}

/// True iff the history contains `w` consecutive samples each exceeding the
/// utilization threshold or the queue cap.
pub fn detect_overload(history: &[HealthSample], cfg: &BurstConfig) -> bool {
    if history.len() < cfg.w {
        return false;
    }
    let hot = |s: &HealthSample| s.u_gpu > cfg.theta_u || s.q_len > cfg.q_max;
    history.windows(cfg.w).any(|win| win.iter().all(hot))
}

/// Clipped criticality score `1 - slack / span` in [0, 1]: zero at full
/// slack, one at or past the deadline.
pub fn criticality_score(slack: Duration, deadline_span: Duration) -> Result<f64, OverloadError> {
    if !deadline_span.is_positive() {
        return Err(OverloadError::NonPositiveDeadlineSpan);
    }
    let ratio = slack.as_ns() as f64 / deadline_span.as_ns() as f64;
    Ok((1.0 - ratio).clamp(0.0, 1.0))
}

/// Result of one shedding pass.
#[derive(Debug, Clone)]
pub struct DropOutcome {
    /// The queue with victims and their same-instance units removed.
    pub queue: ReadyQueue,
    /// Units chosen as victims, in drop order.
    pub dropped: Vec<DispatchUnit>,
    /// Units removed because they belong to a dropped unit's instance.
    pub cascaded: Vec<DispatchUnit>,
}

/// Sheds the lowest-criticality ready units until the queue is back under
/// its cap and the projected utilization is back under threshold, or only
/// score-one units remain.
///
/// Ties break toward the largest slack, then lexicographic unit id. Each
/// victim takes its whole DAG instance with it: other ready units of the
/// same instance leave the queue as cascades, which do not count against the
/// per-tick drop cap. The cap `q_len - q_max + 1` escalates one drop at a
/// time: it only permits drops once the queue has actually reached its cap,
/// so a busy platform with a shallow queue sheds nothing.
pub fn proactive_drop(
    queue: &ReadyQueue,
    scores: &BTreeMap<String, f64>,
    cfg: &BurstConfig,
    health: &HealthSample,
    projected_u: &dyn Fn(&ReadyQueue) -> f64,
) -> DropOutcome {
    let mut remaining = queue.clone();
    let mut dropped = Vec::new();
    let mut cascaded = Vec::new();
    let cap = (health.q_len as i64 - cfg.q_max as i64 + 1).max(0) as usize;

    while dropped.len() < cap {
        if remaining.len() <= cfg.q_max && projected_u(&remaining) <= cfg.theta_u {
            break;
        }
        // Victim: lowest score, then largest slack, then smallest id.
        let victim = remaining
            .iter()
            .min_by(|a, b| {
                let sa = scores.get(&a.id).copied().unwrap_or(0.0);
                let sb = scores.get(&b.id).copied().unwrap_or(0.0);
                sa.total_cmp(&sb)
                    .then_with(|| {
                        let la = health.slack.get(&a.id).copied().unwrap_or(Duration::ZERO);
                        let lb = health.slack.get(&b.id).copied().unwrap_or(Duration::ZERO);
                        lb.cmp(&la)
                    })
                    .then_with(|| a.id.cmp(&b.id))
            })
            .cloned();
        let Some(victim) = victim else { break };
        if scores.get(&victim.id).copied().unwrap_or(0.0) >= 1.0 {
            // Only maximum-criticality work left; preserve it.
            break;
        }
        remaining.remove(victim.deadline, &victim.id);
        let victim_instances: Vec<&String> = victim.members.iter().map(|(i, _)| i).collect();
        let same_instance: Vec<DispatchUnit> = remaining
            .iter()
            .filter(|u| u.members.iter().any(|(i, _)| victim_instances.contains(&i)))
            .cloned()
            .collect();
        for u in same_instance {
            remaining.remove(u.deadline, &u.id);
            cascaded.push(u);
        }
        dropped.push(victim);
    }
    DropOutcome {
        queue: remaining,
        dropped,
        cascaded,
    }
}

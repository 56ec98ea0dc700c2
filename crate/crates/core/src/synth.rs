//! Seeded random task-graph generation for schedulability experiments and
//! property suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{DagSpec, NodeAttrs, NodeId};
use crate::time::Duration;

/// Shape parameters for random layered DAGs.
#[derive(Debug, Clone)]
pub struct LayeredConfig {
    pub max_nodes: usize,
    pub max_width: usize,
    /// Node cost range in milliseconds.
    pub cost_ms: (f64, f64),
    /// Probability of an edge between nodes in adjacent layers.
    pub edge_prob: f64,
    /// Probability of a layer-skipping edge.
    pub skip_prob: f64,
}

impl Default for LayeredConfig {
    fn default() -> Self {
        LayeredConfig {
            max_nodes: 20,
            max_width: 3,
            cost_ms: (1.0, 50.0),
            edge_prob: 0.6,
            skip_prob: 0.1,
        }
    }
}

/// A random layered DAG: nodes arranged in layers of bounded width with
/// edges pointing strictly forward, plus occasional layer-skipping edges, so
/// layer membership and height coincide only when chains connect layers.
/// Every non-first layer node receives at least one incoming edge, keeping a
/// single connected "pipeline feel" without isolating stages.
pub fn layered_dag(id: &str, cfg: &LayeredConfig, seed: u64) -> DagSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=cfg.max_nodes.max(1));
    let mut layers: Vec<Vec<NodeId>> = Vec::new();
    let mut placed = 0usize;
    while placed < n {
        let width = rng.gen_range(1..=cfg.max_width.min(n - placed).max(1));
        let layer: Vec<NodeId> = (0..width)
            .map(|i| NodeId::new(format!("n{:02}_{i}", layers.len())))
            .collect();
        placed += width;
        layers.push(layer);
    }
    let mut dag = DagSpec::new(id, Duration::from_secs(1));
    for layer in &layers {
        for node in layer {
            let cost = rng.gen_range(cfg.cost_ms.0..=cfg.cost_ms.1);
            dag.nodes
                .insert(node.clone(), NodeAttrs::basic(Duration::from_ms_f64(cost)));
        }
    }
    for li in 1..layers.len() {
        for node in &layers[li] {
            let mut has_in = false;
            for prev in &layers[li - 1] {
                if rng.gen_bool(cfg.edge_prob) {
                    dag.edges.insert((prev.clone(), node.clone()));
                    has_in = true;
                }
            }
            if li >= 2 && rng.gen_bool(cfg.skip_prob) {
                let skip_layer = rng.gen_range(0..li - 1);
                let src = &layers[skip_layer][rng.gen_range(0..layers[skip_layer].len())];
                dag.edges.insert((src.clone(), node.clone()));
                has_in = true;
            }
            if !has_in {
                let src = &layers[li - 1][rng.gen_range(0..layers[li - 1].len())];
                dag.edges.insert((src.clone(), node.clone()));
            }
        }
    }
    dag
}

/// A small random DAG over at most `max_nodes` nodes with independent edge
/// coin flips, oriented by node index so acyclicity holds by construction.
pub fn small_random_dag(id: &str, max_nodes: usize, seed: u64) -> DagSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_nodes.max(1));
    let nodes: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("v{i}"))).collect();
    let mut dag = DagSpec::new(id, Duration::from_secs(1));
    for node in &nodes {
        let cost = rng.gen_range(1.0..=100.0);
        dag.nodes
            .insert(node.clone(), NodeAttrs::basic(Duration::from_ms_f64(cost)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(0.35) {
                dag.edges.insert((nodes[i].clone(), nodes[j].clone()));
            }
        }
    }
    dag
}

/// Adds a refinable encoder/decoder decomposition to roughly `fraction` of
/// the nodes of a DAG, seeded.
pub fn sprinkle_stages(dag: &mut DagSpec, fraction: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<NodeId> = dag.nodes.keys().cloned().collect();
    for id in ids {
        if !rng.gen_bool(fraction.clamp(0.0, 1.0)) {
            continue;
        }
        let attrs = dag.nodes.get_mut(&id).expect("node exists");
        let wcet = attrs.wcet.as_ns();
        if wcet < 10 {
            continue;
        }
        let enc = wcet * rng.gen_range(30..=60) / 100;
        let q = rng.gen_range(1..=4usize);
        let budget = wcet - enc;
        // Largest decoder first so enc + max(dec) <= wcet holds.
        let mut decs = Vec::with_capacity(q);
        let mut remaining = budget;
        for i in 0..q {
            let c = if i == q - 1 {
                remaining
            } else {
                remaining * rng.gen_range(30..=70) / 100
            };
            let c = c.max(1);
            decs.push(Duration::from_ns(c));
            remaining = (remaining - c).max(1);
        }
        decs.sort_unstable_by(|a, b| b.cmp(a));
        attrs.enc_cost = Some(Duration::from_ns(enc));
        attrs.dec_costs = Some(decs);
    }
}

/// All source-to-sink path costs by exhaustive enumeration; the independent
/// oracle for the critical-path computation.
pub fn brute_force_critical_path(dag: &DagSpec) -> Duration {
    fn walk(dag: &DagSpec, node: &NodeId, acc: Duration, best: &mut Duration) {
        let acc = acc + dag.nodes[node].wcet;
        let mut is_sink = true;
        for succ in dag.successors(node) {
            is_sink = false;
            walk(dag, succ, acc, best);
        }
        if is_sink && acc > *best {
            *best = acc;
        }
    }
    let mut best = Duration::ZERO;
    for source in dag.sources() {
        walk(dag, &source, Duration::ZERO, &mut best);
    }
    best
}

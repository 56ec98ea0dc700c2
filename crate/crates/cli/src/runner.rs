//! Experiment fan-out: one trace file plus one outcome CSV per
//! (variant, seed), a summary CSV over all runs, and a comparison CSV per
//! experiment. Output files are written to a temporary name and renamed into
//! place; results are deterministic regardless of worker parallelism.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use red_core::metrics::{self, RunSummary};
use red_core::simulator::{self, SchedulerVariant, SimError};

use crate::workload::{WorkloadError, WorkloadFile};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("simulation failed for {variant} seed {seed}: {source}")]
    Sim {
        variant: &'static str,
        seed: u64,
        source: SimError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("metrics error: {0}")]
    Metrics(String),
}

fn io_err(path: &Path, source: std::io::Error) -> RunnerError {
    RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes via a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), RunnerError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(contents.as_bytes()).map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// All products of one experiment, keyed by (variant, seed).
pub struct ExperimentResult {
    pub summaries: BTreeMap<(String, u64), RunSummary>,
    pub files_written: Vec<PathBuf>,
}

fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var("RED_SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
    cap.min(jobs).max(1)
}

/// Runs every (variant, seed) pair and writes the experiment artifacts under
/// `out_dir`.
pub fn run_experiment(
    file: &WorkloadFile,
    variants: &[SchedulerVariant],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<ExperimentResult, RunnerError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let (workload, platform, cfg) = file.lower()?;

    let jobs: Vec<(SchedulerVariant, u64)> = variants
        .iter()
        .flat_map(|v| seeds.iter().map(move |s| (*v, *s)))
        .collect();
    let results: Mutex<Vec<Result<((String, u64), RunSummary, Vec<PathBuf>), RunnerError>>> =
        Mutex::new(Vec::new());
    let next_job = std::sync::atomic::AtomicUsize::new(0);
    let workers = worker_count(jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next_job.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (variant, seed) = jobs[i];
                let outcome = (|| {
                    let trace = simulator::run(&workload, &platform, variant, &cfg, seed)
                        .map_err(|source| RunnerError::Sim {
                            variant: variant.name(),
                            seed,
                            source,
                        })?;
                    let summary = metrics::summarize(&trace, workload.qoe_lambda)
                        .map_err(|e| RunnerError::Metrics(e.to_string()))?;
                    let trace_path = out_dir.join(format!("trace_{}_{}.tsv", variant.name(), seed));
                    write_atomic(&trace_path, &trace.render())?;
                    let csv_path = out_dir.join(format!("outcomes_{}_{}.csv", variant.name(), seed));
                    write_atomic(&csv_path, &metrics::outcomes_csv(&summary))?;
                    Ok((
                        (variant.name().to_string(), seed),
                        summary,
                        vec![trace_path, csv_path],
                    ))
                })();
                results.lock().expect("no poisoned workers").push(outcome);
            });
        }
    });

    let mut summaries = BTreeMap::new();
    let mut files_written = Vec::new();
    for r in results.into_inner().expect("workers joined") {
        let (key, summary, files) = r?;
        summaries.insert(key, summary);
        files_written.extend(files);
    }

    let mut summary_csv = String::from(metrics::SUMMARY_CSV_HEADER);
    for ((variant, seed), s) in &summaries {
        summary_csv.push_str(&metrics::summary_csv_row(variant, *seed, s));
    }
    let summary_path = out_dir.join("summary.csv");
    write_atomic(&summary_path, &summary_csv)?;
    files_written.push(summary_path);

    let report = metrics::compare(&summaries).map_err(|e| RunnerError::Metrics(e.to_string()))?;
    let comparison_path = out_dir.join("comparison.csv");
    write_atomic(&comparison_path, &metrics::comparison_csv(&report))?;
    files_written.push(comparison_path);

    files_written.sort();
    Ok(ExperimentResult {
        summaries,
        files_written,
    })
}

/// Rebuilds the per-run aggregates from an experiment's summary CSV, for
/// offline comparison.
pub fn read_summary_csv(path: &Path) -> Result<BTreeMap<(String, u64), RunSummary>, RunnerError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || RunnerError::Metrics(format!("malformed summary row {i} in {}", path.display()));
        if fields.len() != 16 {
            return Err(bad());
        }
        let parse_u = |s: &str| s.parse::<u64>().map_err(|_| bad());
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let parse_ns = |s: &str| {
            s.parse::<i64>()
                .map(red_core::time::Duration::from_ns)
                .map_err(|_| bad())
        };
        let mut drops_by_reason = BTreeMap::new();
        drops_by_reason.insert("burst".to_string(), parse_u(fields[14])?);
        drops_by_reason.insert("mutation".to_string(), parse_u(fields[15])?);
        out.insert(
            (fields[0].to_string(), parse_u(fields[1])?),
            RunSummary {
                released: parse_u(fields[2])?,
                met: parse_u(fields[3])?,
                missed: parse_u(fields[4])?,
                dropped: parse_u(fields[5])?,
                miss_drop_rate: parse_f(fields[6])?,
                mean_response: parse_ns(fields[7])?,
                p50_response: parse_ns(fields[8])?,
                p95_response: parse_ns(fields[9])?,
                p99_response: parse_ns(fields[10])?,
                qoe: parse_f(fields[11])?,
                barrier_count: parse_u(fields[12])?,
                encoder_executions: parse_u(fields[13])?,
                drops_by_reason,
                outcomes: Vec::new(),
            },
        );
    }
    Ok(out)
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use red_cli::runner;
use red_cli::scenario::{self, GenOptions, InterferenceSpec, Tightness};
use red_cli::workload::{self, ContentionSection};
use red_core::deadlines;
use red_core::graph::NodeId;
use red_core::metrics;
use red_core::simulator::SchedulerVariant;

#[derive(Parser)]
#[command(
    name = "red-sim",
    version,
    about = "Deadline-aware DAG scheduling simulator: generate workloads, run scheduler variants, compare results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a workload file.
    Validate { file: PathBuf },
    /// Generate a built-in scenario workload.
    Gen(GenArgs),
    /// Run scheduler variants over a seed range and write traces and CSVs.
    Run(RunArgs),
    /// Recompute the cross-variant comparison from an experiment directory.
    Compare { dir: PathBuf },
    /// Profile a node's worst-case contention delay and emit a contention
    /// table.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Scenario name: cruise, obstacle, urban, emergency, night,
    /// dynamic_mutation, async_pair, burst[:pct], nonpartitionable[:pct].
    scenario: String,
    /// Milliseconds per synthetic cost unit.
    #[arg(long, default_value_t = 10.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deadline tightness: tight (1.05x makespan) or loose (1.5x).
    #[arg(long, default_value = "tight")]
    deadline: String,
    /// Instance count override.
    #[arg(long)]
    instances: Option<u64>,
    /// Inject periodic interference at this slowdown factor.
    #[arg(long)]
    interference_slowdown: Option<f64>,
    /// Fraction of each period spent under interference.
    #[arg(long, default_value_t = 0.4)]
    interference_duty: f64,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    /// Comma-separated variants (edf, red-fg, red-ida, red) or "all".
    #[arg(long, default_value = "all")]
    variant: String,
    /// Seed range `a..b` (half-open) or a single seed.
    #[arg(long, default_value = "0..1")]
    seeds: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    file: PathBuf,
    /// Node to profile.
    #[arg(long)]
    node: String,
    /// Seed range for the profiling runs.
    #[arg(long, default_value = "0..8")]
    seeds: String,
    /// Output path for the contention table; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_variants(s: &str) -> Result<Vec<SchedulerVariant>> {
    if s == "all" {
        return Ok(SchedulerVariant::ALL.to_vec());
    }
    s.split(',')
        .map(|name| {
            SchedulerVariant::parse(name.trim())
                .ok_or_else(|| anyhow!("unknown variant {name:?} (edf, red-fg, red-ida, red)"))
        })
        .collect()
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.parse().context("seed range start")?;
        let b: u64 = b.parse().context("seed range end")?;
        if a >= b {
            bail!("empty seed range {s:?}");
        }
        Ok((a..b).collect())
    } else {
        let one: u64 = s.parse().context("seed")?;
        Ok(vec![one])
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { file } => {
            let parsed = workload::parse_workload(&file)?;
            let (w, platform, _) = parsed.lower()?;
            println!(
                "ok: {} dag template(s), {} mutation(s), platform {} (rho {})",
                w.dags.len(),
                w.mutations.len(),
                platform.name,
                platform.rho
            );
            Ok(())
        }
        Command::Gen(args) => {
            let deadline = Tightness::parse(&args.deadline)
                .ok_or_else(|| anyhow!("deadline must be tight or loose"))?;
            let opts = GenOptions {
                scale: args.scale,
                seed: args.seed,
                deadline,
                instances: args.instances,
                interference: args.interference_slowdown.map(|slowdown| InterferenceSpec {
                    slowdown,
                    duty: args.interference_duty,
                }),
            };
            let file = scenario::generate(&args.scenario, &opts)?;
            let text = file.serialize();
            match args.out {
                Some(path) => {
                    runner::write_atomic(&path, &text)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Run(args) => {
            let file = workload::parse_workload(&args.file)?;
            let variants = parse_variants(&args.variant)?;
            let seeds = parse_seeds(&args.seeds)?;
            let result = runner::run_experiment(&file, &variants, &seeds, &args.out)?;
            println!(
                "wrote {} file(s) for {} run(s) to {}",
                result.files_written.len(),
                result.summaries.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Compare { dir } => {
            let summaries = runner::read_summary_csv(&dir.join("summary.csv"))?;
            let report = metrics::compare(&summaries)?;
            let csv = metrics::comparison_csv(&report);
            runner::write_atomic(&dir.join("comparison.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Profile(args) => {
            let file = workload::parse_workload(&args.file)?;
            let (w, platform, _) = file.lower()?;
            let seeds = parse_seeds(&args.seeds)?;
            let dag_specs: Vec<_> = w.dags.iter().map(|t| t.spec.clone()).collect();
            let delta = deadlines::profile_contention(
                &NodeId::new(args.node.clone()),
                &dag_specs,
                &platform,
                &w.exec,
                &w.interference,
                &seeds,
            )?;
            let section = ContentionSection {
                node: args.node,
                platform: platform.name.clone(),
                delta_ms: delta.as_ns() as f64 / 1e6,
            };
            let table = TableOut {
                contention: vec![section],
            };
            let text = toml::to_string_pretty(&table)?;
            match args.out {
                Some(path) => {
                    runner::write_atomic(&path, &text)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

#[derive(serde::Serialize)]
struct TableOut {
    contention: Vec<ContentionSection>,
}

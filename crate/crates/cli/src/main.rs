//! `hijack`: runs attack scenarios, sweeps, the feasibility probe and the
//! shuffle-defense comparison, writing `metrics.csv` and `summary.json`.
//!
//! Exits with status 2 on configuration errors; attack failures are data and
//! only show up in the outputs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bandit_hijack::harness::{
    feasibility_probe, parse_seed_range, read_metrics_csv, run_scenario, summarize, sweep,
    write_feasibility_csv, write_metrics_csv, MetricsRow, Scenario, Seeds, SweepAxis,
};
use bandit_hijack::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

#[derive(Parser)]
#[command(name = "hijack", version, about = "Reward-model perturbation attacks on offline bandits")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed range `a..b`, overriding the scenario's list.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Dimension,
    NoiseNorm,
    Width,
    Horizon,
    DefenseFraction,
}

impl From<Axis> for SweepAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Dimension => SweepAxis::Dimension,
            Axis::NoiseNorm => SweepAxis::NoiseNorm,
            Axis::Width => SweepAxis::Width,
            Axis::Horizon => SweepAxis::Horizon,
            Axis::DefenseFraction => SweepAxis::DefenseFraction,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario over its seeds.
    Attack(Common),
    /// Sweep one axis; the grid comes from the scenario's `[sweep]` table unless given here.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Option<Axis>,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Feasible fraction of the full-trajectory QP across dimensions.
    Feasibility {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,10,20,34,50,84")]
        dims: Vec<usize>,
        #[arg(long, default_value = "0..100")]
        seeds: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare a scenario's ASR across shuffle-defense fractions.
    Defense {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75")]
        fractions: Vec<f64>,
    },
    /// Summarize existing metrics CSVs.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> bandit_hijack::Result<Scenario> {
    let mut s = Scenario::load(&common.config)?;
    if let Some(r) = &common.seeds {
        s.seeds = Seeds(parse_seed_range(r)?);
    }
    s.validate()?;
    Ok(s)
}

fn write_outputs(out: &Path, rows: &[MetricsRow], summary: serde_json::Value) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("metrics.csv");
    write_metrics_csv(rows, BufWriter::new(File::create(&csv_path)?))?;
    let json_path = out.join("summary.json");
    fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    info!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Attack(common) => {
            let s = load(&common)?;
            let rows = run_scenario(&s)?;
            let summary = summarize(&rows);
            for sum in &summary {
                println!(
                    "{}: success {:.2}, ASR {:.3} ± {:.3}, ‖δ‖₂ {:.4}, constraints {:.1}",
                    sum.scenario, sum.success_fraction, sum.asr.mean, sum.asr.se, sum.l2.mean,
                    sum.constraint_count.mean
                );
            }
            write_outputs(&common.out, &rows, json!({ "scenario": s, "summary": summary }))
        }
        Command::Sweep { common, axis, grid } => {
            let s = load(&common)?;
            let spec = s.sweep.clone();
            let axis = axis
                .map(SweepAxis::from)
                .or(spec.as_ref().map(|p| p.axis))
                .ok_or_else(|| Error::Config("no sweep axis in flags or scenario".into()))?;
            let grid = grid
                .or(spec.map(|p| p.grid))
                .ok_or_else(|| Error::Config("no sweep grid in flags or scenario".into()))?;
            let table = sweep(&s, axis, &grid)?;
            for p in &table.points {
                println!(
                    "{:>10}: success {:.2}, ASR {:.3}, ‖δ‖₂ {:.4}, ‖δ‖∞ {:.4}, constraints {:.1}",
                    p.value, p.summary.success_fraction, p.summary.asr.mean, p.summary.l2.mean,
                    p.summary.linf.mean, p.summary.constraint_count.mean
                );
            }
            if let Some(f) = table.fit {
                println!("fit: slope {:.4}, intercept {:.4}, R² {:.4}", f.slope, f.intercept, f.r2);
            }
            write_outputs(&common.out, &table.rows, json!({ "scenario": s, "sweep": table }))
        }
        Command::Feasibility { k, horizon, dims, seeds, out } => {
            let seeds = parse_seed_range(&seeds)?;
            let table = feasibility_probe(k, horizon, &dims, &seeds)?;
            for p in &table {
                println!("d = {:>6} (threshold {}): {}/{} feasible", p.d, p.threshold, p.feasible, p.seeds);
            }
            fs::create_dir_all(&out)?;
            write_feasibility_csv(&table, BufWriter::new(File::create(out.join("feasibility.csv"))?))?;
            fs::write(
                out.join("summary.json"),
                serde_json::to_string_pretty(&json!({ "k": k, "horizon": horizon, "feasibility": table }))? + "\n",
            )?;
            Ok(())
        }
        Command::Defense { common, fractions } => {
            let s = load(&common)?;
            let table = sweep(&s, SweepAxis::DefenseFraction, &fractions)?;
            let reference = table
                .points
                .iter()
                .find(|p| p.value == 0.0)
                .map(|p| p.summary.asr.mean);
            let mut drops = Vec::new();
            for p in &table.points {
                let drop = reference.map(|r| r - p.summary.asr.mean);
                println!(
                    "fraction {:>5}: ASR {:.3} ± {:.3}{}",
                    p.value,
                    p.summary.asr.mean,
                    p.summary.asr.se,
                    drop.map_or(String::new(), |d| format!(", drop {d:.3}"))
                );
                drops.push(json!({ "fraction": p.value, "asr": p.summary.asr.mean, "drop": drop }));
            }
            write_outputs(&common.out, &table.rows, json!({ "scenario": s, "defense": drops, "sweep": table }))
        }
        Command::Report { inputs, out } => {
            let mut rows = Vec::new();
            for path in &inputs {
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                rows.extend(read_metrics_csv(f)?);
            }
            let summary = summarize(&rows);
            for sum in &summary {
                println!(
                    "{}: {} seeds, success {:.2}, ASR {:.3}",
                    sum.scenario, sum.seeds, sum.success_fraction, sum.asr.mean
                );
            }
            write_outputs(&out, &rows, json!({ "summary": summary }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

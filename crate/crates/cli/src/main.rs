//! Command-line runner for the NR-U / WiFi coexistence experiments.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nru_coex::experiment::{self, compare, parse_summary, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "nru-coex", version, about = "NR-U / WiFi uplink coexistence simulator and ED-threshold learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its CSV artifacts.
    Run(RunArgs),
    /// Report percentage gains between two summaries.
    ///
    /// With one file, every row is compared against its `baseline-fixed`
    /// row. With two files, the last row of the second is compared against
    /// the last row of the first.
    Compare {
        baseline: PathBuf,
        learned: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// baseline-fixed, tabular, centralized-ddqn or federated-ddqn.
    #[arg(long)]
    mode: Option<String>,
    /// desk or full; applied before the config file and overrides.
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// UE access category after a grant: cat2 or cat4.
    #[arg(long)]
    ue_lbt: Option<String>,
    /// Zero the reward whenever the WiFi cell falls below its baseline.
    #[arg(long)]
    fairness: bool,
    /// double or paper-literal.
    #[arg(long)]
    target_mode: Option<String>,
    /// Any configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &args.preset {
        cfg.set("preset", p)?;
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for kv in &args.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got '{kv}'");
        };
        cfg.set(k, v)?;
    }
    let flags = [
        ("mode", args.mode.clone()),
        ("seed", args.seed.map(|s| s.to_string())),
        ("episodes", args.episodes.map(|e| e.to_string())),
        ("ue_lbt", args.ue_lbt.clone()),
        ("target_mode", args.target_mode.clone()),
        ("fairness", args.fairness.then(|| "true".to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let report = experiment::run_to_dir(&cfg, &args.out).with_context(|| format!("running {} into {}", cfg.mode, args.out.display()))?;
    print!("{}", report.summary_csv());
    if let Some(learned) = &report.learned {
        for g in compare(&report.baseline, learned) {
            println!("{g}");
        }
    }
    Ok(())
}

fn read(path: &PathBuf) -> Result<Vec<(String, nru_coex::metrics::Summary)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = parse_summary(&text).with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        bail!("{} holds no summary rows", path.display());
    }
    Ok(rows)
}

fn compare_files(baseline: PathBuf, learned: Option<PathBuf>) -> Result<()> {
    let base_rows = read(&baseline)?;
    let pairs = match learned {
        Some(path) => {
            let l = read(&path)?;
            vec![(base_rows.last().cloned().expect("non-empty"), l.last().cloned().expect("non-empty"))]
        }
        None => {
            let Some(base) = base_rows.iter().find(|(m, _)| m == "baseline-fixed").cloned() else {
                bail!("{} has no baseline-fixed row", baseline.display());
            };
            base_rows.iter().filter(|(m, _)| m != "baseline-fixed").map(|r| (base.clone(), r.clone())).collect()
        }
    };
    if pairs.is_empty() {
        bail!("nothing to compare");
    }
    for ((bm, b), (lm, l)) in pairs {
        println!("{lm} vs {bm}");
        for g in compare(&b, &l) {
            println!("  {g}");
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare { baseline, learned } => compare_files(baseline, learned),
    }
}

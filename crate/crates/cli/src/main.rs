//! Command-line harness: run scenarios, rebuild reports from stored logs,
//! validate configs, and sweep seeds. Exit code 0 means every judged verdict
//! passed; 1 means at least one failed; 2 is an operational error.

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dtsim_core::engine::{run_scenario, RunOutput};
use dtsim_core::metrics::{EventLog, MetricsReport};
use dtsim_core::road::write_waypoint_file;
use dtsim_core::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "dtsim",
    version,
    about = "Deterministic discrete-event simulator for an edge/cloud mobility digital twin"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run(RunArgs),
    /// Rebuild the report from a stored event log.
    Report {
        /// Directory holding events.log from an earlier run.
        #[arg(long = "in", value_name = "DIR")]
        dir: PathBuf,
    },
    /// Parse and validate a scenario file without running it.
    Validate {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
    },
    /// Run one scenario across an inclusive seed range.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Override the seed in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for events.log, summary.txt, CSVs and the final
    /// waypoint file.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Inclusive range like 1..5, or a single seed.
    #[arg(long)]
    seeds: String,
    /// Parent directory; each seed writes into seed-<n>/ below it.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let scenario = load_scenario(&args.scenario, args.seed)?;
            let output = run_scenario(&scenario)
                .with_context(|| format!("running {}", args.scenario.display()))?;
            let report = write_artifacts(&args.out, &output)?;
            print!("{}", report.render_text());
            println!("artifacts: {}", args.out.display());
            Ok(report.verdicts.pass())
        }
        Command::Report { dir } => {
            let path = dir.join("events.log");
            let log = EventLog::read_path(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let report = MetricsReport::from_log(&log);
            print!("{}", report.render_text());
            Ok(report.verdicts.pass())
        }
        Command::Validate { scenario } => match Scenario::from_path(&scenario) {
            Ok(sc) => {
                println!(
                    "{}: ok ({} nodes, {} segments, {} rsus, {} actors, {:.0} s at seed {})",
                    scenario.display(),
                    sc.network.node_count(),
                    sc.network.segments().len(),
                    sc.rsus.len(),
                    sc.actors.len(),
                    sc.run.duration_us as f64 * 1e-6,
                    sc.run.seed,
                );
                Ok(true)
            }
            Err(e) => {
                eprintln!("{}: {e}", scenario.display());
                Ok(false)
            }
        },
        Command::Sweep(args) => {
            let seeds = parse_seeds(&args.seeds)?;
            let mut all_pass = true;
            for seed in seeds {
                let scenario = load_scenario(&args.scenario, Some(seed))?;
                let output = run_scenario(&scenario)
                    .with_context(|| format!("running seed {seed}"))?;
                let dir = args.out.join(format!("seed-{seed}"));
                let report = write_artifacts(&dir, &output)?;
                let pass = report.verdicts.pass();
                all_pass &= pass;
                println!(
                    "seed {seed}: digest {}, T_max {}, route changes {}, {}",
                    &report.digest[..12],
                    report
                        .t_max_us
                        .map_or("n/a".to_string(), |t| format!("{:.2} ms", t as f64 * 1e-3)),
                    report.route_changes,
                    if pass { "PASS" } else { "FAIL" },
                );
            }
            Ok(all_pass)
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut scenario = Scenario::from_path(path)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        scenario.run.seed = seed;
    }
    Ok(scenario)
}

fn write_artifacts(dir: &Path, output: &RunOutput) -> Result<MetricsReport> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    output.log.write_path(dir.join("events.log"))?;
    let report = MetricsReport::from_log(&output.log);
    fs::write(dir.join("summary.txt"), report.render_text())?;
    fs::write(dir.join("latency_records.csv"), report.latency_csv())?;
    fs::write(dir.join("link_stats.csv"), report.links_csv())?;
    fs::write(dir.join("digest.txt"), format!("{}\n", report.digest))?;
    write_waypoint_file(dir.join("final_route.waypoints"), &output.final_waypoints)?;
    Ok(report)
}

fn parse_seeds(text: &str) -> Result<RangeInclusive<u64>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim().strip_prefix('=').unwrap_or(b.trim()).trim().parse().context("seed range end")?;
        if b < a {
            bail!("empty seed range {text}");
        }
        Ok(a..=b)
    } else {
        let v: u64 = text.parse().context("seed")?;
        Ok(v..=v)
    }
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_ranges_parse() {
        assert_eq!(parse_seeds("1..3").unwrap(), 1..=3);
        assert_eq!(parse_seeds("1..=3").unwrap(), 1..=3);
        assert_eq!(parse_seeds(" 7 ").unwrap(), 7..=7);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x..2").is_err());
    }
}

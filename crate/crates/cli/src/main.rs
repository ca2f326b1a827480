use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use probe_mission::autonomy::{run_batch, run_trial, Outcome, Team};
use probe_mission::io::{load_traces, write_analysis, write_batch, write_trial};
use probe_mission::metrics::{compare_report, ensemble_stats, DEFAULT_GRID_DT};
use probe_mission::Scenario;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_MISSION_FAILED: u8 = 2;
/// Fraction of SUCCESS outcomes a batch needs to exit 0.
const BATCH_PASS_FRACTION: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(name = "probe-mission", version, about = "Probe retrieval and moving-rover landing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trial and write its trajectory, events and manifest.
    Run {
        /// Scenario JSON; the built-in default when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_parser = parse_team)]
        team: Team,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run seeds base_seed..base_seed+trials-1.
    Batch {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_parser = parse_team)]
        team: Team,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two batch directories and write metrics.json, timing.csv and ensemble.csv.
    Analyze {
        team1_dir: PathBuf,
        team2_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID_DT)]
        grid_dt: f64,
    },
}

fn parse_team(s: &str) -> Result<Team, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Team::from_number)
        .ok_or_else(|| format!("team must be 1 or 2 (got {s:?})"))
}

fn load_scenario(path: Option<&Path>) -> Result<(Scenario, String), String> {
    match path {
        None => Ok((Scenario::default_scenario(), "builtin:default".to_string())),
        Some(p) => Scenario::load(p).map(|s| (s, p.display().to_string())).map_err(|e| e.to_string()),
    }
}

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("SIM_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("SIM_THREADS must be a positive integer (got {v:?})")),
        },
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Run { scenario, team, seed, out } => {
            let (scenario, scenario_path) = load_scenario(scenario.as_deref())?;
            let record = run_trial(&scenario, team, seed).map_err(|e| e.to_string())?;
            write_trial(&out, &record, &scenario_path).map_err(|e| e.to_string())?;
            println!("{} {} {:.2}s", record.trial_id, record.outcome.label(), record.duration());
            Ok(if record.outcome == Outcome::Success { EXIT_OK } else { EXIT_MISSION_FAILED })
        }
        Command::Batch { scenario, team, trials, base_seed, out } => {
            let (scenario, scenario_path) = load_scenario(scenario.as_deref())?;
            let seeds: Vec<u64> = (0..trials)
                .map(|i| base_seed.checked_add(i).ok_or("seed range overflows u64"))
                .collect::<Result<_, _>>()?;
            let records = match threads_from_env()? {
                None => run_batch(&scenario, team, &seeds),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| e.to_string())?
                    .install(|| run_batch(&scenario, team, &seeds)),
            }
            .map_err(|e| e.to_string())?;
            write_batch(&out, &records, &scenario_path).map_err(|e| e.to_string())?;
            let successes = records.iter().filter(|r| r.outcome == Outcome::Success).count();
            println!("team {team}: {successes}/{} SUCCESS", records.len());
            let pass = successes as f64 >= BATCH_PASS_FRACTION * records.len() as f64;
            Ok(if pass { EXIT_OK } else { EXIT_MISSION_FAILED })
        }
        Command::Analyze { team1_dir, team2_dir, out, grid_dt } => {
            let team1 = load_traces(&team1_dir).map_err(|e| e.to_string())?;
            let team2 = load_traces(&team2_dir).map_err(|e| e.to_string())?;
            let report = compare_report(&team1, &team2).map_err(|e| e.to_string())?;
            let e1 = ensemble_stats(&team1, grid_dt).map_err(|e| e.to_string())?;
            let e2 = ensemble_stats(&team2, grid_dt).map_err(|e| e.to_string())?;
            write_analysis(&out, &report, [&e1, &e2], grid_dt).map_err(|e| e.to_string())?;
            println!("faster: {:?} more consistent: {:?}", report.faster_team, report.more_consistent_team);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

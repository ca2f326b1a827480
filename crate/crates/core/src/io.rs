//! On-disk artifacts: trajectory CSV, events and manifest JSON, batch layout
//! and analysis outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autonomy::{MissionEvent, Outcome, Team, TrialRecord};
use crate::metrics::{CompareReport, EnsembleStats, TrialTrace};

pub const MANIFEST_VERSION: &str = "1";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const TRAJECTORY_HEADER: [&str; 14] = [
    "trial_id", "team", "seed", "t", "x", "y", "z", "vx", "vy", "vz", "mode", "tracker_px", "tracker_py", "cov_trace",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

/// Manifest of a single trial, or of a batch when `trials` is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub scenario_path: String,
    pub scenario_name: String,
    pub team: Team,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<TrialEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub trial_id: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub dir: String,
}

pub fn trajectory_csv(record: &TrialRecord) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER)?;
    let team = record.team.to_string();
    let seed = record.seed.to_string();
    for row in &record.rows {
        let (px, py, trace) = match row.tracker {
            Some((p, tr)) => (p.x.to_string(), p.y.to_string(), tr.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            record.trial_id.as_str(),
            &team,
            &seed,
            &row.t.to_string(),
            &row.position.x.to_string(),
            &row.position.y.to_string(),
            &row.position.z.to_string(),
            &row.velocity.x.to_string(),
            &row.velocity.y.to_string(),
            &row.velocity.z.to_string(),
            row.mode,
            &px,
            &py,
            &trace,
        ])?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn events_json(record: &TrialRecord) -> String {
    let mut text = serde_json::to_string_pretty(&record.events).expect("events always serialise");
    text.push('\n');
    text
}

/// Write trajectory, events and manifest for one trial into `dir`.
pub fn write_trial(dir: &Path, record: &TrialRecord, scenario_path: &str) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let traj_path = dir.join(TRAJECTORY_FILE);
    let csv = trajectory_csv(record).map_err(|source| IoError::Csv { path: traj_path.clone(), source })?;
    write_file(&traj_path, &csv)?;
    write_file(&dir.join(EVENTS_FILE), events_json(record).as_bytes())?;
    let manifest = RunManifest {
        version: MANIFEST_VERSION.to_string(),
        scenario_path: scenario_path.to_string(),
        scenario_name: record.scenario_name.clone(),
        team: record.team,
        seeds: vec![record.seed],
        output_dir: dir.display().to_string(),
        outcome: Some(record.outcome),
        trials: Vec::new(),
        success_count: None,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn trial_dir_name(index: usize) -> String {
    format!("trial_{index:03}")
}

/// Batch layout: one `trial_NNN` directory per record plus a batch manifest.
/// A single-trial batch uses the plain run layout.
pub fn write_batch(dir: &Path, records: &[TrialRecord], scenario_path: &str) -> Result<(), IoError> {
    let Some(first) = records.first() else {
        return Err(IoError::Format { path: dir.to_path_buf(), message: "empty batch".into() });
    };
    if records.len() == 1 {
        return write_trial(dir, first, scenario_path);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut trials = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let name = trial_dir_name(i);
        write_trial(&dir.join(&name), record, scenario_path)?;
        trials.push(TrialEntry { trial_id: record.trial_id.clone(), seed: record.seed, outcome: record.outcome, dir: name });
    }
    let manifest = RunManifest {
        version: MANIFEST_VERSION.to_string(),
        scenario_path: scenario_path.to_string(),
        scenario_name: first.scenario_name.clone(),
        team: first.team,
        seeds: records.iter().map(|r| r.seed).collect(),
        output_dir: dir.display().to_string(),
        outcome: None,
        success_count: Some(records.iter().filter(|r| r.outcome == Outcome::Success).count()),
        trials,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    trial_id: String,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
}

/// Load one trial directory written by [`write_trial`].
pub fn load_trial(dir: &Path) -> Result<TrialTrace, IoError> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let outcome = manifest.outcome.ok_or_else(|| IoError::Format {
        path: dir.join(MANIFEST_FILE),
        message: "trial manifest has no outcome".into(),
    })?;
    let events: Vec<MissionEvent> = read_json(&dir.join(EVENTS_FILE))?;
    let traj_path = dir.join(TRAJECTORY_FILE);
    let mut reader = csv::Reader::from_path(&traj_path).map_err(|source| IoError::Csv { path: traj_path.clone(), source })?;
    let mut trial_id = String::new();
    let mut times = Vec::new();
    let mut positions = Vec::new();
    for row in reader.deserialize::<TrajectoryRow>() {
        let row = row.map_err(|source| IoError::Csv { path: traj_path.clone(), source })?;
        trial_id = row.trial_id;
        times.push(row.t);
        positions.push([row.x, row.y, row.z]);
    }
    Ok(TrialTrace { trial_id, outcome, events, times, positions })
}

/// Load every trial under `dir`: either a single run directory or a batch
/// of `trial_NNN` subdirectories, in name order.
pub fn load_traces(dir: &Path) -> Result<Vec<TrialTrace>, IoError> {
    if dir.join(TRAJECTORY_FILE).is_file() {
        return Ok(vec![load_trial(dir)?]);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(TRAJECTORY_FILE).is_file())
        .collect();
    subdirs.sort();
    subdirs.iter().map(|p| load_trial(p)).collect()
}

pub fn timing_csv(report: &CompareReport) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["team", "step", "mean_cumulative", "std_cumulative", "mean_duration", "std_duration", "n_complete"])?;
    for (team, r) in [("1", &report.team1), ("2", &report.team2)] {
        for step in 0..3 {
            let c = r.timing.cumulative[step];
            let d = r.timing.durations[step];
            w.write_record([
                team.to_string(),
                (step + 1).to_string(),
                c.mean.to_string(),
                c.std.to_string(),
                d.mean.to_string(),
                d.std.to_string(),
                r.timing.n_complete.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn ensemble_csv(team1: &EnsembleStats, team2: &EnsembleStats) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["team", "t", "mean_x", "mean_y", "mean_z", "std_x", "std_y", "std_z"])?;
    for (team, e) in [("1", team1), ("2", team2)] {
        for ((t, m), s) in e.time_grid.iter().zip(&e.mean_xyz).zip(&e.std_xyz) {
            w.write_record([
                team.to_string(),
                t.to_string(),
                m[0].to_string(),
                m[1].to_string(),
                m[2].to_string(),
                s[0].to_string(),
                s[1].to_string(),
                s[2].to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    #[serde(flatten)]
    report: &'a CompareReport,
    grid_dt: f64,
    ensemble_points: [usize; 2],
}

/// Write `metrics.json`, `timing.csv` and `ensemble.csv` into `dir`.
pub fn write_analysis(
    dir: &Path,
    report: &CompareReport,
    ensembles: [&EnsembleStats; 2],
    grid_dt: f64,
) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(
        &dir.join("metrics.json"),
        &MetricsFile { report, grid_dt, ensemble_points: [ensembles[0].time_grid.len(), ensembles[1].time_grid.len()] },
    )?;
    let p = dir.join("timing.csv");
    write_file(&p, &timing_csv(report).map_err(|source| IoError::Csv { path: p.clone(), source })?)?;
    let p = dir.join("ensemble.csv");
    let bytes = ensemble_csv(ensembles[0], ensembles[1]).map_err(|source| IoError::Csv { path: p.clone(), source })?;
    write_file(&p, &bytes)
}

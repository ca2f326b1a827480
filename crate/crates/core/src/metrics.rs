//! Step timing, ensemble trajectory statistics and the two-team comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autonomy::{EventKind, MissionEvent, Outcome, TrialRecord};

pub const DEFAULT_GRID_DT: f64 = 0.5;
/// Samples per step when positions are compared on normalised step time.
pub const STEP_PHASE_SAMPLES: usize = 50;
pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("insufficient trials: need at least {needed}, got {got}")]
    InsufficientTrials { needed: usize, got: usize },
    #[error("grid spacing must be positive (got {0})")]
    InvalidGrid(f64),
}

/// Vehicle trajectory plus the events and outcome of one trial; all the
/// analysis needs, whether it comes from memory or from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub trial_id: String,
    pub outcome: Outcome,
    pub events: Vec<MissionEvent>,
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
}

impl From<&TrialRecord> for TrialTrace {
    fn from(r: &TrialRecord) -> Self {
        Self {
            trial_id: r.trial_id.clone(),
            outcome: r.outcome,
            events: r.events.clone(),
            times: r.rows.iter().map(|row| row.t).collect(),
            positions: r.rows.iter().map(|row| [row.position.x, row.position.y, row.position.z]).collect(),
        }
    }
}

impl TrialTrace {
    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Linear interpolation at `t`, holding the end values outside the log.
    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let n = self.times.len();
        assert!(n > 0, "empty trajectory");
        if t <= self.times[0] {
            return self.positions[0];
        }
        if t >= self.times[n - 1] {
            return self.positions[n - 1];
        }
        // first index with time > t
        let hi = self.times.partition_point(|&x| x <= t);
        let lo = hi - 1;
        if self.times[lo] == t {
            return self.positions[lo];
        }
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.positions[lo], self.positions[hi]);
        std::array::from_fn(|i| a[i] + (b[i] - a[i]) * w)
    }
}

/// Cumulative completion times of the three mission steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepTiming {
    pub step1_end: Option<f64>,
    pub step2_end: Option<f64>,
    pub step3_end: Option<f64>,
}

impl StepTiming {
    pub fn ends(&self) -> [Option<f64>; 3] {
        [self.step1_end, self.step2_end, self.step3_end]
    }

    pub fn complete(&self) -> Option<[f64; 3]> {
        Some([self.step1_end?, self.step2_end?, self.step3_end?])
    }

    /// Per-step durations, when all three steps finished.
    pub fn durations(&self) -> Option<[f64; 3]> {
        let [a, b, c] = self.complete()?;
        Some([a, b - a, c - b])
    }
}

pub fn step_times_from_events(events: &[MissionEvent]) -> StepTiming {
    let time_of = |kind| events.iter().find(|e| e.kind == kind).map(|e| e.t);
    StepTiming {
        step1_end: time_of(EventKind::Attach),
        step2_end: time_of(EventKind::Detach),
        step3_end: time_of(EventKind::Touchdown),
    }
}

pub fn step_times(record: &TrialRecord) -> StepTiming {
    step_times_from_events(&record.events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub n_complete: usize,
    /// Cumulative completion time per step.
    pub cumulative: [MeanStd; 3],
    pub durations: [MeanStd; 3],
}

/// Sample mean and (n−1) standard deviation. Computed on offsets from the
/// first value so identical inputs give exactly zero spread.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let shift = values[0];
    let mean_d = values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - shift - mean_d).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    MeanStd { mean: shift + mean_d, std }
}

pub fn timing_summary(timings: &[StepTiming]) -> Result<TimingSummary, MetricsError> {
    let complete: Vec<[f64; 3]> = timings.iter().filter_map(StepTiming::complete).collect();
    if complete.len() < 2 {
        return Err(MetricsError::InsufficientTrials { needed: 2, got: complete.len() });
    }
    let durations: Vec<[f64; 3]> = timings.iter().filter_map(StepTiming::durations).collect();
    let column = |rows: &[[f64; 3]], i: usize| {
        let mut v: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        // permutation invariance down to the last bit
        v.sort_by(f64::total_cmp);
        mean_std(&v)
    };
    Ok(TimingSummary {
        n_complete: complete.len(),
        cumulative: std::array::from_fn(|i| column(&complete, i)),
        durations: std::array::from_fn(|i| column(&durations, i)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub time_grid: Vec<f64>,
    pub mean_xyz: Vec<[f64; 3]>,
    pub std_xyz: Vec<[f64; 3]>,
    pub n_trials: usize,
}

fn per_axis_stats(samples: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for axis in 0..3 {
        let v: Vec<f64> = samples.iter().map(|p| p[axis]).collect();
        let s = mean_std(&v);
        mean[axis] = s.mean;
        std[axis] = s.std;
    }
    (mean, std)
}

/// Resample every trajectory onto `0, grid_dt, …` up to the longest trial,
/// holding final positions, and take per-axis mean and sample std.
pub fn ensemble_stats(traces: &[TrialTrace], grid_dt: f64) -> Result<EnsembleStats, MetricsError> {
    if !(grid_dt > 0.0) {
        return Err(MetricsError::InvalidGrid(grid_dt));
    }
    let traces: Vec<&TrialTrace> = traces.iter().filter(|t| !t.times.is_empty()).collect();
    if traces.len() < 2 {
        return Err(MetricsError::InsufficientTrials { needed: 2, got: traces.len() });
    }
    let max_duration = traces.iter().map(|t| t.duration()).fold(0.0, f64::max);
    let n = (max_duration / grid_dt + 1e-9).floor() as usize + 1;
    let time_grid: Vec<f64> = (0..n).map(|i| i as f64 * grid_dt).collect();
    let mut mean_xyz = Vec::with_capacity(n);
    let mut std_xyz = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(traces.len());
    for &g in &time_grid {
        samples.clear();
        samples.extend(traces.iter().map(|t| t.position_at(g)));
        let (m, s) = per_axis_stats(&samples);
        mean_xyz.push(m);
        std_xyz.push(s);
    }
    Ok(EnsembleStats { time_grid, mean_xyz, std_xyz, n_trials: traces.len() })
}

pub fn ensemble_stats_of_records(records: &[TrialRecord], grid_dt: f64) -> Result<EnsembleStats, MetricsError> {
    let traces: Vec<TrialTrace> = records.iter().map(TrialTrace::from).collect();
    ensemble_stats(&traces, grid_dt)
}

/// Mean per-axis positional std within each step, with each trial's step
/// stretched onto a common [0, 1] time base. Uses complete trials only.
pub fn step_positional_std(traces: &[TrialTrace]) -> Result<[[f64; 3]; 3], MetricsError> {
    let complete: Vec<(&TrialTrace, [f64; 3])> = traces
        .iter()
        .filter_map(|t| step_times_from_events(&t.events).complete().map(|ends| (t, ends)))
        .collect();
    if complete.len() < 2 {
        return Err(MetricsError::InsufficientTrials { needed: 2, got: complete.len() });
    }
    let mut out = [[0.0; 3]; 3];
    for (step, slot) in out.iter_mut().enumerate() {
        let mut acc = [0.0; 3];
        for k in 0..STEP_PHASE_SAMPLES {
            let tau = k as f64 / (STEP_PHASE_SAMPLES - 1) as f64;
            let samples: Vec<[f64; 3]> = complete
                .iter()
                .map(|(trace, ends)| {
                    let start = if step == 0 { 0.0 } else { ends[step - 1] };
                    trace.position_at(start + tau * (ends[step] - start))
                })
                .collect();
            let (_, s) = per_axis_stats(&samples);
            for axis in 0..3 {
                acc[axis] += s[axis];
            }
        }
        *slot = acc.map(|a| a / STEP_PHASE_SAMPLES as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Comparison {
    Team1,
    Team2,
    Equal,
}

impl Comparison {
    /// The team with the lower value wins; exact ties are EQUAL.
    pub fn lower(team1: f64, team2: f64) -> Self {
        if team1 < team2 {
            Comparison::Team1
        } else if team2 < team1 {
            Comparison::Team2
        } else {
            Comparison::Equal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamReport {
    pub n_trials: usize,
    pub n_success: usize,
    pub success_rate: f64,
    pub timing: TimingSummary,
    /// Per step, per axis mean positional std on normalised step time.
    pub step_std: [[f64; 3]; 3],
    /// Per step average over the three axes.
    pub step_std_mean: [f64; 3],
    /// Mean per-axis spread in step 3 exceeds that in step 1.
    pub std_increases_in_step3: bool,
}

pub fn team_report(traces: &[TrialTrace]) -> Result<TeamReport, MetricsError> {
    if traces.is_empty() {
        return Err(MetricsError::InsufficientTrials { needed: 2, got: 0 });
    }
    let timings: Vec<StepTiming> = traces.iter().map(|t| step_times_from_events(&t.events)).collect();
    let timing = timing_summary(&timings)?;
    let step_std = step_positional_std(traces)?;
    let step_std_mean = step_std.map(|s| s.iter().sum::<f64>() / 3.0);
    let n_success = traces.iter().filter(|t| t.outcome == Outcome::Success).count();
    Ok(TeamReport {
        n_trials: traces.len(),
        n_success,
        success_rate: n_success as f64 / traces.len() as f64,
        timing,
        step_std,
        step_std_mean,
        std_increases_in_step3: step_std_mean[2] > step_std_mean[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub version: String,
    pub team1: TeamReport,
    pub team2: TeamReport,
    /// Lower mean cumulative time per step.
    pub faster_team: [Comparison; 3],
    /// Lower mean positional std per step.
    pub more_consistent_team: [Comparison; 3],
}

pub fn compare_report(team1: &[TrialTrace], team2: &[TrialTrace]) -> Result<CompareReport, MetricsError> {
    let r1 = team_report(team1)?;
    let r2 = team_report(team2)?;
    let faster_team = std::array::from_fn(|i| Comparison::lower(r1.timing.cumulative[i].mean, r2.timing.cumulative[i].mean));
    let more_consistent_team = std::array::from_fn(|i| Comparison::lower(r1.step_std_mean[i], r2.step_std_mean[i]));
    Ok(CompareReport { version: REPORT_VERSION.to_string(), team1: r1, team2: r2, faster_team, more_consistent_team })
}

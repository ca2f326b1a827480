//! Mission executives for both teams and the fixed-timestep trial loop.

mod team1;
mod team2;
mod trial;

pub use team1::{Team1Executive, Team1Mode};
pub use team2::{schedule_altitude, Team2Executive, Team2Phase};
pub use trial::{run_batch, run_trial, sense, Outcome, TrialRecord, TrialRow};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlError;
use crate::estimation::EstimationError;
use crate::scenario::ScenarioError;
use crate::sensing::{Detection, SonarReading, SONAR_COUNT};
use crate::vehicle::VehicleError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum AutonomyError {
    #[error("invalid transition from {from} to {to}")]
    InvalidTransition { from: &'static str, to: &'static str },
    #[error("scenario invalid: {0}")]
    ScenarioInvalid(#[from] ScenarioError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Team {
    One,
    Two,
}

impl From<Team> for u8 {
    fn from(team: Team) -> u8 {
        team.number()
    }
}

impl TryFrom<u8> for Team {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        Team::from_number(n).ok_or_else(|| format!("team must be 1 or 2 (got {n})"))
    }
}

impl Team {
    pub fn number(self) -> u8 {
        match self {
            Team::One => 1,
            Team::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Team::One),
            2 => Some(Team::Two),
            _ => None,
        }
    }
}

impl std::fmt::Display for Team {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Attach,
    Detach,
    Touchdown,
    TrackingLost,
    TrackingRecovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub kind: EventKind,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MissionEvent {
    pub fn new(kind: EventKind, t: f64, position: Vector3<f64>) -> Self {
        Self { kind, t, x: position.x, y: position.y, z: position.z }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Everything the executives may observe in one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    /// Red-disc probe detector; silent while the probe is carried.
    pub probe: Option<Detection>,
    /// Rover detector keyed on the red trunk.
    pub trunk: Option<Detection>,
    /// Fiducial marker at the trunk centre.
    pub fiducial: Option<Detection>,
    pub sonar: [SonarReading; SONAR_COUNT],
    pub rover_gps: Vector3<f64>,
    pub odometry: Option<Vector3<f64>>,
}

/// Output of one executive tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutput {
    /// Final command, before the vehicle's limiter.
    pub command: Vector3<f64>,
    /// Command before any terrain-avoidance override.
    pub base_command: Vector3<f64>,
    pub avoidance_triggered: bool,
    pub events: Vec<MissionEvent>,
}

impl StepOutput {
    pub fn command(command: Vector3<f64>) -> Self {
        Self { command, base_command: command, ..Self::default() }
    }
}

/// Angle between the vehicle-to-probe line of sight and straight down.
pub fn inclination(vehicle_position: Vector3<f64>, probe_position: Vector3<f64>) -> f64 {
    let d = probe_position - vehicle_position;
    d.xy().norm().atan2(-d.z)
}

/// Docking gate: closer than `max_distance` and within `max_inclination` of
/// vertical, vehicle above the probe.
pub fn docking_allowed(
    vehicle_position: Vector3<f64>,
    probe_position: Vector3<f64>,
    max_distance: f64,
    max_inclination: f64,
) -> bool {
    let d = probe_position - vehicle_position;
    d.z < 0.0 && d.norm() < max_distance && inclination(vehicle_position, probe_position) < max_inclination
}

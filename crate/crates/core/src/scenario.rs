//! Scenario files: everything a trial needs besides the seed.
//!
//! Scenarios are JSON. Every section has defaults, so a file only needs to
//! carry what differs from [`Scenario::default`]. Team 1 altitudes are above
//! the terrain under the vehicle; Team 2 search and transit altitudes are
//! world `z`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::PidGains;
use crate::estimation::KalmanParams;
use crate::sensing::CameraModel;
use crate::vehicle::VehicleLimits;
use crate::world::{FeaturePatch, Hill, RoverPath, Terrain, DEFAULT_PROBE_CARRY_OFFSET};

pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../scenarios/default.json");
pub const LOW_FEATURE_SCENARIO_JSON: &str = include_str!("../scenarios/low_feature.json");
pub const HILL_FIELD_SCENARIO_JSON: &str = include_str!("../scenarios/hill_field.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub spawn: [f64; 2],
    /// Radius of the red disc seen by the camera.
    pub radius: f64,
    pub carry_offset: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { spawn: [35.0, 25.0], radius: 0.25, carry_offset: DEFAULT_PROBE_CARRY_OFFSET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleConfig {
    pub start: [f64; 3],
    pub limits: VehicleLimits,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self { start: [20.0, 0.0, 0.5], limits: VehicleLimits::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub camera: CameraModel,
    pub sonar_max_range: f64,
    pub gps_sigma: f64,
    pub odometry_sigma: f64,
    pub density_threshold: f64,
    /// Radius of the fiducial marker on the trunk.
    pub fiducial_radius: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            sonar_max_range: 10.0,
            gps_sigma: 0.5,
            odometry_sigma: 0.1,
            density_threshold: 0.3,
            fiducial_radius: 0.2,
        }
    }
}

/// Parameters shared by both executives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub docking_max_distance: f64,
    pub docking_max_inclination: f64,
    pub setpoint_gain: f64,
    pub centering_gain: f64,
    pub descent_rate: f64,
    pub slow_descent_rate: f64,
    /// Depth below which descents switch to `slow_descent_rate`.
    pub slow_descent_below: f64,
    pub waypoint_tolerance: f64,
    /// Time to hold position after losing a target before climbing.
    pub reacquire_hold: f64,
    pub reacquire_climb: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            docking_max_distance: 0.6,
            docking_max_inclination: 30f64.to_radians(),
            setpoint_gain: 0.5,
            centering_gain: 0.5,
            descent_rate: 1.0,
            slow_descent_rate: 0.3,
            slow_descent_below: 3.0,
            waypoint_tolerance: 1.5,
            reacquire_hold: 2.0,
            reacquire_climb: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Team1Config {
    /// `[xmin, ymin, xmax, ymax]`
    pub search_bounds: [f64; 4],
    pub search_spacing: f64,
    pub search_altitude: f64,
    pub cruise_altitude: f64,
    pub drop_altitude: f64,
    pub hover_time: f64,
    /// Height above the trunk held while closing on the rover.
    pub approach_altitude: f64,
    /// Horizontal distance to the estimate under which descent may begin.
    pub approach_radius: f64,
    pub fiducial_engage_altitude: f64,
    pub touchdown_altitude: f64,
    pub touchdown_offset: f64,
    /// Interval between rover GPS fixes fused by the tracker.
    pub gps_fuse_period: f64,
    /// Tracking must stay lost this long in ROVER mode before the trial is
    /// declared LOST.
    pub lost_outcome_after: f64,
}

impl Default for Team1Config {
    fn default() -> Self {
        Self {
            search_bounds: [10.0, 0.0, 60.0, 50.0],
            search_spacing: 10.0,
            search_altitude: 10.0,
            cruise_altitude: 10.0,
            drop_altitude: 1.0,
            hover_time: 1.0,
            approach_altitude: 8.0,
            approach_radius: 2.0,
            fiducial_engage_altitude: 5.0,
            touchdown_altitude: 0.15,
            touchdown_offset: 0.3,
            gps_fuse_period: 30.0,
            lost_outcome_after: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Team2Config {
    pub spiral_center: [f64; 2],
    pub spiral_step: f64,
    pub spiral_max_radius: f64,
    pub search_altitude: f64,
    /// Height above the probe the docking setpoint aims for.
    pub dock_hover_height: f64,
    /// Inclination under which the docking setpoint starts to descend.
    pub dock_descent_inclination: f64,
    pub transit_altitude: f64,
    pub drop_altitude: f64,
    pub deploy_climb: f64,
    pub trigger_range: f64,
    pub climb_rate: f64,
    pub schedule_far_range: f64,
    pub schedule_far_altitude: f64,
    pub schedule_near_altitude: f64,
    /// Lowest height above the trunk allowed without a visual confirmation.
    pub confirm_altitude: f64,
    pub land_altitude: f64,
    /// Time constant of the low-pass applied to rover GPS fixes; 0 disables.
    pub gps_filter_tau: f64,
    pub rover_velocity_feedforward: bool,
}

impl Default for Team2Config {
    fn default() -> Self {
        Self {
            spiral_center: [20.0, 10.0],
            spiral_step: 10.0,
            spiral_max_radius: 40.0,
            search_altitude: 10.0,
            dock_hover_height: 0.45,
            dock_descent_inclination: 20f64.to_radians(),
            transit_altitude: 8.0,
            drop_altitude: 1.0,
            deploy_climb: 3.0,
            trigger_range: 4.0,
            climb_rate: 1.0,
            schedule_far_range: 20.0,
            schedule_far_altitude: 5.0,
            schedule_near_altitude: 0.5,
            confirm_altitude: 2.0,
            land_altitude: 0.3,
            gps_filter_tau: 1.0,
            rover_velocity_feedforward: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub dt: f64,
    pub timeout: f64,
    pub terrain: Terrain,
    pub rover: RoverPath,
    pub probe: ProbeConfig,
    pub drop_zone: [f64; 2],
    pub vehicle: VehicleConfig,
    pub sensors: SensorConfig,
    pub kalman: KalmanParams,
    pub pid: PidGains,
    pub mission: MissionConfig,
    pub team1: Team1Config,
    pub team2: Team2Config,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            dt: 0.05,
            timeout: 600.0,
            terrain: Terrain {
                hills: vec![
                    Hill { center_x: 75.0, center_y: 70.0, amplitude: 4.0, sigma: 12.0 },
                    Hill { center_x: -100.0, center_y: -70.0, amplitude: 5.0, sigma: 15.0 },
                ],
                base_height: 0.0,
                feature_patches: Vec::new(),
                default_density: 0.8,
            },
            rover: RoverPath {
                waypoints: vec![[-50.0, 50.0], [-50.0, -30.0], [30.0, -30.0], [30.0, -110.0], [110.0, -110.0]],
                speed: 0.8,
                start_time: 30.0,
                trunk_height: 1.5,
                trunk_half_extent: 0.5,
            },
            probe: ProbeConfig::default(),
            drop_zone: [-30.0, 60.0],
            vehicle: VehicleConfig::default(),
            sensors: SensorConfig::default(),
            kalman: KalmanParams::default(),
            pid: PidGains::default(),
            mission: MissionConfig::default(),
            team1: Team1Config::default(),
            team2: Team2Config::default(),
        }
    }
}

impl Scenario {
    /// The shipped default scenario.
    pub fn default_scenario() -> Self {
        Self::from_json_str(DEFAULT_SCENARIO_JSON).expect("shipped default scenario is valid")
    }

    /// Odometry-hostile terrain around the rover's route.
    pub fn low_feature() -> Self {
        Self::from_json_str(LOW_FEATURE_SCENARIO_JSON).expect("shipped low-feature scenario is valid")
    }

    /// Hills across Team 2's transit leg.
    pub fn hill_field() -> Self {
        Self::from_json_str(HILL_FIELD_SCENARIO_JSON).expect("shipped hill-field scenario is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                field,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |field: &str, v: f64| -> Result<(), ScenarioError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be > 0 (got {v})")))
            }
        };
        let non_negative = |field: &str, v: f64| -> Result<(), ScenarioError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be >= 0 (got {v})")))
            }
        };

        positive("dt", self.dt)?;
        positive("timeout", self.timeout)?;
        self.terrain.validate().map_err(|e| invalid("terrain", e.to_string()))?;
        self.rover.validate().map_err(|e| invalid("rover", e.to_string()))?;
        positive("probe.radius", self.probe.radius)?;
        self.vehicle
            .limits
            .validate()
            .map_err(|m| invalid("vehicle.limits", m))?;
        self.sensors
            .camera
            .validate()
            .map_err(|m| invalid("sensors.camera", m))?;
        positive("sensors.sonar_max_range", self.sensors.sonar_max_range)?;
        non_negative("sensors.gps_sigma", self.sensors.gps_sigma)?;
        non_negative("sensors.odometry_sigma", self.sensors.odometry_sigma)?;
        if !(0.0..=1.0).contains(&self.sensors.density_threshold) {
            return Err(invalid("sensors.density_threshold", "must lie in [0, 1]"));
        }
        positive("sensors.fiducial_radius", self.sensors.fiducial_radius)?;
        self.kalman.validate().map_err(|m| invalid("kalman", m))?;
        positive("pid.time_interval", self.pid.time_interval)?;

        let m = &self.mission;
        positive("mission.docking_max_distance", m.docking_max_distance)?;
        positive("mission.docking_max_inclination", m.docking_max_inclination)?;
        positive("mission.setpoint_gain", m.setpoint_gain)?;
        non_negative("mission.centering_gain", m.centering_gain)?;
        positive("mission.descent_rate", m.descent_rate)?;
        positive("mission.slow_descent_rate", m.slow_descent_rate)?;
        non_negative("mission.slow_descent_below", m.slow_descent_below)?;
        positive("mission.waypoint_tolerance", m.waypoint_tolerance)?;
        non_negative("mission.reacquire_hold", m.reacquire_hold)?;
        non_negative("mission.reacquire_climb", m.reacquire_climb)?;

        let t1 = &self.team1;
        let [xmin, ymin, xmax, ymax] = t1.search_bounds;
        if !(xmax > xmin && ymax > ymin) {
            return Err(invalid("team1.search_bounds", "need xmax > xmin and ymax > ymin"));
        }
        positive("team1.search_spacing", t1.search_spacing)?;
        positive("team1.search_altitude", t1.search_altitude)?;
        positive("team1.cruise_altitude", t1.cruise_altitude)?;
        positive("team1.drop_altitude", t1.drop_altitude)?;
        non_negative("team1.hover_time", t1.hover_time)?;
        positive("team1.approach_altitude", t1.approach_altitude)?;
        positive("team1.approach_radius", t1.approach_radius)?;
        positive("team1.fiducial_engage_altitude", t1.fiducial_engage_altitude)?;
        positive("team1.touchdown_altitude", t1.touchdown_altitude)?;
        positive("team1.touchdown_offset", t1.touchdown_offset)?;
        positive("team1.gps_fuse_period", t1.gps_fuse_period)?;
        positive("team1.lost_outcome_after", t1.lost_outcome_after)?;

        let t2 = &self.team2;
        positive("team2.spiral_step", t2.spiral_step)?;
        non_negative("team2.spiral_max_radius", t2.spiral_max_radius)?;
        positive("team2.dock_hover_height", t2.dock_hover_height)?;
        positive("team2.dock_descent_inclination", t2.dock_descent_inclination)?;
        positive("team2.drop_altitude", t2.drop_altitude)?;
        non_negative("team2.deploy_climb", t2.deploy_climb)?;
        positive("team2.trigger_range", t2.trigger_range)?;
        positive("team2.climb_rate", t2.climb_rate)?;
        positive("team2.schedule_far_range", t2.schedule_far_range)?;
        non_negative("team2.schedule_near_altitude", t2.schedule_near_altitude)?;
        if !(t2.schedule_far_altitude >= t2.schedule_near_altitude) {
            return Err(invalid(
                "team2.schedule_far_altitude",
                "must be >= team2.schedule_near_altitude",
            ));
        }
        non_negative("team2.confirm_altitude", t2.confirm_altitude)?;
        positive("team2.land_altitude", t2.land_altitude)?;
        non_negative("team2.gps_filter_tau", t2.gps_filter_tau)?;
        Ok(())
    }

    /// Ticks between tracker GPS fusions for Team 1 (at least one).
    pub fn gps_fuse_ticks(&self) -> u64 {
        ((self.team1.gps_fuse_period / self.dt).round() as u64).max(1)
    }

    pub fn timeout_ticks(&self) -> u64 {
        (self.timeout / self.dt).round() as u64
    }

    /// Terrain with an extra feature patch; used to build variants in tests.
    pub fn with_patch(mut self, patch: FeaturePatch) -> Self {
        self.terrain.feature_patches.push(patch);
        self
    }
}

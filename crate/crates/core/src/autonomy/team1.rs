//! Team 1: master controller cycling PROBE → DROP → ROVER → END.
//!
//! Lawnmower search with terrain-relative altitude, velocity-controlled
//! descent onto the probe, a fixed drop point, then pursuit of the tracked
//! rover with fiducial-refined landing.

use nalgebra::{Vector2, Vector3};

use super::{docking_allowed, AutonomyError, EventKind, MissionEvent, SensorFrame, StepOutput};
use crate::control::{lawnmower_waypoints, servo_descent_command, SearchPattern};
use crate::estimation::RoverTrackState;
use crate::scenario::Scenario;
use crate::sensing::Detection;
use crate::vehicle::{position_setpoint_command, velocity_limiter, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Team1Mode {
    Probe,
    Drop,
    Rover,
    End,
}

impl Team1Mode {
    pub fn label(self) -> &'static str {
        match self {
            Team1Mode::Probe => "PROBE",
            Team1Mode::Drop => "DROP",
            Team1Mode::Rover => "ROVER",
            Team1Mode::End => "END",
        }
    }

    fn successor(self) -> Option<Self> {
        match self {
            Team1Mode::Probe => Some(Team1Mode::Drop),
            Team1Mode::Drop => Some(Team1Mode::Rover),
            Team1Mode::Rover => Some(Team1Mode::End),
            Team1Mode::End => None,
        }
    }

    /// Move to `to`, which must be the immediate successor.
    pub fn advance(self, to: Self) -> Result<Self, AutonomyError> {
        if self.successor() == Some(to) {
            Ok(to)
        } else {
            Err(AutonomyError::InvalidTransition { from: self.label(), to: to.label() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    ToSearch,
    Searching,
    Hover { until: f64 },
    ProbeDescent,
    ProbeReacquire { lost_at: f64, climb_to: Option<f64> },
    ToDrop,
    DropDescent,
    Approach,
    RoverDescent,
    Fiducial,
    FiducialReacquire { lost_at: f64, climb_to: Option<f64> },
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Team1Executive {
    mode: Team1Mode,
    stage: Stage,
    pattern: SearchPattern,
    lost_reported: bool,
}

impl Team1Executive {
    pub fn new(scenario: &Scenario) -> Result<Self, AutonomyError> {
        let t1 = &scenario.team1;
        let pattern = lawnmower_waypoints(t1.search_bounds, t1.search_spacing, t1.search_altitude)?;
        Ok(Self { mode: Team1Mode::Probe, stage: Stage::ToSearch, pattern, lost_reported: false })
    }

    pub fn mode(&self) -> Team1Mode {
        self.mode
    }

    pub fn is_tracking_lost_hover(&self) -> bool {
        self.lost_reported
    }

    fn transition(&mut self, to: Team1Mode, stage: Stage) -> Result<(), AutonomyError> {
        self.mode = self.mode.advance(to)?;
        self.stage = stage;
        Ok(())
    }

    pub fn step(
        &mut self,
        frame: &SensorFrame,
        tracker: &RoverTrackState,
        vehicle: &VehicleState,
        scenario: &Scenario,
    ) -> Result<StepOutput, AutonomyError> {
        match self.mode {
            Team1Mode::Probe => self.probe_step(frame, vehicle, scenario),
            Team1Mode::Drop => self.drop_step(frame, vehicle, scenario),
            Team1Mode::Rover => self.rover_step(frame, tracker, vehicle, scenario),
            Team1Mode::End => Ok(StepOutput::command(Vector3::zeros())),
        }
    }

    fn probe_step(
        &mut self,
        frame: &SensorFrame,
        vehicle: &VehicleState,
        scenario: &Scenario,
    ) -> Result<StepOutput, AutonomyError> {
        let m = &scenario.mission;
        let t1 = &scenario.team1;
        let camera = &scenario.sensors.camera;
        let limits = &scenario.vehicle.limits;
        let t = frame.t;

        match self.stage {
            Stage::ToSearch | Stage::Searching => {
                if frame.probe.is_some() {
                    self.stage = Stage::Hover { until: t + t1.hover_time };
                    return Ok(StepOutput::command(Vector3::zeros()));
                }
                let target = match self.pattern.current() {
                    Some(wp) => wp,
                    None => {
                        self.pattern.restart();
                        self.pattern.current().expect("lawnmower pattern is never empty")
                    }
                };
                if horizontal_distance(vehicle, target.xy()) < m.waypoint_tolerance {
                    self.stage = Stage::Searching;
                    self.pattern.advance();
                }
                let setpoint = agl_setpoint(scenario, vehicle, target.xy(), t1.search_altitude);
                Ok(StepOutput::command(position_setpoint_command(vehicle, setpoint, m.setpoint_gain, limits)))
            }
            Stage::Hover { until } => {
                if t >= until {
                    self.stage = Stage::ProbeDescent;
                }
                Ok(StepOutput::command(Vector3::zeros()))
            }
            Stage::ProbeDescent | Stage::ProbeReacquire { .. } => match frame.probe {
                Some(det) => {
                    let probe_estimate = vehicle.position + det.relative_position(camera);
                    if docking_allowed(
                        vehicle.position,
                        probe_estimate,
                        m.docking_max_distance,
                        m.docking_max_inclination,
                    ) {
                        self.transition(Team1Mode::Drop, Stage::ToDrop)?;
                        let mut out = StepOutput::command(Vector3::zeros());
                        out.events.push(MissionEvent::new(EventKind::Attach, t, vehicle.position));
                        return Ok(out);
                    }
                    self.stage = Stage::ProbeDescent;
                    Ok(StepOutput::command(descend_on(&det, scenario, Vector2::zeros())))
                }
                None => {
                    let (stage, cmd) = reacquire(self.stage, t, vehicle, scenario, Vector2::zeros());
                    self.stage = match stage {
                        Stage::ProbeDescent => Stage::ProbeReacquire { lost_at: t, climb_to: None },
                        other => other,
                    };
                    Ok(StepOutput::command(cmd))
                }
            },
            _ => unreachable!("stage {:?} outside PROBE", self.stage),
        }
    }

    fn drop_step(
        &mut self,
        frame: &SensorFrame,
        vehicle: &VehicleState,
        scenario: &Scenario,
    ) -> Result<StepOutput, AutonomyError> {
        let m = &scenario.mission;
        let t1 = &scenario.team1;
        let limits = &scenario.vehicle.limits;
        let drop = Vector2::new(scenario.drop_zone[0], scenario.drop_zone[1]);

        match self.stage {
            Stage::ToDrop => {
                if horizontal_distance(vehicle, drop) < 1.0 {
                    self.stage = Stage::DropDescent;
                }
                let setpoint = agl_setpoint(scenario, vehicle, drop, t1.cruise_altitude);
                Ok(StepOutput::command(position_setpoint_command(vehicle, setpoint, m.setpoint_gain, limits)))
            }
            Stage::DropDescent => {
                let setpoint = agl_setpoint(scenario, vehicle, drop, t1.drop_altitude);
                let settled = (vehicle.position.z - setpoint.z).abs() < 0.1
                    && horizontal_distance(vehicle, drop) < 1.0
                    && vehicle.velocity.norm() < 0.3;
                if settled {
                    self.transition(Team1Mode::Rover, Stage::Approach)?;
                    let mut out = StepOutput::command(Vector3::zeros());
                    out.events.push(MissionEvent::new(EventKind::Detach, frame.t, vehicle.position));
                    return Ok(out);
                }
                Ok(StepOutput::command(position_setpoint_command(vehicle, setpoint, m.setpoint_gain, limits)))
            }
            _ => unreachable!("stage {:?} outside DROP", self.stage),
        }
    }

    fn rover_step(
        &mut self,
        frame: &SensorFrame,
        tracker: &RoverTrackState,
        vehicle: &VehicleState,
        scenario: &Scenario,
    ) -> Result<StepOutput, AutonomyError> {
        let m = &scenario.mission;
        let t1 = &scenario.team1;
        let camera = &scenario.sensors.camera;
        let limits = &scenario.vehicle.limits;
        let t = frame.t;
        let mut out = StepOutput::default();

        if tracker.tracking_lost {
            if !self.lost_reported {
                self.lost_reported = true;
                out.events.push(MissionEvent::new(EventKind::TrackingLost, t, vehicle.position));
            }
            return Ok(out);
        }
        if self.lost_reported {
            self.lost_reported = false;
            self.stage = Stage::Approach;
            out.events.push(MissionEvent::new(EventKind::TrackingRecovered, t, vehicle.position));
        }

        let estimate = tracker.position();
        let rover_velocity = tracker.velocity();
        let trunk_z = scenario.terrain.height(estimate.x, estimate.y) + scenario.rover.trunk_height;

        let approach = |vehicle: &VehicleState| {
            let setpoint = Vector3::new(estimate.x, estimate.y, trunk_z + t1.approach_altitude);
            let feedforward = Vector3::new(rover_velocity.x, rover_velocity.y, 0.0);
            velocity_limiter(feedforward + (setpoint - vehicle.position) * m.setpoint_gain, limits)
        };

        out.command = match self.stage {
            Stage::Approach => {
                if frame.trunk.is_some() && horizontal_distance(vehicle, estimate) < t1.approach_radius {
                    self.stage = Stage::RoverDescent;
                }
                approach(vehicle)
            }
            Stage::RoverDescent => {
                if let Some(fid) = frame.fiducial.filter(|f| f.depth(camera) < t1.fiducial_engage_altitude) {
                    self.stage = Stage::Fiducial;
                    descend_on(&fid, scenario, rover_velocity)
                } else if let Some(det) = frame.trunk {
                    descend_on(&det, scenario, rover_velocity)
                } else {
                    self.stage = Stage::Approach;
                    approach(vehicle)
                }
            }
            Stage::Fiducial | Stage::FiducialReacquire { .. } => match frame.fiducial {
                Some(fid) => {
                    let rel = fid.relative_position(camera);
                    if -rel.z < t1.touchdown_altitude && rel.xy().norm() < t1.touchdown_offset {
                        self.transition(Team1Mode::End, Stage::Finished)?;
                        out.events.push(MissionEvent::new(EventKind::Touchdown, t, vehicle.position));
                        out.base_command = Vector3::zeros();
                        return Ok(out);
                    }
                    self.stage = Stage::Fiducial;
                    descend_on(&fid, scenario, rover_velocity)
                }
                None => {
                    let (stage, cmd) = reacquire(self.stage, t, vehicle, scenario, rover_velocity);
                    self.stage = match stage {
                        Stage::Fiducial => Stage::FiducialReacquire { lost_at: t, climb_to: None },
                        Stage::Approach => Stage::Approach,
                        other => other,
                    };
                    cmd
                }
            },
            _ => unreachable!("stage {:?} outside ROVER", self.stage),
        };
        out.base_command = out.command;
        Ok(out)
    }
}

fn horizontal_distance(vehicle: &VehicleState, xy: Vector2<f64>) -> f64 {
    (vehicle.position.xy() - xy).norm()
}

/// Setpoint at `altitude` above the terrain under the vehicle.
fn agl_setpoint(scenario: &Scenario, vehicle: &VehicleState, xy: Vector2<f64>, altitude: f64) -> Vector3<f64> {
    let ground = scenario.terrain.height(vehicle.position.x, vehicle.position.y);
    Vector3::new(xy.x, xy.y, ground + altitude)
}

/// Servo descent on a detection, riding along with `carrier_velocity`.
fn descend_on(det: &Detection, scenario: &Scenario, carrier_velocity: Vector2<f64>) -> Vector3<f64> {
    let m = &scenario.mission;
    let camera = &scenario.sensors.camera;
    let rate = if det.depth(camera) > m.slow_descent_below { m.descent_rate } else { m.slow_descent_rate };
    let cmd = servo_descent_command(det, camera, rate, m.centering_gain);
    velocity_limiter(cmd + Vector3::new(carrier_velocity.x, carrier_velocity.y, 0.0), &scenario.vehicle.limits)
}

/// Lost-target handling: hold for `reacquire_hold`, then climb
/// `reacquire_climb` and wait. A fiducial search that completes its climb
/// falls back to the rover approach.
fn reacquire(
    stage: Stage,
    t: f64,
    vehicle: &VehicleState,
    scenario: &Scenario,
    carrier_velocity: Vector2<f64>,
) -> (Stage, Vector3<f64>) {
    let m = &scenario.mission;
    let hold = Vector3::new(carrier_velocity.x, carrier_velocity.y, 0.0);
    let (lost_at, climb_to, fiducial) = match stage {
        Stage::ProbeReacquire { lost_at, climb_to } => (lost_at, climb_to, false),
        Stage::FiducialReacquire { lost_at, climb_to } => (lost_at, climb_to, true),
        // just lost: the caller records the loss time
        other => return (other, hold),
    };
    if t - lost_at < m.reacquire_hold {
        return (stage, hold);
    }
    let target_z = climb_to.unwrap_or(vehicle.position.z + m.reacquire_climb);
    let next = if fiducial {
        Stage::FiducialReacquire { lost_at, climb_to: Some(target_z) }
    } else {
        Stage::ProbeReacquire { lost_at, climb_to: Some(target_z) }
    };
    let dz = target_z - vehicle.position.z;
    if fiducial && dz.abs() < 0.1 {
        return (Stage::Approach, hold);
    }
    let cmd = velocity_limiter(
        hold + Vector3::new(0.0, 0.0, dz * m.setpoint_gain),
        &scenario.vehicle.limits,
    );
    (next, cmd)
}

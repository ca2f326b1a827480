//! Team 2: square-spiral search, setpoint docking, terrain-aware transit and
//! GPS pursuit with a linear altitude schedule.

use nalgebra::{Vector2, Vector3};

use super::{docking_allowed, inclination, AutonomyError, EventKind, MissionEvent, SensorFrame, StepOutput};
use crate::control::{pursuit_command, pursuit_error, spiral_waypoints, terrain_avoidance_command, PidState, SearchPattern};
use crate::scenario::{Scenario, Team2Config};
use crate::vehicle::{position_setpoint_command, velocity_limiter, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Team2Phase {
    Search,
    DockDescent,
    Transit,
    Deploy,
    Pursuit,
    Land,
    Done,
}

impl Team2Phase {
    pub fn label(self) -> &'static str {
        match self {
            Team2Phase::Search => "SEARCH",
            Team2Phase::DockDescent => "DOCK_DESCENT",
            Team2Phase::Transit => "TRANSIT",
            Team2Phase::Deploy => "DEPLOY",
            Team2Phase::Pursuit => "PURSUIT",
            Team2Phase::Land => "LAND",
            Team2Phase::Done => "DONE",
        }
    }

    fn successor(self) -> Option<Self> {
        match self {
            Team2Phase::Search => Some(Team2Phase::DockDescent),
            Team2Phase::DockDescent => Some(Team2Phase::Transit),
            Team2Phase::Transit => Some(Team2Phase::Deploy),
            Team2Phase::Deploy => Some(Team2Phase::Pursuit),
            Team2Phase::Pursuit => Some(Team2Phase::Land),
            Team2Phase::Land => Some(Team2Phase::Done),
            Team2Phase::Done => None,
        }
    }

    pub fn advance(self, to: Self) -> Result<Self, AutonomyError> {
        if self.successor() == Some(to) {
            Ok(to)
        } else {
            Err(AutonomyError::InvalidTransition { from: self.label(), to: to.label() })
        }
    }
}

/// Pursuit altitude above the trunk: linear in horizontal range from the near
/// altitude at zero range up to the far altitude at `schedule_far_range`.
pub fn schedule_altitude(range: f64, cfg: &Team2Config) -> f64 {
    let s = (range / cfg.schedule_far_range).clamp(0.0, 1.0);
    cfg.schedule_near_altitude + (cfg.schedule_far_altitude - cfg.schedule_near_altitude) * s
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sub {
    Flying,
    Lost { since: f64, climb_to: Option<f64> },
    Descending,
    Climbing { to: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Team2Executive {
    phase: Team2Phase,
    sub: Sub,
    pattern: SearchPattern,
    pid: PidState,
    filtered_gps: Option<Vector3<f64>>,
    gps_velocity: Vector2<f64>,
    /// Whether the last pursuit error came from the trunk detection.
    vision_error: bool,
}

/// Smoothing factor of the GPS-difference velocity estimate used for the
/// optional feedforward.
const GPS_VELOCITY_SMOOTHING: f64 = 0.05;

impl Team2Executive {
    pub fn new(scenario: &Scenario) -> Self {
        let t2 = &scenario.team2;
        let center = Vector2::new(t2.spiral_center[0], t2.spiral_center[1]);
        let pattern = spiral_waypoints(center, t2.spiral_step, t2.spiral_max_radius, t2.search_altitude);
        Self {
            phase: Team2Phase::Search,
            sub: Sub::Flying,
            pattern,
            pid: PidState::default(),
            filtered_gps: None,
            gps_velocity: Vector2::zeros(),
            vision_error: false,
        }
    }

    /// Low-pass the rover GPS fix with time constant `gps_filter_tau`.
    fn filter_gps(&mut self, fix: Vector3<f64>, scenario: &Scenario) -> Vector3<f64> {
        let tau = scenario.team2.gps_filter_tau;
        let alpha = if tau > 0.0 { (scenario.dt / tau).min(1.0) } else { 1.0 };
        let next = match self.filtered_gps {
            Some(f) => f + (fix - f) * alpha,
            None => fix,
        };
        self.filtered_gps = Some(next);
        next
    }

    pub fn phase(&self) -> Team2Phase {
        self.phase
    }

    pub fn pid(&self) -> &PidState {
        &self.pid
    }

    fn transition(&mut self, to: Team2Phase, sub: Sub) -> Result<(), AutonomyError> {
        self.phase = self.phase.advance(to)?;
        self.sub = sub;
        Ok(())
    }

    pub fn step(
        &mut self,
        frame: &SensorFrame,
        vehicle: &VehicleState,
        scenario: &Scenario,
    ) -> Result<StepOutput, AutonomyError> {
        let m = &scenario.mission;
        let t2 = &scenario.team2;
        let camera = &scenario.sensors.camera;
        let limits = &scenario.vehicle.limits;
        let t = frame.t;
        let setpoint = |sp: Vector3<f64>| position_setpoint_command(vehicle, sp, m.setpoint_gain, limits);
        let ground = scenario.terrain.height(vehicle.position.x, vehicle.position.y);

        match self.phase {
            Team2Phase::Search => {
                if frame.probe.is_some() {
                    self.transition(Team2Phase::DockDescent, Sub::Descending)?;
                    return Ok(StepOutput::command(Vector3::zeros()));
                }
                let target = match self.pattern.current() {
                    Some(wp) => wp,
                    None => {
                        self.pattern.restart();
                        self.pattern.current().expect("spiral always holds its centre")
                    }
                };
                if (vehicle.position.xy() - target.xy()).norm() < m.waypoint_tolerance {
                    self.pattern.advance();
                }
                Ok(StepOutput::command(setpoint(target)))
            }
            Team2Phase::DockDescent => match frame.probe {
                Some(det) => {
                    let probe = vehicle.position + det.relative_position(camera);
                    if docking_allowed(vehicle.position, probe, m.docking_max_distance, m.docking_max_inclination) {
                        self.transition(Team2Phase::Transit, Sub::Flying)?;
                        let mut out = StepOutput::command(Vector3::zeros());
                        out.events.push(MissionEvent::new(EventKind::Attach, t, vehicle.position));
                        return Ok(out);
                    }
                    self.sub = Sub::Descending;
                    let z = if inclination(vehicle.position, probe) < t2.dock_descent_inclination {
                        probe.z + t2.dock_hover_height
                    } else {
                        vehicle.position.z
                    };
                    Ok(StepOutput::command(setpoint(Vector3::new(probe.x, probe.y, z))))
                }
                None => {
                    let (since, climb_to) = match self.sub {
                        Sub::Lost { since, climb_to } => (since, climb_to),
                        _ => (t, None),
                    };
                    if t - since < m.reacquire_hold {
                        self.sub = Sub::Lost { since, climb_to };
                        return Ok(StepOutput::command(Vector3::zeros()));
                    }
                    let to = climb_to.unwrap_or(vehicle.position.z + m.reacquire_climb);
                    self.sub = Sub::Lost { since, climb_to: Some(to) };
                    let p = vehicle.position;
                    Ok(StepOutput::command(setpoint(Vector3::new(p.x, p.y, to))))
                }
            },
            Team2Phase::Transit => {
                let drop = Vector2::new(scenario.drop_zone[0], scenario.drop_zone[1]);
                let horizontal = (vehicle.position.xy() - drop).norm();
                if self.sub == Sub::Flying && horizontal < 1.0 {
                    self.sub = Sub::Descending;
                }
                if self.sub == Sub::Descending {
                    let target = Vector3::new(drop.x, drop.y, ground + t2.drop_altitude);
                    let settled = (vehicle.position.z - target.z).abs() < 0.1
                        && horizontal < 1.0
                        && vehicle.velocity.norm() < 0.3;
                    if settled {
                        let to = vehicle.position.z + t2.deploy_climb;
                        self.transition(Team2Phase::Deploy, Sub::Climbing { to })?;
                        let mut out = StepOutput::command(Vector3::zeros());
                        out.events.push(MissionEvent::new(EventKind::Detach, t, vehicle.position));
                        return Ok(out);
                    }
                    return Ok(StepOutput::command(setpoint(target)));
                }
                let base = setpoint(Vector3::new(drop.x, drop.y, t2.transit_altitude));
                let command = terrain_avoidance_command(base, &frame.sonar, t2.trigger_range, t2.climb_rate);
                Ok(StepOutput {
                    command,
                    base_command: base,
                    avoidance_triggered: command != base,
                    events: Vec::new(),
                })
            }
            Team2Phase::Deploy => {
                let to = match self.sub {
                    Sub::Climbing { to } => to,
                    _ => vehicle.position.z + t2.deploy_climb,
                };
                let gps = self.filter_gps(frame.rover_gps, scenario);
                if (vehicle.position.z - to).abs() < 0.2 {
                    let range = (gps.xy() - vehicle.position.xy()).norm();
                    let error = pursuit_error(gps.xy(), vehicle, schedule_altitude(range, t2), gps.z);
                    self.pid = PidState::primed(error);
                    self.vision_error = false;
                    self.transition(Team2Phase::Pursuit, Sub::Flying)?;
                    return Ok(StepOutput::command(Vector3::zeros()));
                }
                let p = vehicle.position;
                Ok(StepOutput::command(setpoint(Vector3::new(p.x, p.y, to))))
            }
            Team2Phase::Pursuit => {
                let previous_gps = self.filtered_gps;
                let gps = self.filter_gps(frame.rover_gps, scenario);
                if let Some(prev) = previous_gps {
                    let raw = (gps.xy() - prev.xy()) / scenario.dt;
                    self.gps_velocity += (raw - self.gps_velocity) * GPS_VELOCITY_SMOOTHING;
                }
                let half = scenario.rover.trunk_half_extent;
                // the trunk detection, when present, supersedes GPS
                let (rover_xy, trunk_z, over_trunk) = match frame.trunk {
                    Some(det) => {
                        let rel = det.relative_position(camera);
                        if -rel.z < t2.land_altitude && rel.x.abs() <= half && rel.y.abs() <= half {
                            self.transition(Team2Phase::Land, Sub::Flying)?;
                            let mut out = StepOutput::command(Vector3::zeros());
                            out.events.push(MissionEvent::new(EventKind::Touchdown, t, vehicle.position));
                            return Ok(out);
                        }
                        let inside = rel.x.abs() <= half && rel.y.abs() <= half;
                        ((vehicle.position + rel).xy(), vehicle.position.z + rel.z, inside)
                    }
                    None => (gps.xy(), gps.z, false),
                };
                let range = (rover_xy - vehicle.position.xy()).norm();
                let mut target = schedule_altitude(range, t2);
                if frame.trunk.is_none() {
                    target = target.max(t2.confirm_altitude);
                } else if over_trunk {
                    target = 0.0;
                }
                let vision = frame.trunk.is_some();
                if vision != self.vision_error {
                    // bumpless switch of error source
                    self.pid.previous_error = pursuit_error(rover_xy, vehicle, target, trunk_z);
                    self.vision_error = vision;
                }
                let feedforward = t2.rover_velocity_feedforward.then_some(self.gps_velocity);
                let (pid, command) =
                    pursuit_command(&self.pid, &scenario.pid, rover_xy, vehicle, target, trunk_z, feedforward)?;
                self.pid = pid;
                Ok(StepOutput::command(velocity_limiter(command, limits)))
            }
            Team2Phase::Land => {
                self.transition(Team2Phase::Done, Sub::Flying)?;
                Ok(StepOutput::command(Vector3::zeros()))
            }
            Team2Phase::Done => Ok(StepOutput::command(Vector3::zeros())),
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{Detection, SonarReading, SONAR_COUNT};

    fn frame(t: f64) -> SensorFrame {
        SensorFrame {
            t,
            probe: None,
            trunk: None,
            fiducial: None,
            sonar: [SonarReading { azimuth: 0.0, range: None, max_range: 10.0 }; SONAR_COUNT],
            rover_gps: Vector3::zeros(),
            odometry: None,
        }
    }

    #[test]
    fn schedule_is_linear_and_saturates() {
        let cfg = Team2Config::default();
        assert!((schedule_altitude(10.0, &cfg) - 2.75).abs() < 1e-12);
        assert_eq!(schedule_altitude(0.0, &cfg), 0.5);
        assert_eq!(schedule_altitude(20.0, &cfg), 5.0);
        assert_eq!(schedule_altitude(500.0, &cfg), 5.0);
    }

    #[test]
    fn phases_follow_order() {
        assert!(Team2Phase::Search.advance(Team2Phase::DockDescent).is_ok());
        assert!(Team2Phase::Transit.advance(Team2Phase::Land).is_err());
        assert!(Team2Phase::Deploy.advance(Team2Phase::Land).is_err());
        assert!(Team2Phase::Pursuit.advance(Team2Phase::Land).is_ok());
    }

    #[test]
    fn detection_starts_docking() {
        let s = Scenario::default();
        let mut exec = Team2Executive::new(&s);
        let mut f = frame(10.0);
        f.probe = Some(Detection { centroid: [10.0, 0.0], area: 300.0, world_range: 10.0 });
        exec.step(&f, &VehicleState::at_rest(Vector3::new(30.0, 20.0, 10.0)), &s).unwrap();
        assert_eq!(exec.phase(), Team2Phase::DockDescent);
    }

    #[test]
    fn touchdown_inside_trunk_square() {
        let s = Scenario::default();
        let mut exec = Team2Executive::new(&s);
        exec.phase = Team2Phase::Pursuit;
        let mut f = frame(300.0);
        f.rover_gps = Vector3::new(0.0, 0.0, 0.0);
        f.trunk = Some(Detection { centroid: [0.0, 0.0], area: 5000.0, world_range: 0.25 });
        let out = exec.step(&f, &VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.75)), &s).unwrap();
        assert_eq!(exec.phase(), Team2Phase::Land);
        assert_eq!(out.events[0].kind, EventKind::Touchdown);
    }

    #[test]
    fn no_low_descent_without_trunk_confirmation() {
        let s = Scenario::default();
        let mut exec = Team2Executive::new(&s);
        exec.phase = Team2Phase::Pursuit;
        let mut f = frame(300.0);
        f.rover_gps = Vector3::new(0.0, 0.0, 0.0);
        // right over the rover at the confirmation floor, no detection: hold
        let vehicle = VehicleState::at_rest(Vector3::new(0.0, 0.0, s.team2.confirm_altitude));
        let out = exec.step(&f, &vehicle, &s).unwrap();
        assert!(out.command.z.abs() < 1e-12);
        // below the floor it climbs back
        let mut exec = Team2Executive::new(&s);
        exec.phase = Team2Phase::Pursuit;
        let low = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
        let out = exec.step(&frame(300.05), &low, &s).unwrap();
        assert!(out.command.z > 0.0);
    }

    #[test]
    fn transit_avoidance_keeps_horizontal() {
        let s = Scenario::default();
        let mut exec = Team2Executive::new(&s);
        exec.phase = Team2Phase::Transit;
        let mut f = frame(100.0);
        f.sonar[0].range = Some(2.0);
        let out = exec.step(&f, &VehicleState::at_rest(Vector3::new(10.0, 40.0, 8.0)), &s).unwrap();
        assert!(out.avoidance_triggered);
        assert_eq!(out.command.xy(), out.base_command.xy());
        assert_eq!(out.command.z, s.team2.climb_rate);
    }
}

//! Fixed-timestep closed loop: world, sensors, tracker, executive, vehicle.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AutonomyError, EventKind, MissionEvent, SensorFrame, StepOutput, Team, Team1Executive, Team1Mode, Team2Executive};
use crate::estimation::{track_rover, RoverTrackState};
use crate::scenario::Scenario;
use crate::sensing::{detect_target, gps_read, odometry_read, sonar_scan};
use crate::vehicle::{step_vehicle, VehicleState};
use crate::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Success,
    Timeout,
    Crash,
    Lost,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Success => "SUCCESS",
            Outcome::Timeout => "TIMEOUT",
            Outcome::Crash => "CRASH",
            Outcome::Lost => "LOST",
        }
    }
}

/// One logged tick. Ground truth travels with the row so invariants can be
/// re-checked after the fact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub mode: &'static str,
    /// Team 1 only: tracker position estimate and covariance trace.
    pub tracker: Option<(Vector2<f64>, f64)>,
    pub rover_position: Vector3<f64>,
    pub probe_position: Vector3<f64>,
    pub command: Vector3<f64>,
    pub base_command: Vector3<f64>,
    pub avoidance_triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: String,
    pub team: Team,
    pub seed: u64,
    pub scenario_name: String,
    pub rows: Vec<TrialRow>,
    pub events: Vec<MissionEvent>,
    pub outcome: Outcome,
}

impl TrialRecord {
    pub fn trial_id(team: Team, seed: u64) -> String {
        format!("team{}-seed{}", team.number(), seed)
    }

    pub fn event(&self, kind: EventKind) -> Option<&MissionEvent> {
        self.events.iter().find(|e| e.kind == kind)
    }

    /// The row logged at the tick an event fired.
    pub fn row_at(&self, t: f64) -> Option<&TrialRow> {
        self.rows.iter().find(|r| r.t == t)
    }

    pub fn duration(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }
}

/// Read every sensor for one tick. Random draws happen in a fixed order:
/// probe, trunk, fiducial, GPS, odometry.
pub fn sense(
    scenario: &Scenario,
    world: &WorldState,
    vehicle: &VehicleState,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> SensorFrame {
    let sensors = &scenario.sensors;
    let camera = &sensors.camera;
    let probe = if world.probe_attached || world.probe_deployed {
        None
    } else {
        detect_target(camera, vehicle, world.probe_position, scenario.probe.radius, rng)
    };
    // rover pose is the trunk centre
    let trunk = detect_target(camera, vehicle, world.rover_position, scenario.rover.trunk_half_extent, rng);
    let fiducial = detect_target(camera, vehicle, world.rover_position, sensors.fiducial_radius, rng);
    let rover_gps = gps_read(world.rover_position, sensors.gps_sigma, rng);
    let odometry = odometry_read(
        vehicle,
        world.rover_position,
        &scenario.terrain,
        sensors.density_threshold,
        sensors.odometry_sigma,
        rng,
    );
    SensorFrame {
        t,
        probe,
        trunk,
        fiducial,
        sonar: sonar_scan(vehicle, &scenario.terrain, sensors.sonar_max_range),
        rover_gps,
        odometry,
    }
}

enum Executive {
    One(Team1Executive),
    Two(Team2Executive),
}

pub fn run_trial(scenario: &Scenario, team: Team, seed: u64) -> Result<TrialRecord, AutonomyError> {
    scenario.validate()?;
    let dt = scenario.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terrain = &scenario.terrain;
    let path = &scenario.rover;

    let mut world = WorldState::new(terrain, path, scenario.probe.spawn, scenario.probe.carry_offset);
    let start = scenario.vehicle.start;
    let mut vehicle = VehicleState::at_rest(Vector3::new(start[0], start[1], start[2]));
    let mut executive = match team {
        Team::One => Executive::One(Team1Executive::new(scenario)?),
        Team::Two => Executive::Two(Team2Executive::new(scenario)),
    };
    let mut tracker: Option<RoverTrackState> = None;
    let gps_every = scenario.gps_fuse_ticks();
    let timeout_ticks = scenario.timeout_ticks();

    let mut rows = Vec::new();
    let mut events = Vec::new();
    let mut lost_since: Option<f64> = None;
    let outcome;

    let mut k: u64 = 0;
    loop {
        let t = k as f64 * dt;
        world = world.advance(terrain, path, t, vehicle.position);
        let frame = sense(scenario, &world, &vehicle, t, &mut rng);

        if matches!(executive, Executive::One(_)) {
            let gps = k.is_multiple_of(gps_every).then(|| frame.rover_gps.xy());
            let odo = frame.odometry.map(|o| o.xy());
            tracker = Some(match tracker {
                None => {
                    let k = &scenario.kalman;
                    let mut s = RoverTrackState::new(frame.rover_gps.xy(), k.gps_sigma * k.gps_sigma, 1.0);
                    s.last_odometry_time = t;
                    s
                }
                Some(prev) => track_rover(&prev, &scenario.kalman, t, gps, odo, dt)?,
            });
        }

        let crashed = vehicle.position.z < terrain.height(vehicle.position.x, vehicle.position.y);
        let (out, mode) = if crashed {
            (StepOutput::default(), mode_label(&executive))
        } else {
            let out = match &mut executive {
                Executive::One(exec) => {
                    exec.step(&frame, tracker.as_ref().expect("tracker initialised"), &vehicle, scenario)?
                }
                Executive::Two(exec) => exec.step(&frame, &vehicle, scenario)?,
            };
            (out, mode_label(&executive))
        };

        rows.push(TrialRow {
            t,
            position: vehicle.position,
            velocity: vehicle.velocity,
            mode,
            tracker: tracker.as_ref().map(|s| (s.position(), s.covariance_trace())),
            rover_position: world.rover_position,
            probe_position: world.probe_position,
            command: out.command,
            base_command: out.base_command,
            avoidance_triggered: out.avoidance_triggered,
        });
        if crashed {
            outcome = Outcome::Crash;
            break;
        }

        let mut touched_down = false;
        for event in &out.events {
            match event.kind {
                EventKind::Attach => {
                    world = world.attach_probe(vehicle.position)?;
                    vehicle.probe_attached = true;
                }
                EventKind::Detach => {
                    world = world.detach_probe(terrain)?;
                    vehicle.probe_attached = false;
                }
                EventKind::Touchdown => {
                    vehicle.landed = true;
                    touched_down = true;
                }
                EventKind::TrackingLost | EventKind::TrackingRecovered => {}
            }
        }
        events.extend(out.events);
        if touched_down {
            outcome = Outcome::Success;
            break;
        }

        vehicle = step_vehicle(&vehicle, out.command, &scenario.vehicle.limits, dt)?;

        let rover_mode_lost = match (&executive, &tracker) {
            (Executive::One(exec), Some(s)) => exec.mode() == Team1Mode::Rover && s.tracking_lost,
            _ => false,
        };
        if rover_mode_lost {
            let since = *lost_since.get_or_insert(t);
            if t - since > scenario.team1.lost_outcome_after {
                outcome = Outcome::Lost;
                break;
            }
        } else {
            lost_since = None;
        }
        if k >= timeout_ticks {
            outcome = Outcome::Timeout;
            break;
        }
        k += 1;
    }

    Ok(TrialRecord {
        trial_id: TrialRecord::trial_id(team, seed),
        team,
        seed,
        scenario_name: scenario.name.clone(),
        rows,
        events,
        outcome,
    })
}

fn mode_label(executive: &Executive) -> &'static str {
    match executive {
        Executive::One(exec) => exec.mode().label(),
        Executive::Two(exec) => exec.phase().label(),
    }
}

/// Run independent trials in parallel; results come back in `seeds` order.
pub fn run_batch(scenario: &Scenario, team: Team, seeds: &[u64]) -> Result<Vec<TrialRecord>, AutonomyError> {
    scenario.validate()?;
    seeds.par_iter().map(|&seed| run_trial(scenario, team, seed)).collect()
}

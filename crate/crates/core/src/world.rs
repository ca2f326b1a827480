//! Ground-truth environment: an analytic heightfield, a feature-density map,
//! the soil probe and the moving rover.
//!
//! Everything here is a pure function of its inputs. The trial loop owns a
//! [`WorldState`] value and replaces it every tick.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertical offset of the carried probe relative to the vehicle centre.
pub const DEFAULT_PROBE_CARRY_OFFSET: f64 = -0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("probe is already attached")]
    AttachWhileAttached,
    #[error("probe has already been deployed")]
    AttachAfterDeploy,
    #[error("probe is not attached")]
    DetachWhileDetached,
    #[error("invalid terrain: {0}")]
    InvalidTerrain(String),
    #[error("invalid rover path: {0}")]
    InvalidRoverPath(String),
}

/// A Gaussian bump added to the base height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hill {
    pub center_x: f64,
    pub center_y: f64,
    pub amplitude: f64,
    pub sigma: f64,
}

/// A disc of constant visual-feature density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePatch {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub density: f64,
}

/// Sum-of-Gaussians heightfield plus a piecewise-constant feature-density map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    #[serde(default)]
    pub hills: Vec<Hill>,
    #[serde(default)]
    pub base_height: f64,
    #[serde(default)]
    pub feature_patches: Vec<FeaturePatch>,
    #[serde(default = "default_density")]
    pub default_density: f64,
}

fn default_density() -> f64 {
    0.8
}

impl Default for Terrain {
    fn default() -> Self {
        Self::flat(0.0)
    }
}

impl Terrain {
    pub fn flat(base_height: f64) -> Self {
        Self {
            hills: Vec::new(),
            base_height,
            feature_patches: Vec::new(),
            default_density: default_density(),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        for (i, hill) in self.hills.iter().enumerate() {
            if !(hill.amplitude >= 0.0) {
                return Err(WorldError::InvalidTerrain(format!(
                    "hills[{i}].amplitude must be >= 0 (got {})",
                    hill.amplitude
                )));
            }
            if !(hill.sigma > 0.0) {
                return Err(WorldError::InvalidTerrain(format!(
                    "hills[{i}].sigma must be > 0 (got {})",
                    hill.sigma
                )));
            }
        }
        for (i, patch) in self.feature_patches.iter().enumerate() {
            if !(0.0..=1.0).contains(&patch.density) {
                return Err(WorldError::InvalidTerrain(format!(
                    "feature_patches[{i}].density must lie in [0, 1] (got {})",
                    patch.density
                )));
            }
            if !(patch.radius >= 0.0) {
                return Err(WorldError::InvalidTerrain(format!(
                    "feature_patches[{i}].radius must be >= 0 (got {})",
                    patch.radius
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.default_density) {
            return Err(WorldError::InvalidTerrain(format!(
                "default_density must lie in [0, 1] (got {})",
                self.default_density
            )));
        }
        Ok(())
    }

    /// Terrain height at `(x, y)`.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.base_height
            + self
                .hills
                .iter()
                .map(|h| {
                    let dx = x - h.center_x;
                    let dy = y - h.center_y;
                    h.amplitude * (-(dx * dx + dy * dy) / (2.0 * h.sigma * h.sigma)).exp()
                })
                .sum::<f64>()
    }

    /// Feature density at `(x, y)`: the densest patch containing the point,
    /// or the default density when no patch does.
    pub fn feature_density(&self, x: f64, y: f64) -> f64 {
        self.feature_patches
            .iter()
            .filter(|p| {
                let dx = x - p.center_x;
                let dy = y - p.center_y;
                dx * dx + dy * dy <= p.radius * p.radius
            })
            .map(|p| p.density)
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
            .unwrap_or(self.default_density)
    }
}

/// Free-function form of [`Terrain::height`].
pub fn terrain_height(terrain: &Terrain, x: f64, y: f64) -> f64 {
    terrain.height(x, y)
}

/// Free-function form of [`Terrain::feature_density`].
pub fn feature_density(terrain: &Terrain, x: f64, y: f64) -> f64 {
    terrain.feature_density(x, y)
}

/// Piecewise-linear constant-speed route followed by the rover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoverPath {
    pub waypoints: Vec<[f64; 2]>,
    pub speed: f64,
    #[serde(default)]
    pub start_time: f64,
    #[serde(default = "default_trunk_height")]
    pub trunk_height: f64,
    #[serde(default = "default_trunk_half_extent")]
    pub trunk_half_extent: f64,
}

fn default_trunk_height() -> f64 {
    1.5
}

fn default_trunk_half_extent() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoverPose {
    /// Centre of the trunk landing zone.
    pub position: Vector3<f64>,
    pub velocity: Vector2<f64>,
}

impl RoverPath {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.waypoints.is_empty() {
            return Err(WorldError::InvalidRoverPath(
                "waypoints must contain at least one point".into(),
            ));
        }
        if !(self.speed >= 0.0) {
            return Err(WorldError::InvalidRoverPath(format!(
                "speed must be >= 0 (got {})",
                self.speed
            )));
        }
        if !(self.trunk_half_extent > 0.0) {
            return Err(WorldError::InvalidRoverPath(format!(
                "trunk_half_extent must be > 0 (got {})",
                self.trunk_half_extent
            )));
        }
        if !self.start_time.is_finite() || !self.trunk_height.is_finite() {
            return Err(WorldError::InvalidRoverPath(
                "start_time and trunk_height must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Total polyline length.
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| Vector2::new(w[1][0] - w[0][0], w[1][1] - w[0][1]).norm())
            .sum()
    }

    /// Rover pose at time `t`.
    pub fn pose(&self, terrain: &Terrain, t: f64) -> RoverPose {
        let first = Vector2::new(self.waypoints[0][0], self.waypoints[0][1]);
        let mut remaining = self.speed * (t - self.start_time).max(0.0);
        let mut xy = first;
        let mut velocity = Vector2::zeros();
        let mut moving = t > self.start_time && self.speed > 0.0;

        let mut reached_end = true;
        for w in self.waypoints.windows(2) {
            let a = Vector2::new(w[0][0], w[0][1]);
            let b = Vector2::new(w[1][0], w[1][1]);
            let seg = b - a;
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            if remaining < len {
                xy = a + seg * (remaining / len);
                velocity = seg * (self.speed / len);
                reached_end = false;
                break;
            }
            remaining -= len;
            xy = b;
        }
        if reached_end {
            moving = false;
        }
        if !moving {
            velocity = Vector2::zeros();
        }
        RoverPose {
            position: Vector3::new(xy.x, xy.y, terrain.height(xy.x, xy.y) + self.trunk_height),
            velocity,
        }
    }

    /// Whether the horizontal point lies inside the square trunk zone of a
    /// rover centred at `rover_xy`.
    pub fn inside_trunk(&self, rover_xy: Vector2<f64>, point_xy: Vector2<f64>) -> bool {
        let d = point_xy - rover_xy;
        d.x.abs() < self.trunk_half_extent && d.y.abs() < self.trunk_half_extent
    }
}

/// Free-function form of [`RoverPath::pose`].
pub fn rover_pose(path: &RoverPath, terrain: &Terrain, t: f64) -> RoverPose {
    path.pose(terrain, t)
}

/// Mutable ground truth of one trial, replaced wholesale every tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: f64,
    pub probe_position: Vector3<f64>,
    pub probe_attached: bool,
    pub probe_deployed: bool,
    pub rover_position: Vector3<f64>,
    pub rover_velocity: Vector2<f64>,
    /// Vertical offset applied while the probe is carried.
    pub carry_offset: f64,
}

impl WorldState {
    /// Initial state with the probe resting on the terrain at `probe_xy`.
    pub fn new(terrain: &Terrain, path: &RoverPath, probe_xy: [f64; 2], carry_offset: f64) -> Self {
        let rover = path.pose(terrain, 0.0);
        Self {
            t: 0.0,
            probe_position: Vector3::new(
                probe_xy[0],
                probe_xy[1],
                terrain.height(probe_xy[0], probe_xy[1]),
            ),
            probe_attached: false,
            probe_deployed: false,
            rover_position: rover.position,
            rover_velocity: rover.velocity,
            carry_offset,
        }
    }

    pub fn attach_probe(&self, vehicle_position: Vector3<f64>) -> Result<Self, WorldError> {
        if self.probe_attached {
            return Err(WorldError::AttachWhileAttached);
        }
        if self.probe_deployed {
            return Err(WorldError::AttachAfterDeploy);
        }
        Ok(Self {
            probe_attached: true,
            probe_position: vehicle_position + Vector3::new(0.0, 0.0, self.carry_offset),
            ..*self
        })
    }

    pub fn detach_probe(&self, terrain: &Terrain) -> Result<Self, WorldError> {
        if !self.probe_attached {
            return Err(WorldError::DetachWhileDetached);
        }
        let p = self.probe_position;
        Ok(Self {
            probe_attached: false,
            probe_deployed: true,
            probe_position: Vector3::new(p.x, p.y, terrain.height(p.x, p.y)),
            ..*self
        })
    }

    /// Advance the clock to `t`, move the rover, and carry the probe with the
    /// vehicle when attached.
    pub fn advance(
        &self,
        terrain: &Terrain,
        path: &RoverPath,
        t: f64,
        vehicle_position: Vector3<f64>,
    ) -> Self {
        let rover = path.pose(terrain, t);
        let probe_position = if self.probe_attached {
            vehicle_position + Vector3::new(0.0, 0.0, self.carry_offset)
        } else {
            self.probe_position
        };
        Self {
            t: t.max(self.t),
            probe_position,
            rover_position: rover.position,
            rover_velocity: rover.velocity,
            ..*self
        }
    }
}

pub fn attach_probe(world: &WorldState, vehicle_position: Vector3<f64>) -> Result<WorldState, WorldError> {
    world.attach_probe(vehicle_position)
}

pub fn detach_probe(world: &WorldState, terrain: &Terrain) -> Result<WorldState, WorldError> {
    world.detach_probe(terrain)
}

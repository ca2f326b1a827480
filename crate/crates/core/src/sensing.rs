//! Synthetic sensors: nadir camera detector, eight-ray sonar ring, GPS and
//! feature-gated visual odometry.
//!
//! All randomness comes from a caller-owned stream so a trial is reproducible
//! from its seed alone.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleState;
use crate::world::Terrain;

/// Ray-march resolution of the sonar model.
pub const SONAR_MARCH_STEP: f64 = 0.1;
pub const SONAR_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub half_fov: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub pixel_noise_sigma: f64,
    pub min_detect_area: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            half_fov: 40f64.to_radians(),
            image_width: 640.0,
            image_height: 480.0,
            pixel_noise_sigma: 1.0,
            min_detect_area: 20.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.half_fov > 0.0 && self.half_fov < FRAC_PI_2) {
            return Err(format!("half_fov must lie in (0, pi/2) (got {})", self.half_fov));
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err("image dimensions must be positive".into());
        }
        if !(self.pixel_noise_sigma >= 0.0) || !(self.min_detect_area >= 0.0) {
            return Err("pixel_noise_sigma and min_detect_area must be >= 0".into());
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal_length(&self) -> f64 {
        (self.image_width / 2.0) / self.half_fov.tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Centroid in pixels from the image centre; `+u` looks along world `+x`,
    /// `+v` along world `+y`.
    pub centroid: [f64; 2],
    pub area: f64,
    /// Line-of-sight distance from the camera to the target centre.
    pub world_range: f64,
}

impl Detection {
    /// Depth along the optical axis implied by the range and the centroid.
    pub fn depth(&self, camera: &CameraModel) -> f64 {
        let f = camera.focal_length();
        let [u, v] = self.centroid;
        self.world_range * f / (f * f + u * u + v * v).sqrt()
    }

    /// Camera-to-target vector in the world frame (gimballed nadir camera).
    pub fn relative_position(&self, camera: &CameraModel) -> Vector3<f64> {
        let f = camera.focal_length();
        let z = self.depth(camera);
        Vector3::new(self.centroid[0] * z / f, self.centroid[1] * z / f, -z)
    }
}

/// Downward pinhole projection of a disc target.
///
/// Returns `None` when the target is behind or level with the camera, off
/// the image, outside the cone of `half_fov`, or too small.
pub fn detect_target<R: Rng + ?Sized>(
    camera: &CameraModel,
    vehicle: &VehicleState,
    target_position: Vector3<f64>,
    target_radius: f64,
    rng: &mut R,
) -> Option<Detection> {
    let rel = target_position - vehicle.position;
    let depth = -rel.z;
    if !(depth > 0.0) {
        return None;
    }
    let horizontal = rel.xy().norm();
    if horizontal.atan2(depth) > camera.half_fov {
        return None;
    }
    let f = camera.focal_length();
    let u = f * rel.x / depth;
    let v = f * rel.y / depth;
    if u.abs() > camera.image_width / 2.0 || v.abs() > camera.image_height / 2.0 {
        return None;
    }
    let apparent_radius = target_radius * f / depth;
    let area = PI * apparent_radius * apparent_radius;
    if !(area >= camera.min_detect_area) || !(area > 0.0) {
        return None;
    }
    let nu: f64 = rng.sample(StandardNormal);
    let nv: f64 = rng.sample(StandardNormal);
    Some(Detection {
        centroid: [
            u + camera.pixel_noise_sigma * nu,
            v + camera.pixel_noise_sigma * nv,
        ],
        area,
        world_range: rel.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonarReading {
    /// Body-frame azimuth relative to the direction of travel.
    pub azimuth: f64,
    /// `None` is no return within range.
    pub range: Option<f64>,
    pub max_range: f64,
}

impl SonarReading {
    pub fn within(&self, trigger_range: f64) -> bool {
        self.range.is_some_and(|r| r < trigger_range)
    }
}

/// Unit direction of sonar ray `index` for a vehicle with the given heading
/// and pitch. Forward rays are depressed by the full pitch, lateral rays not
/// at all, rear rays are raised.
pub fn sonar_direction(yaw: f64, pitch: f64, azimuth: f64) -> Vector3<f64> {
    let depression = pitch * azimuth.cos();
    let heading = yaw + azimuth;
    Vector3::new(
        heading.cos() * depression.cos(),
        heading.sin() * depression.cos(),
        -depression.sin(),
    )
}

pub fn sonar_azimuth(index: usize) -> f64 {
    index as f64 * PI / 4.0
}

/// Eight horizontal-plane sonars at 45° spacing, ray-marched against the
/// terrain in [`SONAR_MARCH_STEP`] increments.
pub fn sonar_scan(vehicle: &VehicleState, terrain: &Terrain, max_range: f64) -> [SonarReading; SONAR_COUNT] {
    std::array::from_fn(|i| {
        let azimuth = sonar_azimuth(i);
        let dir = sonar_direction(vehicle.yaw, vehicle.pitch, azimuth);
        let steps = (max_range / SONAR_MARCH_STEP + 1e-9).floor() as usize;
        let range = (1..=steps).map(|k| k as f64 * SONAR_MARCH_STEP).find(|&s| {
            let p = vehicle.position + dir * s;
            p.z <= terrain.height(p.x, p.y)
        });
        SonarReading { azimuth, range, max_range }
    })
}

/// Truth plus independent per-axis Gaussian noise.
pub fn gps_read<R: Rng + ?Sized>(true_position: Vector3<f64>, sigma: f64, rng: &mut R) -> Vector3<f64> {
    let n: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    true_position + Vector3::new(n[0], n[1], n[2]) * sigma
}

/// Rover position measured by feature tracking, available only while the
/// terrain under the vehicle is rich enough in features.
pub fn odometry_read<R: Rng + ?Sized>(
    vehicle: &VehicleState,
    rover_position: Vector3<f64>,
    terrain: &Terrain,
    density_threshold: f64,
    sigma: f64,
    rng: &mut R,
) -> Option<Vector3<f64>> {
    let density = terrain.feature_density(vehicle.position.x, vehicle.position.y);
    if density < density_threshold {
        return None;
    }
    Some(gps_read(rover_position, sigma, rng))
}

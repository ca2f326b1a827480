//! Controllers and pattern generators shared by both mission executives.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensing::{CameraModel, Detection, SonarReading};
use crate::vehicle::VehicleState;

/// Euclidean error norm at which the pursuit loop is considered converged.
pub const PURSUIT_CONVERGED_ERROR: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("PID error input is not finite: {0:?}")]
    NonFiniteError([f64; 3]),
    #[error("degenerate search bounds: {0}")]
    DegenerateBounds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub time_interval: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: 0.5, ki: 0.000005, kd: 0.4, time_interval: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral_error: Vector3<f64>,
    pub previous_error: Vector3<f64>,
}

impl PidState {
    /// State as left by the assignment before the loop: the first derivative
    /// term sees no jump.
    pub fn primed(error: Vector3<f64>) -> Self {
        Self { integral_error: Vector3::zeros(), previous_error: error }
    }
}

/// One iteration of the incremental velocity PID: the correction is added to
/// the vehicle's current velocity.
pub fn pid_step(
    state: &PidState,
    gains: &PidGains,
    error: Vector3<f64>,
    current_velocity: Vector3<f64>,
) -> Result<(PidState, Vector3<f64>), ControlError> {
    if !error.iter().all(|e| e.is_finite()) {
        return Err(ControlError::NonFiniteError([error.x, error.y, error.z]));
    }
    let dt = gains.time_interval;
    let integral_error = state.integral_error + error * dt;
    let differential_error = (error - state.previous_error) / dt;
    let command = current_velocity + error * gains.kp + integral_error * gains.ki + differential_error * gains.kd;
    Ok((PidState { integral_error, previous_error: error }, command))
}

/// Pursuit of the rover's trunk in velocity-control mode.
///
/// With `feedforward` set, the rover velocity replaces the vehicle's own
/// horizontal velocity as the base the PID correction is added to.
#[allow(clippy::too_many_arguments)]
pub fn pursuit_command(
    pid: &PidState,
    gains: &PidGains,
    rover_estimate: Vector2<f64>,
    vehicle: &VehicleState,
    target_altitude_above_trunk: f64,
    trunk_z: f64,
    feedforward: Option<Vector2<f64>>,
) -> Result<(PidState, Vector3<f64>), ControlError> {
    let error = pursuit_error(rover_estimate, vehicle, target_altitude_above_trunk, trunk_z);
    let base = match feedforward {
        Some(v) => Vector3::new(v.x, v.y, vehicle.velocity.z),
        None => vehicle.velocity,
    };
    pid_step(pid, gains, error, base)
}

pub fn pursuit_error(
    rover_estimate: Vector2<f64>,
    vehicle: &VehicleState,
    target_altitude_above_trunk: f64,
    trunk_z: f64,
) -> Vector3<f64> {
    Vector3::new(
        rover_estimate.x - vehicle.position.x,
        rover_estimate.y - vehicle.position.y,
        trunk_z + target_altitude_above_trunk - vehicle.position.z,
    )
}

/// Ordered waypoints plus a cursor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPattern {
    pub waypoints: Vec<Vector3<f64>>,
    pub current_index: usize,
}

impl SearchPattern {
    pub fn new(waypoints: Vec<Vector3<f64>>) -> Self {
        Self { waypoints, current_index: 0 }
    }

    pub fn current(&self) -> Option<Vector3<f64>> {
        self.waypoints.get(self.current_index).copied()
    }

    pub fn advance(&mut self) {
        if self.current_index < self.waypoints.len() {
            self.current_index += 1;
        }
    }

    pub fn is_complete(&self) -> bool {
        self.current_index >= self.waypoints.len()
    }

    pub fn restart(&mut self) {
        self.current_index = 0;
    }
}

/// Boustrophedon rows along x at `spacing` in y; the last row is clamped to
/// `ymax`.
pub fn lawnmower_waypoints(
    bounds: [f64; 4],
    spacing: f64,
    altitude: f64,
) -> Result<SearchPattern, ControlError> {
    let [xmin, ymin, xmax, ymax] = bounds;
    if !(xmax > xmin) || !(ymax > ymin) {
        return Err(ControlError::DegenerateBounds(format!(
            "need xmax > xmin and ymax > ymin (got {bounds:?})"
        )));
    }
    if !(spacing > 0.0) {
        return Err(ControlError::DegenerateBounds(format!("spacing must be > 0 (got {spacing})")));
    }
    let tol = 1e-9 * (ymax - ymin);
    let mut rows = Vec::new();
    let mut k = 0u32;
    loop {
        let y = ymin + f64::from(k) * spacing;
        if y >= ymax - tol {
            rows.push(ymax);
            break;
        }
        rows.push(y);
        k += 1;
    }
    let waypoints = rows
        .iter()
        .enumerate()
        .flat_map(|(i, &y)| {
            let (a, b) = if i % 2 == 0 { (xmin, xmax) } else { (xmax, xmin) };
            [Vector3::new(a, y, altitude), Vector3::new(b, y, altitude)]
        })
        .collect();
    Ok(SearchPattern::new(waypoints))
}

/// Outward square spiral starting eastward, turning left, with segment
/// lengths `step, step, 2·step, 2·step, …`. The last segment is cut where it
/// meets the Chebyshev ball of `max_radius`.
pub fn spiral_waypoints(center: Vector2<f64>, step: f64, max_radius: f64, altitude: f64) -> SearchPattern {
    let at = |dx: f64, dy: f64| Vector3::new(center.x + dx, center.y + dy, altitude);
    let mut waypoints = vec![at(0.0, 0.0)];
    if !(step > 0.0) || !(max_radius > 0.0) {
        return SearchPattern::new(waypoints);
    }
    const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    // corners on the integer lattice in units of `step`
    let (mut cx, mut cy) = (0i64, 0i64);
    for segment in 0usize.. {
        let len = (segment / 2 + 1) as i64;
        let (dx, dy) = DIRS[segment % 4];
        let (nx, ny) = (cx + dx * len, cy + dy * len);
        let (fx, fy) = (nx as f64 * step, ny as f64 * step);
        if fx.abs().max(fy.abs()) <= max_radius {
            waypoints.push(at(fx, fy));
            cx = nx;
            cy = ny;
            continue;
        }
        let (sx, sy) = (cx as f64 * step, cy as f64 * step);
        let (tx, ty) = (fx.clamp(-max_radius, max_radius), fy.clamp(-max_radius, max_radius));
        if (tx, ty) != (sx, sy) {
            waypoints.push(at(tx, ty));
        }
        break;
    }
    SearchPattern::new(waypoints)
}

/// Fraction of the full descent rate allowed for a centroid at normalised
/// radial offset `r` (pixels over image half-width).
pub fn descent_gate(r: f64) -> f64 {
    if r <= 0.1 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        (1.0 - r) / 0.9
    }
}

/// Visual-servo descent: centre the target with a proportional lateral
/// command and descend faster the better it is centred.
pub fn servo_descent_command(
    detection: &Detection,
    camera: &CameraModel,
    descent_rate: f64,
    centering_gain: f64,
) -> Vector3<f64> {
    let offset = detection.relative_position(camera);
    let [u, v] = detection.centroid;
    let r = (u * u + v * v).sqrt() / (camera.image_width / 2.0);
    Vector3::new(
        centering_gain * offset.x,
        centering_gain * offset.y,
        -descent_rate * descent_gate(r),
    )
}

/// Climb override: any sonar return closer than `trigger_range` forces at
/// least `climb_rate` upward; horizontal components pass through untouched.
pub fn terrain_avoidance_command(
    base_command: Vector3<f64>,
    readings: &[SonarReading],
    trigger_range: f64,
    climb_rate: f64,
) -> Vector3<f64> {
    if readings.iter().any(|r| r.within(trigger_range)) {
        Vector3::new(base_command.x, base_command.y, base_command.z.max(climb_rate))
    } else {
        base_command
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{step_vehicle, velocity_limiter, VehicleLimits};
    use proptest::prelude::*;

    fn gains() -> PidGains {
        PidGains::default()
    }

    #[test]
    fn default_gains() {
        let g = gains();
        assert_eq!((g.kp, g.ki, g.kd, g.time_interval), (0.5, 0.000005, 0.4, 0.05));
    }

    #[test]
    fn zero_error_passes_velocity_through() {
        let v = Vector3::new(1.0, -2.0, 0.5);
        let (_, cmd) = pid_step(&PidState::default(), &gains(), Vector3::zeros(), v).unwrap();
        assert_eq!(cmd, v);
    }

    #[test]
    fn single_update_by_hand() {
        let state = PidState::primed(Vector3::new(1.0, 0.0, 0.0));
        let (next, cmd) = pid_step(&state, &gains(), Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()).unwrap();
        assert!((next.integral_error.x - 0.05).abs() < 1e-15);
        assert!((cmd.x - 0.50000025).abs() < 1e-15);
    }

    #[test]
    fn derivative_by_hand() {
        let state = PidState::primed(Vector3::new(0.5, 0.0, 0.0));
        let (_, cmd) = pid_step(&state, &gains(), Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()).unwrap();
        // 0.5 * 1 + 5e-6 * 0.05 + 0.4 * 10
        assert!((cmd.x - (0.5 + 0.00000025 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_error_rejected() {
        assert!(pid_step(&PidState::default(), &gains(), Vector3::new(f64::INFINITY, 0.0, 0.0), Vector3::zeros()).is_err());
    }

    fn vehicle_at(p: Vector3<f64>) -> VehicleState {
        VehicleState::at_rest(p)
    }

    #[test]
    fn pursuit_at_target_is_quiet() {
        let v = vehicle_at(Vector3::new(3.0, 4.0, 6.5));
        let (_, cmd) = pursuit_command(&PidState::default(), &gains(), Vector2::new(3.0, 4.0), &v, 5.0, 1.5, None).unwrap();
        assert_eq!(cmd, Vector3::zeros());
    }

    #[test]
    fn pursuit_first_tick_is_proportional() {
        let v = vehicle_at(Vector3::new(0.0, 0.0, 6.5));
        let err = pursuit_error(Vector2::new(1.0, 0.0), &v, 5.0, 1.5);
        let (_, cmd) = pursuit_command(&PidState::primed(err), &gains(), Vector2::new(1.0, 0.0), &v, 5.0, 1.5, None).unwrap();
        assert!((cmd.x - 0.5).abs() < 1e-6);
        assert_eq!(cmd.z, 0.0);
    }

    #[test]
    fn pursuit_converges_on_static_rover() {
        let limits = VehicleLimits::default();
        let rover = Vector2::new(12.0, -7.0);
        let mut v = vehicle_at(Vector3::new(0.0, 0.0, 10.0));
        let mut pid = PidState::primed(pursuit_error(rover, &v, 5.0, 1.5));
        for _ in 0..500 {
            let (next, cmd) = pursuit_command(&pid, &gains(), rover, &v, 5.0, 1.5, None).unwrap();
            pid = next;
            v = step_vehicle(&v, velocity_limiter(cmd, &limits), &limits, 0.05).unwrap();
        }
        assert!(pursuit_error(rover, &v, 5.0, 1.5).norm() <= PURSUIT_CONVERGED_ERROR);
    }

    #[test]
    fn lawnmower_small_box() {
        let p = lawnmower_waypoints([0.0, 0.0, 20.0, 20.0], 10.0, 10.0).unwrap();
        let expected: Vec<Vector3<f64>> = [
            (0.0, 0.0), (20.0, 0.0), (20.0, 10.0), (0.0, 10.0), (0.0, 20.0), (20.0, 20.0),
        ]
        .iter()
        .map(|&(x, y)| Vector3::new(x, y, 10.0))
        .collect();
        assert_eq!(p.waypoints, expected);
    }

    #[test]
    fn lawnmower_wide_spacing_clamps() {
        let p = lawnmower_waypoints([0.0, 0.0, 20.0, 20.0], 50.0, 10.0).unwrap();
        assert_eq!(p.waypoints.len(), 4);
        assert_eq!(p.waypoints[0].y, 0.0);
        assert_eq!(p.waypoints[3].y, 20.0);
    }

    #[test]
    fn lawnmower_degenerate() {
        assert!(matches!(
            lawnmower_waypoints([5.0, 0.0, 5.0, 10.0], 1.0, 10.0),
            Err(ControlError::DegenerateBounds(_))
        ));
        assert!(lawnmower_waypoints([0.0, 0.0, 5.0, 10.0], 0.0, 10.0).is_err());
    }

    #[test]
    fn spiral_degenerate_radius() {
        let p = spiral_waypoints(Vector2::new(3.0, 4.0), 5.0, 0.0, 10.0);
        assert_eq!(p.waypoints, vec![Vector3::new(3.0, 4.0, 10.0)]);
    }

    #[test]
    fn spiral_step5_radius10() {
        let p = spiral_waypoints(Vector2::zeros(), 5.0, 10.0, 0.0);
        let xy: Vec<(f64, f64)> = p.waypoints.iter().map(|w| (w.x, w.y)).collect();
        assert_eq!(
            xy,
            vec![
                (0.0, 0.0), (5.0, 0.0), (5.0, 5.0), (-5.0, 5.0), (-5.0, -5.0),
                (10.0, -5.0), (10.0, 10.0), (-10.0, 10.0), (-10.0, -10.0), (10.0, -10.0),
            ]
        );
    }

    fn camera() -> CameraModel {
        CameraModel { pixel_noise_sigma: 0.0, ..CameraModel::default() }
    }

    fn detection_at(u: f64, v: f64, depth: f64) -> Detection {
        let f = camera().focal_length();
        Detection {
            centroid: [u, v],
            area: 100.0,
            world_range: depth * (f * f + u * u + v * v).sqrt() / f,
        }
    }

    #[test]
    fn centred_target_descends_straight() {
        let cmd = servo_descent_command(&detection_at(0.0, 0.0, 10.0), &camera(), 1.0, 0.5);
        assert_eq!(cmd, Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn edge_target_stops_descent() {
        let cmd = servo_descent_command(&detection_at(320.0, 0.0, 10.0), &camera(), 1.0, 0.5);
        assert_eq!(cmd.z, 0.0);
        let inner = servo_descent_command(&detection_at(100.0, 0.0, 10.0), &camera(), 1.0, 0.5);
        assert!(cmd.x > inner.x);
    }

    #[test]
    fn back_projected_offset() {
        let f = camera().focal_length();
        let offset = 32.0 * 10.0 / f;
        assert!((offset - 0.839).abs() < 1e-3);
        let cmd = servo_descent_command(&detection_at(32.0, 0.0, 10.0), &camera(), 1.0, 0.5);
        assert!((cmd.x - 0.5 * offset).abs() < 1e-12);
        assert!((cmd.x - 0.42).abs() < 0.005);
    }

    fn readings(ranges: [Option<f64>; 8]) -> [SonarReading; 8] {
        std::array::from_fn(|i| SonarReading { azimuth: i as f64 * std::f64::consts::FRAC_PI_4, range: ranges[i], max_range: 10.0 })
    }

    #[test]
    fn avoidance_rules() {
        let base = Vector3::new(1.0, 0.0, -0.5);
        assert_eq!(terrain_avoidance_command(base, &readings([None; 8]), 4.0, 1.0), base);
        let mut r = [None; 8];
        r[3] = Some(3.0);
        assert_eq!(terrain_avoidance_command(base, &readings(r), 4.0, 1.0), Vector3::new(1.0, 0.0, 1.0));
        r[3] = Some(4.0);
        assert_eq!(terrain_avoidance_command(base, &readings(r), 4.0, 1.0), base);
    }

    proptest! {
        #[test]
        fn pid_is_axis_separable(
            errs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..30),
            v in (-3.0..3.0f64, -3.0..3.0f64, -1.5..1.5f64)
        ) {
            let g = gains();
            let vel = Vector3::new(v.0, v.1, v.2);
            let mut joint = PidState::default();
            let mut single = [PidState::default(); 3];
            for e in errs {
                let e = Vector3::new(e.0, e.1, e.2);
                let (nj, cj) = pid_step(&joint, &g, e, vel).unwrap();
                joint = nj;
                for axis in 0..3 {
                    let mut ea = Vector3::zeros();
                    ea[axis] = e[axis];
                    let mut va = Vector3::zeros();
                    va[axis] = vel[axis];
                    let (ns, cs) = pid_step(&single[axis], &g, ea, va).unwrap();
                    single[axis] = ns;
                    prop_assert_eq!(cs[axis], cj[axis]);
                }
            }
        }

        #[test]
        fn lawnmower_covers_box(
            xmin in -50.0..0.0f64, ymin in -50.0..0.0f64, w in 1.0..100.0f64, h in 1.0..100.0f64, spacing in 0.5..30.0f64
        ) {
            let p = lawnmower_waypoints([xmin, ymin, xmin + w, ymin + h], spacing, 5.0).unwrap();
            let rows: Vec<f64> = p.waypoints.iter().map(|w| w.y).collect();
            for k in 0..=50 {
                let y = ymin + h * k as f64 / 50.0;
                let d = rows.iter().map(|r| (r - y).abs()).fold(f64::INFINITY, f64::min);
                prop_assert!(d <= spacing / 2.0 + 1e-9);
            }
        }

        #[test]
        fn spiral_unique_and_bounded(step in 0.5..20.0f64, radius in 0.0..80.0f64) {
            let p = spiral_waypoints(Vector2::new(1.0, -2.0), step, radius, 10.0);
            for (i, a) in p.waypoints.iter().enumerate() {
                prop_assert!((a.x - 1.0).abs().max((a.y + 2.0).abs()) <= radius + 1e-9);
                for b in &p.waypoints[i + 1..] {
                    prop_assert!(a != b);
                }
            }
        }

        #[test]
        fn avoidance_keeps_horizontal(
            bx in -3.0..3.0f64, by in -3.0..3.0f64, bz in -2.0..2.0f64,
            r in prop::collection::vec(prop::option::of(0.1..10.0f64), 8)
        ) {
            let base = Vector3::new(bx, by, bz);
            let ranges: [Option<f64>; 8] = std::array::from_fn(|i| r[i]);
            let out = terrain_avoidance_command(base, &readings(ranges), 4.0, 1.0);
            prop_assert_eq!(out.x, base.x);
            prop_assert_eq!(out.y, base.y);
        }

        #[test]
        fn descent_monotone_in_offset(a in 0.0..400.0f64, b in 0.0..400.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let c_lo = servo_descent_command(&detection_at(lo, 0.0, 5.0), &camera(), 1.0, 0.5);
            let c_hi = servo_descent_command(&detection_at(hi, 0.0, 5.0), &camera(), 1.0, 0.5);
            prop_assert!((-c_hi.z) <= (-c_lo.z));
        }
    }
}

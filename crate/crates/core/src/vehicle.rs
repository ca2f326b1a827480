//! Kinematic sUAS model: first-order velocity response, algebraic pitch law
//! and the velocity limiter shared by every controller.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("velocity command is not finite: {0:?}")]
    NonFiniteCommand([f64; 3]),
    #[error("time step must be positive (got {0})")]
    NonPositiveTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Heading of the horizontal velocity, radians from +x.
    pub yaw: f64,
    /// Forward tilt, positive nose-down.
    pub pitch: f64,
    pub probe_attached: bool,
    pub landed: bool,
}

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            yaw: 0.0,
            pitch: 0.0,
            probe_attached: false,
            landed: false,
        }
    }

    pub fn horizontal_speed(&self) -> f64 {
        self.velocity.xy().norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleLimits {
    pub max_speed: f64,
    pub max_vertical_speed: f64,
    pub response_tau: f64,
    /// Radians of pitch per m/s of horizontal speed.
    pub pitch_gain: f64,
    pub pitch_max: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self {
            max_speed: 3.0,
            max_vertical_speed: 1.5,
            response_tau: 0.5,
            pitch_gain: 5f64.to_radians(),
            pitch_max: 30f64.to_radians(),
        }
    }
}

impl VehicleLimits {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("max_speed", self.max_speed),
            ("max_vertical_speed", self.max_vertical_speed),
            ("response_tau", self.response_tau),
            ("pitch_gain", self.pitch_gain),
            ("pitch_max", self.pitch_max),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be strictly positive (got {v})"));
            }
        }
        Ok(())
    }
}

/// Rescale the horizontal part of `command` onto the `max_speed` disc and
/// clamp the vertical part to `±max_vertical_speed`.
pub fn velocity_limiter(command: Vector3<f64>, limits: &VehicleLimits) -> Vector3<f64> {
    let horizontal = command.xy();
    let norm = horizontal.norm();
    let mut horizontal = if norm > limits.max_speed {
        horizontal * (limits.max_speed / norm)
    } else {
        horizontal
    };
    // rescaling can land an ulp above the cap
    while horizontal.norm() > limits.max_speed {
        horizontal *= 1.0 - f64::EPSILON;
    }
    let vz = command
        .z
        .clamp(-limits.max_vertical_speed, limits.max_vertical_speed);
    Vector3::new(horizontal.x, horizontal.y, vz)
}

/// Proportional position-setpoint controller, limited.
pub fn position_setpoint_command(
    state: &VehicleState,
    setpoint: Vector3<f64>,
    gain: f64,
    limits: &VehicleLimits,
) -> Vector3<f64> {
    velocity_limiter((setpoint - state.position) * gain, limits)
}

pub fn pitch_for_speed(horizontal_speed: f64, limits: &VehicleLimits) -> f64 {
    (limits.pitch_gain * horizontal_speed).min(limits.pitch_max)
}

/// One explicit step of the kinematic model.
///
/// The velocity relaxes toward the limited command with `α = min(1, dt/τ)` and
/// the position integrates the new velocity.
pub fn step_vehicle(
    state: &VehicleState,
    command: Vector3<f64>,
    limits: &VehicleLimits,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    if !command.iter().all(|c| c.is_finite()) {
        return Err(VehicleError::NonFiniteCommand([command.x, command.y, command.z]));
    }
    if !(dt > 0.0) {
        return Err(VehicleError::NonPositiveTimeStep(dt));
    }
    let target = velocity_limiter(command, limits);
    let alpha = (dt / limits.response_tau).min(1.0);
    let velocity = state.velocity + (target - state.velocity) * alpha;
    let position = state.position + velocity * dt;
    let horizontal: Vector2<f64> = velocity.xy();
    let speed = horizontal.norm();
    let yaw = if speed > 1e-9 {
        horizontal.y.atan2(horizontal.x)
    } else {
        state.yaw
    };
    Ok(VehicleState {
        position,
        velocity,
        yaw,
        pitch: pitch_for_speed(speed, limits),
        ..*state
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn limits(max_speed: f64, max_vz: f64) -> VehicleLimits {
        VehicleLimits { max_speed, max_vertical_speed: max_vz, ..VehicleLimits::default() }
    }

    #[test]
    fn zero_command_is_fixed_point() {
        let s = VehicleState::at_rest(Vector3::new(1.0, 2.0, 3.0));
        let n = step_vehicle(&s, Vector3::zeros(), &VehicleLimits::default(), 0.05).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn first_order_response_with_euler_position() {
        let s = VehicleState::at_rest(Vector3::zeros());
        let l = VehicleLimits { response_tau: 0.5, ..VehicleLimits::default() };
        let n = step_vehicle(&s, Vector3::new(2.0, 0.0, 0.0), &l, 0.05).unwrap();
        // alpha = 0.05 / 0.5 = 0.1
        assert!((n.velocity - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
        assert!((n.position.x - 0.01).abs() < 1e-15);
    }

    #[test]
    fn pitch_law() {
        let l = VehicleLimits { pitch_gain: 0.0873, pitch_max: 0.524, ..VehicleLimits::default() };
        assert!((pitch_for_speed(2.0, &l) - 0.1746).abs() < 1e-12);
        assert_eq!(pitch_for_speed(100.0, &l), 0.524);
    }

    #[test]
    fn non_finite_command_rejected() {
        let s = VehicleState::at_rest(Vector3::zeros());
        let err = step_vehicle(&s, Vector3::new(f64::NAN, 0.0, 0.0), &VehicleLimits::default(), 0.05);
        assert!(matches!(err, Err(VehicleError::NonFiniteCommand(_))));
    }

    #[test]
    fn setpoint_command_clips() {
        let s = VehicleState::at_rest(Vector3::zeros());
        let l = limits(2.0, 1.0);
        assert_eq!(position_setpoint_command(&s, Vector3::zeros(), 0.5, &l), Vector3::zeros());
        assert_eq!(
            position_setpoint_command(&s, Vector3::new(10.0, 0.0, 0.0), 0.5, &l),
            Vector3::new(2.0, 0.0, 0.0)
        );
        assert_eq!(
            position_setpoint_command(&s, Vector3::new(0.0, 0.0, -4.0), 0.5, &l),
            Vector3::new(0.0, 0.0, -1.0)
        );
    }

    #[test]
    fn limiter_examples() {
        let l = limits(2.0, 1.0);
        assert_eq!(velocity_limiter(Vector3::new(1.0, 0.0, 0.0), &l), Vector3::new(1.0, 0.0, 0.0));
        let c = velocity_limiter(Vector3::new(3.0, 4.0, 0.0), &l);
        assert!((c - Vector3::new(1.2, 1.6, 0.0)).norm() < 1e-15);
        assert_eq!(velocity_limiter(Vector3::new(0.0, 0.0, -5.0), &l), Vector3::new(0.0, 0.0, -1.0));
    }

    fn arb_cmd() -> impl Strategy<Value = Vector3<f64>> {
        (-20.0..20.0f64, -20.0..20.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn limiter_idempotent(c in arb_cmd()) {
            let l = VehicleLimits::default();
            let once = velocity_limiter(c, &l);
            prop_assert_eq!(velocity_limiter(once, &l), once);
        }

        #[test]
        fn limiter_preserves_direction(c in arb_cmd()) {
            let out = velocity_limiter(c, &VehicleLimits::default());
            let cross = c.x * out.y - c.y * out.x;
            prop_assert!(cross.abs() <= 1e-12);
            prop_assert!(c.xy().dot(&out.xy()) >= 0.0);
        }

        #[test]
        fn zero_command_decays(v in arb_cmd(), n in 1usize..200) {
            let l = VehicleLimits::default();
            let v0 = velocity_limiter(v, &l);
            let mut s = VehicleState { velocity: v0, ..VehicleState::at_rest(Vector3::zeros()) };
            let dt = 0.05;
            let alpha: f64 = (dt / l.response_tau).min(1.0);
            for _ in 0..n {
                s = step_vehicle(&s, Vector3::zeros(), &l, dt).unwrap();
            }
            prop_assert!(s.velocity.norm() <= v0.norm() * (1.0 - alpha).powi(n as i32) * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn speed_and_pitch_stay_in_limits(cmds in prop::collection::vec(arb_cmd(), 1..100)) {
            let l = VehicleLimits::default();
            let mut s = VehicleState::at_rest(Vector3::zeros());
            for c in cmds {
                s = step_vehicle(&s, c, &l, 0.05).unwrap();
                prop_assert!(s.horizontal_speed() <= l.max_speed * (1.0 + 1e-12));
                prop_assert!(s.velocity.z.abs() <= l.max_vertical_speed * (1.0 + 1e-12));
                prop_assert!(s.pitch >= 0.0 && s.pitch <= l.pitch_max);
                prop_assert_eq!(s.pitch == 0.0, s.horizontal_speed() == 0.0);
            }
        }
    }
}

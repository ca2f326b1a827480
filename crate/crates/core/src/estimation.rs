//! Constant-velocity Kalman tracker for the rover, fusing GPS fixes and
//! feature-gated odometry, with a latched tracking-lost monitor.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalue floor used to accept a covariance as positive semi-definite.
pub const PSD_TOLERANCE: f64 = -1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("covariance is not symmetric positive semi-definite (min eigenvalue {min_eigenvalue:e}, asymmetry {asymmetry:e})")]
    NonPsdCovariance { min_eigenvalue: f64, asymmetry: f64 },
    #[error("time step must be positive (got {0})")]
    NonPositiveTimeStep(f64),
    #[error("measurement is not finite")]
    NonFiniteMeasurement,
    #[error("measurement sigma must be positive (got {0})")]
    NonPositiveSigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    pub accel_noise_sigma: f64,
    pub gps_sigma: f64,
    pub odometry_sigma: f64,
    pub lost_timeout: f64,
    pub lost_cov_trace: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            accel_noise_sigma: 0.5,
            gps_sigma: 0.5,
            odometry_sigma: 0.1,
            lost_timeout: 5.0,
            lost_cov_trace: 4.0,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("accel_noise_sigma", self.accel_noise_sigma),
            ("gps_sigma", self.gps_sigma),
            ("odometry_sigma", self.odometry_sigma),
            ("lost_timeout", self.lost_timeout),
            ("lost_cov_trace", self.lost_cov_trace),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be strictly positive (got {v})"));
            }
        }
        Ok(())
    }
}

/// Filter state `[px, py, vx, vy]` with its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoverTrackState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub last_odometry_time: f64,
    pub tracking_lost: bool,
}

impl RoverTrackState {
    /// Diffuse prior centred at `position` with zero velocity.
    pub fn new(position: Vector2<f64>, position_var: f64, velocity_var: f64) -> Self {
        Self {
            mean: Vector4::new(position.x, position.y, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(
                position_var,
                position_var,
                velocity_var,
                velocity_var,
            )),
            last_odometry_time: 0.0,
            tracking_lost: false,
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.mean[2], self.mean[3])
    }

    pub fn covariance_trace(&self) -> f64 {
        self.covariance.trace()
    }
}

pub fn check_psd(p: &Matrix4<f64>) -> Result<(), EstimationError> {
    let asymmetry = (p - p.transpose()).abs().max();
    let scale = p.abs().max().max(1.0);
    let min_eigenvalue = SymmetricEigen::new(*p).eigenvalues.min();
    if asymmetry > 1e-9 * scale || min_eigenvalue < PSD_TOLERANCE * scale || !min_eigenvalue.is_finite() {
        return Err(EstimationError::NonPsdCovariance { min_eigenvalue, asymmetry });
    }
    Ok(())
}

pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// Piecewise-constant white-acceleration process noise.
pub fn process_noise(accel_noise_sigma: f64, dt: f64) -> Matrix4<f64> {
    let s2 = accel_noise_sigma * accel_noise_sigma;
    let pp = s2 * dt.powi(4) / 4.0;
    let pv = s2 * dt.powi(3) / 2.0;
    let vv = s2 * dt * dt;
    let mut q = Matrix4::zeros();
    for axis in 0..2 {
        q[(axis, axis)] = pp;
        q[(axis, axis + 2)] = pv;
        q[(axis + 2, axis)] = pv;
        q[(axis + 2, axis + 2)] = vv;
    }
    q
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

pub fn kf_predict(
    state: &RoverTrackState,
    params: &KalmanParams,
    dt: f64,
) -> Result<RoverTrackState, EstimationError> {
    if !(dt > 0.0) {
        return Err(EstimationError::NonPositiveTimeStep(dt));
    }
    check_psd(&state.covariance)?;
    let f = transition(dt);
    Ok(RoverTrackState {
        mean: f * state.mean,
        covariance: symmetrize(f * state.covariance * f.transpose() + process_noise(params.accel_noise_sigma, dt)),
        ..*state
    })
}

/// Position-only measurement update in Joseph form.
pub fn kf_update(
    state: &RoverTrackState,
    measurement: Vector2<f64>,
    measurement_sigma: f64,
) -> Result<RoverTrackState, EstimationError> {
    if !measurement.iter().all(|m| m.is_finite()) {
        return Err(EstimationError::NonFiniteMeasurement);
    }
    if !(measurement_sigma > 0.0) {
        return Err(EstimationError::NonPositiveSigma(measurement_sigma));
    }
    check_psd(&state.covariance)?;
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let p = state.covariance;
    let r = Matrix2::identity() * (measurement_sigma * measurement_sigma);
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or(EstimationError::NonPsdCovariance { min_eigenvalue: 0.0, asymmetry: 0.0 })?;
    let k = p * h.transpose() * s_inv;
    let innovation = measurement - h * state.mean;
    let i_kh = Matrix4::identity() - k * h;
    let covariance = symmetrize(i_kh * p * i_kh.transpose() + k * r * k.transpose());
    Ok(RoverTrackState {
        mean: state.mean + k * innovation,
        covariance,
        ..*state
    })
}

/// One tracker tick: predict, fuse whatever arrived, update the health
/// monitor.
pub fn track_rover(
    state: &RoverTrackState,
    params: &KalmanParams,
    t: f64,
    gps: Option<Vector2<f64>>,
    odometry: Option<Vector2<f64>>,
    dt: f64,
) -> Result<RoverTrackState, EstimationError> {
    let mut next = kf_predict(state, params, dt)?;
    if let Some(fix) = gps {
        next = kf_update(&next, fix, params.gps_sigma)?;
    }
    if let Some(odo) = odometry {
        next = kf_update(&next, odo, params.odometry_sigma)?;
        next.last_odometry_time = t;
        next.tracking_lost = false;
    } else if !next.tracking_lost
        && t - next.last_odometry_time > params.lost_timeout
        && next.covariance_trace() > params.lost_cov_trace
    {
        next.tracking_lost = true;
    }
    Ok(next)
}

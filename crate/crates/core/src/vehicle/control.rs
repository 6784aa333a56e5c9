use serde::{Deserialize, Serialize};

use super::VehicleError;

/// Chassis, drive and controller constants of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub wheelbase_m: f64,
    pub track_m: f64,
    pub wheel_radius_m: f64,
    pub cruise_speed_m_s: f64,
    /// Steady-state wheel speed per unit control (rad/s).
    pub motor_gain: f64,
    pub motor_time_constant_s: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub output_limit: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase_m: 0.36,
            track_m: 0.35,
            wheel_radius_m: 0.05,
            cruise_speed_m_s: 0.1,
            motor_gain: 1.0,
            motor_time_constant_s: 0.2,
            kp: 2.0,
            ki: 5.0,
            kd: 0.0,
            output_limit: 5.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        let positive = [
            self.wheelbase_m,
            self.track_m,
            self.wheel_radius_m,
            self.cruise_speed_m_s,
            self.motor_gain,
            self.motor_time_constant_s,
            self.output_limit,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err("vehicle dimensions, speeds and plant constants must be positive");
        }
        if [self.kp, self.ki, self.kd].iter().any(|g| !(*g >= 0.0)) {
            return Err("controller gains must be non-negative");
        }
        Ok(())
    }

    /// Wheel angular speed that yields the cruise ground speed.
    pub fn cruise_wheel_rate(&self) -> f64 {
        self.cruise_speed_m_s / self.wheel_radius_m
    }

    /// Yaw rate when the wheels counter-rotate at the cruise rim speed.
    pub fn turn_yaw_rate(&self) -> f64 {
        2.0 * self.cruise_speed_m_s / self.track_m
    }

    pub fn pid(&self) -> PidState {
        PidState::new(self.kp, self.ki, self.kd, self.output_limit)
    }
}

/// PID with output clamp and integral anti-windup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral: f64,
    pub prev_error: f64,
    pub output_limit: f64,
}

impl PidState {
    pub fn new(kp: f64, ki: f64, kd: f64, output_limit: f64) -> Self {
        Self { kp, ki, kd, integral: 0.0, prev_error: 0.0, output_limit }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = 0.0;
    }

    /// One control update; `dt_s` must be positive.
    pub fn update(&mut self, setpoint: f64, measured: f64, dt_s: f64) -> f64 {
        debug_assert!(dt_s > 0.0, "pid dt must be positive");
        let error = setpoint - measured;
        self.integral += error * dt_s;
        if self.ki > 0.0 {
            let bound = self.output_limit / self.ki;
            self.integral = self.integral.clamp(-bound, bound);
        }
        let derivative = (error - self.prev_error) / dt_s;
        self.prev_error = error;
        let u = self.kp * error + self.ki * self.integral + self.kd * derivative;
        u.clamp(-self.output_limit, self.output_limit)
    }
}

pub fn pid_update(pid: &mut PidState, setpoint: f64, measured: f64, dt_s: f64) -> f64 {
    pid.update(setpoint, measured, dt_s)
}

/// First-order motor, explicit Euler: `w' = w + dt (K u - w) / tau`.
pub fn motor_step(omega: f64, u: f64, params: &VehicleParams, dt_s: f64) -> Result<f64, VehicleError> {
    let tau = params.motor_time_constant_s;
    if !(dt_s > 0.0) || dt_s > tau / 2.0 {
        return Err(VehicleError::TimestepTooLarge { dt_s, limit_s: tau / 2.0 });
    }
    Ok(omega + dt_s * (params.motor_gain * u - omega) / tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelDynamics {
    pub omega_left: f64,
    pub omega_right: f64,
}

impl WheelDynamics {
    pub fn linear_speed(&self, params: &VehicleParams) -> f64 {
        params.wheel_radius_m * (self.omega_left + self.omega_right) / 2.0
    }

    /// Counter-clockwise yaw rate in rad/s.
    pub fn yaw_rate(&self, params: &VehicleParams) -> f64 {
        params.wheel_radius_m * (self.omega_right - self.omega_left) / params.track_m
    }
}

/// Both wheels with their speed loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    pub wheels: WheelDynamics,
    pub left: PidState,
    pub right: PidState,
}

impl Drive {
    pub fn new(params: &VehicleParams) -> Self {
        Self { wheels: WheelDynamics::default(), left: params.pid(), right: params.pid() }
    }

    /// Regulates both wheels towards the given rates for one timestep.
    pub fn regulate(&mut self, left_sp: f64, right_sp: f64, params: &VehicleParams, dt_s: f64) -> Result<(), VehicleError> {
        let ul = self.left.update(left_sp, self.wheels.omega_left, dt_s);
        let ur = self.right.update(right_sp, self.wheels.omega_right, dt_s);
        self.wheels.omega_left = motor_step(self.wheels.omega_left, ul, params, dt_s)?;
        self.wheels.omega_right = motor_step(self.wheels.omega_right, ur, params, dt_s)?;
        Ok(())
    }

    pub fn brake(&mut self) {
        self.wheels = WheelDynamics::default();
        self.left.reset();
        self.right.reset();
    }
}

//! Discrete unicycle kinematics.
//!
//! The same forward-Euler model is used by the controller's prediction model
//! (at the controller step) and by the simulator plant (at the simulation step).

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::Vec2;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let w = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid may round up to exactly TAU for tiny negative inputs
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Planar robot pose. `theta` is kept in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite()
    }
}

/// One forward-Euler step of the unicycle model.
pub fn step_unicycle(state: RobotState, u: ControlInput, dt: f64) -> Result<RobotState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("robot state"));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("control input"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    Ok(step_unchecked(&state, &u, dt))
}

/// Hot-path variant without validation; callers guarantee finite inputs.
#[inline]
pub(crate) fn step_unchecked(state: &RobotState, u: &ControlInput, dt: f64) -> RobotState {
    let (sin, cos) = state.theta.sin_cos();
    RobotState {
        x: state.x + u.v * cos * dt,
        y: state.y + u.v * sin * dt,
        theta: wrap_angle(state.theta + u.omega * dt),
    }
}

/// Propagates `state0` through `controls`. Element `k` is the state after
/// `k + 1` steps, so the initial state is not included.
pub fn rollout(state0: RobotState, controls: &[ControlInput], dt: f64) -> Result<Vec<RobotState>> {
    if controls.is_empty() {
        return Err(Error::EmptyControls);
    }
    let mut out = Vec::with_capacity(controls.len());
    let mut s = state0;
    for u in controls {
        s = step_unicycle(s, *u, dt)?;
        out.push(s);
    }
    Ok(out)
}

//! Ego vehicle state, the kinematic bicycle integrator, and noisy
//! localization.

use crate::geom::{wrap_angle, Point};
use crate::rng::{gaussian, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub position: Point,
    pub yaw: f64,
    pub speed: f64,
}

/// One controller output: front-wheel angle and the speed to chase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub steering: f64,
    pub target_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelLimits {
    pub comfort: f64,
    pub emergency: f64,
}

/// Advance the kinematic bicycle one step with explicit Euler. Position and
/// heading integrate with the speed and heading from the start of the step,
/// acceleration chases the commanded speed inside `[-emergency, +comfort]`,
/// and speed never goes negative. Non-finite inputs are a caller bug and
/// panic rather than propagating silently through the world state.
pub fn integrate_bicycle(
    state: &EgoState,
    command: &ControlCommand,
    limits: &AccelLimits,
    wheelbase: f64,
    dt: f64,
) -> EgoState {
    assert!(
        state.position.is_finite() && state.yaw.is_finite() && state.speed.is_finite(),
        "non-finite ego state"
    );
    assert!(
        command.steering.is_finite() && command.target_speed.is_finite(),
        "non-finite control command"
    );
    let accel =
        ((command.target_speed - state.speed) / dt).clamp(-limits.emergency, limits.comfort);
    let heading = Point::new(state.yaw.cos(), state.yaw.sin());
    EgoState {
        position: state.position + heading * (state.speed * dt),
        yaw: wrap_angle(state.yaw + state.speed / wheelbase * command.steering.tan() * dt),
        speed: (state.speed + accel * dt).max(0.0),
    }
}

/// The pose the on-board stack believes: true pose plus independent Gaussian
/// noise on each position axis and a tenth of that sigma on heading. Speed
/// comes from odometry and is taken as exact.
pub fn localize(state: &EgoState, sigma: f64, rng: &mut SimRng) -> EgoState {
    EgoState {
        position: state.position + Point::new(gaussian(rng, sigma), gaussian(rng, sigma)),
        yaw: state.yaw + gaussian(rng, sigma / 10.0),
        speed: state.speed,
    }
}

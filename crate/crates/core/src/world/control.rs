//! On-board path following: a pure-pursuit steering law plus a braking-aware
//! velocity plan over the active waypoint list.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::road::project::project_onto_polyline;
use crate::road::Waypoint;

use super::ego::{ControlCommand, EgoState};

/// Gap kept between the vehicle and the point it stops for an obstacle.
pub const DEFAULT_STANDOFF: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurePursuitParams {
    /// Seconds of travel converted into lookahead distance.
    pub lookahead_gain: f64,
    pub min_lookahead: f64,
    pub wheelbase: f64,
    pub max_steering: f64,
}

impl Default for PurePursuitParams {
    fn default() -> Self {
        PurePursuitParams {
            lookahead_gain: 0.8,
            min_lookahead: 2.0,
            wheelbase: 2.7,
            max_steering: 0.6,
        }
    }
}

/// Cumulative arc length at each waypoint, measured along the chords from
/// the first waypoint.
pub fn waypoint_arcs(waypoints: &[Waypoint]) -> Vec<f64> {
    let mut arcs = Vec::with_capacity(waypoints.len());
    let mut acc = 0.0;
    for (i, wp) in waypoints.iter().enumerate() {
        if i > 0 {
            acc += wp.position().distance(waypoints[i - 1].position());
        }
        arcs.push(acc);
    }
    arcs
}

/// Pure-pursuit steering toward the first waypoint at least one lookahead
/// ahead of the vehicle's arc position, plus the planned speed at the
/// vehicle's position. Fails with `RouteExhausted` once fewer than two
/// waypoints remain at or ahead of the vehicle.
pub fn pure_pursuit_control(
    state: &EgoState,
    waypoints: &[Waypoint],
    params: &PurePursuitParams,
) -> Result<ControlCommand> {
    let nearest = nearest_index(state.position, waypoints)?;
    if waypoints.len() - nearest < 2 {
        return Err(Error::RouteExhausted);
    }

    let lookahead = (params.lookahead_gain * state.speed).max(params.min_lookahead);
    let arcs = waypoint_arcs(waypoints);
    let polyline: Vec<Point> = waypoints.iter().map(|w| w.position()).collect();
    let (s_ego, _) = project_onto_polyline(state.position, &polyline);

    let target = waypoints
        .iter()
        .zip(&arcs)
        .find(|(_, s)| **s - s_ego >= lookahead)
        .map(|(wp, _)| wp)
        .unwrap_or_else(|| waypoints.last().unwrap());

    // Lateral offset of the target in the vehicle frame sets the curvature
    // of the arc that reaches it; the commanded lookahead is used as the
    // chord length even when the target sits slightly beyond it.
    let rel = (target.position() - state.position).rotated(-state.yaw);
    let curvature = 2.0 * rel.y / (lookahead * lookahead);
    let steering =
        (params.wheelbase * curvature).atan().clamp(-params.max_steering, params.max_steering);

    let target_speed = waypoints
        .iter()
        .zip(&arcs)
        .find(|(_, s)| **s >= s_ego)
        .map(|(wp, _)| wp.velocity)
        .unwrap_or_else(|| waypoints.last().unwrap().velocity);

    Ok(ControlCommand { steering, target_speed })
}

fn nearest_index(position: Point, waypoints: &[Waypoint]) -> Result<usize> {
    if waypoints.len() < 2 {
        return Err(Error::RouteExhausted);
    }
    if !position.is_finite() {
        return Err(Error::NonFinite("vehicle position"));
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, wp) in waypoints.iter().enumerate() {
        let d = wp.position().distance(position);
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    Ok(best)
}

/// Cap waypoint velocities so the vehicle can stop with `comfort_decel` at
/// every stop arc and `standoff` short of every obstacle arc. Arcs use the
/// same origin as [`waypoint_arcs`]. Waypoints at or past a constraint get
/// velocity zero; approaching ones follow the braking parabola
/// `v = sqrt(2 a d)`.
pub fn plan_velocity(
    waypoints: &mut [Waypoint],
    obstacle_arcs: &[f64],
    stop_arcs: &[f64],
    comfort_decel: f64,
    standoff: f64,
) {
    let arcs = waypoint_arcs(waypoints);
    let limits: Vec<f64> = obstacle_arcs
        .iter()
        .map(|s| s - standoff)
        .chain(stop_arcs.iter().copied())
        .collect();
    for (wp, s) in waypoints.iter_mut().zip(&arcs) {
        for limit in &limits {
            let distance = limit - s;
            let cap = if distance <= 0.0 { 0.0 } else { (2.0 * comfort_decel * distance).sqrt() };
            wp.velocity = wp.velocity.min(cap);
        }
    }
}

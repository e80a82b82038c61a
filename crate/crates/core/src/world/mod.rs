//! Ground-truth world state: scripted actors, the ego vehicle's kinematics,
//! and the on-board path-following controllers.

mod actors;
mod control;
mod ego;

pub use actors::{Actor, ActorState, ObjectClass, ScriptKey};
pub use control::{plan_velocity, pure_pursuit_control, waypoint_arcs, PurePursuitParams, DEFAULT_STANDOFF};
pub use ego::{integrate_bicycle, localize, AccelLimits, ControlCommand, EgoState};

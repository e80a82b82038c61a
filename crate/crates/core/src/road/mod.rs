//! Road network model: a directed segment graph with polyline geometry,
//! point-to-segment projection, weighted shortest routes and arc-length
//! waypoint generation, plus the waypoint text-file interchange format.

mod graph;
pub(crate) mod project;
mod route;
mod waypoints;

#[cfg(test)]
pub(crate) use graph::testutil;

pub use graph::{Node, NodeId, RoadNetwork, Segment, SegmentDef, SegmentId};
pub use project::{project_to_segment, SegmentProjection};
pub use route::{
    distance_to_next_intersection, infer_route, next_intersection_on_route, remaining_nodes,
    shortest_route, Algorithm, Route, OFF_ROUTE_LATERAL_LIMIT,
};
pub use waypoints::{
    read_waypoint_file, read_waypoints, route_to_waypoints, write_waypoint_file, write_waypoints,
    Waypoint, DEFAULT_WAYPOINT_SPACING,
};

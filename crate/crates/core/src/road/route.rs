//! Weighted shortest routes over the road graph. Dijkstra and A* share one
//! search core and must return identical results; equal-cost paths resolve to
//! the lexicographically smallest node sequence so planning is deterministic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};
use crate::geom::Point;

use super::graph::{NodeId, RoadNetwork, SegmentId};
use super::project::project_onto_polyline;

/// A pose farther than this from every route segment is considered off-route.
pub const OFF_ROUTE_LATERAL_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dijkstra,
    AStar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub segments: Vec<SegmentId>,
    pub total_cost: f64,
}

/// Heap entry ordered by (cost, node sequence, segment sequence); the heap is
/// a max-heap, so `Ord` is reversed to pop the smallest entry first.
#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    priority: f64,
    nodes: Vec<NodeId>,
    segments: Vec<SegmentId>,
    cost: f64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| self.nodes.cmp(&other.nodes))
            .then_with(|| self.segments.cmp(&other.segments))
            .reverse()
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_weights(network: &RoadNetwork, weights: &BTreeMap<SegmentId, f64>) -> Result<()> {
    for seg in network.segments() {
        match weights.get(&seg.id) {
            None => return Err(Error::Config(format!("missing weight for segment {}", seg.id))),
            Some(w) if !(w.is_finite() && *w > 0.0) => {
                return Err(Error::Config(format!("weight for segment {} must be positive", seg.id)))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Admissible A* heuristic: straight-line distance scaled by the smallest
/// cost-per-meter of any segment. For travel-time weights this is distance
/// over the maximum free-flow speed; for penalized-length weights it is the
/// plain Euclidean distance. It never exceeds the true remaining cost and
/// satisfies the triangle inequality, so A* settles nodes exactly as
/// Dijkstra does.
fn heuristic_scale(network: &RoadNetwork, weights: &BTreeMap<SegmentId, f64>) -> f64 {
    network
        .segments()
        .iter()
        .map(|s| weights[&s.id] / s.length)
        .fold(f64::INFINITY, f64::min)
}

pub fn shortest_route(
    network: &RoadNetwork,
    origin: NodeId,
    destination: NodeId,
    weights: &BTreeMap<SegmentId, f64>,
    algorithm: Algorithm,
) -> Result<Route> {
    if network.node(origin).is_none() {
        return Err(Error::Config(format!("unknown origin node {origin}")));
    }
    if network.node(destination).is_none() {
        return Err(Error::Config(format!("unknown destination node {destination}")));
    }
    check_weights(network, weights)?;

    let goal = network.node_position(destination).unwrap();
    let scale = match algorithm {
        Algorithm::Dijkstra => 0.0,
        Algorithm::AStar => {
            let s = heuristic_scale(network, weights);
            if s.is_finite() {
                s
            } else {
                0.0
            }
        }
    };
    let h = |n: NodeId| network.node_position(n).unwrap().distance(goal) * scale;

    let mut heap = BinaryHeap::new();
    let mut settled: BTreeMap<NodeId, ()> = BTreeMap::new();
    let mut best_cost: BTreeMap<NodeId, f64> = BTreeMap::new();

    best_cost.insert(origin, 0.0);
    heap.push(Candidate {
        priority: h(origin),
        nodes: vec![origin],
        segments: vec![],
        cost: 0.0,
    });

    while let Some(cand) = heap.pop() {
        let node = *cand.nodes.last().unwrap();
        if settled.contains_key(&node) {
            continue;
        }
        settled.insert(node, ());
        if node == destination {
            return Ok(Route { nodes: cand.nodes, segments: cand.segments, total_cost: cand.cost });
        }
        for seg_id in network.outgoing(node) {
            let seg = network.segment(*seg_id).unwrap();
            if settled.contains_key(&seg.to) {
                continue;
            }
            let cost = cand.cost + weights[seg_id];
            // Equal-cost alternatives stay in the heap so the node-sequence
            // tie-break can pick between them.
            match best_cost.get(&seg.to) {
                Some(best) if cost > *best => continue,
                _ => {}
            }
            best_cost.insert(seg.to, cost.min(*best_cost.get(&seg.to).unwrap_or(&f64::INFINITY)));
            let mut nodes = cand.nodes.clone();
            nodes.push(seg.to);
            let mut segments = cand.segments.clone();
            segments.push(*seg_id);
            heap.push(Candidate { priority: cost + h(seg.to), nodes, segments, cost });
        }
    }

    Err(Error::NoRoute { from: origin.0, to: destination.0 })
}

/// Locate a pose on a route: nearest route segment (earliest on ties) and the
/// arc offset of the foot point within it. Off-route poses are rejected.
fn locate_on_route(pose: Point, route: &Route, network: &RoadNetwork) -> Result<(usize, f64)> {
    if route.segments.is_empty() {
        return Err(Error::EmptyRoute);
    }
    if !pose.is_finite() {
        return Err(Error::NonFinite("route pose"));
    }
    let mut at: Option<(usize, f64, f64)> = None; // (segment index, offset, lateral)
    for (i, seg_id) in route.segments.iter().enumerate() {
        let seg = network
            .segment(*seg_id)
            .ok_or_else(|| Error::Config(format!("route references unknown segment {seg_id}")))?;
        let (offset, lateral) = project_onto_polyline(pose, &seg.polyline);
        if at.map_or(true, |(_, _, best)| lateral < best) {
            at = Some((i, offset, lateral));
        }
    }
    let (idx, offset, lateral) = at.unwrap();
    if lateral > OFF_ROUTE_LATERAL_LIMIT {
        return Err(Error::OffRoute { lateral, limit: OFF_ROUTE_LATERAL_LIMIT });
    }
    Ok((idx, offset))
}

/// Route nodes still ahead of `pose`, starting with the endpoint of the
/// segment it currently occupies.
pub fn remaining_nodes(pose: Point, route: &Route, network: &RoadNetwork) -> Result<Vec<NodeId>> {
    let (idx, _) = locate_on_route(pose, route, network)?;
    Ok(route.nodes[idx + 1..].to_vec())
}

/// Next route node with degree >= 3 ahead of `pose`, with the remaining arc
/// length to it. `None` means the route ends without another intersection.
pub fn next_intersection_on_route(
    pose: Point,
    route: &Route,
    network: &RoadNetwork,
) -> Result<Option<(NodeId, f64)>> {
    let (idx, offset) = locate_on_route(pose, route, network)?;

    let mut distance = network.segment(route.segments[idx]).unwrap().length - offset;
    for i in idx..route.segments.len() {
        let seg = network.segment(route.segments[i]).unwrap();
        if i > idx {
            distance += seg.length;
        }
        if network.is_intersection(seg.to) {
            return Ok(Some((seg.to, distance)));
        }
    }
    Ok(None)
}

/// Remaining arc length to the next intersection, or +inf when the route ends
/// without one.
pub fn distance_to_next_intersection(
    pose: Point,
    route: &Route,
    network: &RoadNetwork,
) -> Result<f64> {
    Ok(next_intersection_on_route(pose, route, network)?.map_or(f64::INFINITY, |(_, d)| d))
}

/// Reconstruct the route a waypoint list follows by matching waypoints that
/// coincide with node positions, resolving the segment between consecutive
/// node hits. This is how the vehicle recovers node knowledge from a
/// downloaded route file, which carries geometry only.
pub fn infer_route(
    waypoints: &[crate::road::Waypoint],
    network: &RoadNetwork,
) -> Result<Route> {
    const NODE_SNAP: f64 = 1e-6;
    let mut nodes: Vec<NodeId> = Vec::new();
    for wp in waypoints {
        let p = Point::new(wp.x, wp.y);
        for id in network.node_ids() {
            if network.node_position(id).unwrap().distance(p) <= NODE_SNAP {
                if nodes.last() != Some(&id) {
                    nodes.push(id);
                }
                break;
            }
        }
    }
    if nodes.len() < 2 {
        return Err(Error::Config("waypoint list does not follow the road graph".into()));
    }
    let mut segments = Vec::with_capacity(nodes.len() - 1);
    let mut total_cost = 0.0;
    for w in nodes.windows(2) {
        let seg = network.segment_between(w[0], w[1]).ok_or_else(|| {
            Error::Config(format!("no segment between nodes {} and {}", w[0], w[1]))
        })?;
        segments.push(seg.id);
        total_cost += seg.length;
    }
    Ok(Route { nodes, segments, total_cost })
}

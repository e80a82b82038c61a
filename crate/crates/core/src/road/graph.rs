//! Directed road graph. Nodes carry positions; segments carry polyline
//! geometry, a length derived from it, and a free-flow speed. Segment ids are
//! assigned in declaration order, which downstream tie-breaks rely on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::geom::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub position: Point,
}

/// Segment as declared by the caller; geometry defaults to the straight line
/// between its endpoint nodes when `polyline` is empty.
#[derive(Debug, Clone)]
pub struct SegmentDef {
    pub from: NodeId,
    pub to: NodeId,
    pub polyline: Vec<Point>,
    pub free_flow_speed: f64,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub id: SegmentId,
    pub from: NodeId,
    pub to: NodeId,
    pub polyline: Vec<Point>,
    pub length: f64,
    pub free_flow_speed: f64,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: BTreeMap<NodeId, Node>,
    segments: Vec<Segment>,
    outgoing: BTreeMap<NodeId, Vec<SegmentId>>,
    neighbors: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

impl RoadNetwork {
    /// Build and validate a network. Segment ids are the indices of `defs`.
    pub fn new(nodes: Vec<Node>, defs: Vec<SegmentDef>) -> Result<Self> {
        let mut node_map = BTreeMap::new();
        for n in nodes {
            if !n.position.is_finite() {
                return Err(Error::Config(format!("node {} has a non-finite position", n.id)));
            }
            if node_map.insert(n.id, n.clone()).is_some() {
                return Err(Error::Config(format!("duplicate node id {}", n.id)));
            }
        }

        let mut segments = Vec::with_capacity(defs.len());
        for (i, def) in defs.into_iter().enumerate() {
            let id = SegmentId(i as u32);
            let from = node_map
                .get(&def.from)
                .ok_or_else(|| Error::Config(format!("segment {id}: unknown node {}", def.from)))?
                .position;
            let to = node_map
                .get(&def.to)
                .ok_or_else(|| Error::Config(format!("segment {id}: unknown node {}", def.to)))?
                .position;
            let polyline = if def.polyline.is_empty() {
                vec![from, to]
            } else {
                let p = def.polyline;
                if p.len() < 2 || p[0].distance(from) > 1e-6 || p[p.len() - 1].distance(to) > 1e-6 {
                    return Err(Error::Config(format!(
                        "segment {id}: polyline must run from node {} to node {}",
                        def.from, def.to
                    )));
                }
                if p.iter().any(|q| !q.is_finite()) {
                    return Err(Error::Config(format!("segment {id}: non-finite polyline point")));
                }
                p
            };
            let length = polyline_length(&polyline);
            if length <= 0.0 {
                return Err(Error::Config(format!("segment {id}: zero length")));
            }
            if !(def.free_flow_speed > 0.0) {
                return Err(Error::Config(format!("segment {id}: free-flow speed must be positive")));
            }
            segments.push(Segment {
                id,
                from: def.from,
                to: def.to,
                polyline,
                length,
                free_flow_speed: def.free_flow_speed,
            });
        }

        let mut outgoing: BTreeMap<NodeId, Vec<SegmentId>> = BTreeMap::new();
        let mut neighbors: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for n in node_map.keys() {
            outgoing.insert(*n, Vec::new());
            neighbors.insert(*n, BTreeSet::new());
        }
        for s in &segments {
            outgoing.get_mut(&s.from).unwrap().push(s.id);
            neighbors.get_mut(&s.from).unwrap().insert(s.to);
            neighbors.get_mut(&s.to).unwrap().insert(s.from);
        }

        Ok(RoadNetwork { nodes: node_map, segments, outgoing, neighbors })
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_position(&self, id: NodeId) -> Option<Point> {
        self.nodes.get(&id).map(|n| n.position)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn segment(&self, id: SegmentId) -> Option<&Segment> {
        self.segments.get(id.0 as usize)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn outgoing(&self, node: NodeId) -> &[SegmentId] {
        self.outgoing.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of distinct adjacent nodes, counting both directions.
    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbors.get(&node).map_or(0, BTreeSet::len)
    }

    /// An intersection is a node where at least three roads meet.
    pub fn is_intersection(&self, node: NodeId) -> bool {
        self.degree(node) >= 3
    }

    /// Lowest-id segment from `from` to `to`, if any.
    pub fn segment_between(&self, from: NodeId, to: NodeId) -> Option<&Segment> {
        self.outgoing(from)
            .iter()
            .map(|id| &self.segments[id.0 as usize])
            .find(|s| s.to == to)
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::grid;
    use super::*;

    #[test]
    fn builds_lengths_and_adjacency() {
        let net = grid(&[(0, 0.0, 0.0), (1, 100.0, 0.0), (2, 100.0, 50.0)], &[(0, 1), (1, 2), (2, 1)], 5.0);
        assert_eq!(net.segment(SegmentId(0)).unwrap().length, 100.0);
        assert_eq!(net.segment(SegmentId(1)).unwrap().length, 50.0);
        assert_eq!(net.outgoing(NodeId(1)), &[SegmentId(1)]);
        assert_eq!(net.degree(NodeId(1)), 2);
        assert!(!net.is_intersection(NodeId(1)));
    }

    #[test]
    fn intersection_needs_three_distinct_neighbors() {
        // A four-way node plus a dead end; both directions of a road count once.
        let net = grid(
            &[(0, 0.0, 0.0), (1, 10.0, 0.0), (2, 20.0, 0.0), (3, 10.0, 10.0)],
            &[(0, 1), (1, 0), (1, 2), (2, 1), (1, 3), (3, 1)],
            5.0,
        );
        assert!(net.is_intersection(NodeId(1)));
        assert!(!net.is_intersection(NodeId(0)));
        assert_eq!(net.degree(NodeId(1)), 3);
    }

    #[test]
    fn rejects_bad_definitions() {
        let nodes = vec![
            Node { id: NodeId(0), position: Point::new(0.0, 0.0) },
            Node { id: NodeId(1), position: Point::new(1.0, 0.0) },
        ];
        let bad_speed = vec![SegmentDef {
            from: NodeId(0),
            to: NodeId(1),
            polyline: vec![],
            free_flow_speed: 0.0,
        }];
        assert!(RoadNetwork::new(nodes.clone(), bad_speed).is_err());

        let unknown_node = vec![SegmentDef {
            from: NodeId(0),
            to: NodeId(9),
            polyline: vec![],
            free_flow_speed: 1.0,
        }];
        assert!(RoadNetwork::new(nodes.clone(), unknown_node).is_err());

        let zero_len = vec![SegmentDef {
            from: NodeId(0),
            to: NodeId(0),
            polyline: vec![],
            free_flow_speed: 1.0,
        }];
        assert!(RoadNetwork::new(nodes, zero_len).is_err());
    }

    #[test]
    fn polyline_must_match_endpoints() {
        let nodes = vec![
            Node { id: NodeId(0), position: Point::new(0.0, 0.0) },
            Node { id: NodeId(1), position: Point::new(10.0, 0.0) },
        ];
        let def = vec![SegmentDef {
            from: NodeId(0),
            to: NodeId(1),
            polyline: vec![Point::new(0.0, 0.0), Point::new(5.0, 3.0)],
            free_flow_speed: 1.0,
        }];
        assert!(RoadNetwork::new(nodes, def).is_err());
    }
}

//! Point-to-segment projection: locate the nearest point of the road network
//! and express it as (segment, longitudinal offset, lateral distance).

use crate::error::{Error, Result};
use crate::geom::Point;

use super::graph::{RoadNetwork, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection {
    pub segment_id: SegmentId,
    /// Arc length from the segment start to the foot point, in [0, length].
    pub longitudinal_offset: f64,
    /// Euclidean distance from the query point to the foot point.
    pub lateral_distance: f64,
}

/// Project a point onto a polyline, returning (offset, lateral distance).
/// Within a polyline, equidistant feet resolve to the smaller offset.
pub(crate) fn project_onto_polyline(point: Point, polyline: &[Point]) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    let mut acc = 0.0;
    for w in polyline.windows(2) {
        let (p, q) = (w[0], w[1]);
        let d = q - p;
        let len2 = d.dot(d);
        let t = if len2 > 0.0 { ((point - p).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let foot = p + d * t;
        let lateral = point.distance(foot);
        if lateral < best.1 {
            best = (acc + t * len2.sqrt(), lateral);
        }
        acc += len2.sqrt();
    }
    best
}

/// Nearest segment of the whole network. Equidistant candidates resolve to
/// the lowest segment id, which keeps overlapping two-way roads stable.
pub fn project_to_segment(point: Point, network: &RoadNetwork) -> Result<SegmentProjection> {
    if !point.is_finite() {
        return Err(Error::NonFinite("projection query point"));
    }
    let mut best: Option<SegmentProjection> = None;
    for seg in network.segments() {
        let (offset, lateral) = project_onto_polyline(point, &seg.polyline);
        let better = match &best {
            None => true,
            Some(b) => lateral < b.lateral_distance,
        };
        if better {
            best = Some(SegmentProjection {
                segment_id: seg.id,
                longitudinal_offset: offset,
                lateral_distance: lateral,
            });
        }
    }
    best.ok_or_else(|| Error::Config("road network has no segments".into()))
}

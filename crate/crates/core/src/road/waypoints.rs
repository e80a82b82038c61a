//! Route geometry sampled into waypoints, plus the text file format the
//! planner publishes and vehicles consume.
//!
//! Waypoints are spaced evenly along each segment: a segment of length `L`
//! is split into `ceil(L / spacing)` equal intervals, so the spacing never
//! exceeds the requested value and every segment endpoint is a waypoint.
//! Consecutive segments share their join node; the duplicate point is
//! emitted once, by the outgoing segment, so heading and speed turn at the
//! join rather than one sample late.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Point;

use super::graph::RoadNetwork;
use super::route::Route;

pub const DEFAULT_WAYPOINT_SPACING: f64 = 1.0;

/// One sampled route point: position, heading of the lane at that point, and
/// the speed the planner assigned to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub velocity: f64,
}

impl Waypoint {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Position and heading at arc length `s` along a polyline. A point on a
/// vertex takes the heading of the piece that leaves it, so headings turn at
/// the vertex rather than one sample late; the final point keeps the heading
/// of the piece that reaches it.
fn arc_point(polyline: &[Point], s: f64) -> (Point, f64) {
    let mut acc = 0.0;
    let mut yaw = 0.0;
    for pair in polyline.windows(2) {
        let d = pair[1] - pair[0];
        let len = d.norm();
        if len <= 0.0 {
            continue;
        }
        yaw = d.y.atan2(d.x);
        if s - acc < len {
            let t = ((s - acc) / len).max(0.0);
            return (pair[0] + d * t, yaw);
        }
        acc += len;
    }
    (*polyline.last().unwrap(), yaw)
}

/// Sample a route into waypoints at most `spacing` apart. Waypoint velocity
/// is the free-flow speed of the segment the point lies on.
pub fn route_to_waypoints(
    network: &RoadNetwork,
    route: &Route,
    spacing: f64,
) -> Result<Vec<Waypoint>> {
    if route.segments.is_empty() {
        return Err(Error::EmptyRoute);
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::Config(format!("waypoint spacing must be positive, got {spacing}")));
    }

    let mut waypoints = Vec::new();
    for (i, seg_id) in route.segments.iter().enumerate() {
        let seg = network
            .segment(*seg_id)
            .ok_or_else(|| Error::Config(format!("route references unknown segment {seg_id}")))?;
        // The epsilon keeps lengths that are an exact multiple of the spacing
        // from picking up a spurious extra interval through float error.
        let intervals = ((seg.length / spacing - 1e-9).ceil() as usize).max(1);
        let step = seg.length / intervals as f64;
        // The outgoing segment owns the shared join point, so heading and
        // speed turn at the join itself; only the last segment emits its end.
        let last = if i + 1 == route.segments.len() { intervals } else { intervals - 1 };
        for k in 0..=last {
            let (p, yaw) = arc_point(&seg.polyline, k as f64 * step);
            waypoints.push(Waypoint { x: p.x, y: p.y, z: 0.0, yaw, velocity: seg.free_flow_speed });
        }
    }
    Ok(waypoints)
}

const FILE_HEADER: &str = "x,y,z,yaw,velocity";

pub fn write_waypoints<W: Write>(mut out: W, waypoints: &[Waypoint]) -> Result<()> {
    writeln!(out, "{FILE_HEADER}")?;
    for wp in waypoints {
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            wp.x, wp.y, wp.z, wp.yaw, wp.velocity
        )?;
    }
    Ok(())
}

pub fn read_waypoints<R: Read>(input: R) -> Result<Vec<Waypoint>> {
    let mut lines = BufReader::new(input).lines();
    match lines.next() {
        Some(line) => {
            if line?.trim_end() != FILE_HEADER {
                return Err(Error::WaypointFile {
                    line: 1,
                    reason: format!("expected header `{FILE_HEADER}`"),
                });
            }
        }
        None => return Err(Error::WaypointFile { line: 1, reason: "empty file".into() }),
    }

    let mut waypoints = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let text = line.trim_end();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::WaypointFile {
                line: line_no,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let mut values = [0.0_f64; 5];
        for (value, field) in values.iter_mut().zip(&fields) {
            *value = field.trim().parse().map_err(|_| Error::WaypointFile {
                line: line_no,
                reason: format!("not a number: `{field}`"),
            })?;
            if !value.is_finite() {
                return Err(Error::WaypointFile {
                    line: line_no,
                    reason: format!("non-finite value: `{field}`"),
                });
            }
        }
        waypoints.push(Waypoint {
            x: values[0],
            y: values[1],
            z: values[2],
            yaw: values[3],
            velocity: values[4],
        });
    }
    Ok(waypoints)
}

pub fn write_waypoint_file<P: AsRef<Path>>(path: P, waypoints: &[Waypoint]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_waypoints(&mut out, waypoints)?;
    out.flush()?;
    Ok(())
}

pub fn read_waypoint_file<P: AsRef<Path>>(path: P) -> Result<Vec<Waypoint>> {
    read_waypoints(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::graph::testutil::grid;
    use super::super::graph::{NodeId, SegmentDef};
    use super::super::route::{shortest_route, Algorithm};
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn route_on(net: &RoadNetwork, from: u32, to: u32) -> Route {
        let w: BTreeMap<_, _> = net.segments().iter().map(|s| (s.id, s.length)).collect();
        shortest_route(net, NodeId(from), NodeId(to), &w, Algorithm::Dijkstra).unwrap()
    }

    #[test]
    fn straight_segment_samples_every_meter() {
        let net = grid(&[(0, 0.0, 0.0), (1, 10.0, 0.0)], &[(0, 1)], 4.0);
        let wps = route_to_waypoints(&net, &route_on(&net, 0, 1), 1.0).unwrap();
        assert_eq!(wps.len(), 11);
        for (k, wp) in wps.iter().enumerate() {
            assert_relative_eq!(wp.x, k as f64, epsilon = 1e-9);
            assert_relative_eq!(wp.y, 0.0);
            assert_relative_eq!(wp.yaw, 0.0);
            assert_relative_eq!(wp.velocity, 4.0);
        }
    }

    #[test]
    fn join_point_is_emitted_once() {
        let net = grid(&[(0, 0.0, 0.0), (1, 10.0, 0.0), (2, 10.0, 5.0)], &[(0, 1), (1, 2)], 4.0);
        let wps = route_to_waypoints(&net, &route_on(&net, 0, 2), 1.0).unwrap();
        // 11 on the first segment plus 5 more on the second.
        assert_eq!(wps.len(), 16);
        let joins: Vec<_> =
            wps.iter().filter(|w| (w.x - 10.0).abs() < 1e-9 && w.y.abs() < 1e-9).collect();
        assert_eq!(joins.len(), 1);
        // Heading turns to the outgoing segment at the join.
        assert_relative_eq!(joins[0].yaw, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn fractional_length_tightens_spacing() {
        let net = grid(&[(0, 0.0, 0.0), (1, 10.5, 0.0)], &[(0, 1)], 4.0);
        let wps = route_to_waypoints(&net, &route_on(&net, 0, 1), 1.0).unwrap();
        // ceil(10.5) = 11 intervals of 0.9545... m each.
        assert_eq!(wps.len(), 12);
        for pair in wps.windows(2) {
            let gap = pair[1].position().distance(pair[0].position());
            assert!(gap <= 1.0 + 1e-9, "gap {gap} wider than spacing");
            assert_relative_eq!(gap, 10.5 / 11.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_multiple_does_not_gain_an_interval() {
        let net = grid(&[(0, 0.0, 0.0), (1, 200.0, 0.0)], &[(0, 1)], 4.0);
        let wps = route_to_waypoints(&net, &route_on(&net, 0, 1), 1.0).unwrap();
        assert_eq!(wps.len(), 201);
    }

    #[test]
    fn polyline_corner_turns_heading_at_the_vertex() {
        let defs = vec![SegmentDef {
            from: NodeId(0),
            to: NodeId(1),
            polyline: vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(4.0, 4.0)],
            free_flow_speed: 4.0,
        }];
        let nodes = vec![(NodeId(0), Point::new(0.0, 0.0)), (NodeId(1), Point::new(4.0, 4.0))];
        let net = RoadNetwork::new(
            nodes.into_iter().map(|(id, p)| super::super::graph::Node { id, position: p }).collect(),
            defs,
        )
        .unwrap();
        let route = Route {
            nodes: vec![NodeId(0), NodeId(1)],
            segments: vec![super::super::graph::SegmentId(0)],
            total_cost: 8.0,
        };
        let wps = route_to_waypoints(&net, &route, 1.0).unwrap();
        assert_eq!(wps.len(), 9);
        // Waypoint 4 sits on the corner and already points up the second leg.
        assert_relative_eq!(wps[4].x, 4.0, epsilon = 1e-9);
        assert_relative_eq!(wps[4].y, 0.0, epsilon = 1e-9);
        assert_relative_eq!(wps[4].yaw, std::f64::consts::FRAC_PI_2);
        // The final point keeps the heading of the piece that reaches it.
        assert_relative_eq!(wps[8].yaw, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn empty_route_is_rejected() {
        let net = grid(&[(0, 0.0, 0.0), (1, 10.0, 0.0)], &[(0, 1)], 4.0);
        let route = Route { nodes: vec![NodeId(0)], segments: vec![], total_cost: 0.0 };
        assert!(matches!(route_to_waypoints(&net, &route, 1.0), Err(Error::EmptyRoute)));
    }

    #[test]
    fn file_roundtrip_preserves_values_to_six_decimals() {
        let wps = vec![
            Waypoint { x: 1.2345678, y: -2.0, z: 0.0, yaw: 1.3579246, velocity: 4.166667 },
            Waypoint { x: 200.0, y: 0.25, z: 0.0, yaw: 0.0, velocity: 4.166667 },
        ];
        let mut buf = Vec::new();
        write_waypoints(&mut buf, &wps).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,z,yaw,velocity\n"));
        assert!(text.ends_with('\n'));
        let back = read_waypoints(buf.as_slice()).unwrap();
        assert_eq!(back.len(), wps.len());
        for (a, b) in back.iter().zip(&wps) {
            assert!((a.x - b.x).abs() <= 5e-7);
            assert!((a.y - b.y).abs() <= 5e-7);
            assert!((a.yaw - b.yaw).abs() <= 5e-7);
            assert!((a.velocity - b.velocity).abs() <= 5e-7);
        }
    }

    #[test]
    fn malformed_files_are_rejected_with_line_numbers() {
        let cases: [(&str, usize); 4] = [
            ("", 1),
            ("x,y,yaw\n", 1),
            ("x,y,z,yaw,velocity\n1,2,3\n", 2),
            ("x,y,z,yaw,velocity\n1,2,3,4,5\n1,2,three,4,5\n", 3),
        ];
        for (text, want_line) in cases {
            match read_waypoints(text.as_bytes()) {
                Err(Error::WaypointFile { line, .. }) => assert_eq!(line, want_line, "{text:?}"),
                other => panic!("expected WaypointFile error for {text:?}, got {other:?}"),
            }
        }
        match read_waypoints("x,y,z,yaw,velocity\n1,2,inf,4,5\n".as_bytes()) {
            Err(Error::WaypointFile { line: 2, .. }) => {}
            other => panic!("expected non-finite rejection, got {other:?}"),
        }
    }
}

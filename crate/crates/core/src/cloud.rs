//! Cloud plane of the twin: synchronizes per-RSU perception channels, fuses
//! tracks into global objects, derives per-segment occupancy and congestion,
//! and serves route planning and download requests.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::net::wire::WireWaypoint;
use crate::road::{
    project_to_segment, route_to_waypoints, shortest_route, Algorithm, NodeId, RoadNetwork, Route,
    SegmentId, Waypoint,
};
use crate::rsu::Track;
use crate::time::SimTime;
use crate::world::ObjectClass;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionConfig {
    /// Objects on one segment at or above this count mark it congested.
    pub occupancy_threshold: u32,
    /// Multiplier applied to a congested segment's routing weight.
    pub penalty_factor: f64,
    /// Objects farther than this from their nearest segment are off-road.
    pub lateral_bound: f64,
    /// Frames older than this at sync time are discarded as stale.
    pub staleness_window_us: u64,
    /// Same-class objects within this distance fuse into one.
    pub fusion_gate: f64,
    /// Fused objects this close to the vehicle's last reported pose are the
    /// vehicle itself and never count toward occupancy.
    pub ego_exclusion_radius: f64,
}

impl Default for CongestionConfig {
    fn default() -> Self {
        CongestionConfig {
            occupancy_threshold: 3,
            penalty_factor: 10.0,
            lateral_bound: 3.0,
            staleness_window_us: 200_000,
            fusion_gate: 1.0,
            ego_exclusion_radius: 2.0,
        }
    }
}

/// One RSU's tracker output as received by the cloud.
#[derive(Debug, Clone)]
pub struct PerceptionFrame {
    pub rsu_id: u16,
    pub timestamp: SimTime,
    pub tracks: Vec<Track>,
}

/// A fused, globally positioned object.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalObject {
    /// Stable identity: the lowest contributing RSU id in the high 32 bits,
    /// that RSU's track id in the low 32.
    pub fused_id: u64,
    pub class: ObjectClass,
    pub position: Point,
    pub velocity: Point,
    pub source_rsus: Vec<u16>,
    pub timestamp: SimTime,
}

/// The twin's world view at one sync instant.
#[derive(Debug, Clone)]
pub struct DtSnapshot {
    pub time: SimTime,
    pub objects: Vec<GlobalObject>,
    pub occupancy: BTreeMap<SegmentId, u32>,
    pub congested: BTreeMap<SegmentId, bool>,
    /// RSUs whose newest frame had already aged out of the window.
    pub stale_rsus: Vec<u16>,
}

/// Sensor-frame position into the global frame.
pub fn to_global(rsu_position: Point, rsu_yaw: f64, rel: Point) -> Point {
    rel.rotated(rsu_yaw) + rsu_position
}

/// Global position into an RSU's sensor frame; exact inverse of
/// [`to_global`].
pub fn to_relative(rsu_position: Point, rsu_yaw: f64, global: Point) -> Point {
    (global - rsu_position).rotated(-rsu_yaw)
}

/// Pick, per RSU, the newest buffered frame still inside the staleness
/// window. Returns the selected frames (ascending RSU id) and the ids of
/// RSUs that had a frame but only a stale one.
pub fn sync_channels<'a>(
    buffers: &'a BTreeMap<u16, PerceptionFrame>,
    now: SimTime,
    staleness_window_us: u64,
) -> (Vec<&'a PerceptionFrame>, Vec<u16>) {
    let cutoff = now.0.saturating_sub(staleness_window_us);
    let mut fresh = Vec::new();
    let mut stale = Vec::new();
    for (rsu_id, frame) in buffers {
        if frame.timestamp.0 >= cutoff {
            fresh.push(frame);
        } else {
            stale.push(*rsu_id);
        }
    }
    (fresh, stale)
}

/// Merge per-RSU tracks into global objects. Tracks are visited in
/// (rsu_id, track_id) order and greedily join the nearest existing cluster
/// of the same class whose running mean lies within the fusion gate;
/// otherwise they found a new cluster. Cluster position and velocity are
/// arithmetic means over members.
pub fn fuse(
    frames: &[&PerceptionFrame],
    rsu_poses: &BTreeMap<u16, (Point, f64)>,
    fusion_gate: f64,
) -> Vec<GlobalObject> {
    struct Cluster {
        class: ObjectClass,
        sum_pos: Point,
        sum_vel: Point,
        members: Vec<u16>,
        fused_id: u64,
        timestamp: SimTime,
    }
    impl Cluster {
        fn mean_pos(&self) -> Point {
            self.sum_pos * (1.0 / self.members.len() as f64)
        }
    }

    let mut items: Vec<(u16, &Track, SimTime)> = Vec::new();
    for frame in frames {
        for track in &frame.tracks {
            items.push((frame.rsu_id, track, frame.timestamp));
        }
    }
    items.sort_by_key(|(rsu_id, track, _)| (*rsu_id, track.id));

    let mut clusters: Vec<Cluster> = Vec::new();
    for (rsu_id, track, timestamp) in items {
        let (rsu_pos, rsu_yaw) = rsu_poses[&rsu_id];
        let position = to_global(rsu_pos, rsu_yaw, track.position);
        let velocity = track.velocity.rotated(rsu_yaw);

        let mut best: Option<(usize, f64)> = None;
        for (i, cluster) in clusters.iter().enumerate() {
            if cluster.class != track.class {
                continue;
            }
            let dist = cluster.mean_pos().distance(position);
            if dist <= fusion_gate && best.map_or(true, |(_, d)| dist < d) {
                best = Some((i, dist));
            }
        }
        match best {
            Some((i, _)) => {
                let cluster = &mut clusters[i];
                cluster.sum_pos = cluster.sum_pos + position;
                cluster.sum_vel = cluster.sum_vel + velocity;
                cluster.members.push(rsu_id);
                cluster.timestamp = SimTime(cluster.timestamp.0.max(timestamp.0));
            }
            None => clusters.push(Cluster {
                class: track.class,
                sum_pos: position,
                sum_vel: velocity,
                members: vec![rsu_id],
                fused_id: (rsu_id as u64) << 32 | track.id as u64,
                timestamp,
            }),
        }
    }

    clusters
        .into_iter()
        .map(|c| {
            let n = c.members.len() as f64;
            GlobalObject {
                fused_id: c.fused_id,
                class: c.class,
                position: c.sum_pos * (1.0 / n),
                velocity: c.sum_vel * (1.0 / n),
                source_rsus: c.members,
                timestamp: c.timestamp,
            }
        })
        .collect()
}

/// Count objects onto their nearest segment within the lateral bound, and
/// flag segments at or above the occupancy threshold. Objects within the
/// ego-exclusion radius of any reported vehicle pose are skipped.
pub fn segment_occupancy(
    objects: &[GlobalObject],
    network: &RoadNetwork,
    cfg: &CongestionConfig,
    ego_positions: &[Point],
) -> (BTreeMap<SegmentId, u32>, BTreeMap<SegmentId, bool>) {
    let mut occupancy: BTreeMap<SegmentId, u32> =
        network.segments().iter().map(|s| (s.id, 0)).collect();
    for obj in objects {
        if ego_positions.iter().any(|e| e.distance(obj.position) <= cfg.ego_exclusion_radius) {
            continue;
        }
        let Ok(projection) = project_to_segment(obj.position, network) else { continue };
        if projection.lateral_distance <= cfg.lateral_bound {
            *occupancy.get_mut(&projection.segment_id).unwrap() += 1;
        }
    }
    let congested =
        occupancy.iter().map(|(id, n)| (*id, *n >= cfg.occupancy_threshold)).collect();
    (occupancy, congested)
}

/// Routing weights: plain segment length, scaled by the penalty factor on
/// congested segments.
pub fn congestion_weights(
    network: &RoadNetwork,
    congested: &BTreeMap<SegmentId, bool>,
    cfg: &CongestionConfig,
) -> BTreeMap<SegmentId, f64> {
    network
        .segments()
        .iter()
        .map(|s| {
            let factor =
                if congested.get(&s.id).copied().unwrap_or(false) { cfg.penalty_factor } else { 1.0 };
            (s.id, s.length * factor)
        })
        .collect()
}

/// A planned route as kept in the download store: the node-level route, the
/// exact waypoints, and their wire encoding (quantized once, so every fetch
/// of the same URL is bit-identical).
#[derive(Debug, Clone)]
pub struct StoredRoute {
    pub url: String,
    pub route: Route,
    pub waypoints: Vec<Waypoint>,
    pub wire_waypoints: Vec<WireWaypoint>,
}

/// Outcome of a plan request.
#[derive(Debug, Clone)]
pub enum PlanOutcome {
    Planned { url: String },
    NoRoute,
}

/// Route planning endpoint plus the append-only URL store behind it.
#[derive(Debug, Default)]
pub struct RouteService {
    store: BTreeMap<String, StoredRoute>,
    next_seq: BTreeMap<u32, u32>,
}

impl RouteService {
    pub fn new() -> Self {
        Self::default()
    }

    /// Plan from the node the requester is about to reach (the head node of
    /// its nearest segment) to `destination` under the given weights, store
    /// the waypoints under a fresh URL, and return it. Repeated requests
    /// with identical outcomes still get fresh URLs; the content behind an
    /// issued URL never changes.
    pub fn plan(
        &mut self,
        vehicle_id: u32,
        position: Point,
        destination: NodeId,
        network: &RoadNetwork,
        weights: &BTreeMap<SegmentId, f64>,
        algorithm: Algorithm,
        waypoint_spacing: f64,
    ) -> Result<PlanOutcome> {
        let projection = project_to_segment(position, network)?;
        let node_ahead = network.segment(projection.segment_id).unwrap().to;
        let route = match shortest_route(network, node_ahead, destination, weights, algorithm) {
            Ok(route) if !route.segments.is_empty() => route,
            // Already entering the destination node: nothing left to plan.
            Ok(_) => return Ok(PlanOutcome::NoRoute),
            Err(Error::NoRoute { .. }) => return Ok(PlanOutcome::NoRoute),
            Err(e) => return Err(e),
        };
        let waypoints = route_to_waypoints(network, &route, waypoint_spacing)?;
        let wire_waypoints = waypoints.iter().map(|w| WireWaypoint::from(*w)).collect();

        let seq = self.next_seq.entry(vehicle_id).or_insert(0);
        *seq += 1;
        let url = format!("route://cloud/{vehicle_id}/{seq}");
        self.store.insert(
            url.clone(),
            StoredRoute { url: url.clone(), route, waypoints, wire_waypoints },
        );
        Ok(PlanOutcome::Planned { url })
    }

    /// Look up a previously issued URL.
    pub fn fetch(&self, url: &str) -> Result<&StoredRoute> {
        self.store.get(url).ok_or_else(|| Error::UnknownUrl(url.to_string()))
    }
}

/// The whole cloud component: perception buffers, the current snapshot and
/// planning weights, vehicle pose reports, and the route service.
#[derive(Debug)]
pub struct Cloud {
    pub cfg: CongestionConfig,
    rsu_poses: BTreeMap<u16, (Point, f64)>,
    frames: BTreeMap<u16, PerceptionFrame>,
    ego_reports: BTreeMap<u32, (Point, SimTime)>,
    snapshot: Option<DtSnapshot>,
    weights: BTreeMap<SegmentId, f64>,
    pub routes: RouteService,
}

impl Cloud {
    pub fn new(
        cfg: CongestionConfig,
        rsu_poses: BTreeMap<u16, (Point, f64)>,
        network: &RoadNetwork,
    ) -> Self {
        // Until the first sync, plan on free-flow lengths.
        let weights = congestion_weights(network, &BTreeMap::new(), &cfg);
        Cloud {
            cfg,
            rsu_poses,
            frames: BTreeMap::new(),
            ego_reports: BTreeMap::new(),
            snapshot: None,
            weights,
            routes: RouteService::new(),
        }
    }

    /// Store the newest frame for its RSU. I2C delivery is FIFO, so a newly
    /// arrived frame always supersedes the buffered one.
    pub fn ingest_frame(&mut self, frame: PerceptionFrame) {
        self.frames.insert(frame.rsu_id, frame);
    }

    /// Record a vehicle's self-reported pose, used only to exclude the
    /// vehicle from occupancy counts.
    pub fn ingest_ego_report(&mut self, vehicle_id: u32, position: Point, time: SimTime) {
        self.ego_reports.insert(vehicle_id, (position, time));
    }

    /// Rebuild the snapshot from buffered frames: sync, fuse, occupancy,
    /// congestion, and refreshed planning weights.
    pub fn resync(&mut self, now: SimTime, network: &RoadNetwork) -> &DtSnapshot {
        let (fresh, stale_rsus) = sync_channels(&self.frames, now, self.cfg.staleness_window_us);
        let objects = fuse(&fresh, &self.rsu_poses, self.cfg.fusion_gate);
        let ego_positions: Vec<Point> =
            self.ego_reports.values().map(|(p, _)| *p).collect();
        let (occupancy, congested) =
            segment_occupancy(&objects, network, &self.cfg, &ego_positions);
        self.weights = congestion_weights(network, &congested, &self.cfg);
        self.snapshot =
            Some(DtSnapshot { time: now, objects, occupancy, congested, stale_rsus });
        self.snapshot.as_ref().unwrap()
    }

    pub fn snapshot(&self) -> Option<&DtSnapshot> {
        self.snapshot.as_ref()
    }

    /// Serve a plan request against the weights of the newest snapshot.
    pub fn handle_plan_request(
        &mut self,
        vehicle_id: u32,
        position: Point,
        destination: NodeId,
        network: &RoadNetwork,
        algorithm: Algorithm,
        waypoint_spacing: f64,
    ) -> Result<PlanOutcome> {
        self.routes.plan(
            vehicle_id,
            position,
            destination,
            network,
            &self.weights,
            algorithm,
            waypoint_spacing,
        )
    }

    pub fn fetch(&self, url: &str) -> Result<&StoredRoute> {
        self.routes.fetch(url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::testutil::grid;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn to_global_identity_pose_is_identity() {
        let p = to_global(Point::new(0.0, 0.0), 0.0, Point::new(3.0, 4.0));
        assert_eq!(p, Point::new(3.0, 4.0));
    }

    #[test]
    fn to_global_rotates_then_translates() {
        let p = to_global(Point::new(10.0, 5.0), FRAC_PI_2, Point::new(1.0, 0.0));
        assert_relative_eq!(p.x, 10.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn transforms_invert_each_other() {
        let pose = (Point::new(200.0, 0.0), 2.1);
        let global = Point::new(57.0, -3.25);
        let back = to_global(pose.0, pose.1, to_relative(pose.0, pose.1, global));
        assert!(back.distance(global) < 1e-9);
    }

    fn frame(rsu_id: u16, t_us: u64, tracks: Vec<Track>) -> PerceptionFrame {
        PerceptionFrame { rsu_id, timestamp: SimTime(t_us), tracks }
    }

    fn track(id: u32, class: ObjectClass, x: f64, y: f64) -> Track {
        Track {
            id,
            class,
            position: Point::new(x, y),
            velocity: Point::new(0.0, 0.0),
            bbox: [0.6, 0.6, 1.7],
            misses: 0,
        }
    }

    #[test]
    fn sync_keeps_fresh_frames_and_flags_stale_rsus() {
        let mut buffers = BTreeMap::new();
        buffers.insert(10, frame(10, 990_000, vec![]));
        buffers.insert(11, frame(11, 980_000, vec![]));
        buffers.insert(12, frame(12, 700_000, vec![]));
        let (fresh, stale) = sync_channels(&buffers, SimTime(1_000_000), 200_000);
        assert_eq!(fresh.len(), 2);
        assert_eq!(stale, vec![12]);
    }

    fn identity_poses(ids: &[u16]) -> BTreeMap<u16, (Point, f64)> {
        ids.iter().map(|id| (*id, (Point::new(0.0, 0.0), 0.0))).collect()
    }

    #[test]
    fn overlapping_observations_fuse_to_their_mean() {
        let poses = identity_poses(&[10, 11]);
        let a = frame(10, 100, vec![track(1, ObjectClass::Pedestrian, 5.0, 5.0)]);
        let b = frame(11, 120, vec![track(4, ObjectClass::Pedestrian, 5.4, 5.0)]);
        let objects = fuse(&[&a, &b], &poses, 1.0);
        assert_eq!(objects.len(), 1);
        assert_relative_eq!(objects[0].position.x, 5.2);
        assert_relative_eq!(objects[0].position.y, 5.0);
        assert_eq!(objects[0].fused_id, (10u64 << 32) | 1);
        assert_eq!(objects[0].source_rsus, vec![10, 11]);
        assert_eq!(objects[0].timestamp, SimTime(120));
    }

    #[test]
    fn class_mismatch_blocks_fusion() {
        let poses = identity_poses(&[10, 11]);
        let a = frame(10, 100, vec![track(1, ObjectClass::Pedestrian, 5.0, 5.0)]);
        let b = frame(11, 100, vec![track(4, ObjectClass::Vehicle, 5.0, 5.0)]);
        assert_eq!(fuse(&[&a, &b], &poses, 1.0).len(), 2);
    }

    #[test]
    fn single_source_objects_pass_through() {
        let poses = identity_poses(&[11]);
        let a = frame(11, 100, vec![track(9, ObjectClass::Vehicle, 40.0, -2.0)]);
        let objects = fuse(&[&a], &poses, 1.0);
        assert_eq!(objects.len(), 1);
        assert_eq!(objects[0].fused_id, (11u64 << 32) | 9);
        assert_eq!(objects[0].position, Point::new(40.0, -2.0));
    }

    #[test]
    fn fusion_respects_sensor_poses() {
        // RSU 11 sits at (200, 0) looking along +y; its track at rel (100, 0)
        // is the same physical object RSU 10 sees at global (200, 100).
        let mut poses = BTreeMap::new();
        poses.insert(10, (Point::new(0.0, 0.0), 0.0));
        poses.insert(11, (Point::new(200.0, 0.0), FRAC_PI_2));
        let a = frame(10, 100, vec![track(3, ObjectClass::Vehicle, 200.0, 100.3)]);
        let b = frame(11, 100, vec![track(8, ObjectClass::Vehicle, 100.0, 0.0)]);
        let objects = fuse(&[&a, &b], &poses, 1.0);
        assert_eq!(objects.len(), 1);
        assert_relative_eq!(objects[0].position.x, 200.0, epsilon = 1e-9);
        assert_relative_eq!(objects[0].position.y, 100.15, epsilon = 1e-9);
    }

    /// 200 m square with a spur on each side, mirroring the field layout.
    fn square() -> RoadNetwork {
        grid(
            &[
                (0, -60.0, 0.0),
                (1, 0.0, 0.0),
                (2, 200.0, 0.0),
                (3, 200.0, 200.0),
                (4, 0.0, 200.0),
                (5, 260.0, 0.0),
            ],
            &[
                (0, 1),
                (1, 0),
                (1, 2),
                (2, 1),
                (2, 3),
                (3, 2),
                (3, 4),
                (4, 3),
                (1, 4),
                (4, 1),
                (2, 5),
                (5, 2),
            ],
            4.16667,
        )
    }

    fn object(fused_id: u64, class: ObjectClass, x: f64, y: f64) -> GlobalObject {
        GlobalObject {
            fused_id,
            class,
            position: Point::new(x, y),
            velocity: Point::new(0.0, 0.0),
            source_rsus: vec![(fused_id >> 32) as u16],
            timestamp: SimTime(0),
        }
    }

    #[test]
    fn empty_world_has_zero_occupancy_everywhere() {
        let net = square();
        let (occupancy, congested) =
            segment_occupancy(&[], &net, &CongestionConfig::default(), &[]);
        assert_eq!(occupancy.len(), net.segments().len());
        assert!(occupancy.values().all(|n| *n == 0));
        assert!(congested.values().all(|c| !c));
    }

    #[test]
    fn cluster_on_the_straight_segment_marks_it_congested() {
        let net = square();
        let cfg = CongestionConfig::default();
        let objects = vec![
            object((10 << 32) | 1, ObjectClass::Pedestrian, 95.0, 1.0),
            object((10 << 32) | 2, ObjectClass::Pedestrian, 100.0, -1.0),
            object((10 << 32) | 3, ObjectClass::Pedestrian, 105.0, 1.0),
            object((10 << 32) | 4, ObjectClass::Vehicle, 110.0, -1.0),
            // Far off-road: not counted anywhere.
            object((10 << 32) | 5, ObjectClass::Pedestrian, 100.0, 14.0),
        ];
        let (occupancy, congested) = segment_occupancy(&objects, &net, &cfg, &[]);
        // The bottom straight is declared forward (1->2) before reverse, so
        // the equidistant tie lands every count on the forward segment.
        assert_eq!(occupancy[&SegmentId(2)], 4);
        assert_eq!(occupancy[&SegmentId(3)], 0);
        assert!(congested[&SegmentId(2)]);
        assert_eq!(congested.values().filter(|c| **c).count(), 1);
    }

    #[test]
    fn ego_exclusion_removes_the_reporting_vehicle() {
        let net = square();
        let cfg = CongestionConfig::default();
        let objects = vec![object((10 << 32) | 7, ObjectClass::Vehicle, 50.0, 0.3)];
        let (with_ego, _) = segment_occupancy(&objects, &net, &cfg, &[]);
        assert_eq!(with_ego[&SegmentId(2)], 1);
        let (excluded, _) =
            segment_occupancy(&objects, &net, &cfg, &[Point::new(50.5, 0.0)]);
        assert_eq!(excluded[&SegmentId(2)], 0);
    }

    #[test]
    fn penalty_flips_the_plan_to_the_detour() {
        let net = square();
        let cfg = CongestionConfig::default();
        let mut congested: BTreeMap<SegmentId, bool> = BTreeMap::new();
        congested.insert(SegmentId(2), true);
        let weights = congestion_weights(&net, &congested, &cfg);
        assert_relative_eq!(weights[&SegmentId(2)], 2000.0);
        assert_relative_eq!(weights[&SegmentId(4)], 200.0);
        let route =
            shortest_route(&net, NodeId(1), NodeId(5), &weights, Algorithm::AStar).unwrap();
        assert_eq!(
            route.nodes,
            vec![NodeId(1), NodeId(4), NodeId(3), NodeId(2), NodeId(5)]
        );

        // Factor 1 restores the straight choice.
        let neutral = CongestionConfig { penalty_factor: 1.0, ..cfg };
        let weights = congestion_weights(&net, &congested, &neutral);
        let route =
            shortest_route(&net, NodeId(1), NodeId(5), &weights, Algorithm::AStar).unwrap();
        assert_eq!(route.nodes, vec![NodeId(1), NodeId(2), NodeId(5)]);
    }

    #[test]
    fn plan_issues_fresh_urls_with_immutable_content() {
        let net = square();
        let weights = congestion_weights(&net, &BTreeMap::new(), &CongestionConfig::default());
        let mut service = RouteService::new();
        let position = Point::new(-3.0, 0.02);
        let first = service
            .plan(1, position, NodeId(5), &net, &weights, Algorithm::AStar, 1.0)
            .unwrap();
        let second = service
            .plan(1, position, NodeId(5), &net, &weights, Algorithm::AStar, 1.0)
            .unwrap();
        let (PlanOutcome::Planned { url: url1 }, PlanOutcome::Planned { url: url2 }) =
            (first, second)
        else {
            panic!("expected planned outcomes");
        };
        assert_eq!(url1, "route://cloud/1/1");
        assert_eq!(url2, "route://cloud/1/2");
        let a = service.fetch(&url1).unwrap();
        let b = service.fetch(&url2).unwrap();
        assert_eq!(a.route.nodes, b.route.nodes);
        assert_eq!(a.wire_waypoints, b.wire_waypoints);
        // Fetching the same URL twice yields the identical stored object.
        assert_eq!(
            service.fetch(&url1).unwrap().wire_waypoints,
            service.fetch(&url1).unwrap().wire_waypoints
        );
    }

    #[test]
    fn unknown_urls_are_not_found() {
        let service = RouteService::new();
        match service.fetch("route://cloud/9/9") {
            Err(Error::UnknownUrl(url)) => assert_eq!(url, "route://cloud/9/9"),
            other => panic!("expected UnknownUrl, got {other:?}"),
        }
    }

    #[test]
    fn unreachable_destination_reports_no_route() {
        // One-way spur: nothing leads back from node 2 to node 0.
        let net = grid(&[(0, 0.0, 0.0), (1, 50.0, 0.0), (2, 100.0, 0.0)], &[(0, 1), (1, 2)], 4.0);
        let weights: BTreeMap<_, _> =
            net.segments().iter().map(|s| (s.id, s.length)).collect();
        let mut service = RouteService::new();
        let outcome = service
            .plan(1, Point::new(10.0, 0.0), NodeId(0), &net, &weights, Algorithm::Dijkstra, 1.0)
            .unwrap();
        assert!(matches!(outcome, PlanOutcome::NoRoute));
    }

    #[test]
    fn cloud_pipeline_congests_from_ingested_frames() {
        let net = square();
        let mut poses = BTreeMap::new();
        poses.insert(10u16, (Point::new(0.0, 0.0), 0.0));
        poses.insert(11u16, (Point::new(200.0, 0.0), std::f64::consts::PI));
        let mut cloud = Cloud::new(CongestionConfig::default(), poses, &net);

        // RSU 10 (identity pose) sees the cluster directly; RSU 11 reports
        // the same objects in its own frame (rotated by pi).
        cloud.ingest_frame(frame(
            10,
            950_000,
            vec![
                track(1, ObjectClass::Pedestrian, 95.0, 1.0),
                track(2, ObjectClass::Pedestrian, 100.0, -1.0),
                track(3, ObjectClass::Pedestrian, 105.0, 1.0),
            ],
        ));
        cloud.ingest_frame(frame(
            11,
            960_000,
            vec![track(5, ObjectClass::Pedestrian, 105.0, -1.0)],
        ));
        let snapshot = cloud.resync(SimTime(1_000_000), &net);
        // RSU 11's track lands at global (95, 1): fused with RSU 10's first.
        assert_eq!(snapshot.objects.len(), 3);
        assert!(snapshot.congested[&SegmentId(2)]);
        assert!(snapshot.stale_rsus.is_empty());

        let outcome = cloud
            .handle_plan_request(1, Point::new(-3.0, 0.0), NodeId(5), &net, Algorithm::AStar, 1.0)
            .unwrap();
        let PlanOutcome::Planned { url } = outcome else { panic!("expected a route") };
        let stored = cloud.fetch(&url).unwrap();
        assert_eq!(
            stored.route.nodes,
            vec![NodeId(1), NodeId(4), NodeId(3), NodeId(2), NodeId(5)]
        );
    }
}

//! Property tests for the contracts the simulator leans on: codec identity,
//! frame-transform inversion, braking-parabola velocity caps, link accounting
//! and ordering, bitrate linearity, agreement of the two routing algorithms,
//! fusion of coincident views, angle wrapping, and event-log round trips.

use std::collections::BTreeMap;

use proptest::prelude::*;

use dtsim_core::cloud::{fuse, to_global, to_relative, PerceptionFrame};
use dtsim_core::geom::{wrap_angle, Point};
use dtsim_core::metrics::EventLog;
use dtsim_core::net::wire::{
    tracking_encoded_len, tracking_stream_bitrate, Message, Payload, RequestKind, ResponseStatus,
    TrackingRecord, WireWaypoint, MSG_TRACKING,
};
use dtsim_core::net::{DropReason, Link, LinkParams, SendOutcome};
use dtsim_core::road::{
    shortest_route, Algorithm, Node, NodeId, RoadNetwork, SegmentDef, SegmentId, Waypoint,
};
use dtsim_core::rng::seeded;
use dtsim_core::rsu::Track;
use dtsim_core::vehicle::BrakingLimits;
use dtsim_core::world::{plan_velocity, ObjectClass};
use dtsim_core::{Error, SimTime};

// Finite f32 values plus the representable extremes; NaN stays out because
// the round-trip assertion uses equality.
fn arb_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        8 => -1.0e6f32..1.0e6f32,
        1 => Just(f32::MAX),
        1 => Just(f32::MIN_POSITIVE),
        1 => Just(-0.0f32),
        1 => Just(f32::INFINITY),
    ]
}

fn arb_url() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-z0-9:/._-]{0,24}").unwrap()
}

fn arb_tracking_record() -> impl Strategy<Value = TrackingRecord> {
    (
        any::<u32>(),
        0u8..=2,
        prop::array::uniform3(arb_f32()),
        prop::array::uniform2(arb_f32()),
        prop::array::uniform3(arb_f32()),
        arb_f32(),
    )
        .prop_map(|(track_id, class, position, velocity, bbox, yaw)| TrackingRecord {
            track_id,
            class,
            position,
            velocity,
            bbox,
            yaw,
        })
}

fn arb_payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        prop::collection::vec(arb_tracking_record(), 0..8)
            .prop_map(|records| Payload::Tracking { records }),
        prop::collection::vec(any::<u8>(), 0..64).prop_map(|data| Payload::RawChunk { data }),
        (any::<bool>(), prop::array::uniform2(arb_f32()), any::<u32>(), arb_url()).prop_map(
            |(plan, position, destination, url)| Payload::RouteRequest {
                kind: if plan { RequestKind::Plan } else { RequestKind::Fetch },
                position,
                destination,
                url,
            }
        ),
        (any::<bool>(), arb_url()).prop_map(|(ok, url)| Payload::RouteResponse {
            status: if ok { ResponseStatus::Ok } else { ResponseStatus::NoRoute },
            url,
        }),
        (prop::collection::vec(prop::array::uniform5(arb_f32()), 0..8)).prop_map(|wps| {
            Payload::RouteFile {
                waypoints: wps
                    .into_iter()
                    .map(|[x, y, z, yaw, velocity]| WireWaypoint { x, y, z, yaw, velocity })
                    .collect(),
            }
        }),
    ]
}

fn arb_message() -> impl Strategy<Value = Message> {
    (any::<u16>(), any::<u32>(), any::<u64>(), arb_payload())
        .prop_map(|(source_id, seq, timestamp_us, payload)| Message {
            source_id,
            seq,
            timestamp_us,
            payload,
        })
}

/// Random digraph on `n` nodes with distinct positions and dyadic weights,
/// reproducible from a single seed so proptest can shrink over it.
fn random_graph(seed: u64, n: usize) -> (RoadNetwork, BTreeMap<SegmentId, f64>) {
    use rand::seq::index::sample;
    use rand::Rng;
    let mut rng = seeded(seed);
    let pool: Vec<Point> =
        (0..64).map(|i| Point::new((i % 8) as f64 * 9.0, (i / 8) as f64 * 9.0)).collect();
    let picks = sample(&mut rng, pool.len(), n);
    let nodes: Vec<Node> = picks
        .iter()
        .enumerate()
        .map(|(i, p)| Node { id: NodeId(i as u32), position: pool[p] })
        .collect();
    let mut defs = Vec::new();
    for from in 0..n as u32 {
        for to in 0..n as u32 {
            if from != to && rng.gen_bool(0.4) {
                defs.push(SegmentDef {
                    from: NodeId(from),
                    to: NodeId(to),
                    polyline: vec![],
                    free_flow_speed: 1.0,
                });
            }
        }
    }
    if defs.is_empty() {
        defs.push(SegmentDef {
            from: NodeId(0),
            to: NodeId(1),
            polyline: vec![],
            free_flow_speed: 1.0,
        });
    }
    let weights = (0..defs.len())
        .map(|i| (SegmentId(i as u32), rng.gen_range(1..=16u32) as f64 * 0.5))
        .collect();
    (RoadNetwork::new(nodes, defs).unwrap(), weights)
}

proptest! {
    #[test]
    fn codec_round_trip_is_identity(msg in arb_message()) {
        let bytes = msg.encode();
        prop_assert_eq!(bytes.len(), msg.encoded_len());
        let back = Message::decode(&bytes).expect("own encoding decodes");
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn decode_of_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let _ = Message::decode(&bytes);
    }

    #[test]
    fn decode_of_mutated_frames_never_panics(
        msg in arb_message(),
        flip_at in any::<prop::sample::Index>(),
        bit in 0u8..8,
        keep in any::<prop::sample::Index>(),
    ) {
        let mut bytes = msg.encode();
        if !bytes.is_empty() {
            let at = flip_at.index(bytes.len());
            bytes[at] ^= 1 << bit;
        }
        let _ = Message::decode(&bytes);
        bytes.truncate(keep.index(bytes.len() + 1));
        let _ = Message::decode(&bytes);
    }

    #[test]
    fn frame_transform_round_trips(
        rx in -500.0..500.0f64,
        ry in -500.0..500.0f64,
        yaw in -10.0..10.0f64,
        px in -150.0..150.0f64,
        py in -150.0..150.0f64,
    ) {
        let rsu = Point::new(rx, ry);
        let rel = Point::new(px, py);
        let back = to_relative(rsu, yaw, to_global(rsu, yaw, rel));
        prop_assert!(back.distance(rel) < 1e-9);
    }

    #[test]
    fn planned_velocities_obey_the_braking_parabola(
        count in 2usize..80,
        speed in 0.5..15.0f64,
        obstacle_arcs in prop::collection::vec(0.0..120.0f64, 0..4),
        stop_arcs in prop::collection::vec(0.0..120.0f64, 0..4),
    ) {
        let limits = BrakingLimits::default();
        let mut wps: Vec<Waypoint> = (0..count)
            .map(|i| Waypoint { x: i as f64, y: 0.0, z: 0.0, yaw: 0.0, velocity: speed })
            .collect();
        plan_velocity(&mut wps, &obstacle_arcs, &stop_arcs, limits.comfort, 1.0);
        for (i, wp) in wps.iter().enumerate() {
            let s = i as f64;
            prop_assert!(wp.velocity >= 0.0);
            prop_assert!(wp.velocity <= speed);
            for limit in obstacle_arcs.iter().map(|a| a - 1.0).chain(stop_arcs.iter().copied()) {
                let cap = if limit <= s { 0.0 } else { (2.0 * limits.comfort * (limit - s)).sqrt() };
                prop_assert!(wp.velocity <= cap + 1e-9,
                    "waypoint {} at arc {} carries {} above cap {}", i, s, wp.velocity, cap);
            }
        }
    }

    #[test]
    fn link_accounting_conserves_and_delivers_in_order(
        bandwidth_mbps in 1.0..1000.0f64,
        base_latency_us in 0u64..20_000,
        jitter_sigma_us in 0.0..2_000.0f64,
        loss_prob in 0.0..0.5f64,
        seed in any::<u64>(),
        sends in prop::collection::vec((1usize..2000, 0u64..5000, 0.0..300.0f64), 1..40),
    ) {
        let params = LinkParams {
            bandwidth_bps: bandwidth_mbps * 1e6,
            base_latency_us,
            jitter_sigma_us,
            loss_prob,
            coverage_m: 150.0,
        };
        let run = |params: LinkParams| {
            let mut link = Link::new(params);
            let mut rng = seeded(seed);
            let mut now = SimTime::ZERO;
            let mut outcomes = Vec::new();
            for (bytes, gap, distance) in &sends {
                now = SimTime(now.0 + gap);
                outcomes.push((now, *distance, link.send(now, *bytes, MSG_TRACKING, *distance, &mut rng)));
            }
            (outcomes, link.stats().clone())
        };

        let (outcomes, stats) = run(params);

        // Offered splits exactly into delivered and dropped, in both the
        // top-level and the per-type counters.
        prop_assert_eq!(stats.offered, sends.len() as u64);
        prop_assert_eq!(stats.offered, stats.delivered + stats.dropped);
        let per_type = &stats.per_type[&MSG_TRACKING];
        prop_assert_eq!((per_type.offered, per_type.delivered, per_type.dropped),
            (stats.offered, stats.delivered, stats.dropped));

        // FIFO: delivery instants never run backwards, never precede the
        // send, and out-of-range sends never deliver.
        let mut last_delivery = SimTime::ZERO;
        for (sent_at, distance, outcome) in &outcomes {
            match outcome {
                SendOutcome::Delivered { at } => {
                    prop_assert!(*distance <= params.coverage_m);
                    prop_assert!(at.0 >= sent_at.0);
                    prop_assert!(at.0 >= last_delivery.0);
                    last_delivery = *at;
                }
                SendOutcome::Dropped { reason: DropReason::OutOfRange } => {
                    prop_assert!(*distance > params.coverage_m);
                }
                SendOutcome::Dropped { reason: DropReason::Loss } => {
                    prop_assert!(*distance <= params.coverage_m);
                }
            }
        }

        // The same seed replays the same outcome sequence.
        let (again, _) = run(params);
        prop_assert_eq!(outcomes, again);
    }

    #[test]
    fn tracking_bitrate_is_affine_and_monotone(objects in 0usize..512, hz in 1u32..=60) {
        let hz = hz as f64;
        let expected = hz * 8.0 * tracking_encoded_len(objects) as f64;
        prop_assert_eq!(tracking_stream_bitrate(objects, hz), expected);
        prop_assert!(tracking_stream_bitrate(objects + 1, hz) > tracking_stream_bitrate(objects, hz));
    }

    #[test]
    fn both_routing_algorithms_return_the_same_route(seed in any::<u64>(), n in 2usize..=7) {
        let (network, weights) = random_graph(seed, n);
        for origin in 0..n as u32 {
            for destination in 0..n as u32 {
                let d = shortest_route(&network, NodeId(origin), NodeId(destination), &weights, Algorithm::Dijkstra);
                let a = shortest_route(&network, NodeId(origin), NodeId(destination), &weights, Algorithm::AStar);
                match (d, a) {
                    (Ok(d), Ok(a)) => prop_assert_eq!(d, a),
                    (Err(Error::NoRoute { .. }), Err(Error::NoRoute { .. })) => {}
                    (d, a) => prop_assert!(false, "algorithms disagree: {:?} vs {:?}", d, a),
                }
            }
        }
    }

    #[test]
    fn coincident_views_fuse_to_one_object_per_actor(
        rsu_poses in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64, -3.0..3.0f64), 1..=4),
        actor_classes in prop::collection::vec(0u8..=2, 1..=6),
    ) {
        // Actors sit on a coarse grid, far beyond the fusion gate, and every
        // RSU reports all of them exactly; fusion must collapse the views to
        // one object per actor, each backed by every RSU.
        let gate = 2.0;
        let actors: Vec<(Point, ObjectClass)> = actor_classes
            .iter()
            .enumerate()
            .map(|(i, c)| (Point::new(i as f64 * 50.0, 0.0), ObjectClass::from_code(*c).unwrap()))
            .collect();
        let mut poses = BTreeMap::new();
        let mut frames = Vec::new();
        for (i, (x, y, yaw)) in rsu_poses.iter().enumerate() {
            let rsu_id = 10 + i as u16;
            let pos = Point::new(*x, *y);
            poses.insert(rsu_id, (pos, *yaw));
            let tracks: Vec<Track> = actors
                .iter()
                .enumerate()
                .map(|(j, (global, class))| Track {
                    id: j as u32 + 1,
                    class: *class,
                    position: to_relative(pos, *yaw, *global),
                    velocity: Point::new(0.0, 0.0),
                    bbox: [0.5, 0.5, 1.8],
                    misses: 0,
                })
                .collect();
            frames.push(PerceptionFrame { rsu_id, timestamp: SimTime(1_000), tracks });
        }
        let refs: Vec<&PerceptionFrame> = frames.iter().collect();
        let fused = fuse(&refs, &poses, gate);
        prop_assert_eq!(fused.len(), actors.len());
        for obj in &fused {
            prop_assert_eq!(obj.source_rsus.len(), rsu_poses.len());
            let (global, class) = actors
                .iter()
                .find(|(g, _)| g.distance(obj.position) < 1e-6)
                .expect("fused object sits on an actor");
            prop_assert_eq!(obj.class, *class);
            prop_assert!(obj.position.distance(*global) < 1e-6);
        }
    }

    #[test]
    fn wrapped_angles_stay_in_range_and_rotation_is_an_isometry(
        angle in -1.0e6..1.0e6f64,
        px in -1.0e3..1.0e3f64,
        py in -1.0e3..1.0e3f64,
    ) {
        let wrapped = wrap_angle(angle);
        prop_assert!(wrapped > -std::f64::consts::PI && wrapped <= std::f64::consts::PI);
        // Wrapping only removes whole turns.
        let turns = (angle - wrapped) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-6);

        let p = Point::new(px, py);
        let rotated = p.rotated(wrapped);
        prop_assert!((rotated.norm() - p.norm()).abs() < 1e-9 * (1.0 + p.norm()));
        prop_assert!(rotated.rotated(-wrapped).distance(p) < 1e-9 * (1.0 + p.norm()));
    }

    #[test]
    fn event_log_survives_render_and_parse(
        entries in prop::collection::vec(
            (
                0u64..10_000_000,
                "[a-z]{1,8}",
                "[a-z_]{1,8}",
                prop::collection::vec(("[a-z_]{1,6}", "[a-z0-9 ./:>-]{0,12}"), 0..4),
            ),
            0..20,
        )
    ) {
        let mut entries = entries;
        entries.sort_by_key(|(t, _, _, _)| *t);
        let mut log = EventLog::new();
        for (t, component, event, fields) in &entries {
            let fields: Vec<(&str, String)> =
                fields.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
            log.push(SimTime(*t), component, event, &fields);
        }
        let text = String::from_utf8(log.to_bytes()).unwrap();
        let back = EventLog::parse(&text).unwrap();
        prop_assert_eq!(back.records(), log.records());
        prop_assert_eq!(back.digest_hex(), log.digest_hex());
    }
}

//! The discrete-event engine: runs a parsed scenario on an integer-
//! microsecond clock, moving messages between roadside units, the cloud twin
//! and the ego vehicle through the configured links, and writing everything
//! observable to the run's event log.
//!
//! Same-time events execute in a fixed rank order (deliveries land before
//! periodic producers and consumers act, the control loop runs after state
//! uploads, diagnostics go last), with the global insertion counter as the
//! final tie-break, so a (scenario, seed) pair always replays the same
//! event sequence.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::cloud::{Cloud, PerceptionFrame, PlanOutcome};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::metrics::{EventLog, LATENCY_BUDGET_US, PDR_FLOOR, ROUTE_RATE_LIMIT_PER_MIN};
use crate::net::{
    raw_chunk_encoded_len, DropReason, Link, Message, Payload, RequestKind, ResponseStatus,
    SendOutcome, TrackingRecord, MSG_RAW_CHUNK, MSG_TRACKING,
};
use crate::road::{
    next_intersection_on_route, remaining_nodes, route_to_waypoints, shortest_route, NodeId,
    Route, Waypoint, DEFAULT_WAYPOINT_SPACING,
};
use crate::rng::{seeded, SimRng};
use crate::rsu::{sense, RsuSensor, Track, Tracker, TrackerParams};
use crate::scenario::Scenario;
use crate::time::SimTime;
use crate::vehicle::{apply_route, required_stop_decel, BrakingClass, Requisition, ResponseAction};
use crate::world::{
    integrate_bicycle, localize, plan_velocity, pure_pursuit_control, waypoint_arcs, AccelLimits,
    ActorState, ControlCommand, EgoState, ObjectClass, DEFAULT_STANDOFF,
};

/// How often the vehicle's true pose is sampled into the log.
const POSE_LOG_PERIOD_US: u64 = 1_000_000;
/// A standing vehicle this close to the destination node has arrived.
const ARRIVAL_RADIUS: f64 = 5.0;

// Same-instant execution order. Deliveries first so consumers acting at the
// same microsecond see them; the control loop after the state upload so the
// cloud's view of the vehicle is never newer than the vehicle's own.
const RANK_DELIVERY: u8 = 0;
const RANK_RSU_FRAME: u8 = 1;
const RANK_RSU_RAW: u8 = 2;
const RANK_CLOUD_SYNC: u8 = 3;
const RANK_STATE_UPLOAD: u8 = 4;
const RANK_CONTROL: u8 = 5;
const RANK_SEND_REQUEST: u8 = 6;
const RANK_APPLY_ROUTE: u8 = 7;
const RANK_TIMEOUT: u8 = 8;
const RANK_POSE_LOG: u8 = 9;

/// Which link instance a message travelled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LinkId {
    /// RSU-to-cloud uplink of one RSU.
    I2c(u16),
    V2cUp,
    V2cDown,
}

#[derive(Debug)]
enum EventKind {
    Delivery { link: LinkId, bytes: Vec<u8> },
    RsuFrame { index: usize },
    RsuRaw { index: usize },
    CloudSync,
    StateUpload,
    ControlTick,
    SendRequest { seq: u32 },
    ApplyRoute { seq: u32 },
    ResponseTimeout { seq: u32 },
    PoseLog,
}

struct Queued {
    time: SimTime,
    rank: u8,
    id: u64,
    kind: EventKind,
}

impl Queued {
    fn key(&self) -> (u64, u8, u64) {
        (self.time.0, self.rank, self.id)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

struct RsuRt {
    id: u16,
    sensor: RsuSensor,
    tracker: Tracker,
    frame_seq: u32,
    frame_period_us: u64,
    raw_period_us: u64,
    raw_bytes: usize,
}

struct VehicleRt {
    id: u16,
    state: EgoState,
    route: Route,
    waypoints: Vec<Waypoint>,
    requisition: Requisition,
    parked: bool,
    /// Wire sequence counters per message stream.
    upload_seq: u32,
    request_seq: u32,
    /// Estimated position captured at trigger time; sent in the request.
    request_position: Point,
    last_estimate: EgoState,
    /// Waypoints downloaded but not yet in effect.
    pending_file: Option<Vec<Waypoint>>,
    off_route_warnings: u32,
}

/// Everything a finished run hands back besides its artifacts on disk.
#[derive(Debug)]
pub struct RunOutput {
    pub log: EventLog,
    pub final_state: EgoState,
    pub final_route: Route,
    pub final_waypoints: Vec<Waypoint>,
}

struct Engine<'s> {
    sc: &'s Scenario,
    now: SimTime,
    queue: BinaryHeap<Reverse<Queued>>,
    next_event_id: u64,
    processed: u64,
    rng: SimRng,
    log: EventLog,
    i2c: BTreeMap<u16, Link>,
    v2c_up: Link,
    v2c_down: Link,
    v2i_wifi: Link,
    v2i_wigig: Link,
    rsus: Vec<RsuRt>,
    cloud: Cloud,
    veh: VehicleRt,
    cloud_response_seq: u32,
    cloud_file_seq: u32,
}

/// Run a validated scenario to completion and return its artifacts.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput> {
    let mut engine = Engine::new(sc)?;
    engine.start();
    while let Some(Reverse(event)) = engine.queue.pop() {
        if event.time.0 > sc.run.duration_us {
            break;
        }
        debug_assert!(event.time.0 >= engine.now.0, "event queue went backwards");
        engine.now = event.time;
        engine.processed += 1;
        engine.handle(event.kind)?;
    }
    engine.finish();
    Ok(RunOutput {
        log: engine.log,
        final_state: engine.veh.state,
        final_route: engine.veh.route,
        final_waypoints: engine.veh.waypoints,
    })
}

fn nodes_str(nodes: &[NodeId]) -> String {
    nodes.iter().map(|n| n.0.to_string()).collect::<Vec<_>>().join(">")
}

fn braking_class_str(class: BrakingClass) -> &'static str {
    match class {
        BrakingClass::Comfortable => "comfortable",
        BrakingClass::FeasibleNonEmergency => "feasible",
        BrakingClass::Emergency => "emergency",
    }
}

fn track_to_record(t: &Track) -> TrackingRecord {
    TrackingRecord {
        track_id: t.id,
        class: t.class.code(),
        position: [t.position.x as f32, t.position.y as f32, 0.0],
        velocity: [t.velocity.x as f32, t.velocity.y as f32],
        bbox: [t.bbox[0] as f32, t.bbox[1] as f32, t.bbox[2] as f32],
        yaw: t.yaw() as f32,
    }
}

fn record_to_track(r: &TrackingRecord) -> Track {
    Track {
        id: r.track_id,
        class: ObjectClass::from_code(r.class).unwrap_or(ObjectClass::Other),
        position: Point::new(r.position[0] as f64, r.position[1] as f64),
        velocity: Point::new(r.velocity[0] as f64, r.velocity[1] as f64),
        bbox: [r.bbox[0] as f64, r.bbox[1] as f64, r.bbox[2] as f64],
        misses: 0,
    }
}

/// Push one message into a link and log the attempt. Returns the delivery
/// instant if the link accepted it.
fn transmit(
    log: &mut EventLog,
    link: &mut Link,
    name: &str,
    rng: &mut SimRng,
    now: SimTime,
    bytes: usize,
    msg_type: u8,
    distance: f64,
) -> Option<SimTime> {
    let outcome = link.send(now, bytes, msg_type, distance, rng);
    let (verdict, at) = match outcome {
        SendOutcome::Delivered { at } => ("delivered", Some(at)),
        SendOutcome::Dropped { reason: DropReason::OutOfRange } => ("out_of_range", None),
        SendOutcome::Dropped { reason: DropReason::Loss } => ("loss", None),
    };
    let mut fields = vec![
        ("link", name.to_string()),
        ("type", msg_type.to_string()),
        ("bytes", bytes.to_string()),
        ("outcome", verdict.to_string()),
    ];
    if let Some(at) = at {
        fields.push(("at", at.0.to_string()));
    }
    log.push(now, "net", "send", &fields);
    at
}

impl<'s> Engine<'s> {
    fn new(sc: &'s Scenario) -> Result<Engine<'s>> {
        // The first route is planned on free-flow weights, exactly like the
        // cloud does before its first sync.
        let weights: BTreeMap<_, _> =
            sc.network.segments().iter().map(|s| (s.id, s.length)).collect();
        let route =
            shortest_route(&sc.network, sc.ego.origin, sc.ego.destination, &weights, sc.run.algorithm)?;
        let mut waypoints = route_to_waypoints(&sc.network, &route, DEFAULT_WAYPOINT_SPACING)?;
        shape_stop_at_end(&mut waypoints, sc.requisition.braking.comfort);

        let origin = sc.network.node(sc.ego.origin).unwrap().position;
        let state = EgoState { position: origin, yaw: waypoints[0].yaw, speed: 0.0 };

        let rsus: Vec<RsuRt> = sc
            .rsus
            .iter()
            .map(|r| RsuRt {
                id: r.id,
                sensor: RsuSensor {
                    id: r.id,
                    position: r.position,
                    yaw: r.yaw,
                    range: r.range,
                    detection_prob: r.detection_prob,
                    position_sigma: r.position_sigma,
                },
                tracker: Tracker::new(TrackerParams::default()),
                frame_seq: 0,
                frame_period_us: (1e6 / r.update_rate_hz as f64).round() as u64,
                raw_period_us: if r.raw_upload {
                    (1e6 / r.raw_rate_hz as f64).round() as u64
                } else {
                    0
                },
                raw_bytes: r.raw_chunk_bytes as usize,
            })
            .collect();

        let rsu_poses: BTreeMap<u16, (Point, f64)> =
            sc.rsus.iter().map(|r| (r.id, (r.position, r.yaw))).collect();

        Ok(Engine {
            sc,
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            next_event_id: 0,
            processed: 0,
            rng: seeded(sc.run.seed),
            log: EventLog::new(),
            i2c: sc.rsus.iter().map(|r| (r.id, Link::new(sc.links.i2c))).collect(),
            v2c_up: Link::new(sc.links.v2c),
            v2c_down: Link::new(sc.links.v2c),
            v2i_wifi: Link::new(sc.links.v2i_wifi),
            v2i_wigig: Link::new(sc.links.v2i_wigig),
            rsus,
            cloud: Cloud::new(sc.congestion, rsu_poses, &sc.network),
            veh: VehicleRt {
                id: sc.ego.vehicle_id as u16,
                state,
                route,
                waypoints,
                requisition: Requisition::new(sc.requisition.clone())?,
                parked: false,
                upload_seq: 0,
                request_seq: 0,
                request_position: origin,
                last_estimate: state,
                pending_file: None,
                off_route_warnings: 0,
            },
            cloud_response_seq: 0,
            cloud_file_seq: 0,
        })
    }

    fn schedule(&mut self, time: SimTime, rank: u8, kind: EventKind) {
        let id = self.next_event_id;
        self.next_event_id += 1;
        self.queue.push(Reverse(Queued { time, rank, id, kind }));
    }

    fn start(&mut self) {
        let sc = self.sc;
        self.log.push(
            SimTime::ZERO,
            "run",
            "start",
            &[
                ("seed", sc.run.seed.to_string()),
                ("duration_us", sc.run.duration_us.to_string()),
                ("algorithm", format!("{:?}", sc.run.algorithm).to_lowercase()),
                ("vehicle", sc.ego.vehicle_id.to_string()),
                ("origin", sc.ego.origin.0.to_string()),
                ("destination", sc.ego.destination.0.to_string()),
                ("route", nodes_str(&self.veh.route.nodes)),
                ("threshold_m", format!("{:.3}", self.veh.requisition.threshold_distance())),
                ("budget_us", LATENCY_BUDGET_US.to_string()),
                ("pdr_floor", format!("{PDR_FLOOR:.3}")),
                ("rate_limit_per_min", format!("{ROUTE_RATE_LIMIT_PER_MIN:.2}")),
            ],
        );
        for i in 0..self.rsus.len() {
            self.schedule(SimTime::ZERO, RANK_RSU_FRAME, EventKind::RsuFrame { index: i });
            if self.rsus[i].raw_period_us > 0 {
                self.schedule(SimTime::ZERO, RANK_RSU_RAW, EventKind::RsuRaw { index: i });
            }
        }
        self.schedule(SimTime(self.sc.sync_period_us), RANK_CLOUD_SYNC, EventKind::CloudSync);
        self.schedule(
            SimTime(self.sc.ego.upload_offset_us),
            RANK_STATE_UPLOAD,
            EventKind::StateUpload,
        );
        self.schedule(
            SimTime(self.sc.ego.control_period_us),
            RANK_CONTROL,
            EventKind::ControlTick,
        );
        self.schedule(SimTime::ZERO, RANK_POSE_LOG, EventKind::PoseLog);
    }

    fn finish(&mut self) {
        let end = SimTime(self.sc.run.duration_us);
        let names: Vec<String> = self.i2c.keys().map(|id| format!("i2c{id}")).collect();
        let mut links: Vec<(String, &Link)> = self
            .i2c
            .values()
            .zip(names)
            .map(|(link, name)| (name, link))
            .collect();
        links.push(("v2c_up".into(), &self.v2c_up));
        links.push(("v2c_down".into(), &self.v2c_down));
        links.push(("v2i_wifi".into(), &self.v2i_wifi));
        links.push(("v2i_wigig".into(), &self.v2i_wigig));
        let mut lines = Vec::new();
        for (name, link) in links {
            let stats = link.stats();
            let types = stats
                .per_type
                .iter()
                .map(|(ty, s)| format!("{ty}:{}:{}:{}", s.offered, s.delivered, s.dropped))
                .collect::<Vec<_>>()
                .join(";");
            lines.push(vec![
                ("link", name),
                ("offered", stats.offered.to_string()),
                ("delivered", stats.delivered.to_string()),
                ("dropped", stats.dropped.to_string()),
                ("bytes", stats.bytes_delivered.to_string()),
                ("types", types),
            ]);
        }
        for fields in lines {
            let fields: Vec<(&str, String)> = fields;
            self.log.push(end, "stats", "link", &fields);
        }
        self.log.push(end, "run", "end", &[("events", self.processed.to_string())]);
    }

    fn handle(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::Delivery { link, bytes } => self.on_delivery(link, &bytes),
            EventKind::RsuFrame { index } => self.on_rsu_frame(index),
            EventKind::RsuRaw { index } => self.on_rsu_raw(index),
            EventKind::CloudSync => self.on_cloud_sync(),
            EventKind::StateUpload => self.on_state_upload(),
            EventKind::ControlTick => self.on_control_tick(),
            EventKind::SendRequest { seq } => self.on_send_request(seq),
            EventKind::ApplyRoute { seq } => self.on_apply_route(seq),
            EventKind::ResponseTimeout { seq } => self.on_response_timeout(seq),
            EventKind::PoseLog => self.on_pose_log(),
        }
    }

    // --- periodic producers -------------------------------------------------

    fn on_rsu_frame(&mut self, index: usize) -> Result<()> {
        let now = self.now;
        let states: Vec<ActorState> =
            self.sc.actors.iter().map(|a| a.state_at(now)).collect();
        let rsu = &mut self.rsus[index];
        let detections = sense(&rsu.sensor, &states, &mut self.rng);
        let tracks = rsu.tracker.update(now, &detections)?.to_vec();
        rsu.frame_seq += 1;
        let (rsu_id, seq, period) = (rsu.id, rsu.frame_seq, rsu.frame_period_us);

        let msg = Message {
            source_id: rsu_id,
            seq,
            timestamp_us: now.0,
            payload: Payload::Tracking {
                records: tracks.iter().map(track_to_record).collect(),
            },
        };
        let bytes = msg.encode();
        let delivered = transmit(
            &mut self.log,
            self.i2c.get_mut(&rsu_id).unwrap(),
            &format!("i2c{rsu_id}"),
            &mut self.rng,
            now,
            bytes.len(),
            MSG_TRACKING,
            0.0,
        );
        if let Some(at) = delivered {
            self.schedule(at, RANK_DELIVERY, EventKind::Delivery { link: LinkId::I2c(rsu_id), bytes });
        }
        self.schedule(SimTime(now.0 + period), RANK_RSU_FRAME, EventKind::RsuFrame { index });
        Ok(())
    }

    fn on_rsu_raw(&mut self, index: usize) -> Result<()> {
        let now = self.now;
        let rsu = &self.rsus[index];
        let (rsu_id, period, payload_bytes) = (rsu.id, rsu.raw_period_us, rsu.raw_bytes);
        // Raw chunks are accounted by size only: they occupy the channel and
        // the delivery counters, but nothing downstream reads their bytes,
        // so the payload is never materialized.
        transmit(
            &mut self.log,
            self.i2c.get_mut(&rsu_id).unwrap(),
            &format!("i2c{rsu_id}"),
            &mut self.rng,
            now,
            raw_chunk_encoded_len(payload_bytes),
            MSG_RAW_CHUNK,
            0.0,
        );
        self.schedule(SimTime(now.0 + period), RANK_RSU_RAW, EventKind::RsuRaw { index });
        Ok(())
    }

    fn on_cloud_sync(&mut self) -> Result<()> {
        let now = self.now;
        let snap = self.cloud.resync(now, &self.sc.network);
        let congested: Vec<String> = snap
            .congested
            .iter()
            .filter(|(_, c)| **c)
            .map(|(s, _)| s.0.to_string())
            .collect();
        let occupancy: Vec<String> = snap
            .occupancy
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(s, n)| format!("{}:{}", s.0, n))
            .collect();
        let stale: Vec<String> = snap.stale_rsus.iter().map(|id| id.to_string()).collect();
        let join = |items: Vec<String>| {
            if items.is_empty() {
                "none".to_string()
            } else {
                items.join(";")
            }
        };
        let objects = snap.objects.len();
        self.log.push(
            now,
            "cloud",
            "sync",
            &[
                ("objects", objects.to_string()),
                ("occupancy", join(occupancy)),
                ("congested", join(congested)),
                ("stale", join(stale)),
            ],
        );
        self.schedule(
            SimTime(now.0 + self.sc.sync_period_us),
            RANK_CLOUD_SYNC,
            EventKind::CloudSync,
        );
        Ok(())
    }

    fn on_state_upload(&mut self) -> Result<()> {
        let now = self.now;
        let est = localize(&self.veh.state, self.sc.ego.localization_sigma, &mut self.rng);
        self.veh.upload_seq += 1;
        let record = TrackingRecord {
            track_id: self.veh.id as u32,
            class: ObjectClass::Vehicle.code(),
            position: [est.position.x as f32, est.position.y as f32, 0.0],
            velocity: [
                (est.speed * est.yaw.cos()) as f32,
                (est.speed * est.yaw.sin()) as f32,
            ],
            bbox: [
                self.sc.ego.footprint[0] as f32,
                self.sc.ego.footprint[1] as f32,
                self.sc.ego.footprint[2] as f32,
            ],
            yaw: est.yaw as f32,
        };
        let msg = Message {
            source_id: self.veh.id,
            seq: self.veh.upload_seq,
            timestamp_us: now.0,
            payload: Payload::Tracking { records: vec![record] },
        };
        let bytes = msg.encode();
        let distance = self.veh.state.position.distance(self.sc.links.base_station);
        let delivered = transmit(
            &mut self.log,
            &mut self.v2c_up,
            "v2c_up",
            &mut self.rng,
            now,
            bytes.len(),
            MSG_TRACKING,
            distance,
        );
        if let Some(at) = delivered {
            self.schedule(at, RANK_DELIVERY, EventKind::Delivery { link: LinkId::V2cUp, bytes });
        }
        self.schedule(
            SimTime(now.0 + self.sc.ego.upload_period_us),
            RANK_STATE_UPLOAD,
            EventKind::StateUpload,
        );
        Ok(())
    }

    // --- the vehicle's control loop -----------------------------------------

    fn on_control_tick(&mut self) -> Result<()> {
        let now = self.now;
        self.schedule(
            SimTime(now.0 + self.sc.ego.control_period_us),
            RANK_CONTROL,
            EventKind::ControlTick,
        );
        if self.veh.parked {
            return Ok(());
        }

        let est = localize(&self.veh.state, self.sc.ego.localization_sigma, &mut self.rng);
        self.veh.last_estimate = est;

        // Requisition trigger: the believed distance to the next intersection
        // on the active route against the braking-derived threshold.
        match next_intersection_on_route(est.position, &self.veh.route, &self.sc.network) {
            Ok(Some((node, distance))) => {
                if let Some(seq) = self.veh.requisition.check_trigger(node, distance, now) {
                    self.veh.request_position = est.position;
                    let threshold = self.veh.requisition.threshold_distance();
                    self.log.push(
                        now,
                        &format!("vehicle{}", self.veh.id),
                        "trigger",
                        &[
                            ("seq", seq.to_string()),
                            ("node", node.0.to_string()),
                            ("distance", format!("{distance:.3}")),
                            ("threshold", format!("{threshold:.3}")),
                        ],
                    );
                    let t_local = self.veh.requisition.cfg.t_local_us;
                    let timeout = self.veh.requisition.cfg.response_timeout_us;
                    self.schedule(
                        SimTime(now.0 + t_local),
                        RANK_SEND_REQUEST,
                        EventKind::SendRequest { seq },
                    );
                    self.schedule(
                        SimTime(now.0 + t_local + timeout),
                        RANK_TIMEOUT,
                        EventKind::ResponseTimeout { seq },
                    );
                }
            }
            Ok(None) => {}
            Err(_) if self.veh.off_route_warnings < 3 => {
                // Transients (e.g. the arc cut right after a route swap) can
                // push the estimate off the route; worth noting, not fatal.
                self.veh.off_route_warnings += 1;
                self.log.push(
                    now,
                    "run",
                    "warning",
                    &[("what", "pose_off_route".to_string())],
                );
            }
            Err(_) => {}
        }

        let command = match pure_pursuit_control(&est, &self.veh.waypoints, &self.sc.ego.pursuit) {
            Ok(cmd) => cmd,
            // Fewer than two waypoints ahead: roll to a stop on the spot.
            Err(Error::RouteExhausted) => ControlCommand { steering: 0.0, target_speed: 0.0 },
            Err(e) => return Err(e),
        };
        let limits = AccelLimits {
            comfort: self.sc.requisition.braking.comfort,
            emergency: self.sc.requisition.braking.emergency,
        };
        let dt = self.sc.ego.control_period_us as f64 * 1e-6;
        self.veh.state =
            integrate_bicycle(&self.veh.state, &command, &limits, self.sc.ego.pursuit.wheelbase, dt);

        if self.veh.state.speed < 1e-3 {
            let dest = self.sc.network.node(self.sc.ego.destination).unwrap().position;
            let gap = self.veh.state.position.distance(dest);
            if gap < ARRIVAL_RADIUS {
                self.veh.parked = true;
                self.log.push(
                    now,
                    &format!("vehicle{}", self.veh.id),
                    "arrived",
                    &[
                        ("x", format!("{:.3}", self.veh.state.position.x)),
                        ("y", format!("{:.3}", self.veh.state.position.y)),
                        ("node_gap", format!("{gap:.3}")),
                    ],
                );
            }
        }
        Ok(())
    }

    fn on_send_request(&mut self, seq: u32) -> Result<()> {
        let now = self.now;
        if self.veh.requisition.pending().map(|p| p.seq) != Some(seq) {
            return Ok(()); // superseded; nothing to send
        }
        self.veh.requisition.mark_sent(seq, now);
        self.veh.request_seq += 1;
        let msg = Message {
            source_id: self.veh.id,
            seq: self.veh.request_seq,
            timestamp_us: now.0,
            payload: Payload::RouteRequest {
                kind: RequestKind::Plan,
                position: [
                    self.veh.request_position.x as f32,
                    self.veh.request_position.y as f32,
                ],
                destination: self.sc.ego.destination.0,
                url: String::new(),
            },
        };
        let bytes = msg.encode();
        let distance = self.veh.state.position.distance(self.sc.links.base_station);
        let delivered = transmit(
            &mut self.log,
            &mut self.v2c_up,
            "v2c_up",
            &mut self.rng,
            now,
            bytes.len(),
            msg.payload.msg_type(),
            distance,
        );
        self.log.push(
            now,
            &format!("vehicle{}", self.veh.id),
            "request_sent",
            &[("seq", seq.to_string())],
        );
        if let Some(at) = delivered {
            self.schedule(at, RANK_DELIVERY, EventKind::Delivery { link: LinkId::V2cUp, bytes });
        }
        Ok(())
    }

    fn on_apply_route(&mut self, seq: u32) -> Result<()> {
        let now = self.now;
        if self.veh.requisition.pending().map(|p| p.seq) != Some(seq) {
            return Ok(());
        }
        let Some(new_waypoints) = self.veh.pending_file.take() else {
            return Ok(());
        };
        let reference = self.veh.requisition.pending().unwrap().intersection;
        let position = self.veh.state.position;
        let current_remaining =
            remaining_nodes(position, &self.veh.route, &self.sc.network).unwrap_or_default();
        let component = format!("vehicle{}", self.veh.id);
        match apply_route(new_waypoints, &current_remaining, reference, position, &self.sc.network)
        {
            Ok(swap) => {
                let breakdown = self
                    .veh
                    .requisition
                    .on_applied(now)
                    .expect("apply event only fires in the applying phase");
                // The execution margin, measured on ground truth: how much
                // road is left to the intersection now that the route is in
                // effect, and how hard stopping there would be.
                let node_pos = self.sc.network.node(reference).unwrap().position;
                let residual = position.distance(node_pos);
                let (decel, class) = match required_stop_decel(self.veh.state.speed, residual) {
                    Ok(a) => (
                        format!("{a:.3}"),
                        braking_class_str(self.sc.requisition.braking.classify(a)).to_string(),
                    ),
                    Err(_) => ("inf".to_string(), "infeasible".to_string()),
                };
                self.log.push(
                    now,
                    &component,
                    "latency",
                    &[
                        ("seq", breakdown.seq.to_string()),
                        ("node", breakdown.intersection.0.to_string()),
                        ("t_local_us", breakdown.t_local_us.to_string()),
                        ("t_comm_us", breakdown.t_comm_us.to_string()),
                        ("t_exe_us", breakdown.t_exe_us.to_string()),
                        ("t_total_us", breakdown.t_total_us.to_string()),
                        ("t_response_us", breakdown.t_response_us.to_string()),
                        ("residual_m", format!("{residual:.3}")),
                        ("stop_decel", decel),
                        ("class", class),
                    ],
                );
                let mut waypoints = swap.waypoints;
                shape_stop_at_end(&mut waypoints, self.sc.requisition.braking.comfort);
                self.log.push(
                    now,
                    &component,
                    "apply_route",
                    &[
                        ("seq", breakdown.seq.to_string()),
                        ("changed", swap.changed.to_string()),
                        ("nodes", nodes_str(&swap.route.nodes)),
                        ("waypoints", waypoints.len().to_string()),
                    ],
                );
                self.veh.route = swap.route;
                self.veh.waypoints = waypoints;
            }
            Err(e) => {
                // Keep the current route; the requisition still ends here.
                self.veh.requisition.on_applied(now);
                self.log.push(
                    now,
                    &component,
                    "fallback",
                    &[
                        ("seq", seq.to_string()),
                        ("reason", "apply_rejected".to_string()),
                        ("error", e.to_string()),
                    ],
                );
            }
        }
        Ok(())
    }

    fn on_response_timeout(&mut self, seq: u32) -> Result<()> {
        if self.veh.requisition.on_timeout(seq) {
            self.veh.pending_file = None;
            let component = format!("vehicle{}", self.veh.id);
            self.log.push(self.now, &component, "timeout", &[("seq", seq.to_string())]);
            self.log.push(
                self.now,
                &component,
                "fallback",
                &[("seq", seq.to_string()), ("reason", "response_timeout".to_string())],
            );
        }
        Ok(())
    }

    fn on_pose_log(&mut self) -> Result<()> {
        let now = self.now;
        let state = self.veh.state;
        self.log.push(
            now,
            &format!("vehicle{}", self.veh.id),
            "pose",
            &[
                ("x", format!("{:.3}", state.position.x)),
                ("y", format!("{:.3}", state.position.y)),
                ("yaw", format!("{:.3}", state.yaw)),
                ("speed", format!("{:.3}", state.speed)),
                ("parked", self.veh.parked.to_string()),
            ],
        );
        self.schedule(SimTime(now.0 + POSE_LOG_PERIOD_US), RANK_POSE_LOG, EventKind::PoseLog);
        Ok(())
    }

    // --- message consumers ---------------------------------------------------

    fn on_delivery(&mut self, link: LinkId, bytes: &[u8]) -> Result<()> {
        let msg = match Message::decode(bytes) {
            Ok(msg) => msg,
            Err(e) => {
                self.log.push(
                    self.now,
                    "run",
                    "warning",
                    &[("what", "decode_failed".to_string()), ("error", e.to_string())],
                );
                return Ok(());
            }
        };
        match link {
            LinkId::I2c(_) | LinkId::V2cUp => self.on_cloud_message(link, msg),
            LinkId::V2cDown => self.on_vehicle_message(msg),
        }
    }

    fn on_cloud_message(&mut self, link: LinkId, msg: Message) -> Result<()> {
        let now = self.now;
        match msg.payload {
            Payload::Tracking { ref records } => {
                if link == LinkId::V2cUp {
                    // A vehicle pose report: one self-describing record.
                    if let Some(r) = records.first() {
                        self.cloud.ingest_ego_report(
                            msg.source_id as u32,
                            Point::new(r.position[0] as f64, r.position[1] as f64),
                            SimTime(msg.timestamp_us),
                        );
                    }
                } else {
                    self.cloud.ingest_frame(PerceptionFrame {
                        rsu_id: msg.source_id,
                        timestamp: SimTime(msg.timestamp_us),
                        tracks: records.iter().map(record_to_track).collect(),
                    });
                }
                Ok(())
            }
            Payload::RouteRequest { kind: RequestKind::Plan, position, destination, .. } => {
                let pos = Point::new(position[0] as f64, position[1] as f64);
                let outcome = self.cloud.handle_plan_request(
                    msg.source_id as u32,
                    pos,
                    NodeId(destination),
                    &self.sc.network,
                    self.sc.run.algorithm,
                    DEFAULT_WAYPOINT_SPACING,
                );
                let (status, url) = match outcome {
                    Ok(PlanOutcome::Planned { url }) => {
                        let stored = self.cloud.fetch(&url).unwrap();
                        let fields = [
                            ("vehicle", msg.source_id.to_string()),
                            ("destination", destination.to_string()),
                            ("url", url.clone()),
                            ("nodes", nodes_str(&stored.route.nodes)),
                            ("cost", format!("{:.3}", stored.route.total_cost)),
                        ];
                        self.log.push(now, "cloud", "plan", &fields);
                        (ResponseStatus::Ok, url)
                    }
                    Ok(PlanOutcome::NoRoute) => {
                        self.log.push(
                            now,
                            "cloud",
                            "plan",
                            &[
                                ("vehicle", msg.source_id.to_string()),
                                ("destination", destination.to_string()),
                                ("outcome", "noroute".to_string()),
                            ],
                        );
                        (ResponseStatus::NoRoute, String::new())
                    }
                    Err(e) => {
                        self.log.push(
                            now,
                            "run",
                            "warning",
                            &[("what", "plan_failed".to_string()), ("error", e.to_string())],
                        );
                        (ResponseStatus::NoRoute, String::new())
                    }
                };
                self.cloud_response_seq += 1;
                let reply = Message {
                    source_id: 0,
                    seq: self.cloud_response_seq,
                    timestamp_us: now.0,
                    payload: Payload::RouteResponse { status, url },
                };
                self.send_downlink(reply);
                Ok(())
            }
            Payload::RouteRequest { kind: RequestKind::Fetch, ref url, .. } => {
                match self.cloud.fetch(url) {
                    Ok(stored) => {
                        let waypoints = stored.wire_waypoints.clone();
                        self.log.push(
                            now,
                            "cloud",
                            "fetch",
                            &[("url", url.clone()), ("waypoints", waypoints.len().to_string())],
                        );
                        self.cloud_file_seq += 1;
                        let reply = Message {
                            source_id: 0,
                            seq: self.cloud_file_seq,
                            timestamp_us: now.0,
                            payload: Payload::RouteFile { waypoints },
                        };
                        self.send_downlink(reply);
                    }
                    Err(e) => {
                        // Unknown URL: report it; the requester's timeout is
                        // the recovery path.
                        self.log.push(
                            now,
                            "cloud",
                            "fetch",
                            &[("url", url.clone()), ("outcome", "unknown".to_string())],
                        );
                        self.log.push(
                            now,
                            "run",
                            "warning",
                            &[("what", "fetch_failed".to_string()), ("error", e.to_string())],
                        );
                    }
                }
                Ok(())
            }
            Payload::RawChunk { .. } | Payload::RouteResponse { .. } | Payload::RouteFile { .. } => {
                self.log.push(
                    now,
                    "run",
                    "warning",
                    &[
                        ("what", "unexpected_message".to_string()),
                        ("at", "cloud".to_string()),
                        ("type", msg.payload.msg_type().to_string()),
                    ],
                );
                Ok(())
            }
        }
    }

    fn send_downlink(&mut self, msg: Message) {
        let bytes = msg.encode();
        let distance = self.veh.state.position.distance(self.sc.links.base_station);
        let delivered = transmit(
            &mut self.log,
            &mut self.v2c_down,
            "v2c_down",
            &mut self.rng,
            self.now,
            bytes.len(),
            msg.payload.msg_type(),
            distance,
        );
        if let Some(at) = delivered {
            self.schedule(at, RANK_DELIVERY, EventKind::Delivery { link: LinkId::V2cDown, bytes });
        }
    }

    fn on_vehicle_message(&mut self, msg: Message) -> Result<()> {
        let now = self.now;
        let component = format!("vehicle{}", self.veh.id);
        match msg.payload {
            Payload::RouteResponse { status, ref url } => {
                let seq = self.veh.requisition.pending().map(|p| p.seq);
                let ok = status == ResponseStatus::Ok;
                let action = self.veh.requisition.on_response(ok, url, now);
                let action_str = match &action {
                    ResponseAction::Fetch { .. } => "fetch",
                    ResponseAction::Fallback { .. } => "fallback",
                    ResponseAction::Ignored { .. } => "ignored",
                };
                self.log.push(
                    now,
                    &component,
                    "response",
                    &[
                        ("seq", seq.map_or("none".to_string(), |s| s.to_string())),
                        ("status", if ok { "ok".to_string() } else { "noroute".to_string() }),
                        ("action", action_str.to_string()),
                    ],
                );
                match action {
                    ResponseAction::Fetch { url } => {
                        self.veh.request_seq += 1;
                        let fetch = Message {
                            source_id: self.veh.id,
                            seq: self.veh.request_seq,
                            timestamp_us: now.0,
                            payload: Payload::RouteRequest {
                                kind: RequestKind::Fetch,
                                position: [
                                    self.veh.last_estimate.position.x as f32,
                                    self.veh.last_estimate.position.y as f32,
                                ],
                                destination: self.sc.ego.destination.0,
                                url,
                            },
                        };
                        let bytes = fetch.encode();
                        let distance =
                            self.veh.state.position.distance(self.sc.links.base_station);
                        let delivered = transmit(
                            &mut self.log,
                            &mut self.v2c_up,
                            "v2c_up",
                            &mut self.rng,
                            now,
                            bytes.len(),
                            fetch.payload.msg_type(),
                            distance,
                        );
                        if let Some(at) = delivered {
                            self.schedule(
                                at,
                                RANK_DELIVERY,
                                EventKind::Delivery { link: LinkId::V2cUp, bytes },
                            );
                        }
                    }
                    ResponseAction::Fallback { reason } => {
                        self.log.push(
                            now,
                            &component,
                            "fallback",
                            &[
                                ("seq", seq.map_or("none".to_string(), |s| s.to_string())),
                                ("reason", reason.to_string()),
                            ],
                        );
                    }
                    ResponseAction::Ignored { .. } => {}
                }
                Ok(())
            }
            Payload::RouteFile { ref waypoints } => {
                let seq = self.veh.requisition.pending().map(|p| p.seq);
                match self.veh.requisition.on_route_file(now) {
                    Some(apply_at) => {
                        let wps: Vec<Waypoint> =
                            waypoints.iter().map(|w| Waypoint::from(*w)).collect();
                        self.log.push(
                            now,
                            &component,
                            "file_received",
                            &[
                                ("seq", seq.map_or("none".to_string(), |s| s.to_string())),
                                ("waypoints", wps.len().to_string()),
                            ],
                        );
                        self.veh.pending_file = Some(wps);
                        let seq = seq.expect("a downloading requisition has a pending request");
                        self.schedule(apply_at, RANK_APPLY_ROUTE, EventKind::ApplyRoute { seq });
                    }
                    None => {
                        self.log.push(
                            now,
                            &component,
                            "stale_file",
                            &[("waypoints", waypoints.len().to_string())],
                        );
                    }
                }
                Ok(())
            }
            _ => {
                self.log.push(
                    now,
                    "run",
                    "warning",
                    &[
                        ("what", "unexpected_message".to_string()),
                        ("at", "vehicle".to_string()),
                        ("type", msg.payload.msg_type().to_string()),
                    ],
                );
                Ok(())
            }
        }
    }
}

/// Cap waypoint speeds so the vehicle rolls to a stop at the route's end.
fn shape_stop_at_end(waypoints: &mut [Waypoint], comfort_decel: f64) {
    if waypoints.is_empty() {
        return;
    }
    let end = *waypoint_arcs(waypoints).last().unwrap();
    plan_velocity(waypoints, &[], &[end], comfort_decel, DEFAULT_STANDOFF);
}

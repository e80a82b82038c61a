//! Scenario configuration: a TOML grammar covering the road network, RSUs,
//! scripted actors, the ego vehicle, link models, congestion policy and
//! requisition parameters. Parsing is strict (unknown keys rejected) and
//! validation collects every offending field instead of stopping at the
//! first.

use std::path::Path;

use serde::Deserialize;

use crate::cloud::CongestionConfig;
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::net::link::LinkParams;
use crate::road::{Algorithm, Node, NodeId, RoadNetwork, SegmentDef};
use crate::time::SimTime;
use crate::vehicle::{BrakingLimits, RequisitionConfig};
use crate::world::{Actor, ObjectClass, PurePursuitParams, ScriptKey};

/// A parsed, validated scenario, ready to run.
#[derive(Debug)]
pub struct Scenario {
    pub run: RunConfig,
    pub network: RoadNetwork,
    pub ego: EgoConfig,
    pub rsus: Vec<RsuConfig>,
    pub actors: Vec<Actor>,
    pub links: LinksConfig,
    pub congestion: CongestionConfig,
    /// Cloud snapshot refresh cadence.
    pub sync_period_us: u64,
    pub requisition: RequisitionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub duration_us: u64,
    pub seed: u64,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoConfig {
    pub vehicle_id: u32,
    pub origin: NodeId,
    pub destination: NodeId,
    pub localization_sigma: f64,
    pub control_period_us: u64,
    pub upload_period_us: u64,
    pub upload_offset_us: u64,
    pub footprint: [f64; 3],
    pub pursuit: PurePursuitParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsuConfig {
    pub id: u16,
    pub position: Point,
    pub yaw: f64,
    pub range: f64,
    pub update_rate_hz: u32,
    pub detection_prob: f64,
    pub position_sigma: f64,
    /// Also stream fixed-size raw sensor chunks beside tracking frames.
    pub raw_upload: bool,
    pub raw_chunk_bytes: u32,
    pub raw_rate_hz: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinksConfig {
    pub i2c: LinkParams,
    pub v2c: LinkParams,
    pub v2i_wifi: LinkParams,
    pub v2i_wigig: LinkParams,
    /// Where the V2C uplink terminates; range checks measure to here.
    pub base_station: Point,
}

// ---------------------------------------------------------------------------
// Raw deserialization layer. Every field is optional so scenarios only spell
// out what they change; validation happens after defaulting.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    run: Option<RawRun>,
    network: Option<RawNetwork>,
    ego: Option<RawEgo>,
    #[serde(default)]
    rsus: Vec<RawRsu>,
    #[serde(default)]
    actors: Vec<RawActor>,
    links: Option<RawLinks>,
    congestion: Option<RawCongestion>,
    requisition: Option<RawRequisition>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    duration_s: Option<f64>,
    seed: Option<u64>,
    algorithm: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    /// Node rows: [id, x, y].
    nodes: Option<Vec<(u32, f64, f64)>>,
    /// Directed segment rows: [from, to].
    segments: Option<Vec<(u32, u32)>>,
    free_flow_speed: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEgo {
    vehicle_id: Option<u32>,
    origin: Option<u32>,
    destination: Option<u32>,
    localization_sigma: Option<f64>,
    control_period_us: Option<u64>,
    upload_period_us: Option<u64>,
    upload_offset_us: Option<u64>,
    footprint: Option<[f64; 3]>,
    wheelbase: Option<f64>,
    lookahead_gain: Option<f64>,
    min_lookahead: Option<f64>,
    max_steering: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRsu {
    id: u16,
    position: [f64; 2],
    yaw: Option<f64>,
    range: Option<f64>,
    update_rate_hz: Option<u32>,
    detection_prob: Option<f64>,
    position_sigma: Option<f64>,
    raw_upload: Option<bool>,
    raw_chunk_bytes: Option<u32>,
    raw_rate_hz: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActor {
    id: u32,
    class: String,
    footprint: Option<[f64; 3]>,
    /// Script rows: [time_s, x, y]; one row pins the actor in place.
    keys: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinks {
    i2c: Option<RawLink>,
    v2c: Option<RawLink>,
    v2i_wifi: Option<RawLink>,
    v2i_wigig: Option<RawLink>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    bandwidth_bps: Option<f64>,
    base_latency_us: Option<u64>,
    jitter_sigma_us: Option<f64>,
    loss_prob: Option<f64>,
    coverage_m: Option<f64>,
    base_station: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCongestion {
    occupancy_threshold: Option<u32>,
    penalty_factor: Option<f64>,
    lateral_bound: Option<f64>,
    staleness_window_us: Option<u64>,
    fusion_gate: Option<f64>,
    ego_exclusion_radius: Option<f64>,
    sync_period_us: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequisition {
    free_flow_speed: Option<f64>,
    comfort_decel: Option<f64>,
    emergency_decel: Option<f64>,
    t_local_us: Option<u64>,
    t_exe_us: Option<u64>,
    response_timeout_us: Option<u64>,
}

fn apply_link(base: LinkParams, raw: &Option<RawLink>) -> LinkParams {
    let Some(raw) = raw else { return base };
    LinkParams {
        bandwidth_bps: raw.bandwidth_bps.unwrap_or(base.bandwidth_bps),
        base_latency_us: raw.base_latency_us.unwrap_or(base.base_latency_us),
        jitter_sigma_us: raw.jitter_sigma_us.unwrap_or(base.jitter_sigma_us),
        loss_prob: raw.loss_prob.unwrap_or(base.loss_prob),
        coverage_m: raw.coverage_m.unwrap_or(base.coverage_m),
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text)
            .map_err(|e| Error::Config(format!("scenario parse error: {e}")))?;
        Self::from_raw(raw)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawScenario) -> Result<Self> {
        let mut problems: Vec<String> = Vec::new();

        let run_raw = raw.run.unwrap_or_default();
        let duration_s = run_raw.duration_s.unwrap_or(120.0);
        if !(duration_s.is_finite() && duration_s > 0.0) {
            problems.push(format!("run.duration_s: must be positive, got {duration_s}"));
        }
        let algorithm = match run_raw.algorithm.as_deref().unwrap_or("astar") {
            "astar" => Algorithm::AStar,
            "dijkstra" => Algorithm::Dijkstra,
            other => {
                problems.push(format!(
                    "run.algorithm: expected \"astar\" or \"dijkstra\", got \"{other}\""
                ));
                Algorithm::AStar
            }
        };
        let run = RunConfig {
            duration_us: (duration_s.max(0.0) * 1e6).round() as u64,
            seed: run_raw.seed.unwrap_or(1),
            algorithm,
        };

        let net_raw = raw.network.unwrap_or_default();
        let speed = net_raw.free_flow_speed.unwrap_or(4.1667);
        let nodes: Vec<Node> = net_raw
            .nodes
            .unwrap_or_default()
            .into_iter()
            .map(|(id, x, y)| Node { id: NodeId(id), position: Point::new(x, y) })
            .collect();
        let defs: Vec<SegmentDef> = net_raw
            .segments
            .unwrap_or_default()
            .into_iter()
            .map(|(from, to)| SegmentDef {
                from: NodeId(from),
                to: NodeId(to),
                polyline: vec![],
                free_flow_speed: speed,
            })
            .collect();
        if nodes.is_empty() || defs.is_empty() {
            problems.push("network: needs at least one node and one segment".into());
        }
        let network = match RoadNetwork::new(nodes, defs) {
            Ok(net) => Some(net),
            Err(e) => {
                problems.push(format!("network: {e}"));
                None
            }
        };

        let ego_raw = raw.ego.unwrap_or_default();
        let ego = EgoConfig {
            vehicle_id: ego_raw.vehicle_id.unwrap_or(1),
            origin: NodeId(ego_raw.origin.unwrap_or(0)),
            destination: NodeId(ego_raw.destination.unwrap_or(0)),
            localization_sigma: ego_raw.localization_sigma.unwrap_or(0.03),
            control_period_us: ego_raw.control_period_us.unwrap_or(10_000),
            upload_period_us: ego_raw.upload_period_us.unwrap_or(100_000),
            upload_offset_us: ego_raw.upload_offset_us.unwrap_or(50_000),
            footprint: ego_raw.footprint.unwrap_or([4.5, 1.8, 1.5]),
            pursuit: {
                let d = PurePursuitParams::default();
                PurePursuitParams {
                    lookahead_gain: ego_raw.lookahead_gain.unwrap_or(d.lookahead_gain),
                    min_lookahead: ego_raw.min_lookahead.unwrap_or(d.min_lookahead),
                    wheelbase: ego_raw.wheelbase.unwrap_or(d.wheelbase),
                    max_steering: ego_raw.max_steering.unwrap_or(d.max_steering),
                }
            },
        };
        if let Some(net) = &network {
            for (field, node) in [("origin", ego.origin), ("destination", ego.destination)] {
                if net.node(node).is_none() {
                    problems.push(format!("ego.{field}: unknown node {node}"));
                }
            }
        }
        if !(ego.localization_sigma.is_finite() && ego.localization_sigma >= 0.0) {
            problems.push(format!(
                "ego.localization_sigma: must be non-negative, got {}",
                ego.localization_sigma
            ));
        }
        if ego.vehicle_id > u16::MAX as u32 {
            // The wire header carries the sender in 16 bits.
            problems.push(format!(
                "ego.vehicle_id: must fit a 16-bit message source id, got {}",
                ego.vehicle_id
            ));
        }
        if ego.control_period_us == 0 {
            problems.push("ego.control_period_us: must be positive".into());
        }
        if ego.upload_period_us == 0 {
            problems.push("ego.upload_period_us: must be positive".into());
        }

        let mut rsus = Vec::with_capacity(raw.rsus.len());
        for r in &raw.rsus {
            let rsu = RsuConfig {
                id: r.id,
                position: Point::new(r.position[0], r.position[1]),
                yaw: r.yaw.unwrap_or(0.0),
                range: r.range.unwrap_or(120.0),
                update_rate_hz: r.update_rate_hz.unwrap_or(30),
                detection_prob: r.detection_prob.unwrap_or(1.0),
                position_sigma: r.position_sigma.unwrap_or(0.0),
                raw_upload: r.raw_upload.unwrap_or(false),
                raw_chunk_bytes: r.raw_chunk_bytes.unwrap_or(575_000),
                raw_rate_hz: r.raw_rate_hz.unwrap_or(10),
            };
            let tag = format!("rsus[id={}]", rsu.id);
            if rsus.iter().any(|existing: &RsuConfig| existing.id == rsu.id) {
                problems.push(format!("{tag}: duplicate id"));
            }
            if !(rsu.range > 0.0) {
                problems.push(format!("{tag}.range: must be positive, got {}", rsu.range));
            }
            if !(0.0..=1.0).contains(&rsu.detection_prob) {
                problems.push(format!(
                    "{tag}.detection_prob: must be in [0, 1], got {}",
                    rsu.detection_prob
                ));
            }
            if !(rsu.position_sigma.is_finite() && rsu.position_sigma >= 0.0) {
                problems.push(format!(
                    "{tag}.position_sigma: must be non-negative, got {}",
                    rsu.position_sigma
                ));
            }
            if rsu.update_rate_hz == 0 {
                problems.push(format!("{tag}.update_rate_hz: must be positive"));
            }
            if rsu.raw_upload && rsu.raw_chunk_bytes == 0 {
                problems.push(format!("{tag}.raw_chunk_bytes: must be positive"));
            }
            if rsu.raw_upload && rsu.raw_rate_hz == 0 {
                problems.push(format!("{tag}.raw_rate_hz: must be positive"));
            }
            rsus.push(rsu);
        }

        let mut actors = Vec::with_capacity(raw.actors.len());
        for a in &raw.actors {
            let tag = format!("actors[id={}]", a.id);
            if actors.iter().any(|existing: &Actor| existing.id == a.id) {
                problems.push(format!("{tag}: duplicate id"));
            }
            if a.id == ego.vehicle_id {
                problems.push(format!("{tag}: collides with ego.vehicle_id"));
            }
            let class = match ObjectClass::from_name(&a.class) {
                Some(c) => c,
                None => {
                    problems.push(format!("{tag}.class: unknown class \"{}\"", a.class));
                    ObjectClass::Other
                }
            };
            let mut keys: Vec<ScriptKey> = Vec::with_capacity(a.keys.len());
            for &(t, x, y) in &a.keys {
                if !(t.is_finite() && t >= 0.0) {
                    problems.push(format!("{tag}.keys: time must be >= 0 s, got {t}"));
                    continue;
                }
                keys.push(ScriptKey {
                    time: SimTime((t * 1e6).round() as u64),
                    position: Point::new(x, y),
                });
            }
            let footprint = a.footprint.unwrap_or(match class {
                ObjectClass::Vehicle => [4.5, 1.8, 1.5],
                _ => [0.6, 0.6, 1.7],
            });
            match Actor::new(a.id, class, footprint, keys) {
                Ok(actor) => actors.push(actor),
                Err(e) => problems.push(format!("{tag}: {e}")),
            }
        }

        let links_raw = raw.links.unwrap_or_default();
        let links = LinksConfig {
            i2c: apply_link(
                LinkParams { base_latency_us: 500, ..LinkParams::ethernet() },
                &links_raw.i2c,
            ),
            v2c: apply_link(
                LinkParams { base_latency_us: 17_000, ..LinkParams::wimax() },
                &links_raw.v2c,
            ),
            v2i_wifi: apply_link(LinkParams::wifi(), &links_raw.v2i_wifi),
            v2i_wigig: apply_link(LinkParams::wigig(), &links_raw.v2i_wigig),
            base_station: links_raw
                .v2c
                .as_ref()
                .and_then(|l| l.base_station)
                .map(|[x, y]| Point::new(x, y))
                .unwrap_or(Point::new(0.0, 0.0)),
        };
        for (name, params) in [
            ("i2c", &links.i2c),
            ("v2c", &links.v2c),
            ("v2i_wifi", &links.v2i_wifi),
            ("v2i_wigig", &links.v2i_wigig),
        ] {
            if let Err(Error::InvalidScenario(mut list)) = params.validate(name) {
                problems.append(&mut list);
            }
        }
        for (name, raw_link) in [
            ("i2c", &links_raw.i2c),
            ("v2i_wifi", &links_raw.v2i_wifi),
            ("v2i_wigig", &links_raw.v2i_wigig),
        ] {
            if raw_link.as_ref().is_some_and(|l| l.base_station.is_some()) {
                problems.push(format!("links.{name}.base_station: only the v2c link has one"));
            }
        }

        let con_raw = raw.congestion.unwrap_or_default();
        let defaults = CongestionConfig::default();
        let congestion = CongestionConfig {
            occupancy_threshold: con_raw.occupancy_threshold.unwrap_or(defaults.occupancy_threshold),
            penalty_factor: con_raw.penalty_factor.unwrap_or(defaults.penalty_factor),
            lateral_bound: con_raw.lateral_bound.unwrap_or(defaults.lateral_bound),
            staleness_window_us: con_raw
                .staleness_window_us
                .unwrap_or(defaults.staleness_window_us),
            fusion_gate: con_raw.fusion_gate.unwrap_or(defaults.fusion_gate),
            ego_exclusion_radius: con_raw
                .ego_exclusion_radius
                .unwrap_or(defaults.ego_exclusion_radius),
        };
        let sync_period_us = con_raw.sync_period_us.unwrap_or(100_000);
        if congestion.occupancy_threshold == 0 {
            problems.push("congestion.occupancy_threshold: must be positive".into());
        }
        if !(congestion.penalty_factor.is_finite() && congestion.penalty_factor >= 1.0) {
            problems.push(format!(
                "congestion.penalty_factor: must be >= 1, got {}",
                congestion.penalty_factor
            ));
        }
        if !(congestion.lateral_bound.is_finite() && congestion.lateral_bound >= 0.0) {
            problems.push(format!(
                "congestion.lateral_bound: must be non-negative, got {}",
                congestion.lateral_bound
            ));
        }
        if !(congestion.fusion_gate.is_finite() && congestion.fusion_gate >= 0.0) {
            problems.push(format!(
                "congestion.fusion_gate: must be non-negative, got {}",
                congestion.fusion_gate
            ));
        }
        if !(congestion.ego_exclusion_radius.is_finite() && congestion.ego_exclusion_radius >= 0.0)
        {
            problems.push(format!(
                "congestion.ego_exclusion_radius: must be non-negative, got {}",
                congestion.ego_exclusion_radius
            ));
        }
        if sync_period_us == 0 {
            problems.push("congestion.sync_period_us: must be positive".into());
        }

        let req_raw = raw.requisition.unwrap_or_default();
        let req_defaults = RequisitionConfig::default();
        let requisition = RequisitionConfig {
            // The trigger threshold derives from the cruise speed, which is
            // the road's free-flow speed unless explicitly overridden.
            free_flow_speed: req_raw.free_flow_speed.unwrap_or(speed),
            braking: BrakingLimits {
                comfort: req_raw.comfort_decel.unwrap_or(req_defaults.braking.comfort),
                emergency: req_raw.emergency_decel.unwrap_or(req_defaults.braking.emergency),
            },
            t_local_us: req_raw.t_local_us.unwrap_or(req_defaults.t_local_us),
            t_exe_us: req_raw.t_exe_us.unwrap_or(req_defaults.t_exe_us),
            response_timeout_us: req_raw
                .response_timeout_us
                .unwrap_or(req_defaults.response_timeout_us),
        };
        if let Err(e) = requisition.validate() {
            problems.push(format!("requisition: {e}"));
        }

        if !problems.is_empty() {
            return Err(Error::InvalidScenario(problems));
        }
        Ok(Scenario {
            run,
            network: network.expect("a network problem would have been recorded"),
            ego,
            rsus,
            actors,
            links,
            congestion,
            sync_period_us,
            requisition,
        })
    }
}

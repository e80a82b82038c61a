//! Vehicle-side route requisition: the threshold-distance trigger, the
//! request / URL / download exchange with the cloud, route swapping, and the
//! braking-feasibility arithmetic that justifies the latency budget.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::road::{infer_route, NodeId, RoadNetwork, Route, Waypoint};
use crate::time::SimTime;

/// Braking-distance constant in (km/h)²·s²/m per m/s²: threshold distance is
/// `0.039 · v² / a` with v in km/h and a in m/s².
pub const BRAKING_DISTANCE_COEFFICIENT: f64 = 0.039;

/// A downloaded route whose nearest waypoint is farther than this cannot be
/// attached to and is rejected.
pub const ROUTE_ATTACH_LIMIT: f64 = 5.0;

const MS_TO_KMH: f64 = 3.6;

/// Distance to an intersection at which a route request must be issued so
/// the answer arrives with comfortable stopping margin to spare.
pub fn compute_threshold_distance(speed_kmh: f64, comfort_decel: f64) -> Result<f64> {
    if !(speed_kmh.is_finite() && speed_kmh >= 0.0) {
        return Err(Error::Config(format!("threshold speed must be >= 0 km/h, got {speed_kmh}")));
    }
    if !(comfort_decel.is_finite() && comfort_decel > 0.0) {
        return Err(Error::Config(format!(
            "comfort deceleration must be positive, got {comfort_decel}"
        )));
    }
    Ok(BRAKING_DISTANCE_COEFFICIENT * speed_kmh * speed_kmh / comfort_decel)
}

/// Constant deceleration that stops from `speed` m/s within `distance` m.
pub fn required_stop_decel(speed: f64, distance: f64) -> Result<f64> {
    if !(speed.is_finite() && speed >= 0.0) || !distance.is_finite() {
        return Err(Error::NonFinite("stop-deceleration inputs"));
    }
    if speed == 0.0 {
        return Ok(0.0);
    }
    if distance <= 0.0 {
        return Err(Error::InfeasibleStop { speed, distance });
    }
    Ok(speed * speed / (2.0 * distance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrakingClass {
    /// At or below the comfort deceleration.
    Comfortable,
    /// Above comfort but still below the emergency bound.
    FeasibleNonEmergency,
    /// At or beyond the emergency bound.
    Emergency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrakingLimits {
    pub comfort: f64,
    pub emergency: f64,
}

impl Default for BrakingLimits {
    fn default() -> Self {
        BrakingLimits { comfort: 3.048, emergency: 4.5 }
    }
}

impl BrakingLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.comfort > 0.0 && self.emergency.is_finite() && self.comfort < self.emergency) {
            return Err(Error::Config(format!(
                "braking limits must satisfy 0 < comfort < emergency, got {} / {}",
                self.comfort, self.emergency
            )));
        }
        Ok(())
    }

    pub fn classify(&self, decel: f64) -> BrakingClass {
        if decel <= self.comfort {
            BrakingClass::Comfortable
        } else if decel < self.emergency {
            BrakingClass::FeasibleNonEmergency
        } else {
            BrakingClass::Emergency
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequisitionConfig {
    /// Cruising speed in m/s; the threshold distance derives from it.
    pub free_flow_speed: f64,
    pub braking: BrakingLimits,
    /// Localization + position-check processing charge before the request
    /// leaves the vehicle.
    pub t_local_us: u64,
    /// Path execution/swap charge between download and route application.
    pub t_exe_us: u64,
    /// Give up on a requisition whose answer hasn't arrived by then.
    pub response_timeout_us: u64,
}

impl Default for RequisitionConfig {
    fn default() -> Self {
        RequisitionConfig {
            free_flow_speed: 4.1667,
            braking: BrakingLimits::default(),
            t_local_us: 9_250,
            t_exe_us: 19_000,
            response_timeout_us: 500_000,
        }
    }
}

impl RequisitionConfig {
    pub fn threshold_distance(&self) -> Result<f64> {
        compute_threshold_distance(self.free_flow_speed * MS_TO_KMH, self.braking.comfort)
    }

    pub fn validate(&self) -> Result<()> {
        self.braking.validate()?;
        if !(self.free_flow_speed.is_finite() && self.free_flow_speed > 0.0) {
            return Err(Error::Config(format!(
                "free-flow speed must be positive, got {}",
                self.free_flow_speed
            )));
        }
        if self.response_timeout_us == 0 {
            return Err(Error::Config("response timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cruising,
    AwaitingResponse,
    Downloading,
    Applying,
}

/// Bookkeeping for the requisition in flight.
#[derive(Debug, Clone)]
pub struct PendingRequest {
    pub seq: u32,
    pub intersection: NodeId,
    pub triggered_at: SimTime,
    pub sent_at: Option<SimTime>,
    pub response_at: Option<SimTime>,
    pub file_at: Option<SimTime>,
    pub url: Option<String>,
}

/// Per-requisition latency decomposition in integer microseconds. The total
/// is the exact sum of the three components by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyBreakdown {
    pub seq: u32,
    pub intersection: NodeId,
    pub t_local_us: u64,
    pub t_comm_us: u64,
    pub t_exe_us: u64,
    pub t_total_us: u64,
    /// Request-to-response slice of `t_comm_us`, i.e. the communication
    /// latency excluding the route-file download exchange.
    pub t_response_us: u64,
}

/// What the vehicle should do with an incoming route response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseAction {
    /// Fetch the route file behind this URL.
    Fetch { url: String },
    /// Keep the current route; the requisition is over.
    Fallback { reason: &'static str },
    /// Stale or out-of-phase message; nothing changes.
    Ignored { reason: &'static str },
}

/// The requisition state machine. The caller owns timing: it feeds poses and
/// message arrivals in and schedules the send / apply / timeout instants this
/// machine hands back.
#[derive(Debug)]
pub struct Requisition {
    pub cfg: RequisitionConfig,
    threshold: f64,
    phase: Phase,
    last_requested: Option<NodeId>,
    pending: Option<PendingRequest>,
    next_seq: u32,
}

impl Requisition {
    pub fn new(cfg: RequisitionConfig) -> Result<Self> {
        cfg.validate()?;
        let threshold = cfg.threshold_distance()?;
        Ok(Requisition {
            cfg,
            threshold,
            phase: Phase::Cruising,
            last_requested: None,
            pending: None,
            next_seq: 1,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn threshold_distance(&self) -> f64 {
        self.threshold
    }

    pub fn pending(&self) -> Option<&PendingRequest> {
        self.pending.as_ref()
    }

    /// Decide whether approaching `intersection` with `distance` m to go
    /// starts a requisition now. At most one fires per intersection
    /// approach, no matter how often this is polled.
    pub fn check_trigger(
        &mut self,
        intersection: NodeId,
        distance: f64,
        now: SimTime,
    ) -> Option<u32> {
        if self.phase != Phase::Cruising
            || distance > self.threshold
            || self.last_requested == Some(intersection)
        {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.last_requested = Some(intersection);
        self.pending = Some(PendingRequest {
            seq,
            intersection,
            triggered_at: now,
            sent_at: None,
            response_at: None,
            file_at: None,
            url: None,
        });
        self.phase = Phase::AwaitingResponse;
        Some(seq)
    }

    /// The request message left the vehicle (the local-processing charge has
    /// elapsed).
    pub fn mark_sent(&mut self, seq: u32, now: SimTime) {
        if let Some(p) = self.pending.as_mut() {
            if p.seq == seq && p.sent_at.is_none() {
                p.sent_at = Some(now);
            }
        }
    }

    pub fn on_response(&mut self, ok: bool, url: &str, now: SimTime) -> ResponseAction {
        if self.phase != Phase::AwaitingResponse {
            return ResponseAction::Ignored { reason: "no request awaiting a response" };
        }
        if !ok {
            self.phase = Phase::Cruising;
            self.pending = None;
            return ResponseAction::Fallback { reason: "planner reported no route" };
        }
        if url.is_empty() {
            self.phase = Phase::Cruising;
            self.pending = None;
            return ResponseAction::Fallback { reason: "response carried no URL" };
        }
        let p = self.pending.as_mut().expect("awaiting-response phase implies a pending request");
        p.response_at = Some(now);
        p.url = Some(url.to_string());
        self.phase = Phase::Downloading;
        ResponseAction::Fetch { url: url.to_string() }
    }

    /// A route file arrived; returns when the swap completes (after the path
    /// execution charge), or `None` for a stale file.
    pub fn on_route_file(&mut self, now: SimTime) -> Option<SimTime> {
        if self.phase != Phase::Downloading {
            return None;
        }
        let p = self.pending.as_mut().expect("downloading phase implies a pending request");
        p.file_at = Some(now);
        self.phase = Phase::Applying;
        Some(SimTime(now.0 + self.cfg.t_exe_us))
    }

    /// The route swap completed; closes the requisition and reports its
    /// latency decomposition.
    pub fn on_applied(&mut self, now: SimTime) -> Option<LatencyBreakdown> {
        if self.phase != Phase::Applying {
            return None;
        }
        let p = self.pending.take().expect("applying phase implies a pending request");
        self.phase = Phase::Cruising;
        let sent = p.sent_at.expect("applied request was sent");
        let response = p.response_at.expect("applied request got a response");
        let file = p.file_at.expect("applied request downloaded a file");
        Some(LatencyBreakdown {
            seq: p.seq,
            intersection: p.intersection,
            t_local_us: sent.0 - p.triggered_at.0,
            t_comm_us: file.0 - sent.0,
            t_exe_us: now.0 - file.0,
            t_total_us: now.0 - p.triggered_at.0,
            t_response_us: response.0 - sent.0,
        })
    }

    /// Deadline passed. True when this abandons a live requisition (the
    /// caller should log the fallback); false for a stale timer.
    pub fn on_timeout(&mut self, seq: u32) -> bool {
        let live = matches!(self.phase, Phase::AwaitingResponse | Phase::Downloading)
            && self.pending.as_ref().map(|p| p.seq) == Some(seq);
        if live {
            self.phase = Phase::Cruising;
            self.pending = None;
        }
        live
    }
}

/// A swapped-in route: the waypoints to track, their node-level route, and
/// whether the decision differs from what the vehicle was already following.
#[derive(Debug, Clone)]
pub struct RouteSwap {
    pub route: Route,
    pub waypoints: Vec<Waypoint>,
    pub changed: bool,
}

/// Replace the active waypoint list with a downloaded one. The new route
/// must pass close enough to attach to; `current_remaining` is the node
/// sequence still ahead on the present route and `reference` is the
/// intersection that prompted the request. Change detection compares the two
/// decisions from that intersection onward: a planner that projects a
/// position onto the opposing lane of a two-way road may legitimately start
/// the new route one node behind the vehicle, and that prefix is history,
/// not a different decision.
pub fn apply_route(
    new_waypoints: Vec<Waypoint>,
    current_remaining: &[NodeId],
    reference: NodeId,
    position: Point,
    network: &RoadNetwork,
) -> Result<RouteSwap> {
    if new_waypoints.is_empty() {
        return Err(Error::EmptyRoute);
    }
    let nearest = new_waypoints
        .iter()
        .map(|w| position.distance(w.position()))
        .fold(f64::INFINITY, f64::min);
    if nearest > ROUTE_ATTACH_LIMIT {
        return Err(Error::RouteDisjoint { distance: nearest, limit: ROUTE_ATTACH_LIMIT });
    }
    let route = infer_route(&new_waypoints, network)?;
    let old_tail = current_remaining.iter().position(|n| *n == reference);
    let new_tail = route.nodes.iter().position(|n| *n == reference);
    let changed = match (old_tail, new_tail) {
        (Some(o), Some(n)) => current_remaining[o..] != route.nodes[n..],
        // The reference is missing from one side; align on the new route's
        // first node instead, and call anything unalignable a change.
        _ => match current_remaining.iter().position(|n| *n == route.nodes[0]) {
            Some(i) => current_remaining[i..] != route.nodes[..],
            None => true,
        },
    };
    Ok(RouteSwap { route, waypoints: new_waypoints, changed })
}

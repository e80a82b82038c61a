//! Single-direction link emulation. A link serializes messages one at a
//! time at its configured bandwidth, then delays them by a base latency plus
//! non-negative jitter; losses consume air time but deliver nothing.
//! Delivery order is FIFO even when a jitter draw would overtake an earlier
//! message.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::{bernoulli, half_gaussian, SimRng};
use crate::time::SimTime;

/// Behavioural parameters of one link direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub bandwidth_bps: f64,
    pub base_latency_us: u64,
    pub jitter_sigma_us: f64,
    pub loss_prob: f64,
    /// Straight-line reach; `f64::INFINITY` for wired links.
    pub coverage_m: f64,
}

impl LinkParams {
    /// Campus Ethernet backbone: 1 Gb/s, wired.
    pub fn ethernet() -> Self {
        LinkParams {
            bandwidth_bps: 1e9,
            base_latency_us: 0,
            jitter_sigma_us: 0.0,
            loss_prob: 0.0,
            coverage_m: f64::INFINITY,
        }
    }

    /// WiMAX vehicle-to-cloud radio: 120 Mb/s over 50 km.
    pub fn wimax() -> Self {
        LinkParams { bandwidth_bps: 120e6, coverage_m: 50_000.0, ..Self::ethernet() }
    }

    /// Wi-Fi vehicle-to-infrastructure radio: 10 Mb/s over 200 m.
    pub fn wifi() -> Self {
        LinkParams { bandwidth_bps: 10e6, coverage_m: 200.0, ..Self::ethernet() }
    }

    /// WiGig mmWave vehicle-to-infrastructure radio: 1 Gb/s over 120 m.
    pub fn wigig() -> Self {
        LinkParams { bandwidth_bps: 1e9, coverage_m: 120.0, ..Self::ethernet() }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.bandwidth_bps > 0.0) {
            problems.push(format!("links.{name}: bandwidth must be positive"));
        }
        if !(0.0..1.0).contains(&self.loss_prob) {
            problems.push(format!("links.{name}: loss_prob must be in [0, 1)"));
        }
        if self.jitter_sigma_us < 0.0 || self.jitter_sigma_us.is_nan() {
            problems.push(format!("links.{name}: jitter_sigma_us must be non-negative"));
        }
        if self.coverage_m < 0.0 || self.coverage_m.is_nan() {
            problems.push(format!("links.{name}: coverage_m must be non-negative"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    OutOfRange,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered { at: SimTime },
    Dropped { reason: DropReason },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Default)]
pub struct LinkStats {
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes_delivered: u64,
    /// Counters broken down by wire message type.
    pub per_type: BTreeMap<u8, StreamStats>,
}

impl LinkStats {
    /// Packet delivery rate, or `None` before any message was offered.
    pub fn pdr(&self) -> Option<f64> {
        (self.offered > 0).then(|| self.delivered as f64 / self.offered as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Link {
    params: LinkParams,
    /// When the transmitter finishes the message currently on the air.
    busy_until: SimTime,
    /// Latest delivery handed out; later deliveries never precede it.
    last_delivery: SimTime,
    stats: LinkStats,
}

impl Link {
    pub fn new(params: LinkParams) -> Self {
        Link { params, busy_until: SimTime::ZERO, last_delivery: SimTime::ZERO, stats: LinkStats::default() }
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    /// Offer one message of `bytes` length to the link at virtual time
    /// `now`, with `distance` meters between the endpoints. Out-of-range
    /// sends consume no air time and no randomness; in-range sends occupy
    /// the transmitter for the serialization time whether or not they are
    /// subsequently lost, so a lossy stream still loads the link.
    pub fn send(
        &mut self,
        now: SimTime,
        bytes: usize,
        msg_type: u8,
        distance: f64,
        rng: &mut SimRng,
    ) -> SendOutcome {
        self.stats.offered += 1;
        let stream = self.stats.per_type.entry(msg_type).or_default();
        stream.offered += 1;

        if distance > self.params.coverage_m {
            self.stats.dropped += 1;
            stream.dropped += 1;
            return SendOutcome::Dropped { reason: DropReason::OutOfRange };
        }

        let serialization_us =
            (bytes as f64 * 8.0 * 1e6 / self.params.bandwidth_bps).ceil() as u64;
        let tx_start = SimTime(now.0.max(self.busy_until.0));
        let tx_end = tx_start + serialization_us;
        self.busy_until = tx_end;

        if bernoulli(rng, self.params.loss_prob) {
            self.stats.dropped += 1;
            stream.dropped += 1;
            return SendOutcome::Dropped { reason: DropReason::Loss };
        }

        let jitter_us = half_gaussian(rng, self.params.jitter_sigma_us).round() as u64;
        let at = SimTime((tx_end + self.params.base_latency_us + jitter_us).0.max(self.last_delivery.0));
        self.last_delivery = at;
        self.stats.delivered += 1;
        self.stats.bytes_delivered += bytes as u64;
        let stream = self.stats.per_type.get_mut(&msg_type).unwrap();
        stream.delivered += 1;
        SendOutcome::Delivered { at }
    }
}

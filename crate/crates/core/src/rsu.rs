//! Roadside-unit perception: range-limited noisy sensing of world objects in
//! the sensor frame, and a per-RSU multi-object tracker that turns raw
//! detections into stable, velocity-carrying tracks.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::rng::{bernoulli, gaussian, SimRng};
use crate::time::SimTime;
use crate::world::{ActorState, ObjectClass};

/// Static description of one roadside sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsuSensor {
    pub id: u16,
    pub position: Point,
    pub yaw: f64,
    pub range: f64,
    pub detection_prob: f64,
    pub position_sigma: f64,
}

/// One perceived object in the sensor frame (x forward along the sensor's
/// heading), with its apparent bounding box (length, width, height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class: ObjectClass,
    pub position: Point,
    pub bbox: [f64; 3],
}

/// Perceive `objects` with the given sensor. Objects beyond the range gate
/// draw no randomness at all, so runs stay reproducible when coverage
/// changes; in-range objects draw a detection coin and per-axis position
/// noise, and are dropped again if the noisy position lands outside the
/// range. Detections come out in the order `objects` was given.
pub fn sense(sensor: &RsuSensor, objects: &[ActorState], rng: &mut SimRng) -> Vec<Detection> {
    let mut detections = Vec::new();
    for obj in objects {
        if obj.position.distance(sensor.position) > sensor.range {
            continue;
        }
        if !bernoulli(rng, sensor.detection_prob) {
            continue;
        }
        let rel = (obj.position - sensor.position).rotated(-sensor.yaw);
        let noisy = rel
            + Point::new(gaussian(rng, sensor.position_sigma), gaussian(rng, sensor.position_sigma));
        if noisy.norm() > sensor.range {
            continue;
        }
        detections.push(Detection { class: obj.class, position: noisy, bbox: obj.footprint });
    }
    detections
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    /// Largest predicted-to-detection distance that still associates.
    pub gate: f64,
    /// Position blending weight of the alpha-beta filter.
    pub alpha: f64,
    /// Velocity blending weight of the alpha-beta filter.
    pub beta: f64,
    /// Consecutive missed updates before a track is dropped.
    pub max_misses: u32,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams { gate: 2.0, alpha: 0.5, beta: 0.2, max_misses: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track {
    pub id: u32,
    pub class: ObjectClass,
    pub position: Point,
    pub velocity: Point,
    pub bbox: [f64; 3],
    pub misses: u32,
}

impl Track {
    /// Heading of the track's motion; zero while it stands still.
    pub fn yaw(&self) -> f64 {
        if self.velocity.norm() > 1e-9 {
            self.velocity.y.atan2(self.velocity.x)
        } else {
            0.0
        }
    }
}

/// Alpha-beta tracker with greedy nearest-neighbour association. Track ids
/// increase monotonically and are never reused, so downstream fusion can key
/// on `(rsu, track)` pairs without ambiguity.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u32,
    last_time: Option<SimTime>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Tracker { params, tracks: Vec::new(), next_id: 1, last_time: None }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Fold one detection frame into the track set. Frames must carry
    /// strictly increasing timestamps; the elapsed time feeds both the
    /// prediction step and the velocity correction.
    pub fn update(&mut self, time: SimTime, detections: &[Detection]) -> Result<&[Track]> {
        let dt = match self.last_time {
            Some(prev) if time.0 <= prev.0 => {
                return Err(Error::NonMonotonicTime { prev_us: prev.0, now_us: time.0 })
            }
            Some(prev) => (time.0 - prev.0) as f64 * 1e-6,
            None => 0.0,
        };
        self.last_time = Some(time);

        for track in &mut self.tracks {
            track.position = track.position + track.velocity * dt;
        }

        // Candidate pairs sorted by (distance, track id, detection index)
        // make the greedy matching order fully deterministic.
        let mut pairs: Vec<(f64, u32, usize)> = Vec::new();
        for track in &self.tracks {
            for (di, det) in detections.iter().enumerate() {
                if det.class != track.class {
                    continue;
                }
                let dist = det.position.distance(track.position);
                if dist <= self.params.gate {
                    pairs.push((dist, track.id, di));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut matched_det = vec![false; detections.len()];
        let mut matched_track: Vec<(u32, usize)> = Vec::new();
        for (_, track_id, di) in pairs {
            if matched_det[di] || matched_track.iter().any(|(t, _)| *t == track_id) {
                continue;
            }
            matched_det[di] = true;
            matched_track.push((track_id, di));
        }

        for (track_id, di) in &matched_track {
            let det = &detections[*di];
            let track = self.tracks.iter_mut().find(|t| t.id == *track_id).unwrap();
            let residual = det.position - track.position;
            track.position = track.position + residual * self.params.alpha;
            if dt > 0.0 {
                track.velocity = track.velocity + residual * (self.params.beta / dt);
            }
            track.bbox = det.bbox;
            track.misses = 0;
        }

        let max_misses = self.params.max_misses;
        for track in &mut self.tracks {
            if !matched_track.iter().any(|(t, _)| *t == track.id) {
                track.misses += 1;
            }
        }
        self.tracks.retain(|t| t.misses < max_misses);

        for (di, det) in detections.iter().enumerate() {
            if matched_det[di] {
                continue;
            }
            self.tracks.push(Track {
                id: self.next_id,
                class: det.class,
                position: det.position,
                velocity: Point::new(0.0, 0.0),
                bbox: det.bbox,
                misses: 0,
            });
            self.next_id += 1;
        }

        Ok(&self.tracks)
    }
}

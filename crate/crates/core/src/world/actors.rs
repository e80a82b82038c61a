//! Non-ego road users. Each actor follows a time-keyed script of positions
//! with linear interpolation between keys; a single key makes it static.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::time::SimTime;

/// Object category carried through perception, tracking, and fusion. The
/// numeric codes are the on-wire values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjectClass {
    Other,
    Pedestrian,
    Vehicle,
}

impl ObjectClass {
    pub fn code(self) -> u8 {
        match self {
            ObjectClass::Other => 0,
            ObjectClass::Pedestrian => 1,
            ObjectClass::Vehicle => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ObjectClass::Other),
            1 => Some(ObjectClass::Pedestrian),
            2 => Some(ObjectClass::Vehicle),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "other" => Some(ObjectClass::Other),
            "pedestrian" | "ped" => Some(ObjectClass::Pedestrian),
            "vehicle" => Some(ObjectClass::Vehicle),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Other => "other",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Vehicle => "vehicle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptKey {
    pub time: SimTime,
    pub position: Point,
}

#[derive(Debug, Clone)]
pub struct Actor {
    pub id: u32,
    pub class: ObjectClass,
    /// Bounding-box extents (length, width, height) in meters.
    pub footprint: [f64; 3],
    keys: Vec<ScriptKey>,
}

/// Ground-truth actor pose at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorState {
    pub id: u32,
    pub class: ObjectClass,
    pub position: Point,
    pub velocity: Point,
    pub yaw: f64,
    pub footprint: [f64; 3],
}

impl Actor {
    pub fn new(
        id: u32,
        class: ObjectClass,
        footprint: [f64; 3],
        keys: Vec<ScriptKey>,
    ) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::Config(format!("actor {id} has no script keys")));
        }
        for key in &keys {
            if !key.position.is_finite() {
                return Err(Error::Config(format!("actor {id} has a non-finite position")));
            }
        }
        if keys.windows(2).any(|w| w[1].time.0 <= w[0].time.0) {
            return Err(Error::Config(format!("actor {id} script times must increase")));
        }
        if footprint.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Config(format!("actor {id} footprint extents must be positive")));
        }
        Ok(Actor { id, class, footprint, keys })
    }

    pub fn fixed(
        id: u32,
        class: ObjectClass,
        footprint: [f64; 3],
        position: Point,
    ) -> Result<Self> {
        Actor::new(id, class, footprint, vec![ScriptKey { time: SimTime::ZERO, position }])
    }

    /// Pose at `time`: linear interpolation between the bracketing keys,
    /// clamped to the first/last key outside the scripted span. Velocity is
    /// the slope of the active span (zero when clamped) and yaw follows the
    /// motion direction, holding the last heading while stationary.
    pub fn state_at(&self, time: SimTime) -> ActorState {
        let (position, velocity) = self.sample(time);
        let yaw = if velocity.norm() > 1e-12 {
            velocity.y.atan2(velocity.x)
        } else {
            self.resting_yaw()
        };
        ActorState { id: self.id, class: self.class, position, velocity, yaw, footprint: self.footprint }
    }

    fn sample(&self, time: SimTime) -> (Point, Point) {
        let first = self.keys.first().unwrap();
        let last = self.keys.last().unwrap();
        if time.0 <= first.time.0 {
            return (first.position, Point::new(0.0, 0.0));
        }
        if time.0 >= last.time.0 {
            return (last.position, Point::new(0.0, 0.0));
        }
        let idx = self.keys.partition_point(|k| k.time.0 <= time.0);
        let (a, b) = (&self.keys[idx - 1], &self.keys[idx]);
        let span = (b.time.0 - a.time.0) as f64 * 1e-6;
        let t = (time.0 - a.time.0) as f64 * 1e-6 / span;
        let velocity = (b.position - a.position) * (1.0 / span);
        (a.position + (b.position - a.position) * t, velocity)
    }

    /// Heading of the last scripted motion, or zero for a static actor.
    fn resting_yaw(&self) -> f64 {
        self.keys
            .windows(2)
            .last()
            .map(|w| {
                let d = w[1].position - w[0].position;
                d.y.atan2(d.x)
            })
            .unwrap_or(0.0)
    }
}

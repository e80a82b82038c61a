//! Crate-wide error type. Wire-format decode failures have their own enum in
//! `net::wire`; everything else funnels through `Error`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario validation failed:\n  {}", .0.join("\n  "))]
    InvalidScenario(Vec<String>),

    #[error("no route from node {from} to node {to}")]
    NoRoute { from: u32, to: u32 },

    #[error("pose is {lateral:.3} m off the route (limit {limit:.1} m)")]
    OffRoute { lateral: f64, limit: f64 },

    #[error("route has no segments")]
    EmptyRoute,

    #[error("route exhausted: fewer than two waypoints ahead of the vehicle")]
    RouteExhausted,

    #[error("new route starts {distance:.2} m from the vehicle (limit {limit:.1} m)")]
    RouteDisjoint { distance: f64, limit: f64 },

    #[error("cannot stop: {distance:.2} m remaining at {speed:.2} m/s")]
    InfeasibleStop { speed: f64, distance: f64 },

    #[error("unknown route url: {0}")]
    UnknownUrl(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("timestamp not increasing: {now_us} us after {prev_us} us")]
    NonMonotonicTime { prev_us: u64, now_us: u64 },

    #[error("wire decode failed: {0}")]
    Decode(#[from] crate::net::wire::DecodeError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed event log at line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },

    #[error("malformed waypoint file at line {line}: {reason}")]
    WaypointFile { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

//! Little-endian binary message format. Every message is a fixed 20-byte
//! header followed by one typed payload; decode is strict (unknown fields,
//! spare bytes, or bad discriminants are errors, never panics) so that
//! `decode(encode(m)) == m` holds exactly and arbitrary byte strings are safe
//! to feed in.
//!
//! Header layout: magic u16 (0x4454, "DT"), version u8 (=1), msg_type u8,
//! source_id u16, seq u32, timestamp_us u64, reserved u16 (must be zero).

use thiserror::Error;

pub const MAGIC: u16 = 0x4454;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;

pub const MSG_TRACKING: u8 = 1;
pub const MSG_RAW_CHUNK: u8 = 2;
pub const MSG_ROUTE_REQUEST: u8 = 3;
pub const MSG_ROUTE_RESPONSE: u8 = 4;
pub const MSG_ROUTE_FILE: u8 = 5;

const TRACKING_RECORD_LEN: usize = 41;
const WAYPOINT_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DecodeError {
    #[error("buffer too short: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad magic 0x{0:04x}")]
    BadMagic(u16),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    BadMsgType(u8),
    #[error("reserved header field is 0x{0:04x}, expected zero")]
    ReservedNonZero(u16),
    #[error("unknown object class {0}")]
    BadClass(u8),
    #[error("unknown request kind {0}")]
    BadRequestKind(u8),
    #[error("unknown response status {0}")]
    BadStatus(u8),
    #[error("url is not valid utf-8")]
    BadUtf8,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

/// One tracked object as it travels on the wire. Positions are meters in the
/// sender's frame; the z coordinate rides along for 3-D consumers and is
/// zero in this simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingRecord {
    pub track_id: u32,
    pub class: u8,
    pub position: [f32; 3],
    pub velocity: [f32; 2],
    pub bbox: [f32; 3],
    pub yaw: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireWaypoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub yaw: f32,
    pub velocity: f32,
}

impl From<crate::road::Waypoint> for WireWaypoint {
    fn from(wp: crate::road::Waypoint) -> Self {
        WireWaypoint {
            x: wp.x as f32,
            y: wp.y as f32,
            z: wp.z as f32,
            yaw: wp.yaw as f32,
            velocity: wp.velocity as f32,
        }
    }
}

impl From<WireWaypoint> for crate::road::Waypoint {
    fn from(wp: WireWaypoint) -> Self {
        crate::road::Waypoint {
            x: wp.x as f64,
            y: wp.y as f64,
            z: wp.z as f64,
            yaw: wp.yaw as f64,
            velocity: wp.velocity as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    /// Ask the planner for a fresh route to a destination node.
    Plan,
    /// Download the route file behind a previously issued URL.
    Fetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseStatus {
    Ok,
    NoRoute,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// count u16 + 41-byte records.
    Tracking { records: Vec<TrackingRecord> },
    /// len u32 + raw bytes.
    RawChunk { data: Vec<u8> },
    /// kind u8, position 2xf32, destination u32, url_len u16 + url bytes.
    RouteRequest { kind: RequestKind, position: [f32; 2], destination: u32, url: String },
    /// status u8, url_len u16 + url bytes.
    RouteResponse { status: ResponseStatus, url: String },
    /// count u32 + 20-byte waypoints.
    RouteFile { waypoints: Vec<WireWaypoint> },
}

impl Payload {
    pub fn msg_type(&self) -> u8 {
        match self {
            Payload::Tracking { .. } => MSG_TRACKING,
            Payload::RawChunk { .. } => MSG_RAW_CHUNK,
            Payload::RouteRequest { .. } => MSG_ROUTE_REQUEST,
            Payload::RouteResponse { .. } => MSG_ROUTE_RESPONSE,
            Payload::RouteFile { .. } => MSG_ROUTE_FILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub source_id: u16,
    pub seq: u32,
    pub timestamp_us: u64,
    pub payload: Payload,
}

/// Encoded size of a tracking message carrying `count` records.
pub fn tracking_encoded_len(count: usize) -> usize {
    HEADER_LEN + 2 + TRACKING_RECORD_LEN * count
}

/// Encoded size of a raw chunk carrying `data_len` payload bytes.
pub fn raw_chunk_encoded_len(data_len: usize) -> usize {
    HEADER_LEN + 4 + data_len
}

/// Bit rate of a periodic tracking stream carrying `objects` records per
/// frame at `hz` frames per second.
pub fn tracking_stream_bitrate(objects: usize, hz: f64) -> f64 {
    hz * tracking_encoded_len(objects) as f64 * 8.0
}

impl Message {
    pub fn encoded_len(&self) -> usize {
        match &self.payload {
            Payload::Tracking { records } => tracking_encoded_len(records.len()),
            Payload::RawChunk { data } => raw_chunk_encoded_len(data.len()),
            Payload::RouteRequest { url, .. } => HEADER_LEN + 1 + 8 + 4 + 2 + url.len(),
            Payload::RouteResponse { url, .. } => HEADER_LEN + 1 + 2 + url.len(),
            Payload::RouteFile { waypoints } => HEADER_LEN + 4 + WAYPOINT_LEN * waypoints.len(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC.to_le_bytes());
        out.push(VERSION);
        out.push(self.payload.msg_type());
        out.extend_from_slice(&self.source_id.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.timestamp_us.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        match &self.payload {
            Payload::Tracking { records } => {
                assert!(records.len() <= u16::MAX as usize, "tracking record count overflow");
                out.extend_from_slice(&(records.len() as u16).to_le_bytes());
                for r in records {
                    out.extend_from_slice(&r.track_id.to_le_bytes());
                    out.push(r.class);
                    for v in r.position {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    for v in r.velocity {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    for v in r.bbox {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    out.extend_from_slice(&r.yaw.to_le_bytes());
                }
            }
            Payload::RawChunk { data } => {
                assert!(data.len() <= u32::MAX as usize, "raw chunk length overflow");
                out.extend_from_slice(&(data.len() as u32).to_le_bytes());
                out.extend_from_slice(data);
            }
            Payload::RouteRequest { kind, position, destination, url } => {
                out.push(match kind {
                    RequestKind::Plan => 0,
                    RequestKind::Fetch => 1,
                });
                for v in position {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&destination.to_le_bytes());
                push_url(&mut out, url);
            }
            Payload::RouteResponse { status, url } => {
                out.push(match status {
                    ResponseStatus::Ok => 0,
                    ResponseStatus::NoRoute => 1,
                });
                push_url(&mut out, url);
            }
            Payload::RouteFile { waypoints } => {
                assert!(waypoints.len() <= u32::MAX as usize, "waypoint count overflow");
                out.extend_from_slice(&(waypoints.len() as u32).to_le_bytes());
                for wp in waypoints {
                    for v in [wp.x, wp.y, wp.z, wp.yaw, wp.velocity] {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), self.encoded_len());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.u16()?;
        if magic != MAGIC {
            return Err(DecodeError::BadMagic(magic));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(DecodeError::BadVersion(version));
        }
        let msg_type = r.u8()?;
        let source_id = r.u16()?;
        let seq = r.u32()?;
        let timestamp_us = r.u64()?;
        let reserved = r.u16()?;
        if reserved != 0 {
            return Err(DecodeError::ReservedNonZero(reserved));
        }

        let payload = match msg_type {
            MSG_TRACKING => {
                let count = r.u16()? as usize;
                let mut records = Vec::with_capacity(count.min(1024));
                for _ in 0..count {
                    let track_id = r.u32()?;
                    let class = r.u8()?;
                    if class > 2 {
                        return Err(DecodeError::BadClass(class));
                    }
                    records.push(TrackingRecord {
                        track_id,
                        class,
                        position: [r.f32()?, r.f32()?, r.f32()?],
                        velocity: [r.f32()?, r.f32()?],
                        bbox: [r.f32()?, r.f32()?, r.f32()?],
                        yaw: r.f32()?,
                    });
                }
                Payload::Tracking { records }
            }
            MSG_RAW_CHUNK => {
                let len = r.u32()? as usize;
                Payload::RawChunk { data: r.bytes(len)?.to_vec() }
            }
            MSG_ROUTE_REQUEST => {
                let kind = match r.u8()? {
                    0 => RequestKind::Plan,
                    1 => RequestKind::Fetch,
                    k => return Err(DecodeError::BadRequestKind(k)),
                };
                let position = [r.f32()?, r.f32()?];
                let destination = r.u32()?;
                let url = r.url()?;
                Payload::RouteRequest { kind, position, destination, url }
            }
            MSG_ROUTE_RESPONSE => {
                let status = match r.u8()? {
                    0 => ResponseStatus::Ok,
                    1 => ResponseStatus::NoRoute,
                    s => return Err(DecodeError::BadStatus(s)),
                };
                Payload::RouteResponse { status, url: r.url()? }
            }
            MSG_ROUTE_FILE => {
                let count = r.u32()? as usize;
                let mut waypoints = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    waypoints.push(WireWaypoint {
                        x: r.f32()?,
                        y: r.f32()?,
                        z: r.f32()?,
                        yaw: r.f32()?,
                        velocity: r.f32()?,
                    });
                }
                Payload::RouteFile { waypoints }
            }
            t => return Err(DecodeError::BadMsgType(t)),
        };

        if r.pos != bytes.len() {
            return Err(DecodeError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Message { source_id, seq, timestamp_us, payload })
    }
}

fn push_url(out: &mut Vec<u8>, url: &str) {
    assert!(url.len() <= u16::MAX as usize, "url length overflow");
    out.extend_from_slice(&(url.len() as u16).to_le_bytes());
    out.extend_from_slice(url.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated {
            needed: usize::MAX,
            got: self.bytes.len(),
        })?;
        if end > self.bytes.len() {
            return Err(DecodeError::Truncated { needed: end, got: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn url(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::BadUtf8)
    }
}

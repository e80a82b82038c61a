//! The communication plane: binary wire format shared by every component and
//! per-link delivery emulation with bandwidth, latency, jitter, loss, and
//! coverage.

pub mod link;
pub mod wire;

pub use link::{DropReason, Link, LinkParams, LinkStats, SendOutcome, StreamStats};
pub use wire::{
    raw_chunk_encoded_len, tracking_encoded_len, tracking_stream_bitrate, DecodeError, Message,
    Payload, RequestKind, ResponseStatus, TrackingRecord, WireWaypoint, HEADER_LEN,
    MSG_RAW_CHUNK, MSG_ROUTE_FILE, MSG_ROUTE_REQUEST, MSG_ROUTE_RESPONSE, MSG_TRACKING,
};

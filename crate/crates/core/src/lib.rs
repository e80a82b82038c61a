//! Deterministic discrete-event simulation of an edge/cloud smart-mobility
//! digital twin: roadside units perceive scripted traffic, ship tracks over a
//! heterogeneous V2X network to a cloud twin that models congestion and plans
//! routes, and an autonomous vehicle requests, downloads and executes those
//! routes against a latency budget.
//!
//! Everything runs on an integer-microsecond virtual clock with a single
//! seeded RNG stream per run, so a (scenario, seed) pair reproduces the same
//! event log byte for byte.

pub mod cloud;
pub mod engine;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod net;
pub mod road;
pub mod rng;
pub mod rsu;
pub mod scenario;
pub mod time;
pub mod vehicle;
pub mod world;

pub use error::{Error, Result};
pub use time::SimTime;

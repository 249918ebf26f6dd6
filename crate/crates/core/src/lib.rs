//! Deterministic discrete-event simulator for AODV MANETs with a black hole
//! adversary and a sequence-number screening defense.

pub mod adversary;
pub mod aodv;
pub mod detection;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod ids;
pub mod metrics;
pub mod mobility;
pub mod network;
pub mod rng;
pub mod scenario;
pub mod time;
pub mod trace;
pub mod traffic;

pub use error::Error;
pub use ids::{FlowId, NodeId};
pub use scenario::Scenario;
pub use time::{SimDuration, SimTime};

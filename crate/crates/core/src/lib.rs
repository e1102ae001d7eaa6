//! A micro agent communication protocol for resource-constrained devices.
//!
//! Four verbs (PING, TELL, ASK, OBSERVE), a fixed 64-bit header and TLV
//! options make up the wire format ([`wire`]). On top of it sit
//! resource-accounted agent semantics ([`resources`], [`agent`]), a FIPA
//! translation with a trace-inclusion checker ([`fipa`]), single-decree
//! Paxos built from the four verbs ([`consensus`]), a seeded discrete-event
//! network simulator ([`simnet`]) and an entropy analyzer for the
//! compression bound ([`compression`]).

pub mod agent;
pub mod compression;
pub mod consensus;
pub mod fipa;
pub mod resources;
pub mod simnet;
pub mod wire;
pub mod workload;

mod serde_hex;

/// Discrete simulation time. One tick is reported as one millisecond by default.
pub type Tick = u64;

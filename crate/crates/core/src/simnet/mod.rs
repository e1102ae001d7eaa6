//! Seeded discrete-event network simulator.
//!
//! Time advances in integer ticks. Channels are a full mesh with seeded
//! loss, duplication and delay before GST, and delays bounded by `delta`
//! after it. Every event is recorded in a [`SimEventLog`].

mod config;
mod log;
mod metrics;
mod network;
mod sim;

pub use config::{ConfigError, Crash, Omission, SimConfig};
pub use log::{EventKind, LogRecord, SimEventLog};
pub use metrics::{metrics, LatencyStats, MetricsReport, MetricsSummary, TickMetrics};
pub use network::{NetError, Network, Packet, SendOutcome};
pub use sim::{Ctx, Node, Program, SimStats, Simulation};

//! Single-decree Paxos expressed with the four verbs, a heartbeat failure
//! detector, seeded campaigns over the simulator and a small exhaustive
//! interleaving explorer.

mod acceptor;
mod ballot;
pub mod campaign;
pub mod explore;
mod fd;
mod messages;
mod node;
mod proposer;

pub use acceptor::{AcceptorRecord, AcceptorReply};
pub use ballot::{is_quorum, Ballot};
pub use campaign::{
    run_campaign, run_decree, run_decree_with_log, CampaignConfig, CampaignError, CampaignReport, CampaignSummary,
    DecreeOutcome, FdReport,
};
pub use explore::{explore, ExploreConfig, ExploreReport};
pub use fd::{FailureDetector, FdConfig, FdEvent, FdEventKind, PeerStatus};
pub use messages::{decision_literal, decode, encode, parse_decision, PaxosDecodeError, PaxosMsg, MAX_VALUE};
pub use node::{DecreeSetup, NodeCounters, PaxosNode};
pub use proposer::{Phase, ProposerRecord};

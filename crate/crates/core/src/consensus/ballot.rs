use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;

/// Paxos ballot, ordered by round and then proposer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ballot {
    pub round: u32,
    pub proposer: AgentId,
}

impl Ballot {
    pub const LEN: usize = 8;

    pub fn new(round: u32, proposer: AgentId) -> Self {
        Self { round, proposer }
    }

    pub fn to_bytes(self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..4].copy_from_slice(&self.round.to_be_bytes());
        out[4..].copy_from_slice(&self.proposer.0.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Ballot> {
        let b: [u8; 8] = bytes.try_into().ok()?;
        Some(Ballot {
            round: u32::from_be_bytes([b[0], b[1], b[2], b[3]]),
            proposer: AgentId(u32::from_be_bytes([b[4], b[5], b[6], b[7]])),
        })
    }
}

impl fmt::Display for Ballot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.round, self.proposer)
    }
}

/// Strict majority of `n`.
pub fn is_quorum(count: usize, n: usize) -> bool {
    2 * count > n
}

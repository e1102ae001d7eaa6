use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ballot::{is_quorum, Ballot};
use crate::agent::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Preparing,
    Accepting,
    Decided,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProposerRecord {
    pub me: AgentId,
    pub n: usize,
    pub ballot: Ballot,
    pub proposal: Vec<u8>,
    pub promises: BTreeMap<AgentId, Option<(Ballot, Vec<u8>)>>,
    pub accepted_by: BTreeSet<AgentId>,
    /// Value sent in the current accept phase.
    pub value: Option<Vec<u8>>,
    pub phase: Phase,
    highest_round_seen: u32,
}

impl ProposerRecord {
    pub fn new(me: AgentId, n: usize, proposal: Vec<u8>) -> Self {
        Self {
            me,
            n,
            ballot: Ballot::new(0, me),
            proposal,
            promises: BTreeMap::new(),
            accepted_by: BTreeSet::new(),
            value: None,
            phase: Phase::Idle,
            highest_round_seen: 0,
        }
    }

    /// Opens a prepare phase with a ballot above any seen so far.
    pub fn start_round(&mut self) -> Ballot {
        let round = self.ballot.round.max(self.highest_round_seen) + 1;
        self.ballot = Ballot::new(round, self.me);
        self.promises.clear();
        self.accepted_by.clear();
        self.value = None;
        self.phase = Phase::Preparing;
        self.ballot
    }

    /// Returns the value to propose once a majority has promised.
    pub fn on_promise(
        &mut self,
        from: AgentId,
        ballot: Ballot,
        accepted: Option<(Ballot, Vec<u8>)>,
    ) -> Option<Vec<u8>> {
        if self.phase != Phase::Preparing || ballot != self.ballot {
            return None;
        }
        self.promises.insert(from, accepted);
        if !is_quorum(self.promises.len(), self.n) {
            return None;
        }
        let value = self
            .promises
            .values()
            .flatten()
            .max_by_key(|(b, _)| *b)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| self.proposal.clone());
        self.value = Some(value.clone());
        self.phase = Phase::Accepting;
        Some(value)
    }

    /// Returns the decided value once a majority has accepted.
    pub fn on_accepted(&mut self, from: AgentId, ballot: Ballot) -> Option<Vec<u8>> {
        if self.phase != Phase::Accepting || ballot != self.ballot {
            return None;
        }
        self.accepted_by.insert(from);
        if !is_quorum(self.accepted_by.len(), self.n) {
            return None;
        }
        self.phase = Phase::Decided;
        self.value.clone()
    }

    /// Records a rejection. Returns whether it concerns the current ballot.
    pub fn on_nack(&mut self, ballot: Ballot, promised: Ballot) -> bool {
        self.observe(promised);
        ballot == self.ballot && promised > self.ballot
    }

    pub fn observe(&mut self, other: Ballot) {
        self.highest_round_seen = self.highest_round_seen.max(other.round);
    }

    pub fn abandon(&mut self) {
        if self.phase != Phase::Decided {
            self.phase = Phase::Idle;
        }
    }

    pub fn mark_decided(&mut self) {
        self.phase = Phase::Decided;
    }
}

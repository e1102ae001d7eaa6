//! Exhaustive interleaving search over a small Paxos instance.
//!
//! Messages sit in an unordered pool; any of them may be delivered next or
//! never. The run is bounded by the number of messages sent. Proposers may time out and restart at any point while they have
//! rounds left.

use std::collections::{BTreeMap, HashSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::acceptor::{AcceptorRecord, AcceptorReply};
use super::ballot::{is_quorum, Ballot};
use super::messages::PaxosMsg;
use super::proposer::{Phase, ProposerRecord};
use crate::agent::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub acceptors: usize,
    /// Values of proposers `0..proposals.len()`.
    pub proposals: Vec<Vec<u8>>,
    /// Messages sent over the whole run; anything beyond the budget is lost.
    pub max_messages: usize,
    /// Rounds each proposer may open, including the first.
    pub rounds_per_proposer: u32,
    /// Allow a timeout restart in the middle of a phase, not only after a nack.
    pub restart_anytime: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            acceptors: 3,
            proposals: vec![b"a".to_vec(), b"b".to_vec()],
            max_messages: 14,
            rounds_per_proposer: 2,
            restart_anytime: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub states: u64,
    pub max_messages: usize,
    pub decisions_seen: u64,
    pub agreement_violations: u64,
    pub chosen_violations: u64,
    pub counterexample: Option<Vec<String>>,
}

impl ExploreReport {
    pub fn holds(&self) -> bool {
        self.agreement_violations == 0 && self.chosen_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Packet {
    from: AgentId,
    to: AgentId,
    msg: PaxosMsg,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    acceptors: Vec<AcceptorRecord>,
    proposers: Vec<ProposerRecord>,
    rounds_left: Vec<u32>,
    /// Kept sorted so equal multisets hash equally.
    pool: Vec<Packet>,
    decided: Vec<Vec<u8>>,
    /// Every (ballot, acceptor, value) acceptance so far.
    votes: Vec<(Ballot, AgentId, Vec<u8>)>,
    sent: usize,
}

impl PartialOrd for Packet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Packet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.from, self.to, &self.msg).cmp(&(other.from, other.to, &other.msg))
    }
}

impl State {
    fn send(&mut self, budget: usize, p: Packet) {
        if self.sent < budget {
            self.sent += 1;
            self.pool.push(p);
            self.pool.sort();
        }
    }

    fn send_all(&mut self, budget: usize, from: AgentId, n: usize, msg: PaxosMsg) {
        for to in 0..n as u32 {
            self.send(
                budget,
                Packet {
                    from,
                    to: AgentId(to),
                    msg: msg.clone(),
                },
            );
        }
    }

    fn fingerprint(&self) -> u64 {
        let mut h = std::hash::DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    /// Values accepted by a majority at one ballot.
    fn chosen(&self, n: usize) -> BTreeMap<Ballot, Vec<u8>> {
        let mut by_ballot: BTreeMap<(Ballot, &[u8]), Vec<AgentId>> = BTreeMap::new();
        for (b, a, v) in &self.votes {
            let e = by_ballot.entry((*b, v.as_slice())).or_default();
            if !e.contains(a) {
                e.push(*a);
            }
        }
        by_ballot
            .into_iter()
            .filter(|(_, who)| is_quorum(who.len(), n))
            .map(|((b, v), _)| (b, v.to_vec()))
            .collect()
    }
}

enum Step {
    Deliver(usize),
    Restart(usize),
}

#[derive(Debug, Clone)]
enum Taken {
    Deliver(Packet),
    Restart(usize),
}

fn render(path: &[Taken]) -> Vec<String> {
    path.iter()
        .map(|t| match t {
            Taken::Deliver(p) => format!("{} -> {}: {:?}", p.from, p.to, p.msg),
            Taken::Restart(i) => format!("a{i} restarts"),
        })
        .collect()
}

pub fn explore(config: &ExploreConfig) -> ExploreReport {
    let n = config.acceptors;
    let proposers: Vec<ProposerRecord> = config
        .proposals
        .iter()
        .enumerate()
        .map(|(i, v)| ProposerRecord::new(AgentId(i as u32), n, v.clone()))
        .collect();
    let mut init = State {
        acceptors: vec![AcceptorRecord::new(); n],
        rounds_left: vec![config.rounds_per_proposer; proposers.len()],
        proposers,
        pool: Vec::new(),
        decided: Vec::new(),
        votes: Vec::new(),
        sent: 0,
    };
    for i in 0..init.proposers.len() {
        start(&mut init, i, n, config.max_messages);
    }
    let mut report = ExploreReport::default();
    let mut seen = HashSet::new();
    let mut path = Vec::new();
    dfs(config, init, &mut seen, &mut report, &mut path);
    report
}

fn start(s: &mut State, i: usize, n: usize, budget: usize) {
    s.rounds_left[i] -= 1;
    let b = s.proposers[i].start_round();
    s.send_all(budget, AgentId(i as u32), n, PaxosMsg::Prepare(b));
}

fn check(s: &State, n: usize, report: &mut ExploreReport) -> bool {
    let mut ok = true;
    let mut distinct = s.decided.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() > 1 {
        report.agreement_violations += 1;
        ok = false;
    }
    // Once v is chosen at b, every acceptance at a higher ballot carries v,
    // and every decision is v.
    if let Some((b, v)) = s.chosen(n).into_iter().next() {
        if s.votes.iter().any(|(b2, _, v2)| *b2 > b && v2 != &v) || distinct.iter().any(|d| d != &v) {
            report.chosen_violations += 1;
            ok = false;
        }
    }
    ok
}

fn dfs(config: &ExploreConfig, s: State, seen: &mut HashSet<u64>, report: &mut ExploreReport, path: &mut Vec<Taken>) {
    if !seen.insert(s.fingerprint()) {
        return;
    }
    let n = config.acceptors;
    report.states += 1;
    report.max_messages = report.max_messages.max(s.sent);
    if !s.decided.is_empty() {
        report.decisions_seen += 1;
    }
    if !check(&s, n, report) {
        if report.counterexample.is_none() {
            report.counterexample = Some(render(path));
        }
        return;
    }
    let mut steps = Vec::new();
    let mut last = None;
    for (i, p) in s.pool.iter().enumerate() {
        if last != Some(p) {
            steps.push(Step::Deliver(i));
        }
        last = Some(p);
    }
    for (i, p) in s.proposers.iter().enumerate() {
        let may = match p.phase {
            Phase::Decided => false,
            Phase::Idle => true,
            _ => config.restart_anytime,
        };
        if s.rounds_left[i] > 0 && may && s.sent < config.max_messages {
            steps.push(Step::Restart(i));
        }
    }
    for step in steps {
        let mut next = s.clone();
        let label = match step {
            Step::Deliver(i) => {
                let p = next.pool.remove(i);
                deliver(&mut next, p.clone(), n, config.max_messages);
                Taken::Deliver(p)
            }
            Step::Restart(i) => {
                start(&mut next, i, n, config.max_messages);
                Taken::Restart(i)
            }
        };
        path.push(label);
        dfs(config, next, seen, report, path);
        path.pop();
    }
}

fn deliver(s: &mut State, p: Packet, n: usize, budget: usize) {
    let to = p.to.0 as usize;
    match p.msg {
        PaxosMsg::Prepare(b) => {
            if let Some(pr) = s.proposers.get_mut(to) {
                pr.observe(b);
            }
            let r = s.acceptors[to].on_prepare(b);
            s.send(
                budget,
                Packet {
                    from: p.to,
                    to: p.from,
                    msg: PaxosMsg::Reply(r),
                },
            );
        }
        PaxosMsg::Accept { ballot, value } => {
            let r = s.acceptors[to].on_accept(ballot, &value);
            if matches!(r, AcceptorReply::Accepted { .. }) {
                s.votes.push((ballot, p.to, value));
                s.votes.sort();
                s.votes.dedup();
            }
            s.send(
                budget,
                Packet {
                    from: p.to,
                    to: p.from,
                    msg: PaxosMsg::Reply(r),
                },
            );
        }
        PaxosMsg::Reply(reply) => {
            let Some(pr) = s.proposers.get_mut(to) else {
                return;
            };
            match reply {
                AcceptorReply::Promise { ballot, accepted } => {
                    if let Some(value) = pr.on_promise(p.from, ballot, accepted) {
                        s.send_all(budget, p.to, n, PaxosMsg::Accept { ballot, value });
                    }
                }
                AcceptorReply::Accepted { ballot, .. } => {
                    if let Some(value) = pr.on_accepted(p.from, ballot) {
                        s.decided.push(value);
                    }
                }
                AcceptorReply::Nack { ballot, promised } => {
                    if pr.on_nack(ballot, promised) {
                        pr.abandon();
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance_is_safe() {
        let report = explore(&ExploreConfig {
            max_messages: 10,
            ..ExploreConfig::default()
        });
        assert!(report.holds(), "{report:?}");
        assert!(report.states > 100);
    }

    #[test]
    fn single_proposer_decides_its_value() {
        let report = explore(&ExploreConfig {
            proposals: vec![b"x".to_vec()],
            max_messages: 12,
            rounds_per_proposer: 1,
            ..ExploreConfig::default()
        });
        assert!(report.holds());
        assert!(report.decisions_seen > 0);
    }
}

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::acceptor::{AcceptorRecord, AcceptorReply};
use super::fd::{FailureDetector, FdConfig};
use super::messages::{self, decision_literal, parse_decision, PaxosMsg};
use super::proposer::{Phase, ProposerRecord};
use crate::agent::{compose, AgentId, Literal};
use crate::simnet::{Ctx, Program};
use crate::wire::{Message, QoS, Verb};
use crate::Tick;

/// Settings shared by every node of one decree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecreeSetup {
    pub decree: u32,
    pub participants: Vec<AgentId>,
    /// Agents allowed to propose, with their proposals.
    pub proposals: Vec<(AgentId, Vec<u8>)>,
    pub phase_timeout: Tick,
    pub fd: FdConfig,
    /// Keep the acceptor record across restarts.
    pub persistent: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounters {
    /// Prepare, promise, accept and accepted messages (including the ones a
    /// node addresses to itself).
    pub phase_messages: u64,
    pub local_phase_messages: u64,
    pub decide_messages: u64,
    pub fd_messages: u64,
    pub rounds: u64,
    pub nacks: u64,
    pub stale: u64,
    pub malformed: u64,
}

/// One participant: acceptor, optional proposer, learner and failure detector.
pub struct PaxosNode {
    me: AgentId,
    setup: Arc<DecreeSetup>,
    pub acceptor: AcceptorRecord,
    pub proposer: Option<ProposerRecord>,
    pub fd: FailureDetector,
    deadline: Tick,
    decided: Option<(Vec<u8>, Tick)>,
    pub counters: NodeCounters,
    /// Highest promised ballot seen so far; checked for monotonicity.
    promised_floor: Option<super::Ballot>,
    pub monotone_violations: u64,
    local: VecDeque<PaxosMsg>,
}

impl PaxosNode {
    pub fn new(me: AgentId, setup: Arc<DecreeSetup>) -> Self {
        let n = setup.participants.len();
        let proposer = setup
            .proposals
            .iter()
            .find(|(a, _)| *a == me)
            .map(|(_, v)| ProposerRecord::new(me, n, v.clone()));
        let peers = setup.participants.iter().copied().filter(|p| *p != me);
        let fd = FailureDetector::new(setup.fd, peers);
        Self {
            me,
            setup,
            acceptor: AcceptorRecord::new(),
            proposer,
            fd,
            deadline: 0,
            decided: None,
            counters: NodeCounters::default(),
            promised_floor: None,
            monotone_violations: 0,
            local: VecDeque::new(),
        }
    }

    pub fn decided(&self) -> Option<&(Vec<u8>, Tick)> {
        self.decided.as_ref()
    }

    /// Lowest-id proposer this node does not suspect.
    pub fn leader(&self) -> Option<AgentId> {
        self.setup
            .proposals
            .iter()
            .map(|(a, _)| *a)
            .filter(|a| *a == self.me || !self.fd.is_suspected(*a))
            .min()
    }

    fn emit(&mut self, ctx: &mut Ctx<'_>, to: AgentId, msg: PaxosMsg) {
        self.counters.phase_messages += 1;
        if to == self.me {
            self.counters.local_phase_messages += 1;
            self.local.push_back(msg);
            return;
        }
        let mut m = messages::encode(self.setup.decree, &msg);
        m.header.correlation_id = ctx.agent.fresh_correlation();
        ctx.send(to, m);
    }

    fn broadcast(&mut self, ctx: &mut Ctx<'_>, msg: PaxosMsg) {
        for to in self.setup.participants.clone() {
            self.emit(ctx, to, msg.clone());
        }
    }

    fn reply(&mut self, ctx: &mut Ctx<'_>, to: AgentId, request: Option<&Message>, reply: AcceptorReply) {
        self.check_monotone();
        let msg = PaxosMsg::Reply(reply);
        match request {
            Some(req) if to != self.me => {
                self.counters.phase_messages += 1;
                let m = messages::encode(self.setup.decree, &msg).with_correlation(req.header.correlation_id);
                ctx.send(to, m);
            }
            _ => self.emit(ctx, to, msg),
        }
    }

    fn check_monotone(&mut self) {
        let p = self.acceptor.promised;
        if p < self.promised_floor || !self.acceptor.is_consistent() {
            self.monotone_violations += 1;
        }
        self.promised_floor = self.promised_floor.max(p);
    }

    fn on_paxos(&mut self, ctx: &mut Ctx<'_>, from: AgentId, msg: PaxosMsg, raw: Option<&Message>) {
        match msg {
            PaxosMsg::Prepare(b) => {
                if let Some(p) = self.proposer.as_mut() {
                    p.observe(b);
                }
                let r = self.acceptor.on_prepare(b);
                self.reply(ctx, from, raw, r);
            }
            PaxosMsg::Accept { ballot, value } => {
                if let Some(p) = self.proposer.as_mut() {
                    p.observe(ballot);
                }
                let r = self.acceptor.on_accept(ballot, &value);
                self.reply(ctx, from, raw, r);
            }
            PaxosMsg::Reply(reply) => {
                let Some(p) = self.proposer.as_mut() else {
                    self.counters.stale += 1;
                    return;
                };
                match reply {
                    AcceptorReply::Promise { ballot, accepted } => {
                        let current = ballot == p.ballot && p.phase == Phase::Preparing;
                        match p.on_promise(from, ballot, accepted) {
                            Some(value) => {
                                self.deadline = ctx.now + self.setup.phase_timeout;
                                self.broadcast(ctx, PaxosMsg::Accept { ballot, value });
                            }
                            None if !current => self.counters.stale += 1,
                            None => {}
                        }
                    }
                    AcceptorReply::Accepted { ballot, .. } => {
                        let current = ballot == p.ballot && p.phase == Phase::Accepting;
                        match p.on_accepted(from, ballot) {
                            Some(value) => self.decide(ctx, value),
                            None if !current => self.counters.stale += 1,
                            None => {}
                        }
                    }
                    AcceptorReply::Nack { ballot, promised } => {
                        self.counters.nacks += 1;
                        if p.on_nack(ballot, promised) {
                            p.abandon();
                        } else {
                            self.counters.stale += 1;
                        }
                    }
                }
            }
        }
    }

    fn drain_local(&mut self, ctx: &mut Ctx<'_>) {
        while let Some(msg) = self.local.pop_front() {
            let me = self.me;
            self.on_paxos(ctx, me, msg, None);
        }
    }

    fn learn(&mut self, value: Vec<u8>, now: Tick) {
        if self.decided.is_none() {
            self.decided = Some((value, now));
        }
        if let Some(p) = self.proposer.as_mut() {
            p.mark_decided();
        }
    }

    fn decide(&mut self, ctx: &mut Ctx<'_>, value: Vec<u8>) {
        if self.decided.is_some() {
            return;
        }
        let fact = decision_literal(self.setup.decree, &value);
        ctx.agent.kb.tell(fact.clone());
        self.learn(value, ctx.now);
        for to in self.setup.participants.clone() {
            if to == self.me {
                continue;
            }
            let cid = ctx.agent.fresh_correlation();
            let m = compose::tell(&fact).with_qos(QoS::AtLeastOnce).with_correlation(cid);
            self.counters.decide_messages += 1;
            ctx.send(to, m);
        }
    }

    fn send_pings(&mut self, ctx: &mut Ctx<'_>) {
        let agent = &mut *ctx.agent;
        let pings = self.fd.step(ctx.now, || agent.fresh_correlation());
        for (peer, cid) in pings {
            self.counters.fd_messages += 1;
            ctx.send(peer, compose::ping().with_correlation(cid));
        }
    }
}

impl Program for PaxosNode {
    fn on_deliver(&mut self, ctx: &mut Ctx<'_>, from: AgentId, message: &Message) {
        if message.verb() == Verb::Ping {
            if message.is_response() && !message.is_error() {
                self.fd.on_response(from, message.header.correlation_id, ctx.now);
            }
            return;
        }
        match messages::decode(message) {
            Ok(Some((decree, msg))) if decree == self.setup.decree => {
                self.on_paxos(ctx, from, msg, Some(message));
                self.drain_local(ctx);
            }
            Ok(Some(_)) => self.counters.stale += 1,
            Ok(None) => {
                let learned = Literal::from_bytes(&message.payload)
                    .ok()
                    .filter(|l| ctx.agent.kb.holds(l))
                    .and_then(|l| parse_decision(&l))
                    .filter(|(d, _)| *d == self.setup.decree);
                if let Some((_, value)) = learned {
                    self.learn(value, ctx.now);
                }
            }
            Err(_) => self.counters.malformed += 1,
        }
    }

    fn on_tick(&mut self, ctx: &mut Ctx<'_>) {
        self.send_pings(ctx);
        let leader = self.leader() == Some(self.me);
        let Some(p) = self.proposer.as_mut() else {
            return;
        };
        if p.phase == Phase::Decided {
            return;
        }
        if matches!(p.phase, Phase::Preparing | Phase::Accepting) && ctx.now >= self.deadline {
            p.abandon();
        }
        if p.phase == Phase::Idle && leader && ctx.now >= self.deadline {
            let b = p.start_round();
            self.counters.rounds += 1;
            self.deadline = ctx.now + self.setup.phase_timeout;
            self.broadcast(ctx, PaxosMsg::Prepare(b));
            self.drain_local(ctx);
        }
    }

    fn on_recover(&mut self, ctx: &mut Ctx<'_>) {
        if !self.setup.persistent {
            self.acceptor = AcceptorRecord::new();
            self.promised_floor = None;
        }
        if let Some(p) = self.proposer.as_mut() {
            p.abandon();
        }
        self.local.clear();
        self.fd.reset();
        self.deadline = ctx.now;
    }
}

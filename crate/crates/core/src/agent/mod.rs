//! Agent state and the labelled send/receive transitions.
//!
//! Agents are reactive step functions. [`AgentState::send`] and
//! [`AgentState::receive`] implement the Send and Receive rules: both check
//! well-formedness and resource feasibility before any state changes, so an
//! infeasible action leaves the agent untouched.

mod kb;
mod literal;

pub use kb::KnowledgeBase;
pub use literal::{Literal, LiteralError};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resources::{self, CostModel, ResourceBudget, ResourceError, ResourceVector};
use crate::wire::{self, Flags, Message, OptionType, QoS, Verb, WireError};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Directed channel between two agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub u64);

impl ChannelId {
    pub fn between(from: AgentId, to: AgentId) -> ChannelId {
        ChannelId(((from.0 as u64) << 32) | to.0 as u64)
    }
}

/// Values of the CONTENT_TYPE option.
pub mod content_type {
    /// Payload is a ground literal (a proposition).
    pub const LITERAL: u8 = 0x01;
    /// Payload is an action term.
    pub const ACTION: u8 = 0x02;
}

/// ERR option value on an ASK answer that the responder could not decide.
pub const ERR_UNKNOWN: &[u8] = b"unknown";
/// ERR option value on a locally delivered ASK timeout.
pub const ERR_TIMEOUT: &[u8] = b"timeout";

pub fn content_type_of(m: &Message) -> Option<u8> {
    m.option(OptionType::CONTENT_TYPE)
        .and_then(|o| o.value.first().copied())
}

/// Message constructors for the common verb shapes.
pub mod compose {
    use super::*;

    pub fn tell(fact: &Literal) -> Message {
        Message::new(Verb::Tell)
            .with_option(OptionType::CONTENT_TYPE, [content_type::LITERAL])
            .with_payload(fact.to_bytes())
    }

    pub fn ask(query: &Literal) -> Message {
        Message::new(Verb::Ask)
            .with_option(OptionType::CONTENT_TYPE, [content_type::LITERAL])
            .with_payload(query.to_bytes())
    }

    /// Asks the receiver to perform `action` and report `done(action)`.
    pub fn ask_action(action: &Literal) -> Message {
        Message::new(Verb::Ask)
            .with_option(OptionType::CONTENT_TYPE, [content_type::ACTION])
            .with_payload(action.to_bytes())
    }

    pub fn observe(topic: &str) -> Message {
        Message::new(Verb::Observe).with_option(OptionType::TOPIC, topic.as_bytes().to_vec())
    }

    pub fn ping() -> Message {
        Message::new(Verb::Ping)
    }

    pub fn deadline(m: Message, at: Tick) -> Message {
        m.with_option(OptionType::DEADLINE, at.to_be_bytes().to_vec())
    }
}

/// A communication action `(sender, receiver, verb, options, payload, channel)`.
/// Verb, options and payload are carried by `message`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionLabel {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub channel: ChannelId,
    pub message: Message,
}

impl TransitionLabel {
    pub fn verb(&self) -> Verb {
        self.message.verb()
    }
}

/// An outbound message and its destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub to: AgentId,
    pub message: Message,
    /// A copy of an earlier QoS-1 send; bookkeeping already exists for it.
    pub retransmit: bool,
}

impl Envelope {
    pub fn new(to: AgentId, message: Message) -> Self {
        Self {
            to,
            message,
            retransmit: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    pub direction: Direction,
    pub peer: AgentId,
    pub message: Message,
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingAsk {
    pub peer: AgentId,
    pub query: Option<Literal>,
    pub deadline: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerId {
    AskDeadline(u16),
    Retransmit { peer: AgentId, correlation: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Unacked {
    message: Message,
    attempts: u32,
    deadline: Option<Tick>,
}

/// Record of a NOT-UNDERSTOOD style error notification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorNotice {
    pub from: AgentId,
    pub original_message: Option<u16>,
    pub tick: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Capacity of the bounded history.
    pub history_cap: usize,
    /// Ticks an ASK waits for its answer when it carries no DEADLINE option.
    pub ask_timeout: Tick,
    pub retransmit_interval: Tick,
    pub max_retransmits: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            history_cap: 32,
            ask_timeout: 200,
            retransmit_interval: 12,
            max_retransmits: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStats {
    pub sent: u64,
    pub received: u64,
    pub retransmissions: u64,
    pub gave_up: u64,
    pub timeouts: u64,
    pub malformed: u64,
    pub errors_received: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("malformed message: {0}")]
    Malformed(#[from] WireError),
    #[error("infeasible: {0}")]
    Infeasible(#[from] ResourceError),
    #[error("an agent cannot send to itself")]
    SelfAddressed,
    #[error("label addressed to {0}, not this agent")]
    WrongReceiver(AgentId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContentError {
    #[error("payload is not a literal: {0}")]
    BadLiteral(#[from] LiteralError),
    #[error("OBSERVE without a TOPIC option")]
    MissingTopic,
    #[error("topic is not valid UTF-8 text")]
    BadTopic,
    #[error("unknown content type 0x{0:02x}")]
    UnknownContentType(u8),
}

/// Output of [`AgentState::fire_timers`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimerOutput {
    /// QoS-1 copies due for retransmission, same message id as the original.
    pub retransmit: Vec<Envelope>,
    /// Notifications for the agent's own logic, e.g. ASK timeouts.
    pub local: Vec<Message>,
}

impl TimerOutput {
    pub fn is_empty(&self) -> bool {
        self.retransmit.is_empty() && self.local.is_empty()
    }
}

/// Local state `(M, K, T, H)` of one agent, plus subscription and request
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct AgentState {
    id: AgentId,
    config: AgentConfig,
    pub budget: ResourceBudget,
    pub kb: KnowledgeBase,
    timers: BTreeMap<TimerId, Tick>,
    history: VecDeque<HistoryEntry>,
    subscriptions: BTreeSet<(String, AgentId)>,
    pending_asks: BTreeMap<u16, PendingAsk>,
    unacked: BTreeMap<(AgentId, u16), Unacked>,
    next_message_id: u16,
    next_correlation: u16,
    last_error: Option<ErrorNotice>,
    stats: AgentStats,
}

impl AgentState {
    pub fn new(id: AgentId, budget: ResourceBudget, config: AgentConfig) -> Self {
        Self {
            id,
            config,
            budget,
            kb: KnowledgeBase::new(),
            timers: BTreeMap::new(),
            history: VecDeque::with_capacity(config.history_cap),
            subscriptions: BTreeSet::new(),
            pending_asks: BTreeMap::new(),
            unacked: BTreeMap::new(),
            next_message_id: 1,
            next_correlation: 1,
            last_error: None,
            stats: AgentStats::default(),
        }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn history(&self) -> &VecDeque<HistoryEntry> {
        &self.history
    }

    pub fn timers(&self) -> &BTreeMap<TimerId, Tick> {
        &self.timers
    }

    pub fn pending_asks(&self) -> &BTreeMap<u16, PendingAsk> {
        &self.pending_asks
    }

    pub fn unacked_count(&self) -> usize {
        self.unacked.len()
    }

    pub fn subscribers<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = AgentId> + 'a {
        self.subscriptions
            .iter()
            .filter(move |(t, _)| t == topic)
            .map(|(_, a)| *a)
    }

    pub fn last_error(&self) -> Option<ErrorNotice> {
        self.last_error
    }

    pub fn stats(&self) -> &AgentStats {
        &self.stats
    }

    pub fn fresh_message_id(&mut self) -> u16 {
        let id = self.next_message_id;
        self.next_message_id = self.next_message_id.wrapping_add(1).max(1);
        id
    }

    pub fn fresh_correlation(&mut self) -> u16 {
        let c = self.next_correlation;
        self.next_correlation = self.next_correlation.wrapping_add(1).max(1);
        c
    }

    /// Drops volatile request state, as after a crash and restart. The
    /// knowledge base and budget survive.
    pub fn reset_volatile(&mut self) {
        self.timers.clear();
        self.pending_asks.clear();
        self.unacked.clear();
    }

    /// History bound, knowledge-base consistency and timer coverage of
    /// pending asks.
    pub fn invariants_hold(&self) -> bool {
        self.history.len() <= self.config.history_cap
            && self.kb.is_consistent()
            && self
                .pending_asks
                .keys()
                .all(|cid| self.timers.contains_key(&TimerId::AskDeadline(*cid)))
    }

    fn record(&mut self, direction: Direction, peer: AgentId, message: &Message, tick: Tick) {
        if self.config.history_cap == 0 {
            return;
        }
        while self.history.len() >= self.config.history_cap {
            self.history.pop_front();
        }
        self.history.push_back(HistoryEntry {
            direction,
            peer,
            message: message.clone(),
            tick,
        });
    }

    /// Charges `cost`, holding its memory part only for the duration of the step.
    fn charge_step(&mut self, cost: &ResourceVector) -> Result<(), ResourceError> {
        self.budget.charge(cost)?;
        self.budget.refund(&cost.memory_only());
        Ok(())
    }

    fn check_and_cost(&self, m: &Message, model: &CostModel) -> Result<ResourceVector, AgentError> {
        let report = wire::validate(m);
        if !report.is_well_formed() {
            // wire_size reports the concrete framing error.
            wire::wire_size(m)?;
        }
        let cost = resources::consumption(model, m)?;
        if !self.budget.feasible(&cost) {
            return Err(AgentError::Infeasible(ResourceError::InfeasibleCharge {
                cost,
                remaining: *self.budget.remaining(),
            }));
        }
        Ok(cost)
    }

    /// The Send rule for a fresh message.
    pub fn send(
        &mut self,
        m: Message,
        to: AgentId,
        model: &CostModel,
        now: Tick,
    ) -> Result<TransitionLabel, AgentError> {
        self.send_envelope(Envelope::new(to, m), model, now)
    }

    /// The Send rule. Fresh ASKs open a pending ask with a deadline timer and
    /// fresh QoS-1 requests are tracked for retransmission.
    pub fn send_envelope(
        &mut self,
        env: Envelope,
        model: &CostModel,
        now: Tick,
    ) -> Result<TransitionLabel, AgentError> {
        let Envelope {
            to,
            message: m,
            retransmit,
        } = env;
        if to == self.id {
            return Err(AgentError::SelfAddressed);
        }
        let cost = self.check_and_cost(&m, model)?;
        self.charge_step(&cost)?;
        self.record(Direction::Sent, to, &m, now);
        self.stats.sent += 1;
        if retransmit {
            self.stats.retransmissions += 1;
        } else if !m.is_response() {
            let cid = m.header.correlation_id;
            let deadline = deadline_of(&m);
            if m.verb() == Verb::Ask {
                let deadline = deadline.unwrap_or(now + self.config.ask_timeout);
                let query = Literal::from_bytes(&m.payload).ok();
                self.pending_asks.insert(
                    cid,
                    PendingAsk {
                        peer: to,
                        query,
                        deadline,
                    },
                );
                self.timers.insert(TimerId::AskDeadline(cid), deadline);
            }
            if m.header.qos == QoS::AtLeastOnce {
                self.timers.insert(
                    TimerId::Retransmit {
                        peer: to,
                        correlation: cid,
                    },
                    now + self.config.retransmit_interval,
                );
                self.unacked.insert(
                    (to, cid),
                    Unacked {
                        message: m.clone(),
                        attempts: 0,
                        deadline,
                    },
                );
            }
        }
        Ok(TransitionLabel {
            sender: self.id,
            receiver: to,
            channel: ChannelId::between(self.id, to),
            message: m,
        })
    }

    /// The Receive rule. Returns immediate replies: PING echoes, ASK answers,
    /// QoS-1 acknowledgements and NOT-UNDERSTOOD notices for bad content.
    pub fn receive(
        &mut self,
        label: &TransitionLabel,
        model: &CostModel,
        now: Tick,
    ) -> Result<Vec<Envelope>, AgentError> {
        if label.receiver != self.id {
            return Err(AgentError::WrongReceiver(label.receiver));
        }
        let m = &label.message;
        let cost = self.check_and_cost(m, model)?;
        self.charge_step(&cost)?;
        self.record(Direction::Received, label.sender, m, now);
        self.stats.received += 1;

        let cid = m.header.correlation_id;
        if m.is_response() {
            let key = (label.sender, cid);
            if self.unacked.remove(&key).is_some() {
                self.timers.remove(&TimerId::Retransmit {
                    peer: label.sender,
                    correlation: cid,
                });
            }
            if self.pending_asks.get(&cid).is_some_and(|p| p.peer == label.sender) && m.verb() == Verb::Tell {
                self.pending_asks.remove(&cid);
                self.timers.remove(&TimerId::AskDeadline(cid));
            }
        }

        let mut replies = match self.verb_effect(label.sender, m, now) {
            Ok(r) => r,
            Err(_) => {
                self.stats.malformed += 1;
                let notice = Message::new(Verb::Ping)
                    .with_flags(Flags::RESPONSE | Flags::ERROR)
                    .with_correlation(cid)
                    .with_option(OptionType::ERR, m.header.message_id.to_be_bytes().to_vec());
                vec![Envelope::new(label.sender, self.stamp(notice))]
            }
        };
        if replies.is_empty() && m.header.qos == QoS::AtLeastOnce && !m.is_response() && m.verb() != Verb::Ask {
            let ack = self.reply_to(m, Message::new(Verb::Ping));
            replies.push(Envelope::new(label.sender, ack));
        }
        Ok(replies)
    }

    fn stamp(&mut self, mut m: Message) -> Message {
        m.header.message_id = self.fresh_message_id();
        m
    }

    /// Builds a reply: RESPONSE flag, the request's correlation id and its
    /// CID option.
    pub fn reply_to(&mut self, request: &Message, mut reply: Message) -> Message {
        reply.header.flags |= Flags::RESPONSE;
        reply.header.correlation_id = request.header.correlation_id;
        if let Some(cid) = request.option(OptionType::CID) {
            if !reply.has_option(OptionType::CID) {
                reply.options.insert(0, cid.clone());
            }
        }
        self.stamp(reply)
    }

    /// State effect of a received verb.
    ///
    /// * TELL with a literal inserts it into the knowledge base.
    /// * ASK with a literal answers from the knowledge base, or replies
    ///   TELL with an ERR option when the answer is unknown.
    /// * ASK with an action performs it and replies `done(action)`.
    /// * OBSERVE registers the sender as a subscriber of the topic.
    /// * PING is echoed; an ERROR-flagged PING records an error notice.
    ///
    /// Messages carrying a PROC option, or no content type, are left to
    /// the agent's own protocol logic.
    pub fn verb_effect(&mut self, from: AgentId, m: &Message, now: Tick) -> Result<Vec<Envelope>, ContentError> {
        let procedural = m.has_option(OptionType::PROC);
        match m.verb() {
            Verb::Ping => {
                if m.is_error() || m.has_option(OptionType::ERR) {
                    self.stats.errors_received += 1;
                    let original = m
                        .option(OptionType::ERR)
                        .and_then(|o| <[u8; 2]>::try_from(o.value.as_slice()).ok())
                        .map(u16::from_be_bytes);
                    self.last_error = Some(ErrorNotice {
                        from,
                        original_message: original,
                        tick: now,
                    });
                    Ok(Vec::new())
                } else if m.is_response() {
                    Ok(Vec::new())
                } else {
                    let echo = self.reply_to(m, Message::new(Verb::Ping));
                    Ok(vec![Envelope::new(from, echo)])
                }
            }
            Verb::Tell => {
                if procedural || m.has_option(OptionType::ERR) {
                    return Ok(Vec::new());
                }
                match content_type_of(m) {
                    Some(content_type::LITERAL) => {
                        let fact = Literal::from_bytes(&m.payload)?;
                        self.kb.tell(fact);
                        Ok(Vec::new())
                    }
                    Some(other) => Err(ContentError::UnknownContentType(other)),
                    None => Ok(Vec::new()),
                }
            }
            Verb::Ask => {
                if procedural {
                    return Ok(Vec::new());
                }
                match content_type_of(m) {
                    Some(content_type::LITERAL) => {
                        let query = Literal::from_bytes(&m.payload)?;
                        let reply = match self.kb.answer(&query) {
                            Some(known) => compose::tell(known),
                            None => compose::tell(&query).with_option(OptionType::ERR, ERR_UNKNOWN),
                        };
                        let reply = self.reply_to(m, reply);
                        Ok(vec![Envelope::new(from, reply)])
                    }
                    Some(content_type::ACTION) => {
                        let action = Literal::from_bytes(&m.payload)?;
                        let done = Literal::done(&action);
                        self.kb.tell(done.clone());
                        let reply = self.reply_to(m, compose::tell(&done));
                        Ok(vec![Envelope::new(from, reply)])
                    }
                    Some(other) => Err(ContentError::UnknownContentType(other)),
                    None => Ok(Vec::new()),
                }
            }
            Verb::Observe => {
                let topic = m.option(OptionType::TOPIC).ok_or(ContentError::MissingTopic)?;
                let topic = std::str::from_utf8(&topic.value).map_err(|_| ContentError::BadTopic)?;
                if topic.is_empty() {
                    return Err(ContentError::BadTopic);
                }
                self.subscriptions.insert((topic.to_string(), from));
                Ok(Vec::new())
            }
        }
    }

    /// One TELL per distinct subscriber of `topic`.
    pub fn publish(&mut self, topic: &str, fact: &Literal) -> Vec<Envelope> {
        let subscribers: Vec<AgentId> = self.subscribers(topic).collect();
        subscribers
            .into_iter()
            .map(|to| {
                let m = compose::tell(fact).with_option(OptionType::TOPIC, topic.as_bytes().to_vec());
                Envelope::new(to, self.stamp(m))
            })
            .collect()
    }

    /// Fires every timer due at `now`: expired asks become local ERROR-flagged
    /// TELL notifications, due QoS-1 requests are re-emitted.
    pub fn fire_timers(&mut self, now: Tick) -> TimerOutput {
        let due: Vec<TimerId> = self
            .timers
            .iter()
            .filter(|(_, at)| **at <= now)
            .map(|(id, _)| *id)
            .collect();
        let mut out = TimerOutput::default();
        for id in due {
            self.timers.remove(&id);
            match id {
                TimerId::AskDeadline(cid) => {
                    let Some(ask) = self.pending_asks.remove(&cid) else {
                        continue;
                    };
                    self.stats.timeouts += 1;
                    if self.unacked.remove(&(ask.peer, cid)).is_some() {
                        self.timers.remove(&TimerId::Retransmit {
                            peer: ask.peer,
                            correlation: cid,
                        });
                    }
                    let mut note = Message::new(Verb::Tell)
                        .with_flags(Flags::ERROR)
                        .with_correlation(cid)
                        .with_option(OptionType::ERR, ERR_TIMEOUT);
                    if let Some(q) = &ask.query {
                        note = note
                            .with_option(OptionType::CONTENT_TYPE, [content_type::LITERAL])
                            .with_payload(q.to_bytes());
                    }
                    out.local.push(note);
                }
                TimerId::Retransmit { peer, correlation } => {
                    let key = (peer, correlation);
                    let Some(entry) = self.unacked.get_mut(&key) else {
                        continue;
                    };
                    let expired = entry.deadline.is_some_and(|d| now >= d);
                    if entry.attempts >= self.config.max_retransmits || expired {
                        self.unacked.remove(&key);
                        self.stats.gave_up += 1;
                        continue;
                    }
                    entry.attempts += 1;
                    out.retransmit.push(Envelope {
                        to: peer,
                        message: entry.message.clone(),
                        retransmit: true,
                    });
                    self.timers.insert(id, now + self.config.retransmit_interval);
                }
            }
        }
        out
    }
}

fn deadline_of(m: &Message) -> Option<Tick> {
    m.option(OptionType::DEADLINE)
        .and_then(|o| <[u8; 8]>::try_from(o.value.as_slice()).ok())
        .map(u64::from_be_bytes)
}

#[cfg(test)]
mod tests;

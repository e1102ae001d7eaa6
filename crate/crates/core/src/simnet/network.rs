use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::SimConfig;
use super::log::{EventKind, LogRecord, SimEventLog};
use crate::agent::{AgentId, ChannelId, TransitionLabel};
use crate::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("{0} exceeded its per-tick rate cap")]
    RateCapExceeded(AgentId),
    #[error("{0} has crashed")]
    SenderCrashed(AgentId),
}

/// A queued copy of a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub origin: u64,
    pub label: TransitionLabel,
    pub sent_at: Tick,
    pub deliver_at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendOutcome {
    /// Ids of the queued copies, the original first.
    Queued(Vec<u64>),
    Dropped,
}

/// Full-mesh channels with seeded loss, duplication and delay.
#[derive(Debug, Clone)]
pub struct Network {
    config: SimConfig,
    rng: ChaCha8Rng,
    queue: BTreeMap<Tick, Vec<Packet>>,
    crashed: BTreeSet<AgentId>,
    drop_streak: BTreeMap<(ChannelId, u16), u32>,
    rate_tick: Tick,
    sent_this_tick: BTreeMap<AgentId, u32>,
    next_packet: u64,
    in_flight: usize,
    forced: u64,
    log: SimEventLog,
}

impl Network {
    pub fn new(config: SimConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            config,
            rng,
            queue: BTreeMap::new(),
            crashed: BTreeSet::new(),
            drop_streak: BTreeMap::new(),
            rate_tick: 0,
            sent_this_tick: BTreeMap::new(),
            next_packet: 0,
            in_flight: 0,
            forced: 0,
            log: SimEventLog::new(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn log(&self) -> &SimEventLog {
        &self.log
    }

    pub fn into_log(self) -> SimEventLog {
        self.log
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight == 0
    }

    /// Deliveries forced by the fair-loss counter.
    pub fn forced_deliveries(&self) -> u64 {
        self.forced
    }

    pub fn is_crashed(&self, agent: AgentId) -> bool {
        self.crashed.contains(&agent)
    }

    pub fn crash(&mut self, agent: AgentId, now: Tick) {
        if self.crashed.insert(agent) {
            let mut r = LogRecord::bare(now, EventKind::Crash);
            r.from = Some(agent);
            self.log.push(r);
        }
    }

    pub fn recover(&mut self, agent: AgentId, now: Tick) {
        if self.crashed.remove(&agent) {
            let mut r = LogRecord::bare(now, EventKind::Crash);
            r.from = Some(agent);
            r.reason = Some("recover".to_string());
            self.log.push(r);
        }
    }

    pub fn log_timer(&mut self, agent: AgentId, now: Tick, detail: String) {
        let mut r = LogRecord::bare(now, EventKind::Timer);
        r.from = Some(agent);
        r.reason = Some(detail);
        self.log.push(r);
    }

    fn roll_rate_window(&mut self, now: Tick) {
        if now != self.rate_tick {
            self.rate_tick = now;
            self.sent_this_tick.clear();
        }
    }

    pub fn rate_available(&mut self, agent: AgentId, now: Tick) -> bool {
        self.roll_rate_window(now);
        match self.config.rate_cap {
            None => true,
            Some(cap) => self.sent_this_tick.get(&agent).copied().unwrap_or(0) < cap,
        }
    }

    /// Logs a send that never reached the channel.
    pub fn log_refused(&mut self, label: &TransitionLabel, now: Tick, reason: &str) {
        let mut r = LogRecord::for_label(now, EventKind::Drop, label);
        r.reason = Some(reason.to_string());
        self.log.push(r);
    }

    fn delay(&mut self, now: Tick) -> Tick {
        let (lo, hi) = self.config.delay_range;
        let (lo, hi) = if now >= self.config.gst {
            let d = self.config.delta;
            (lo.min(d).max(1), hi.min(d).max(1))
        } else {
            (lo, hi)
        };
        self.rng.gen_range(lo..=hi)
    }

    fn enqueue(&mut self, label: TransitionLabel, origin: Option<u64>, now: Tick) -> u64 {
        let id = self.next_packet;
        self.next_packet += 1;
        let deliver_at = now + self.delay(now);
        let kind = if origin.is_some() {
            EventKind::Dup
        } else {
            EventKind::Send
        };
        let mut r = LogRecord::for_label(now, kind, &label);
        r.packet = Some(id);
        r.origin = origin;
        r.sent_at = Some(now);
        r.deliver_at = Some(deliver_at);
        self.log.push(r);
        self.queue.entry(deliver_at).or_default().push(Packet {
            id,
            origin: origin.unwrap_or(id),
            label,
            sent_at: now,
            deliver_at,
        });
        self.in_flight += 1;
        id
    }

    /// Puts a message on its channel: it may be dropped, duplicated and is
    /// delayed by a seeded draw.
    pub fn schedule_send(&mut self, label: TransitionLabel, now: Tick) -> Result<SendOutcome, NetError> {
        let sender = label.sender;
        if self.crashed.contains(&sender) {
            self.log_refused(&label, now, "sender-crashed");
            return Err(NetError::SenderCrashed(sender));
        }
        if !self.rate_available(sender, now) {
            self.log_refused(&label, now, "rate-cap");
            return Err(NetError::RateCapExceeded(sender));
        }
        *self.sent_this_tick.entry(sender).or_insert(0) += 1;

        if self.config.omitted(sender, label.receiver, now) {
            self.enqueue_dropped(&label, now, "omission");
            return Ok(SendOutcome::Dropped);
        }

        let pre_gst = now < self.config.gst;
        let key = (label.channel, label.message.header.message_id);
        if pre_gst && self.config.drop_rate > 0.0 {
            let roll = self.rng.gen_bool(self.config.drop_rate);
            let streak = self.drop_streak.get(&key).copied().unwrap_or(0);
            if roll && streak < self.config.fair_loss_bound {
                self.drop_streak.insert(key, streak + 1);
                self.enqueue_dropped(&label, now, "loss");
                return Ok(SendOutcome::Dropped);
            }
            if roll {
                self.forced += 1;
            }
        }
        self.drop_streak.remove(&key);

        let duplicate = self.config.dup_rate > 0.0 && self.rng.gen_bool(self.config.dup_rate);
        let copy = duplicate.then(|| label.clone());
        let id = self.enqueue(label, None, now);
        let mut ids = vec![id];
        if let Some(copy) = copy {
            ids.push(self.enqueue(copy, Some(id), now));
        }
        Ok(SendOutcome::Queued(ids))
    }

    fn enqueue_dropped(&mut self, label: &TransitionLabel, now: Tick, reason: &str) {
        let id = self.next_packet;
        self.next_packet += 1;
        let mut send = LogRecord::for_label(now, EventKind::Send, label);
        send.packet = Some(id);
        send.sent_at = Some(now);
        self.log.push(send);
        let mut drop = LogRecord::for_label(now, EventKind::Drop, label);
        drop.packet = Some(id);
        drop.sent_at = Some(now);
        drop.reason = Some(reason.to_string());
        self.log.push(drop);
    }

    /// Removes and returns every packet due at or before `now`, in
    /// (tick, insertion) order. The caller logs the outcome of each.
    pub fn take_due(&mut self, now: Tick) -> Vec<Packet> {
        let later = self.queue.split_off(&(now + 1));
        let due = std::mem::replace(&mut self.queue, later);
        let packets: Vec<Packet> = due.into_values().flatten().collect();
        self.in_flight -= packets.len();
        packets
    }

    pub fn log_deliver(&mut self, p: &Packet, now: Tick) {
        let mut r = LogRecord::for_label(now, EventKind::Deliver, &p.label);
        r.packet = Some(p.id);
        r.origin = (p.origin != p.id).then_some(p.origin);
        r.sent_at = Some(p.sent_at);
        self.log.push(r);
    }

    pub fn log_drop(&mut self, p: &Packet, now: Tick, reason: &str) {
        let mut r = LogRecord::for_label(now, EventKind::Drop, &p.label);
        r.packet = Some(p.id);
        r.sent_at = Some(p.sent_at);
        r.reason = Some(reason.to_string());
        self.log.push(r);
    }

    /// Takes due packets and delivers those whose receiver is alive.
    pub fn deliver_due(&mut self, now: Tick) -> Vec<Packet> {
        let mut out = Vec::new();
        for p in self.take_due(now) {
            if self.crashed.contains(&p.label.receiver) {
                self.log_drop(&p, now, "receiver-crashed");
            } else {
                self.log_deliver(&p, now);
                out.push(p);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{Message, Verb};

    fn label(id: u16) -> TransitionLabel {
        let (a, b) = (AgentId(0), AgentId(1));
        TransitionLabel {
            sender: a,
            receiver: b,
            channel: ChannelId::between(a, b),
            message: Message::new(Verb::Ping).with_message_id(id),
        }
    }

    #[test]
    fn fixed_delay_single_delivery() {
        let config = SimConfig {
            delay_range: (1, 1),
            gst: 100,
            ..SimConfig::default()
        };
        let mut net = Network::new(config);
        net.schedule_send(label(1), 0).unwrap();
        assert!(net.deliver_due(0).is_empty());
        let d = net.deliver_due(1);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].deliver_at, 1);
        assert!(net.is_idle());
    }

    #[test]
    fn forced_duplication_gives_two_deliveries() {
        let config = SimConfig {
            dup_rate: 1.0,
            ..SimConfig::default()
        };
        let mut net = Network::new(config);
        net.schedule_send(label(1), 0).unwrap();
        let n: usize = (0..20).map(|t| net.deliver_due(t).len()).sum();
        assert_eq!(n, 2);
        assert!(net.log().no_spurious_creation());
    }

    #[test]
    fn rate_cap_refuses_and_logs_drop() {
        let config = SimConfig {
            rate_cap: Some(2),
            ..SimConfig::default()
        };
        let mut net = Network::new(config);
        net.schedule_send(label(1), 0).unwrap();
        net.schedule_send(label(2), 0).unwrap();
        assert_eq!(
            net.schedule_send(label(3), 0),
            Err(NetError::RateCapExceeded(AgentId(0)))
        );
        assert_eq!(net.log().of_kind(EventKind::Drop).count(), 1);
        assert!(net.schedule_send(label(4), 1).is_ok());
    }

    #[test]
    fn crashed_sender_refused() {
        let mut net = Network::new(SimConfig::default());
        net.crash(AgentId(0), 0);
        assert_eq!(net.schedule_send(label(1), 0), Err(NetError::SenderCrashed(AgentId(0))));
    }

    #[test]
    fn fair_loss_bound_forces_delivery() {
        let config = SimConfig {
            drop_rate: 1.0,
            gst: u64::MAX,
            ..SimConfig::default()
        };
        let mut net = Network::new(config);
        let mut attempts = 0;
        loop {
            attempts += 1;
            if let SendOutcome::Queued(_) = net.schedule_send(label(7), attempts).unwrap() {
                break;
            }
        }
        assert_eq!(attempts, 21);
        assert_eq!(net.forced_deliveries(), 1);
    }

    #[test]
    fn omission_interval_drops_direction() {
        let config = SimConfig {
            omissions: vec![super::super::config::Omission {
                from: AgentId(0),
                to: AgentId(1),
                start: 0,
                end: 5,
            }],
            ..SimConfig::default()
        };
        let mut net = Network::new(config);
        assert_eq!(net.schedule_send(label(1), 2).unwrap(), SendOutcome::Dropped);
        assert!(matches!(
            net.schedule_send(label(2), 5).unwrap(),
            SendOutcome::Queued(_)
        ));
    }
}

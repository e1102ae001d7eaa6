use std::collections::BTreeMap;

use super::config::SimConfig;
use super::log::SimEventLog;
use super::network::Network;
use crate::agent::{AgentError, AgentId, AgentState, Envelope};
use crate::resources::CostModel;
use crate::wire::Message;
use crate::Tick;

/// What a program may touch while handling one event.
pub struct Ctx<'a> {
    pub now: Tick,
    pub agent: &'a mut AgentState,
    outbox: &'a mut Vec<Envelope>,
}

impl<'a> Ctx<'a> {
    pub fn id(&self) -> AgentId {
        self.agent.id()
    }

    pub fn send(&mut self, to: AgentId, message: Message) {
        self.outbox.push(Envelope::new(to, message));
    }

    pub fn send_all(&mut self, envelopes: impl IntoIterator<Item = Envelope>) {
        self.outbox.extend(envelopes);
    }
}

/// Agent logic driven by the simulator. Verb effects on the agent state have
/// already been applied when `on_deliver` runs.
pub trait Program {
    fn on_start(&mut self, _ctx: &mut Ctx<'_>) {}
    fn on_deliver(&mut self, ctx: &mut Ctx<'_>, from: AgentId, message: &Message);
    /// Local notifications, e.g. ASK timeouts.
    fn on_local(&mut self, _ctx: &mut Ctx<'_>, _note: &Message) {}
    fn on_tick(&mut self, _ctx: &mut Ctx<'_>) {}
    /// Called when a crashed agent restarts, before its first tick.
    fn on_recover(&mut self, _ctx: &mut Ctx<'_>) {}
}

pub struct Node<P> {
    pub agent: AgentState,
    pub program: P,
    pub crashed_at: Option<Tick>,
    pub recoveries: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub refused_infeasible: u64,
    pub refused_rate: u64,
    pub receive_infeasible: u64,
}

/// Tick loop over a set of agents:
///
/// 1. crashes scheduled for the tick take effect,
/// 2. due deliveries are processed in insertion order,
/// 3. each live agent fires its timers and runs `on_tick`, in id order.
pub struct Simulation<P> {
    net: Network,
    cost: CostModel,
    nodes: Vec<Node<P>>,
    index: BTreeMap<AgentId, usize>,
    now: Tick,
    started: bool,
    stats: SimStats,
}

impl<P: Program> Simulation<P> {
    pub fn new(config: SimConfig, cost: CostModel, agents: Vec<(AgentState, P)>) -> Self {
        let mut nodes: Vec<Node<P>> = agents
            .into_iter()
            .map(|(agent, program)| Node {
                agent,
                program,
                crashed_at: None,
                recoveries: 0,
            })
            .collect();
        nodes.sort_by_key(|n| n.agent.id());
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.agent.id(), i))
            .collect::<BTreeMap<_, _>>();
        assert_eq!(index.len(), nodes.len(), "agent ids must be unique");
        Self {
            net: Network::new(config),
            cost,
            nodes,
            index,
            now: 0,
            started: false,
            stats: SimStats::default(),
        }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn log(&self) -> &SimEventLog {
        self.net.log()
    }

    pub fn into_log(self) -> SimEventLog {
        self.net.into_log()
    }

    pub fn into_parts(self) -> (Vec<Node<P>>, SimEventLog) {
        (self.nodes, self.net.into_log())
    }

    pub fn stats(&self) -> SimStats {
        self.stats
    }

    pub fn nodes(&self) -> &[Node<P>] {
        &self.nodes
    }

    pub fn node(&self, id: AgentId) -> Option<&Node<P>> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: AgentId) -> Option<&mut Node<P>> {
        self.index.get(&id).map(|&i| &mut self.nodes[i])
    }

    /// No budget has a component above its limit and none can be negative.
    pub fn budgets_sound(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.agent.budget.remaining().fits_within(n.agent.budget.limit()))
    }

    fn flush(&mut self, idx: usize, outbox: Vec<Envelope>) {
        let now = self.now;
        for env in outbox {
            if !self.index.contains_key(&env.to) {
                continue;
            }
            let from = self.nodes[idx].agent.id();
            if !self.net.rate_available(from, now) {
                self.stats.refused_rate += 1;
                let label = crate::agent::TransitionLabel {
                    sender: from,
                    receiver: env.to,
                    channel: crate::agent::ChannelId::between(from, env.to),
                    message: env.message,
                };
                self.net.log_refused(&label, now, "rate-cap");
                continue;
            }
            match self.nodes[idx].agent.send_envelope(env, &self.cost, now) {
                Ok(label) => {
                    // Rate and liveness were checked above.
                    let _ = self.net.schedule_send(label, now);
                }
                Err(AgentError::Infeasible(_)) => self.stats.refused_infeasible += 1,
                Err(_) => {}
            }
        }
    }

    fn start(&mut self) {
        self.started = true;
        for idx in 0..self.nodes.len() {
            let mut outbox = Vec::new();
            let node = &mut self.nodes[idx];
            let mut ctx = Ctx {
                now: self.now,
                agent: &mut node.agent,
                outbox: &mut outbox,
            };
            node.program.on_start(&mut ctx);
            self.flush(idx, outbox);
        }
    }

    /// Crashes `agent` now, in addition to the configured schedule.
    pub fn crash(&mut self, agent: AgentId) {
        if let Some(&i) = self.index.get(&agent) {
            if self.nodes[i].crashed_at.is_none() {
                self.nodes[i].crashed_at = Some(self.now);
                self.net.crash(agent, self.now);
            }
        }
    }

    fn recover(&mut self, agent: AgentId) {
        let Some(&idx) = self.index.get(&agent) else {
            return;
        };
        if self.nodes[idx].crashed_at.take().is_none() {
            return;
        }
        self.net.recover(agent, self.now);
        let node = &mut self.nodes[idx];
        node.recoveries += 1;
        node.agent.reset_volatile();
        let mut outbox = Vec::new();
        let mut ctx = Ctx {
            now: self.now,
            agent: &mut node.agent,
            outbox: &mut outbox,
        };
        node.program.on_recover(&mut ctx);
        self.flush(idx, outbox);
    }

    /// Advances one tick.
    pub fn step(&mut self) {
        let now = self.now;
        let crashes: Vec<AgentId> = self
            .net
            .config()
            .fault_schedule
            .iter()
            .filter(|c| c.tick == now)
            .map(|c| c.agent)
            .collect();
        for agent in crashes {
            self.crash(agent);
        }
        let recoveries: Vec<AgentId> = self
            .net
            .config()
            .recoveries
            .iter()
            .filter(|c| c.tick == now)
            .map(|c| c.agent)
            .collect();
        for agent in recoveries {
            self.recover(agent);
        }
        if !self.started {
            self.start();
        }

        for packet in self.net.take_due(now) {
            let Some(&idx) = self.index.get(&packet.label.receiver) else {
                self.net.log_drop(&packet, now, "unknown-receiver");
                continue;
            };
            if self.nodes[idx].crashed_at.is_some() {
                self.net.log_drop(&packet, now, "receiver-crashed");
                continue;
            }
            let node = &mut self.nodes[idx];
            match node.agent.receive(&packet.label, &self.cost, now) {
                Ok(mut outbox) => {
                    self.net.log_deliver(&packet, now);
                    let mut ctx = Ctx {
                        now,
                        agent: &mut node.agent,
                        outbox: &mut outbox,
                    };
                    node.program
                        .on_deliver(&mut ctx, packet.label.sender, &packet.label.message);
                    self.flush(idx, outbox);
                }
                Err(e) => {
                    self.stats.receive_infeasible += matches!(e, AgentError::Infeasible(_)) as u64;
                    self.net.log_drop(&packet, now, "receive-refused");
                }
            }
        }

        for idx in 0..self.nodes.len() {
            if self.nodes[idx].crashed_at.is_some() {
                continue;
            }
            let node = &mut self.nodes[idx];
            let fired = node.agent.fire_timers(now);
            let mut outbox = Vec::new();
            if !fired.is_empty() {
                let detail = format!("retransmit={} local={}", fired.retransmit.len(), fired.local.len());
                self.net.log_timer(node.agent.id(), now, detail);
                outbox.extend(fired.retransmit);
            }
            let mut ctx = Ctx {
                now,
                agent: &mut node.agent,
                outbox: &mut outbox,
            };
            for note in &fired.local {
                node.program.on_local(&mut ctx, note);
            }
            node.program.on_tick(&mut ctx);
            self.flush(idx, outbox);
        }
        self.now += 1;
    }

    /// Runs up to and including tick `until`.
    pub fn run(&mut self, until: Tick) {
        while self.now <= until {
            self.step();
        }
    }

    /// Runs until `done` holds (checked after each tick) or `until` passes.
    /// Returns whether `done` was reached.
    pub fn run_until(&mut self, until: Tick, mut done: impl FnMut(&Self) -> bool) -> bool {
        while self.now <= until {
            self.step();
            if done(self) {
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{compose, AgentConfig, Literal};
    use crate::resources::ResourceBudget;
    use crate::simnet::{Crash, EventKind};

    /// Agent 0 tells agent 1 a fresh fact every tick.
    struct Chatter;

    impl Program for Chatter {
        fn on_deliver(&mut self, _: &mut Ctx<'_>, _: AgentId, _: &Message) {}
        fn on_tick(&mut self, ctx: &mut Ctx<'_>) {
            if ctx.id() == AgentId(0) {
                let fact = Literal::atom("tick", [ctx.now.to_string()]);
                ctx.send(AgentId(1), compose::tell(&fact));
            }
        }
    }

    fn sim(config: SimConfig) -> Simulation<Chatter> {
        let agents = (0..2)
            .map(|i| {
                let a = AgentState::new(AgentId(i), ResourceBudget::unlimited(), AgentConfig::default());
                (a, Chatter)
            })
            .collect();
        Simulation::new(config, CostModel::default(), agents)
    }

    #[test]
    fn same_seed_same_log() {
        let config = SimConfig {
            drop_rate: 0.2,
            dup_rate: 0.1,
            gst: 30,
            delay_range: (1, 9),
            seed: 11,
            ..SimConfig::default()
        };
        let mut a = sim(config.clone());
        let mut b = sim(config.clone());
        a.run(60);
        b.run(60);
        assert_eq!(a.log().to_jsonl(), b.log().to_jsonl());
        let mut c = sim(SimConfig { seed: 12, ..config });
        c.run(60);
        assert_ne!(a.log().to_jsonl(), c.log().to_jsonl());
    }

    #[test]
    fn crashed_agent_goes_silent() {
        let config = SimConfig {
            fault_schedule: vec![Crash {
                agent: AgentId(0),
                tick: 10,
            }],
            ..SimConfig::default()
        };
        let mut s = sim(config);
        s.run(40);
        let log = s.log();
        let a0 = Some(AgentId(0));
        let late_activity = log
            .iter()
            .filter(|r| r.tick > 10)
            .any(|r| (r.kind == EventKind::Send && r.from == a0) || (r.kind == EventKind::Deliver && r.to == a0));
        assert!(!late_activity);
        assert!(log.of_kind(EventKind::Send).any(|r| r.from == a0));
        assert!(log.ticks_monotone());
        assert!(log.no_spurious_creation());
    }

    #[test]
    fn receiver_learns_facts() {
        let mut s = sim(SimConfig::default());
        s.run(20);
        let b = &s.node(AgentId(1)).unwrap().agent;
        assert!(b.kb.holds(&Literal::atom("tick", ["3"])));
        assert!(s.budgets_sound());
    }
}

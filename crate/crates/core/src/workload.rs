//! Desk-scale load: request/response and contract-net conversations over a
//! lossy network with QoS-1 retransmission.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{compose, content_type, AgentConfig, AgentId, AgentState, Literal};
use crate::fipa::Performative;
use crate::resources::{CostModel, ResourceBudget};
use crate::simnet::{
    metrics, Ctx, EventKind, MetricsReport, MetricsSummary, Program, SimConfig, SimEventLog, Simulation,
};
use crate::wire::{Message, OptionType, QoS, Verb};
use crate::Tick;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("n = {n} exceeds the configured cap {cap}")]
    TooManyAgents { n: usize, cap: usize },
    #[error("contract net needs {k} contractors but n = {n}")]
    TooFewContractors { k: usize, n: usize },
    #[error(transparent)]
    Sim(#[from] crate::simnet::ConfigError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    pub ns: Vec<usize>,
    pub max_agents: usize,
    pub drop_rate: f64,
    pub dup_rate: f64,
    pub delay_range: (Tick, Tick),
    pub seed: u64,
    /// Request/response conversations opened by each agent.
    pub requests_per_agent: u32,
    /// Contract nets managed by each agent.
    pub contract_nets_per_agent: u32,
    pub contract_net_k: usize,
    /// Conversations start at ticks drawn from `0..start_window`.
    pub start_window: Tick,
    pub max_ticks: Tick,
    pub retransmit_interval: Tick,
    pub rate_cap: Option<u32>,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            ns: vec![100, 200, 400],
            max_agents: 2_000,
            drop_rate: 0.01,
            dup_rate: 0.0,
            delay_range: (1, 10),
            seed: 7,
            requests_per_agent: 4,
            contract_nets_per_agent: 2,
            contract_net_k: 3,
            start_window: 400,
            max_ticks: 20_000,
            retransmit_interval: 24,
            rate_cap: None,
        }
    }
}

impl ScaleConfig {
    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let c: ScaleConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        for &n in &self.ns {
            if n > self.max_agents {
                return Err(WorkloadError::TooManyAgents {
                    n,
                    cap: self.max_agents,
                });
            }
            if n > 0 && self.contract_nets_per_agent > 0 && n <= self.contract_net_k {
                return Err(WorkloadError::TooFewContractors {
                    k: self.contract_net_k,
                    n,
                });
            }
        }
        self.sim_config(0).validate()?;
        Ok(())
    }

    /// Loss applies for the whole run: GST lies beyond the last tick.
    fn sim_config(&self, n: usize) -> SimConfig {
        SimConfig {
            gst: self.max_ticks + 1,
            delta: self.delay_range.1.max(1),
            drop_rate: self.drop_rate,
            dup_rate: self.dup_rate,
            delay_range: self.delay_range,
            seed: self.seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            rate_cap: self.rate_cap,
            ..SimConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationKind {
    RequestResponse,
    ContractNet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Stage {
    Awaiting {
        peer: AgentId,
        correlation: u16,
    },
    Bidding {
        outstanding: BTreeMap<(AgentId, u16), ()>,
        bids: BTreeMap<AgentId, Option<u32>>,
    },
    Awarded {
        winner: AgentId,
    },
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Conversation {
    kind: ConversationKind,
    started: Tick,
    finished: Option<Tick>,
    stage: Stage,
}

/// A planned conversation start.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Start {
    at: Tick,
    kind: ConversationKind,
    peers: Vec<AgentId>,
}

/// One agent's workload: the conversations it opens and its contractor role.
pub struct WorkloadNode {
    plan: Vec<Start>,
    next: usize,
    /// By conversation number (carried in the CID option).
    conversations: BTreeMap<u16, Conversation>,
    /// Awards already acted on, by (manager, conversation).
    awarded: BTreeSet<(AgentId, u16)>,
    pub timeouts: u64,
}

fn cid_option(conv: u16) -> [u8; 2] {
    conv.to_be_bytes()
}

fn conv_of(m: &Message) -> Option<u16> {
    m.option(OptionType::CID)
        .and_then(|o| <[u8; 2]>::try_from(o.value.as_slice()).ok())
        .map(u16::from_be_bytes)
}

fn performative_of(m: &Message) -> Option<Performative> {
    m.option(OptionType::PROC)
        .and_then(|o| o.value.first().copied())
        .and_then(Performative::from_proc_code)
}

fn procedural(p: Performative, fact: &Literal) -> Message {
    let m = match p.procedural_verb() {
        Verb::Ask => compose::ask(fact),
        _ => compose::tell(fact),
    };
    m.with_option(OptionType::PROC, [p.proc_code()])
}

/// Deterministic bid; `None` is a refusal.
fn bid(manager: AgentId, conv: u16, me: AgentId) -> Option<u32> {
    let h = (manager.0 as u64 * 1_000_003 + conv as u64 * 7_919 + me.0 as u64 * 104_729) % 97;
    (!h.is_multiple_of(5)).then_some(h as u32)
}

impl WorkloadNode {
    fn planned(me: AgentId, n: usize, config: &ScaleConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut plan = Vec::new();
        let others = |rng: &mut ChaCha8Rng, k: usize| -> Vec<AgentId> {
            sample(rng, n - 1, k)
                .into_iter()
                .map(|i| AgentId(if i as u32 >= me.0 { i as u32 + 1 } else { i as u32 }))
                .collect()
        };
        for _ in 0..config.requests_per_agent {
            let at = rng.gen_range(0..config.start_window.max(1));
            plan.push(Start {
                at,
                kind: ConversationKind::RequestResponse,
                peers: others(rng, 1),
            });
        }
        for _ in 0..config.contract_nets_per_agent {
            let at = rng.gen_range(0..config.start_window.max(1));
            plan.push(Start {
                at,
                kind: ConversationKind::ContractNet,
                peers: others(rng, config.contract_net_k),
            });
        }
        plan.sort_by_key(|s| s.at);
        Self {
            plan,
            next: 0,
            conversations: BTreeMap::new(),
            awarded: BTreeSet::new(),
            timeouts: 0,
        }
    }

    fn open(&mut self, ctx: &mut Ctx<'_>, start: Start) {
        let conv = self.conversations.len() as u16 + 1;
        let me = ctx.id();
        let stage = match start.kind {
            ConversationKind::RequestResponse => {
                let peer = start.peers[0];
                let correlation = ctx.agent.fresh_correlation();
                let action = Literal::atom("job", [me.to_string(), conv.to_string()]);
                let m = compose::ask_action(&action)
                    .with_qos(QoS::AtLeastOnce)
                    .with_correlation(correlation)
                    .with_option(OptionType::CID, cid_option(conv));
                ctx.send(peer, m);
                Stage::Awaiting { peer, correlation }
            }
            ConversationKind::ContractNet => {
                let task = Literal::atom("task", [me.to_string(), conv.to_string()]);
                let mut outstanding = BTreeMap::new();
                for &peer in &start.peers {
                    let correlation = ctx.agent.fresh_correlation();
                    let m = procedural(Performative::Cfp, &task)
                        .with_qos(QoS::AtLeastOnce)
                        .with_correlation(correlation)
                        .with_option(OptionType::CID, cid_option(conv));
                    ctx.send(peer, m);
                    outstanding.insert((peer, correlation), ());
                }
                Stage::Bidding {
                    outstanding,
                    bids: BTreeMap::new(),
                }
            }
        };
        self.conversations.insert(
            conv,
            Conversation {
                kind: start.kind,
                started: ctx.now,
                finished: None,
                stage,
            },
        );
    }

    fn finish(conv: &mut Conversation, now: Tick) {
        conv.stage = Stage::Done;
        conv.finished = Some(now);
    }

    /// All bids are in (or timed out): award the lowest bid.
    fn maybe_award(ctx: &mut Ctx<'_>, conv_id: u16, conv: &mut Conversation) {
        let Stage::Bidding { outstanding, bids } = &conv.stage else {
            return;
        };
        if !outstanding.is_empty() {
            return;
        }
        let winner = bids
            .iter()
            .filter_map(|(a, b)| b.map(|b| (b, *a)))
            .min()
            .map(|(_, a)| a);
        let bidders: Vec<(AgentId, bool)> = bids
            .iter()
            .filter(|(_, b)| b.is_some())
            .map(|(a, _)| (*a, Some(*a) == winner))
            .collect();
        let task = Literal::atom("task", [ctx.id().to_string(), conv_id.to_string()]);
        for (peer, won) in bidders {
            let p = if won {
                Performative::AcceptProposal
            } else {
                Performative::RejectProposal
            };
            let cid = ctx.agent.fresh_correlation();
            let m = procedural(p, &task)
                .with_qos(QoS::AtLeastOnce)
                .with_correlation(cid)
                .with_option(OptionType::CID, cid_option(conv_id));
            ctx.send(peer, m);
        }
        match winner {
            Some(winner) => conv.stage = Stage::Awarded { winner },
            None => Self::finish(conv, ctx.now),
        }
    }

    pub fn initiated(&self) -> usize {
        self.conversations.len()
    }

    pub fn completed(&self) -> usize {
        self.conversations.values().filter(|c| c.finished.is_some()).count()
    }

    fn pending_starts(&self) -> bool {
        self.next < self.plan.len()
    }
}

impl Program for WorkloadNode {
    fn on_deliver(&mut self, ctx: &mut Ctx<'_>, from: AgentId, m: &Message) {
        let Some(conv_id) = conv_of(m) else {
            return;
        };
        let performative = performative_of(m);
        if !m.is_response() {
            match (m.verb(), performative) {
                (Verb::Ask, Some(Performative::Cfp)) => {
                    let fact = match bid(from, conv_id, ctx.id()) {
                        Some(b) => Literal::atom("bid", [b.to_string()]),
                        None => Literal::atom("busy", [ctx.id().to_string()]),
                    };
                    let p = if bid(from, conv_id, ctx.id()).is_some() {
                        Performative::Propose
                    } else {
                        Performative::Refuse
                    };
                    let reply = ctx.agent.reply_to(m, procedural(p, &fact));
                    ctx.send(from, reply);
                }
                (Verb::Tell, Some(Performative::AcceptProposal)) => {
                    if self.awarded.insert((from, conv_id)) {
                        let done = Literal::done(&Literal::atom("task", [from.to_string(), conv_id.to_string()]));
                        let cid = ctx.agent.fresh_correlation();
                        let inform = procedural(Performative::Inform, &done)
                            .with_qos(QoS::AtLeastOnce)
                            .with_correlation(cid)
                            .with_option(OptionType::CID, cid_option(conv_id));
                        ctx.send(from, inform);
                    }
                }
                (Verb::Tell, Some(Performative::Inform)) => {
                    if let Some(conv) = self.conversations.get_mut(&conv_id) {
                        if matches!(conv.stage, Stage::Awarded { winner } if winner == from) {
                            Self::finish(conv, ctx.now);
                        }
                    }
                }
                _ => {}
            }
            return;
        }
        let Some(conv) = self.conversations.get_mut(&conv_id) else {
            return;
        };
        let correlation = m.header.correlation_id;
        match &mut conv.stage {
            Stage::Awaiting { peer, correlation: c } if *peer == from && *c == correlation => {
                if m.verb() == Verb::Tell
                    && m.option(OptionType::CONTENT_TYPE).map(|o| o.value.as_slice())
                        == Some(&[content_type::LITERAL][..])
                {
                    Self::finish(conv, ctx.now);
                }
            }
            Stage::Bidding { outstanding, bids } => {
                if outstanding.remove(&(from, correlation)).is_some() {
                    let b = match performative {
                        Some(Performative::Propose) => Literal::from_bytes(&m.payload)
                            .ok()
                            .and_then(|l| l.args.first().and_then(|a| a.parse().ok())),
                        _ => None,
                    };
                    bids.insert(from, b);
                    Self::maybe_award(ctx, conv_id, conv);
                }
            }
            _ => {}
        }
    }

    fn on_local(&mut self, ctx: &mut Ctx<'_>, note: &Message) {
        // An ASK deadline passed: treat the peer as having declined.
        self.timeouts += 1;
        let correlation = note.header.correlation_id;
        for (&conv_id, conv) in self.conversations.iter_mut() {
            match &mut conv.stage {
                Stage::Awaiting { correlation: c, .. } if *c == correlation => {
                    Self::finish(conv, ctx.now);
                    return;
                }
                Stage::Bidding { outstanding, bids } => {
                    let key = outstanding.keys().find(|(_, c)| *c == correlation).copied();
                    if let Some(key) = key {
                        outstanding.remove(&key);
                        bids.insert(key.0, None);
                        Self::maybe_award(ctx, conv_id, conv);
                        return;
                    }
                }
                _ => {}
            }
        }
    }

    fn on_tick(&mut self, ctx: &mut Ctx<'_>) {
        while self.next < self.plan.len() && self.plan[self.next].at <= ctx.now {
            let start = self.plan[self.next].clone();
            self.next += 1;
            self.open(ctx, start);
        }
    }
}

/// Per-kind completion counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub initiated: u64,
    pub completed: u64,
    /// Ended by an ASK deadline rather than a reply.
    pub timed_out: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRun {
    pub n: usize,
    pub ticks: Tick,
    pub completion: BTreeMap<ConversationKind, Completion>,
    /// Conversations still open when the run ended.
    pub deadlocked: u64,
    pub completion_rate: f64,
    pub mean_conversation_ticks: f64,
    pub max_conversation_ticks: Tick,
    pub retransmissions: u64,
    pub asks_timed_out: u64,
    /// Largest number of times one message was dropped in a row.
    pub max_consecutive_drops: u64,
    pub forced_deliveries: u64,
    pub budgets_ok: bool,
    pub metrics: MetricsSummary,
}

impl ScaleRun {
    /// No message needed the fair-loss bound and none was lost for good.
    pub fn drops_transient(&self, fair_loss_bound: u32) -> bool {
        self.max_consecutive_drops < fair_loss_bound as u64 && self.deadlocked == 0
    }
}

/// Longest run of drops of the same message on the same channel.
pub fn max_consecutive_drops(log: &SimEventLog) -> u64 {
    let mut streak: BTreeMap<(AgentId, AgentId, u16), u64> = BTreeMap::new();
    let mut max = 0;
    for r in log.iter() {
        let (Some(from), Some(to), Some(mid)) = (r.from, r.to, r.message_id) else {
            continue;
        };
        match r.kind {
            EventKind::Drop if r.reason.as_deref() == Some("loss") => {
                let s = streak.entry((from, to, mid)).or_insert(0);
                *s += 1;
                max = max.max(*s);
            }
            EventKind::Deliver => {
                streak.remove(&(from, to, mid));
            }
            _ => {}
        }
    }
    max
}

/// Runs the workload at `n` agents.
pub fn run_scale(config: &ScaleConfig, n: usize) -> (ScaleRun, MetricsReport, SimEventLog) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(n as u64));
    let agent_config = AgentConfig {
        retransmit_interval: config.retransmit_interval,
        ..AgentConfig::default()
    };
    let agents: Vec<(AgentState, WorkloadNode)> = (0..n as u32)
        .map(|i| {
            let id = AgentId(i);
            let program = WorkloadNode::planned(id, n, config, &mut rng);
            (AgentState::new(id, ResourceBudget::unlimited(), agent_config), program)
        })
        .collect();
    let mut sim = Simulation::new(config.sim_config(n), CostModel::default(), agents);
    sim.run_until(config.max_ticks, |s| {
        s.network().is_idle()
            && s.nodes().iter().all(|node| {
                !node.program.pending_starts()
                    && node.program.completed() == node.program.initiated()
                    && node.agent.unacked_count() == 0
            })
    });
    let ticks = sim.now();
    let budgets_ok = sim.budgets_sound();
    let forced_deliveries = sim.network().forced_deliveries();
    let (nodes, log) = sim.into_parts();

    let mut completion: BTreeMap<ConversationKind, Completion> = BTreeMap::new();
    let mut durations = Vec::new();
    let (mut retransmissions, mut asks_timed_out) = (0, 0);
    for node in &nodes {
        retransmissions += node.agent.stats().retransmissions;
        asks_timed_out += node.program.timeouts;
        for c in node.program.conversations.values() {
            let e = completion.entry(c.kind).or_default();
            e.initiated += 1;
            if let Some(f) = c.finished {
                e.completed += 1;
                durations.push(f - c.started);
            }
        }
    }
    let initiated: u64 = completion.values().map(|c| c.initiated).sum();
    let completed: u64 = completion.values().map(|c| c.completed).sum();
    let report = metrics(&log);
    let run = ScaleRun {
        n,
        ticks,
        deadlocked: initiated - completed,
        completion_rate: if initiated == 0 {
            1.0
        } else {
            completed as f64 / initiated as f64
        },
        mean_conversation_ticks: if durations.is_empty() {
            0.0
        } else {
            durations.iter().sum::<u64>() as f64 / durations.len() as f64
        },
        max_conversation_ticks: durations.iter().copied().max().unwrap_or(0),
        completion,
        retransmissions,
        asks_timed_out,
        max_consecutive_drops: max_consecutive_drops(&log),
        forced_deliveries,
        budgets_ok,
        metrics: report.summary.clone(),
    };
    (run, report, log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub runs: Vec<ScaleRun>,
    /// max queue depth at the largest n over the smallest n.
    pub queue_ratio: Option<f64>,
    pub n_ratio: Option<f64>,
    pub sublinear: bool,
    pub deadlock_free: bool,
    pub all_completed: bool,
}

impl ScaleReport {
    pub fn from_runs(runs: Vec<ScaleRun>) -> Self {
        let nonempty: Vec<&ScaleRun> = runs.iter().filter(|r| r.n > 0).collect();
        let (first, last) = (nonempty.first(), nonempty.last());
        let (queue_ratio, n_ratio) = match (first, last) {
            (Some(a), Some(b)) if a.n != b.n => (
                Some(b.metrics.max_queue_depth as f64 / a.metrics.max_queue_depth.max(1) as f64),
                Some(b.n as f64 / a.n as f64),
            ),
            _ => (None, None),
        };
        Self {
            sublinear: match (queue_ratio, n_ratio) {
                (Some(q), Some(n)) => q < n,
                _ => true,
            },
            deadlock_free: runs.iter().all(|r| r.deadlocked == 0),
            all_completed: runs.iter().all(|r| r.completion_rate == 1.0 && r.asks_timed_out == 0),
            queue_ratio,
            n_ratio,
            runs,
        }
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fd::{FdConfig, FdEventKind};
use super::node::{DecreeSetup, NodeCounters, PaxosNode};
use crate::agent::{AgentConfig, AgentId, AgentState};
use crate::resources::{CostModel, ResourceBudget};
use crate::simnet::{Crash, EventKind, SimConfig, SimEventLog, Simulation};
use crate::Tick;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("need at least 3 participants, got {0}")]
    TooFewParticipants(usize),
    #[error("{proposers} proposers requested for {n} participants")]
    Proposers { proposers: usize, n: usize },
    #[error("{crashes} crashes requested for {n} participants")]
    Crashes { crashes: usize, n: usize },
    #[error("failure-detector cap {cap} must exceed the round trip {rtt}")]
    FdCap { cap: Tick, rtt: Tick },
    #[error(transparent)]
    Sim(#[from] crate::simnet::ConfigError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A set of seeded single-decree runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub n: usize,
    /// Number of proposers (agents `0..proposers`); 0 means every agent.
    pub proposers: usize,
    /// Proposed values, hex encoded, cycled over the proposers. Defaults to
    /// the ASCII text `v<id>`.
    pub values: Vec<String>,
    pub crashes: usize,
    /// Explicit crashes; overrides `crashes` and `crash_window` when set.
    pub fault_schedule: Option<Vec<Crash>>,
    /// Crash ticks are drawn uniformly from this inclusive window.
    pub crash_window: (Tick, Tick),
    /// Crashed agents restart `recovery_delay` ticks later.
    pub crash_recovery: bool,
    pub recovery_delay: Tick,
    /// Acceptor state survives restarts.
    pub persistent: bool,
    pub drop_rate: f64,
    pub dup_rate: f64,
    pub gst: Tick,
    pub delta: Tick,
    pub delay_range: (Tick, Tick),
    pub max_ticks: Tick,
    /// Keep running after every survivor decided, up to this tick.
    pub min_ticks: Tick,
    pub phase_timeout: Option<Tick>,
    pub fd: FdConfig,
    pub seeds: Vec<u64>,
    pub decree: u32,
    /// Regression ceiling on ticks from GST to the last survivor's decision.
    /// Checked only when fewer than half the agents crash.
    pub liveness_ceiling: Option<Tick>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            n: 3,
            proposers: 0,
            values: Vec::new(),
            crashes: 0,
            fault_schedule: None,
            crash_window: (0, 40),
            crash_recovery: false,
            recovery_delay: 30,
            persistent: true,
            drop_rate: 0.0,
            dup_rate: 0.0,
            gst: 0,
            delta: 5,
            delay_range: (1, 5),
            max_ticks: 5_000,
            min_ticks: 0,
            phase_timeout: None,
            fd: FdConfig::default(),
            seeds: vec![0],
            decree: 1,
            liveness_ceiling: None,
        }
    }
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        let c: CampaignConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.n < 3 {
            return Err(CampaignError::TooFewParticipants(self.n));
        }
        if self.proposers > self.n {
            return Err(CampaignError::Proposers {
                proposers: self.proposers,
                n: self.n,
            });
        }
        let crashes = self.fault_schedule.as_ref().map_or(self.crashes, Vec::len);
        if crashes >= self.n {
            return Err(CampaignError::Crashes { crashes, n: self.n });
        }
        if self.fd.cap <= 2 * self.delta {
            return Err(CampaignError::FdCap {
                cap: self.fd.cap,
                rtt: 2 * self.delta,
            });
        }
        self.sim_config(0, Vec::new()).validate()?;
        Ok(())
    }

    /// Default phase timeout: one round trip after GST plus slack.
    pub fn phase_timeout(&self) -> Tick {
        self.phase_timeout.unwrap_or(2 * self.delta + 2)
    }

    /// At most `f < n/2` crashes.
    pub fn max_tolerated(n: usize) -> usize {
        (n - 1) / 2
    }

    /// Whether the crash count leaves a live majority.
    pub fn liveness_expected(&self) -> bool {
        let crashes = self.fault_schedule.as_ref().map_or(self.crashes, Vec::len);
        self.crash_recovery || crashes <= Self::max_tolerated(self.n)
    }

    pub fn proposer_count(&self) -> usize {
        if self.proposers == 0 {
            self.n
        } else {
            self.proposers
        }
    }

    pub fn proposals(&self) -> Vec<(AgentId, Vec<u8>)> {
        (0..self.proposer_count())
            .map(|i| {
                let value = if self.values.is_empty() {
                    format!("v{i}").into_bytes()
                } else {
                    let text = &self.values[i % self.values.len()];
                    hex::decode(text).unwrap_or_else(|_| text.as_bytes().to_vec())
                };
                (AgentId(i as u32), value)
            })
            .collect()
    }

    fn sim_config(&self, seed: u64, faults: Vec<Crash>) -> SimConfig {
        let recoveries = if self.crash_recovery {
            faults
                .iter()
                .map(|c| Crash {
                    agent: c.agent,
                    tick: c.tick + self.recovery_delay,
                })
                .collect()
        } else {
            Vec::new()
        };
        SimConfig {
            gst: self.gst,
            delta: self.delta,
            drop_rate: self.drop_rate,
            dup_rate: self.dup_rate,
            delay_range: self.delay_range,
            seed,
            rate_cap: None,
            fault_schedule: faults,
            recoveries,
            omissions: Vec::new(),
            fair_loss_bound: 20,
        }
    }

    /// Seeded choice of which agents crash and when.
    pub fn fault_schedule(&self, seed: u64) -> Vec<Crash> {
        if let Some(f) = &self.fault_schedule {
            return f.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_fa17);
        let mut ids: Vec<u32> = (0..self.n as u32).collect();
        ids.shuffle(&mut rng);
        let (lo, hi) = self.crash_window;
        let mut faults: Vec<Crash> = ids[..self.crashes]
            .iter()
            .map(|&a| Crash {
                agent: AgentId(a),
                tick: rng.gen_range(lo..=hi.max(lo)),
            })
            .collect();
        faults.sort_by_key(|c| (c.tick, c.agent));
        faults
    }
}

/// Failure-detector accuracy checks for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdReport {
    pub stabilization_ceiling: Tick,
    /// Crashed peers suspected in time and never cleared by any survivor.
    pub completeness_ok: bool,
    /// Nonfaulty peers unsuspected by every survivor after the ceiling.
    pub accuracy_ok: bool,
    pub max_detection_latency: Option<Tick>,
    pub false_suspicions: u64,
    pub last_false_suspicion_event: Option<Tick>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreeOutcome {
    pub seed: u64,
    pub n: usize,
    pub faults: Vec<Crash>,
    pub survivors: Vec<AgentId>,
    /// Hex-encoded decision per agent.
    pub decisions: BTreeMap<AgentId, Option<String>>,
    pub decided_at: BTreeMap<AgentId, Tick>,
    pub agreement: bool,
    pub validity: bool,
    pub all_survivors_decided: bool,
    pub last_decision_tick: Option<Tick>,
    pub ticks_after_gst: Option<Tick>,
    pub ticks_run: Tick,
    pub counters: NodeCounters,
    pub network_sends: u64,
    pub monotone_violations: u64,
    pub budgets_ok: bool,
    pub fd: FdReport,
}

impl DecreeOutcome {
    pub fn safe(&self) -> bool {
        self.agreement && self.validity && self.monotone_violations == 0
    }

    /// All survivors decided, within `ceiling` ticks after GST if given.
    pub fn live(&self, ceiling: Option<Tick>) -> bool {
        self.all_survivors_decided && ceiling.is_none_or(|c| self.ticks_after_gst.is_some_and(|t| t <= c))
    }
}

fn add(a: &mut NodeCounters, b: &NodeCounters) {
    a.phase_messages += b.phase_messages;
    a.local_phase_messages += b.local_phase_messages;
    a.decide_messages += b.decide_messages;
    a.fd_messages += b.fd_messages;
    a.rounds += b.rounds;
    a.nacks += b.nacks;
    a.stale += b.stale;
    a.malformed += b.malformed;
}

/// Runs one seeded decree and returns its outcome together with the log.
pub fn run_decree_with_log(config: &CampaignConfig, seed: u64) -> (DecreeOutcome, SimEventLog) {
    let faults = config.fault_schedule(seed);
    let participants: Vec<AgentId> = (0..config.n as u32).map(AgentId).collect();
    let setup = Arc::new(DecreeSetup {
        decree: config.decree,
        participants: participants.clone(),
        proposals: config.proposals(),
        phase_timeout: config.phase_timeout(),
        fd: config.fd,
        persistent: config.persistent,
    });
    let agents = participants
        .iter()
        .map(|&id| {
            let state = AgentState::new(id, ResourceBudget::unlimited(), AgentConfig::default());
            (state, PaxosNode::new(id, setup.clone()))
        })
        .collect();
    let sim_config = config.sim_config(seed, faults.clone());
    let mut sim = Simulation::new(sim_config, CostModel::default(), agents);
    let min_ticks = config.min_ticks;
    sim.run_until(config.max_ticks, |s| {
        s.now() > min_ticks
            && s.nodes()
                .iter()
                .filter(|n| n.crashed_at.is_none())
                .all(|n| n.program.decided().is_some())
    });

    let budgets_ok = sim.budgets_sound();
    let ticks_run = sim.now();
    let (nodes, log) = sim.into_parts();
    let proposals: BTreeSet<Vec<u8>> = setup.proposals.iter().map(|(_, v)| v.clone()).collect();
    let survivors: Vec<AgentId> = nodes
        .iter()
        .filter(|n| n.crashed_at.is_none())
        .map(|n| n.agent.id())
        .collect();
    let mut counters = NodeCounters::default();
    let mut decisions = BTreeMap::new();
    let mut decided_at = BTreeMap::new();
    let mut monotone_violations = 0;
    for n in &nodes {
        add(&mut counters, &n.program.counters);
        monotone_violations += n.program.monotone_violations;
        let id = n.agent.id();
        decisions.insert(id, n.program.decided().map(|(v, _)| hex::encode(v)));
        if let Some((_, t)) = n.program.decided() {
            decided_at.insert(id, *t);
        }
    }
    let values: BTreeSet<&String> = decisions.values().flatten().collect();
    let agreement = values.len() <= 1;
    let validity = values
        .iter()
        .all(|v| hex::decode(v).is_ok_and(|v| proposals.contains(&v)));
    let all_survivors_decided = survivors.iter().all(|s| decisions[s].is_some());
    let last_decision_tick = if all_survivors_decided {
        survivors.iter().map(|s| decided_at[s]).max()
    } else {
        None
    };
    let fd = fd_report(config, &nodes, &faults, ticks_run);
    let outcome = DecreeOutcome {
        seed,
        n: config.n,
        faults,
        survivors,
        decisions,
        decided_at,
        agreement,
        validity,
        all_survivors_decided,
        last_decision_tick,
        ticks_after_gst: last_decision_tick.map(|t| t.saturating_sub(config.gst)),
        ticks_run,
        counters,
        network_sends: log.of_kind(EventKind::Send).count() as u64,
        monotone_violations,
        budgets_ok,
        fd,
    };
    (outcome, log)
}

pub fn run_decree(config: &CampaignConfig, seed: u64) -> DecreeOutcome {
    run_decree_with_log(config, seed).0
}

fn fd_report(
    config: &CampaignConfig,
    nodes: &[crate::simnet::Node<PaxosNode>],
    faults: &[Crash],
    ticks_run: Tick,
) -> FdReport {
    let max_delay = config.delay_range.1.max(config.delta);
    let ceiling = config.fd.stabilization_ceiling(config.gst, max_delay, config.delta);
    let crashed: BTreeMap<AgentId, Tick> = if config.crash_recovery {
        BTreeMap::new()
    } else {
        faults.iter().map(|c| (c.agent, c.tick)).collect()
    };
    let mut report = FdReport {
        stabilization_ceiling: ceiling,
        completeness_ok: true,
        accuracy_ok: true,
        ..FdReport::default()
    };
    for observer in nodes.iter().filter(|n| n.crashed_at.is_none()) {
        let fd = &observer.program.fd;
        let me = observer.agent.id();
        for peer in (0..config.n as u32).map(AgentId).filter(|p| *p != me) {
            let events: Vec<_> = fd.events().iter().filter(|e| e.peer == peer).collect();
            if let Some(&c) = crashed.get(&peer) {
                let heard_until = last_arrival(config, c, max_delay);
                let last_suspect = events.iter().rev().find(|e| e.kind == FdEventKind::Suspect);
                let late_clear = events
                    .iter()
                    .any(|e| e.kind == FdEventKind::Clear && e.tick > heard_until);
                let ok_time = last_suspect.is_some_and(|e| e.tick <= heard_until + e.timeout);
                if let Some(e) = last_suspect {
                    let latency = e.tick.saturating_sub(c);
                    report.max_detection_latency =
                        Some(report.max_detection_latency.map_or(latency, |m| m.max(latency)));
                }
                let observed_long_enough = ticks_run > heard_until + config.fd.cap;
                if observed_long_enough && (!fd.is_suspected(peer) || late_clear || !ok_time) {
                    report.completeness_ok = false;
                    report.violations.push(format!(
                        "{me} on crashed {peer}: suspected={} late_clear={late_clear} in_time={ok_time}",
                        fd.is_suspected(peer)
                    ));
                }
            } else {
                report.false_suspicions += events.iter().filter(|e| e.kind == FdEventKind::Suspect).count() as u64;
                if let Some(last) = events.last() {
                    report.last_false_suspicion_event = report.last_false_suspicion_event.max(Some(last.tick));
                    if last.tick > ceiling || (ticks_run > ceiling && fd.is_suspected(peer)) {
                        report.accuracy_ok = false;
                        report.violations.push(format!(
                            "{me} on live {peer}: event at {} after ceiling {ceiling}",
                            last.tick
                        ));
                    }
                }
            }
        }
    }
    report
}

/// Last tick at which a message sent by an agent crashing at `crash` can
/// arrive: Δ after the crash, or later for sends still in flight from before
/// GST.
pub fn last_arrival(config: &CampaignConfig, crash: Tick, max_delay: Tick) -> Tick {
    let post = crash + config.delta;
    if config.gst == 0 {
        post
    } else {
        post.max(crash.min(config.gst - 1) + max_delay)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub runs: usize,
    pub safety_violations: usize,
    pub undecided_runs: usize,
    /// Runs that should be live but missed a decision or the ceiling.
    pub liveness_violations: usize,
    pub fd_violations: usize,
    pub budget_violations: usize,
    pub max_ticks_after_gst: Option<Tick>,
    pub mean_phase_messages: f64,
    pub mean_network_sends: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub outcomes: Vec<DecreeOutcome>,
    pub summary: CampaignSummary,
}

/// Runs every seed of `config` in parallel; outcomes keep seed order.
pub fn run_campaign(config: &CampaignConfig) -> CampaignReport {
    let outcomes: Vec<DecreeOutcome> = config.seeds.par_iter().map(|&s| run_decree(config, s)).collect();
    let runs = outcomes.len();
    let mean = |f: &dyn Fn(&DecreeOutcome) -> u64| {
        if runs == 0 {
            0.0
        } else {
            outcomes.iter().map(f).sum::<u64>() as f64 / runs as f64
        }
    };
    let summary = CampaignSummary {
        runs,
        safety_violations: outcomes.iter().filter(|o| !o.safe()).count(),
        undecided_runs: outcomes.iter().filter(|o| !o.all_survivors_decided).count(),
        liveness_violations: if config.liveness_expected() {
            outcomes.iter().filter(|o| !o.live(config.liveness_ceiling)).count()
        } else {
            0
        },
        fd_violations: outcomes
            .iter()
            .filter(|o| !(o.fd.accuracy_ok && o.fd.completeness_ok))
            .count(),
        budget_violations: outcomes.iter().filter(|o| !o.budgets_ok).count(),
        max_ticks_after_gst: outcomes.iter().filter_map(|o| o.ticks_after_gst).max(),
        mean_phase_messages: mean(&|o| o.counters.phase_messages),
        mean_network_sends: mean(&|o| o.network_sends),
    };
    CampaignReport {
        config: config.clone(),
        outcomes,
        summary,
    }
}

impl CampaignReport {
    /// One CSV row per run.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "seed",
            "n [agents]",
            "crashes [agents]",
            "agreement",
            "validity",
            "all_survivors_decided",
            "last_decision_tick [ticks]",
            "ticks_after_gst [ticks]",
            "phase_messages [msgs]",
            "decide_messages [msgs]",
            "fd_messages [msgs]",
            "network_sends [msgs]",
            "rounds [rounds]",
            "nacks [msgs]",
            "stale [msgs]",
            "fd_completeness_ok",
            "fd_accuracy_ok",
        ])?;
        let opt = |t: Option<Tick>| t.map(|t| t.to_string()).unwrap_or_default();
        for o in &self.outcomes {
            w.write_record([
                o.seed.to_string(),
                o.n.to_string(),
                o.faults.len().to_string(),
                o.agreement.to_string(),
                o.validity.to_string(),
                o.all_survivors_decided.to_string(),
                opt(o.last_decision_tick),
                opt(o.ticks_after_gst),
                o.counters.phase_messages.to_string(),
                o.counters.decide_messages.to_string(),
                o.counters.fd_messages.to_string(),
                o.network_sends.to_string(),
                o.counters.rounds.to_string(),
                o.counters.nacks.to_string(),
                o.counters.stale.to_string(),
                o.fd.completeness_ok.to_string(),
                o.fd.accuracy_ok.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::automaton::ConversationAutomaton;
use super::performative::{Act, Performative};
use super::translate::{observe_act, observe_label, ObservableAction, Tau};
use super::FipaError;
use crate::agent::{AgentConfig, AgentId, AgentState, Literal, TransitionLabel};
use crate::resources::{CostModel, ResourceBudget};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Uncovered {
    pub trace: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub protocol: String,
    pub max_len: usize,
    pub traces_checked: usize,
    pub uncovered: Vec<Uncovered>,
}

impl InclusionReport {
    pub fn holds(&self) -> bool {
        self.uncovered.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub protocol: String,
    /// Number of automaton states.
    pub k: usize,
    pub max_messages_observed: usize,
    pub runs: usize,
}

/// The message-level execution of one performative trace.
#[derive(Debug, Clone)]
pub struct Realization {
    /// Every message sent, in order.
    pub sent: Vec<TransitionLabel>,
    /// How many of `sent` were emitted before the final flush.
    pub sent_during_trace: usize,
    pub agents: BTreeMap<AgentId, AgentState>,
    pub acts: Vec<Act>,
}

impl Realization {
    /// Observable projection of the messages emitted while the trace ran.
    pub fn projection(&self) -> Vec<ObservableAction> {
        self.sent[..self.sent_during_trace]
            .iter()
            .filter_map(observe_label)
            .collect()
    }
}

struct Runner<'a> {
    tau: &'a Tau,
    cost: CostModel,
    agents: BTreeMap<AgentId, AgentState>,
    queue: VecDeque<TransitionLabel>,
    sent: Vec<TransitionLabel>,
    last_received: BTreeMap<(AgentId, AgentId, u16), u16>,
    now: u64,
}

impl Runner<'_> {
    fn emit(&mut self, label: TransitionLabel) {
        self.sent.push(label.clone());
        self.queue.push_back(label);
    }

    fn deliver(&mut self, label: TransitionLabel) -> Result<(), String> {
        self.now += 1;
        let key = (label.receiver, label.sender, label.message.header.correlation_id);
        self.last_received.insert(key, label.message.header.message_id);
        let agent = self.agents.get_mut(&label.receiver).ok_or("unknown receiver")?;
        let replies = agent
            .receive(&label, &self.cost, self.now)
            .map_err(|e| format!("receive failed: {e}"))?;
        let mut out = Vec::with_capacity(replies.len());
        for env in replies {
            out.push(
                agent
                    .send_envelope(env, &self.cost, self.now)
                    .map_err(|e| format!("reply failed: {e}"))?,
            );
        }
        for label in out {
            self.emit(label);
        }
        Ok(())
    }

    fn deliver_where(&mut self, pred: impl Fn(&TransitionLabel) -> bool) -> Result<(), String> {
        while let Some(pos) = self.queue.iter().position(&pred) {
            let label = self.queue.remove(pos).expect("position is in range");
            self.deliver(label)?;
        }
        Ok(())
    }

    fn perform(&mut self, act: &Act, cid: u16) -> Result<(), String> {
        let before = self.sent.len();
        self.deliver_where(|l| l.receiver == act.sender && l.message.header.correlation_id == cid)?;
        // A reply the sender's semantics already produced realizes the act.
        let replied = self.sent[before..]
            .iter()
            .any(|l| l.sender == act.sender && observe_label(l).is_some());
        if replied {
            return Ok(());
        }
        let mut act = act.clone();
        if act.performative == Performative::NotUnderstood {
            act.in_reply_to = self.last_received.get(&(act.sender, act.receiver, cid)).copied();
        }
        let mut message = self.tau.translate(&act, cid).message;
        let agent = self.agents.get_mut(&act.sender).ok_or("unknown sender")?;
        message.header.message_id = agent.fresh_message_id();
        self.now += 1;
        let label = agent
            .send(message, act.receiver, &self.cost, self.now)
            .map_err(|e| format!("send failed: {e}"))?;
        self.emit(label);
        Ok(())
    }
}

/// Executes `trace` on fresh agents: initial beliefs are the INFORM
/// preconditions, each act is realized by a reply the agents already
/// produced or else by sending its translation, and all remaining messages
/// are delivered at the end.
pub fn realize(auto: &ConversationAutomaton, trace: &[usize], tau: &Tau) -> Result<Realization, String> {
    let roles = auto.roles();
    let agents = (0..roles.len() as u32)
        .map(|i| {
            let id = AgentId(i);
            (
                id,
                AgentState::new(id, ResourceBudget::unlimited(), AgentConfig::default()),
            )
        })
        .collect();
    let mut runner = Runner {
        tau,
        cost: CostModel::default(),
        agents,
        queue: VecDeque::new(),
        sent: Vec::new(),
        last_received: BTreeMap::new(),
        now: 0,
    };
    let acts: Vec<Act> = trace.iter().map(|&i| auto.act(i)).collect();
    for act in acts.iter().filter(|a| a.performative == Performative::Inform) {
        runner
            .agents
            .get_mut(&act.sender)
            .expect("role agent exists")
            .kb
            .tell(act.content.clone());
    }
    for (&i, act) in trace.iter().zip(&acts) {
        let cid = auto.transitions[i].conversation as u16 + 1;
        runner.perform(act, cid)?;
    }
    let sent_during_trace = runner.sent.len();
    let limit = 16 * (trace.len() + 1);
    while let Some(label) = runner.queue.pop_front() {
        if runner.sent.len() > limit {
            return Err("message storm while flushing".into());
        }
        runner.deliver(label)?;
    }
    Ok(Realization {
        sent: runner.sent,
        sent_during_trace,
        agents: runner.agents,
        acts,
    })
}

/// Post-conditions of each act on the final agent states.
fn effects_hold(r: &Realization) -> Result<(), String> {
    for act in &r.acts {
        let receiver = &r.agents[&act.receiver];
        let ok = match act.performative {
            Performative::Inform => receiver.kb.holds(&act.content),
            Performative::Request => receiver.kb.holds(&Literal::done(&act.content)),
            Performative::Subscribe => receiver.subscribers(&act.content.to_string()).any(|s| s == act.sender),
            Performative::NotUnderstood => receiver.last_error().is_some_and(|e| e.from == act.sender),
            _ => true,
        };
        if !ok {
            return Err(format!("effect of {act} missing"));
        }
    }
    if let Some(a) = r.agents.values().find(|a| !a.invariants_hold()) {
        return Err(format!("agent {} violates its state invariants", a.id()));
    }
    Ok(())
}

fn check_one(auto: &ConversationAutomaton, trace: &[usize], tau: &Tau) -> Result<(), String> {
    let r = realize(auto, trace, tau)?;
    let expected: Vec<ObservableAction> = r.acts.iter().map(observe_act).collect();
    let got = r.projection();
    if got != expected {
        let show = |v: &[ObservableAction]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
        return Err(format!(
            "projection [{}] differs from [{}]",
            show(&got),
            show(&expected)
        ));
    }
    let observable = r.sent[..r.sent_during_trace]
        .iter()
        .filter(|l| observe_label(l).is_some());
    for (label, &i) in observable.zip(trace) {
        let cid = auto.transitions[i].conversation as u16 + 1;
        if label.message.header.correlation_id != cid {
            return Err(format!(
                "message for conversation {cid} carries correlation {}",
                label.message.header.correlation_id
            ));
        }
    }
    effects_hold(&r)
}

/// Checks that every performative trace up to `max_len` has an equivalent
/// message trace under the standard translation.
pub fn check_trace_inclusion(auto: &ConversationAutomaton, max_len: usize) -> Result<InclusionReport, FipaError> {
    check_trace_inclusion_with(auto, max_len, &Tau::standard())
}

pub fn check_trace_inclusion_with(
    auto: &ConversationAutomaton,
    max_len: usize,
    tau: &Tau,
) -> Result<InclusionReport, FipaError> {
    let traces = auto.enumerate_traces(max_len)?;
    let uncovered = traces
        .iter()
        .filter_map(|t| {
            check_one(auto, t, tau).err().map(|reason| Uncovered {
                trace: auto.render(t),
                reason,
            })
        })
        .collect();
    Ok(InclusionReport {
        protocol: auto.name.clone(),
        max_len,
        traces_checked: traces.len(),
        uncovered,
    })
}

/// Realizes every accepting run of at most |Q| acts and checks that none
/// needs more than |Q| messages.
pub fn procedural_bound_check(auto: &ConversationAutomaton) -> Result<BoundReport, FipaError> {
    let k = auto.state_count();
    let runs = auto.accepting_runs(k.min(super::automaton::MAX_TRACE_LEN))?;
    let mut max_messages_observed = 0;
    for run in &runs {
        let messages = realize(auto, run, &Tau::standard())
            .map_err(|reason| FipaError::Realization {
                run: auto.render(run),
                reason,
            })?
            .sent
            .len();
        if messages > k {
            return Err(FipaError::BoundViolated {
                run: auto.render(run),
                messages,
                k,
            });
        }
        max_messages_observed = max_messages_observed.max(messages);
    }
    Ok(BoundReport {
        protocol: auto.name.clone(),
        k,
        max_messages_observed,
        runs: runs.len(),
    })
}

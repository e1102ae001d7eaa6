use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::performative::{Act, Performative};
use super::FipaError;
use crate::agent::{AgentId, Literal};

/// Default bound on simultaneously active conversations.
pub const D_MAX: u8 = 3;
/// Longest trace `enumerate_traces` accepts.
pub const MAX_TRACE_LEN: usize = 12;
/// Default cap on the number of enumerated traces.
pub const DEFAULT_TRACE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub from: String,
    pub performative: Performative,
    pub sender: String,
    pub receiver: String,
    pub to: String,
    /// Index of the (possibly nested) conversation this act belongs to.
    #[serde(default)]
    pub conversation: u8,
    /// Literal, action or topic; defaults to the lowercase performative name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
}

impl Transition {
    fn key(&self) -> (&str, Performative, &str, &str, u8, Option<&str>) {
        (
            &self.from,
            self.performative,
            &self.sender,
            &self.receiver,
            self.conversation,
            self.content.as_deref(),
        )
    }
}

/// Finite conversation automaton over role-addressed performatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversationAutomaton {
    #[serde(default)]
    pub name: String,
    pub states: Vec<String>,
    pub initial: String,
    pub accepting: Vec<String>,
    pub transitions: Vec<Transition>,
    #[serde(default = "one")]
    pub nesting_depth: u8,
}

fn one() -> u8 {
    1
}

/// A run as indices into the automaton's transition list.
pub type Trace = Vec<usize>;

impl ConversationAutomaton {
    pub fn from_json(text: &str) -> Result<Self, FipaError> {
        let auto: ConversationAutomaton = serde_json::from_str(text)?;
        auto.validate()?;
        Ok(auto)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("automaton serializes")
    }

    pub fn validate(&self) -> Result<(), FipaError> {
        let states: BTreeSet<&str> = self.states.iter().map(String::as_str).collect();
        let known = |s: &str| {
            if states.contains(s) {
                Ok(())
            } else {
                Err(FipaError::UnknownState(s.to_string()))
            }
        };
        known(&self.initial)?;
        for s in &self.accepting {
            known(s)?;
        }
        if self.nesting_depth == 0 || self.nesting_depth > D_MAX {
            return Err(FipaError::NestingTooDeep {
                depth: self.nesting_depth,
                max: D_MAX,
            });
        }
        let mut seen = BTreeMap::new();
        for t in &self.transitions {
            known(&t.from)?;
            known(&t.to)?;
            if t.sender == t.receiver {
                return Err(FipaError::SelfAddressed(t.sender.clone()));
            }
            if t.conversation >= self.nesting_depth {
                return Err(FipaError::ConversationOutOfRange {
                    conversation: t.conversation,
                    depth: self.nesting_depth,
                });
            }
            self.content_of(t)?;
            if let Some(prev) = seen.insert(t.key(), &t.to) {
                if prev != &t.to {
                    return Err(FipaError::Nondeterministic {
                        state: t.from.clone(),
                        performative: t.performative,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Role names in sorted order; role `i` is played by `AgentId(i)`.
    pub fn roles(&self) -> Vec<String> {
        let roles: BTreeSet<&String> = self.transitions.iter().flat_map(|t| [&t.sender, &t.receiver]).collect();
        roles.into_iter().cloned().collect()
    }

    pub fn role_agent(&self, role: &str) -> Option<AgentId> {
        self.roles().iter().position(|r| r == role).map(|i| AgentId(i as u32))
    }

    pub fn content_of(&self, t: &Transition) -> Result<Literal, FipaError> {
        let text = t
            .content
            .clone()
            .unwrap_or_else(|| t.performative.name().to_ascii_lowercase());
        text.parse()
            .map_err(|source| FipaError::BadContent { content: text, source })
    }

    /// The act of transition `index`, with roles resolved to agents.
    pub fn act(&self, index: usize) -> Act {
        let t = &self.transitions[index];
        let roles = self.roles();
        let agent = |r: &str| AgentId(roles.iter().position(|x| x == r).expect("role is listed") as u32);
        Act::new(
            t.performative,
            agent(&t.sender),
            agent(&t.receiver),
            self.content_of(t).expect("validated content"),
        )
    }

    pub fn render(&self, trace: &[usize]) -> Vec<String> {
        trace
            .iter()
            .map(|&i| {
                let t = &self.transitions[i];
                let content = self.content_of(t).map(|c| c.to_string()).unwrap_or_default();
                format!("{}({},{},{})", t.performative, t.sender, t.receiver, content)
            })
            .collect()
    }

    fn outgoing(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            out.entry(t.from.as_str()).or_default().push(i);
        }
        out
    }

    /// States from which an accepting state is reachable.
    fn co_reachable(&self) -> BTreeSet<&str> {
        let mut live: BTreeSet<&str> = self.accepting.iter().map(String::as_str).collect();
        let mut work: VecDeque<&str> = live.iter().copied().collect();
        while let Some(s) = work.pop_front() {
            for t in self.transitions.iter().filter(|t| t.to == s) {
                if live.insert(&t.from) {
                    work.push_back(&t.from);
                }
            }
        }
        live
    }

    /// All non-empty prefixes of accepting runs, up to `max_len` acts.
    pub fn enumerate_traces(&self, max_len: usize) -> Result<Vec<Trace>, FipaError> {
        self.enumerate_traces_capped(max_len, DEFAULT_TRACE_CAP)
    }

    pub fn enumerate_traces_capped(&self, max_len: usize, cap: usize) -> Result<Vec<Trace>, FipaError> {
        if max_len > MAX_TRACE_LEN {
            return Err(FipaError::TooLarge { max_len, cap });
        }
        let live = self.co_reachable();
        let out_edges = self.outgoing();
        let mut traces = Vec::new();
        let mut stack: Vec<(&str, Trace)> = vec![(self.initial.as_str(), Vec::new())];
        while let Some((state, prefix)) = stack.pop() {
            if prefix.len() == max_len {
                continue;
            }
            for &i in out_edges.get(state).into_iter().flatten().rev() {
                let to = self.transitions[i].to.as_str();
                if !live.contains(to) {
                    continue;
                }
                let mut next = prefix.clone();
                next.push(i);
                traces.push(next.clone());
                if traces.len() > cap {
                    return Err(FipaError::TooLarge { max_len, cap });
                }
                stack.push((to, next));
            }
        }
        traces.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        Ok(traces)
    }

    /// Complete runs ending in an accepting state, the empty run included
    /// when the initial state accepts.
    pub fn accepting_runs(&self, max_len: usize) -> Result<Vec<Trace>, FipaError> {
        let accepting: BTreeSet<&str> = self.accepting.iter().map(String::as_str).collect();
        let mut runs: Vec<Trace> = self
            .enumerate_traces(max_len)?
            .into_iter()
            .filter(|t| accepting.contains(self.transitions[*t.last().expect("non-empty")].to.as_str()))
            .collect();
        if accepting.contains(self.initial.as_str()) {
            runs.insert(0, Vec::new());
        }
        Ok(runs)
    }

    /// Interleaving product of two independent conversations.
    pub fn product(&self, other: &ConversationAutomaton) -> Result<ConversationAutomaton, FipaError> {
        let depth = self.nesting_depth + other.nesting_depth;
        if depth > D_MAX {
            return Err(FipaError::NestingTooDeep { depth, max: D_MAX });
        }
        let pair = |a: &str, b: &str| format!("{a}|{b}");
        let mut states = Vec::new();
        let mut transitions = Vec::new();
        for a in &self.states {
            for b in &other.states {
                states.push(pair(a, b));
                for t in self.transitions.iter().filter(|t| &t.from == a) {
                    transitions.push(Transition {
                        from: pair(a, b),
                        to: pair(&t.to, b),
                        ..t.clone()
                    });
                }
                for t in other.transitions.iter().filter(|t| &t.from == b) {
                    transitions.push(Transition {
                        from: pair(a, b),
                        to: pair(a, &t.to),
                        conversation: t.conversation + self.nesting_depth,
                        ..t.clone()
                    });
                }
            }
        }
        let accepting = self
            .accepting
            .iter()
            .flat_map(|a| other.accepting.iter().map(move |b| pair(a, b)))
            .collect();
        let product = ConversationAutomaton {
            name: format!("{}x{}", self.name, other.name),
            states,
            initial: pair(&self.initial, &other.initial),
            accepting,
            transitions,
            nesting_depth: depth,
        };
        product.validate()?;
        Ok(product)
    }

    /// A chain of `k` states linked by `k - 1` INFORM acts.
    pub fn chain(k: usize) -> ConversationAutomaton {
        assert!(k >= 1);
        let states: Vec<String> = (0..k).map(|i| format!("q{i}")).collect();
        let transitions = (1..k)
            .map(|i| Transition {
                from: states[i - 1].clone(),
                performative: Performative::Inform,
                sender: if i % 2 == 1 { "a" } else { "b" }.to_string(),
                receiver: if i % 2 == 1 { "b" } else { "a" }.to_string(),
                to: states[i].clone(),
                conversation: 0,
                content: Some(format!("step({i})")),
            })
            .collect();
        ConversationAutomaton {
            name: format!("chain-{k}"),
            accepting: vec![states[k - 1].clone()],
            initial: states[0].clone(),
            states,
            transitions,
            nesting_depth: 1,
        }
    }
}

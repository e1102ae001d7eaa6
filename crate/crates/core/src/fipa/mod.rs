//! FIPA performatives, their translation onto the four verbs, conversation
//! automata and the trace-inclusion checker.

mod automaton;
mod checker;
mod performative;
mod translate;

pub use automaton::{ConversationAutomaton, Trace, Transition, DEFAULT_TRACE_CAP, D_MAX, MAX_TRACE_LEN};
pub use checker::{
    check_trace_inclusion, check_trace_inclusion_with, procedural_bound_check, realize, BoundReport, InclusionReport,
    Realization, Uncovered,
};
pub use performative::{Act, Performative, UnknownPerformative};
pub use translate::{
    canonical_content, observe_act, observe_label, translate, ObservableAction, Tag, Tau, Translation,
};

use thiserror::Error;

use crate::agent::LiteralError;

#[derive(Debug, Error)]
pub enum FipaError {
    #[error("invalid automaton JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("two transitions from {state:?} share the label {performative}")]
    Nondeterministic { state: String, performative: Performative },
    #[error("nesting depth {depth} outside 1..={max}")]
    NestingTooDeep { depth: u8, max: u8 },
    #[error("conversation index {conversation} needs nesting depth above {depth}")]
    ConversationOutOfRange { conversation: u8, depth: u8 },
    #[error("role {0:?} addresses itself")]
    SelfAddressed(String),
    #[error("content {content:?}: {source}")]
    BadContent { content: String, source: LiteralError },
    #[error("enumeration too large (max_len {max_len}, trace cap {cap})")]
    TooLarge { max_len: usize, cap: usize },
    #[error("run {run:?} used {messages} messages, bound is {k}")]
    BoundViolated {
        run: Vec<String>,
        messages: usize,
        k: usize,
    },
    #[error("run {run:?} could not be realized: {reason}")]
    Realization { run: Vec<String>, reason: String },
}

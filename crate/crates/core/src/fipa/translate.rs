use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::performative::{Act, Performative};
use crate::agent::{compose, AgentId, Literal, TransitionLabel};
use crate::wire::{Flags, Message, OptionType, Verb};

/// The translation from performatives to messages. The standard table can be
/// overridden per performative, which is how checker mutations are built.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tau {
    pub overrides: BTreeMap<Performative, Verb>,
}

impl Tau {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn is_standard(&self) -> bool {
        self.overrides.is_empty()
    }

    /// Messages realizing `act` in conversation `cid`.
    pub fn translate(&self, act: &Act, cid: u16) -> Translation {
        let mut t = translate(act, cid);
        if let Some(&verb) = self.overrides.get(&act.performative) {
            t.message.header.verb = verb;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Translation {
    /// Sent by the act's sender to its receiver.
    pub message: Message,
    /// Reply the receiver's semantics are expected to produce.
    pub expected_reply: Option<Message>,
}

impl Translation {
    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        std::iter::once(&self.message).chain(self.expected_reply.iter())
    }
}

/// The standard translation. Every message carries `cid` as its correlation
/// id; procedural encodings also carry PROC and CID options.
pub fn translate(act: &Act, cid: u16) -> Translation {
    let content = &act.content;
    let (message, expected_reply) = match act.performative {
        Performative::Inform => (compose::tell(content), None),
        Performative::Request => {
            let reply = compose::tell(&Literal::done(content))
                .with_flags(Flags::RESPONSE)
                .with_correlation(cid);
            (compose::ask_action(content), Some(reply))
        }
        Performative::QueryIf => (compose::ask(content), None),
        Performative::Subscribe => (compose::observe(&content.to_string()), None),
        Performative::NotUnderstood => {
            let orig = act.in_reply_to.unwrap_or(0);
            let m = Message::new(Verb::Ping)
                .with_flags(Flags::ERROR)
                .with_option(OptionType::ERR, orig.to_be_bytes().to_vec());
            (m, None)
        }
        p => {
            let m = Message::new(p.procedural_verb())
                .with_option(OptionType::PROC, [p.proc_code()])
                .with_option(OptionType::CID, cid.to_be_bytes().to_vec())
                .with_payload(content.to_bytes());
            (m, None)
        }
    };
    Translation {
        message: message.with_correlation(cid),
        expected_reply,
    }
}

/// Semantic tag of an observable action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    Tell,
    Ask,
    Observe,
    Proc(Performative),
    NotUnderstood,
}

/// A communication action with implementation details erased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservableAction {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub tag: Tag,
    pub content: Option<String>,
}

impl fmt::Display for ObservableAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({},{}", self.tag, self.sender, self.receiver)?;
        if let Some(c) = &self.content {
            write!(f, ",{c}")?;
        }
        f.write_str(")")
    }
}

/// Canonical content text: literals reprinted, other text stripped of
/// whitespace.
pub fn canonical_content(bytes: &[u8]) -> String {
    match Literal::from_bytes(bytes) {
        Ok(l) => l.to_string(),
        Err(_) => String::from_utf8_lossy(bytes)
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect(),
    }
}

/// Projection of a performative.
pub fn observe_act(act: &Act) -> ObservableAction {
    let (tag, content) = match act.performative {
        Performative::Inform => (Tag::Tell, Some(act.content.to_string())),
        Performative::Request | Performative::QueryIf => (Tag::Ask, Some(act.content.to_string())),
        Performative::Subscribe => (Tag::Observe, Some(act.content.to_string())),
        Performative::NotUnderstood => (Tag::NotUnderstood, None),
        p => (Tag::Proc(p), Some(act.content.to_string())),
    };
    ObservableAction {
        sender: act.sender,
        receiver: act.receiver,
        tag,
        content,
    }
}

/// Projection of a sent message. Plain PINGs (echoes and acknowledgements)
/// are internal and project to nothing.
pub fn observe_label(label: &TransitionLabel) -> Option<ObservableAction> {
    let m = &label.message;
    let (tag, content) = if let Some(proc) = m.option(OptionType::PROC) {
        let p = proc.value.first().copied().and_then(Performative::from_proc_code)?;
        (Tag::Proc(p), Some(canonical_content(&m.payload)))
    } else {
        match m.verb() {
            Verb::Ping if m.is_error() || m.has_option(OptionType::ERR) => (Tag::NotUnderstood, None),
            Verb::Ping => return None,
            Verb::Tell => (Tag::Tell, Some(canonical_content(&m.payload))),
            Verb::Ask => (Tag::Ask, Some(canonical_content(&m.payload))),
            Verb::Observe => (
                Tag::Observe,
                m.option(OptionType::TOPIC).map(|t| canonical_content(&t.value)),
            ),
        }
    };
    Some(ObservableAction {
        sender: label.sender,
        receiver: label.receiver,
        tag,
        content,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire;

    const S: AgentId = AgentId(0);
    const R: AgentId = AgentId(1);

    fn act(p: Performative, content: &str) -> Act {
        Act::new(p, S, R, content.parse().unwrap())
    }

    #[test]
    fn inform_is_one_tell() {
        let t = translate(&act(Performative::Inform, "p(1)"), 5);
        assert_eq!(t.messages().count(), 1);
        assert_eq!(t.message.verb(), Verb::Tell);
        assert_eq!(t.message.payload, b"p(1)");
        assert_eq!(t.message.header.correlation_id, 5);
    }

    #[test]
    fn subscribe_is_observe_with_topic() {
        let t = translate(&act(Performative::Subscribe, "temp"), 1);
        assert_eq!(t.message.verb(), Verb::Observe);
        assert_eq!(t.message.option(OptionType::TOPIC).unwrap().value, b"temp");
    }

    #[test]
    fn request_has_done_template() {
        let t = translate(&act(Performative::Request, "open(valve)"), 3);
        assert_eq!(t.message.verb(), Verb::Ask);
        let reply = t.expected_reply.unwrap();
        assert_eq!(reply.payload, b"done(open(valve))");
        assert!(reply.is_response());
        assert_eq!(reply.header.correlation_id, 3);
    }

    #[test]
    fn not_understood_carries_original_id() {
        let mut a = act(Performative::NotUnderstood, "x");
        a.in_reply_to = Some(0x1234);
        let t = translate(&a, 2);
        assert_eq!(t.message.verb(), Verb::Ping);
        assert!(t.message.is_error());
        assert_eq!(t.message.option(OptionType::ERR).unwrap().value, vec![0x12, 0x34]);
    }

    #[test]
    fn propose_is_procedural_tell() {
        let t = translate(&act(Performative::Propose, "price(5)"), 0x0102);
        let m = &t.message;
        assert_eq!(m.verb(), Verb::Tell);
        assert_eq!(
            m.option(OptionType::PROC).unwrap().value,
            vec![Performative::Propose.proc_code()]
        );
        assert_eq!(m.option(OptionType::CID).unwrap().value, vec![1, 2]);
    }

    #[test]
    fn every_performative_translates_to_well_formed_messages() {
        for p in Performative::ALL {
            let t = translate(&act(p, "c(1)"), 9);
            for m in t.messages() {
                assert!(wire::validate(m).is_well_formed(), "{p}");
                assert_eq!(m.header.correlation_id, 9);
            }
        }
    }

    #[test]
    fn projection_agrees_with_translation() {
        for p in Performative::ALL {
            let a = act(p, "c(1)");
            let t = translate(&a, 1);
            let label = TransitionLabel {
                sender: S,
                receiver: R,
                channel: crate::agent::ChannelId::between(S, R),
                message: t.message,
            };
            assert_eq!(observe_label(&label), Some(observe_act(&a)), "{p}");
        }
    }

    #[test]
    fn override_changes_verb() {
        let tau = Tau::from_json(r#"{"REQUEST": "PING"}"#).unwrap();
        let t = tau.translate(&act(Performative::Request, "go"), 1);
        assert_eq!(t.message.verb(), Verb::Ping);
        assert!(!tau.is_standard());
    }
}

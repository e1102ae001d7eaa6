use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agent::{AgentId, Literal};
use crate::wire::Verb;

/// FIPA communicative acts understood by the translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Performative {
    Inform,
    Request,
    QueryIf,
    Subscribe,
    NotUnderstood,
    Agree,
    Refuse,
    Cfp,
    Propose,
    AcceptProposal,
    RejectProposal,
    Forward,
    Proxy,
}

impl Performative {
    pub const ALL: [Performative; 13] = [
        Performative::Inform,
        Performative::Request,
        Performative::QueryIf,
        Performative::Subscribe,
        Performative::NotUnderstood,
        Performative::Agree,
        Performative::Refuse,
        Performative::Cfp,
        Performative::Propose,
        Performative::AcceptProposal,
        Performative::RejectProposal,
        Performative::Forward,
        Performative::Proxy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Performative::Inform => "INFORM",
            Performative::Request => "REQUEST",
            Performative::QueryIf => "QUERY_IF",
            Performative::Subscribe => "SUBSCRIBE",
            Performative::NotUnderstood => "NOT_UNDERSTOOD",
            Performative::Agree => "AGREE",
            Performative::Refuse => "REFUSE",
            Performative::Cfp => "CFP",
            Performative::Propose => "PROPOSE",
            Performative::AcceptProposal => "ACCEPT_PROPOSAL",
            Performative::RejectProposal => "REJECT_PROPOSAL",
            Performative::Forward => "FORWARD",
            Performative::Proxy => "PROXY",
        }
    }

    /// One-byte value of the PROC option.
    pub fn proc_code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_proc_code(code: u8) -> Option<Performative> {
        Self::ALL.get(code.checked_sub(1)? as usize).copied()
    }

    /// Performatives with a direct verb translation; the rest are encoded
    /// procedurally.
    pub fn is_procedural(self) -> bool {
        !matches!(
            self,
            Performative::Inform
                | Performative::Request
                | Performative::QueryIf
                | Performative::Subscribe
                | Performative::NotUnderstood
        )
    }

    /// Base verb of the procedural encoding: ASK for acts that solicit an
    /// answer, TELL otherwise.
    pub fn procedural_verb(self) -> Verb {
        match self {
            Performative::Cfp | Performative::Proxy => Verb::Ask,
            _ => Verb::Tell,
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown performative {0:?}")]
pub struct UnknownPerformative(pub String);

impl FromStr for Performative {
    type Err = UnknownPerformative;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| UnknownPerformative(s.to_string()))
    }
}

impl Serialize for Performative {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Performative {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A performative instance between two agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Act {
    pub performative: Performative,
    pub sender: AgentId,
    pub receiver: AgentId,
    /// A ground literal, an action term, or for SUBSCRIBE the topic name.
    pub content: Literal,
    /// Message id a NOT_UNDERSTOOD refers to.
    pub in_reply_to: Option<u16>,
}

impl Act {
    pub fn new(performative: Performative, sender: AgentId, receiver: AgentId, content: Literal) -> Self {
        Self {
            performative,
            sender,
            receiver,
            content,
            in_reply_to: None,
        }
    }
}

impl fmt::Display for Act {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({},{},{})",
            self.performative, self.sender, self.receiver, self.content
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proc_codes_are_a_bijection() {
        for p in Performative::ALL {
            assert_eq!(Performative::from_proc_code(p.proc_code()), Some(p));
            assert_eq!(p.name().parse::<Performative>().unwrap(), p);
        }
        assert_eq!(Performative::from_proc_code(0), None);
        assert_eq!(Performative::from_proc_code(14), None);
        assert_eq!("query-if".parse::<Performative>().unwrap(), Performative::QueryIf);
    }

    #[test]
    fn serde_uses_names() {
        let json = serde_json::to_string(&Performative::AcceptProposal).unwrap();
        assert_eq!(json, "\"ACCEPT_PROPOSAL\"");
        assert!(serde_json::from_str::<Performative>("\"SHOUT\"").is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::ballot::Ballot;

/// What an acceptor must keep across restarts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AcceptorRecord {
    pub promised: Option<Ballot>,
    pub accepted: Option<(Ballot, Vec<u8>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AcceptorReply {
    Promise {
        ballot: Ballot,
        accepted: Option<(Ballot, Vec<u8>)>,
    },
    Accepted {
        ballot: Ballot,
        value: Vec<u8>,
    },
    Nack {
        ballot: Ballot,
        promised: Ballot,
    },
}

impl AcceptorRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Promises `b` if it exceeds every earlier promise.
    pub fn on_prepare(&mut self, b: Ballot) -> AcceptorReply {
        match self.promised {
            Some(p) if b <= p => AcceptorReply::Nack { ballot: b, promised: p },
            _ => {
                self.promised = Some(b);
                AcceptorReply::Promise {
                    ballot: b,
                    accepted: self.accepted.clone(),
                }
            }
        }
    }

    /// Accepts `(b, value)` unless a higher ballot was promised.
    pub fn on_accept(&mut self, b: Ballot, value: &[u8]) -> AcceptorReply {
        match self.promised {
            Some(p) if b < p => AcceptorReply::Nack { ballot: b, promised: p },
            _ => {
                self.promised = Some(b);
                self.accepted = Some((b, value.to_vec()));
                AcceptorReply::Accepted {
                    ballot: b,
                    value: value.to_vec(),
                }
            }
        }
    }

    /// The accepted ballot never exceeds the promised one.
    pub fn is_consistent(&self) -> bool {
        match (&self.promised, &self.accepted) {
            (Some(p), Some((a, _))) => a <= p,
            (None, Some(_)) => false,
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentId;

    fn b(round: u32, p: u32) -> Ballot {
        Ballot::new(round, AgentId(p))
    }

    #[test]
    fn fresh_acceptor_promises() {
        let mut a = AcceptorRecord::new();
        assert_eq!(
            a.on_prepare(b(1, 0)),
            AcceptorReply::Promise {
                ballot: b(1, 0),
                accepted: None
            }
        );
        assert_eq!(a.promised, Some(b(1, 0)));
    }

    #[test]
    fn lower_prepare_is_nacked() {
        let mut a = AcceptorRecord {
            promised: Some(b(5, 0)),
            accepted: None,
        };
        assert_eq!(
            a.on_prepare(b(3, 1)),
            AcceptorReply::Nack {
                ballot: b(3, 1),
                promised: b(5, 0)
            }
        );
        assert_eq!(a.promised, Some(b(5, 0)));
    }

    #[test]
    fn promise_reports_prior_acceptance() {
        let mut a = AcceptorRecord::new();
        a.on_prepare(b(2, 0));
        a.on_accept(b(2, 0), b"x");
        assert_eq!(
            a.on_prepare(b(7, 1)),
            AcceptorReply::Promise {
                ballot: b(7, 1),
                accepted: Some((b(2, 0), b"x".to_vec()))
            }
        );
    }

    #[test]
    fn accept_respects_promise() {
        let mut a = AcceptorRecord::new();
        a.on_prepare(b(4, 1));
        assert!(matches!(a.on_accept(b(3, 0), b"y"), AcceptorReply::Nack { .. }));
        assert!(matches!(a.on_accept(b(4, 1), b"z"), AcceptorReply::Accepted { .. }));
        assert!(a.is_consistent());
    }
}

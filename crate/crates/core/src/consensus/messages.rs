use thiserror::Error;

use super::acceptor::AcceptorReply;
use super::ballot::Ballot;
use crate::agent::Literal;
use crate::wire::{Flags, Message, OptionType, Verb};

/// Largest VALUE option accepted.
pub const MAX_VALUE: usize = 64;

/// Paxos messages. Each maps onto one verb:
///
/// | message  | verb | flags            | options                         |
/// |----------|------|------------------|---------------------------------|
/// | Prepare  | ASK  |                  | BALLOT, CONV                    |
/// | Promise  | TELL | RESPONSE         | BALLOT, [BALLOT, VALUE], CONV   |
/// | Accept   | TELL |                  | BALLOT, VALUE, CONV             |
/// | Accepted | TELL | RESPONSE         | BALLOT, VALUE, CONV             |
/// | Nack     | TELL | RESPONSE, ERROR  | BALLOT, ERR(promised), CONV     |
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PaxosMsg {
    Prepare(Ballot),
    Reply(AcceptorReply),
    Accept { ballot: Ballot, value: Vec<u8> },
}

impl PaxosMsg {
    pub fn promise(ballot: Ballot, accepted: Option<(Ballot, Vec<u8>)>) -> Self {
        PaxosMsg::Reply(AcceptorReply::Promise { ballot, accepted })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaxosDecodeError {
    #[error("CONV option must be 4 bytes")]
    BadConv,
    #[error("missing or malformed BALLOT option")]
    BadBallot,
    #[error("missing VALUE option")]
    MissingValue,
    #[error("VALUE of {0} bytes exceeds {MAX_VALUE}")]
    ValueTooLong(usize),
    #[error("verb and flags do not form a Paxos message")]
    Shape,
}

pub fn encode(decree: u32, msg: &PaxosMsg) -> Message {
    let conv = |m: Message| m.with_option(OptionType::CONV, decree.to_be_bytes().to_vec());
    let m = match msg {
        PaxosMsg::Prepare(b) => Message::new(Verb::Ask).with_option(OptionType::BALLOT, b.to_bytes()),
        PaxosMsg::Accept { ballot, value } => Message::new(Verb::Tell)
            .with_option(OptionType::BALLOT, ballot.to_bytes())
            .with_option(OptionType::VALUE, value.clone()),
        PaxosMsg::Reply(AcceptorReply::Promise { ballot, accepted }) => {
            let mut m = Message::new(Verb::Tell)
                .with_flags(Flags::RESPONSE)
                .with_option(OptionType::BALLOT, ballot.to_bytes());
            if let Some((ab, v)) = accepted {
                m = m
                    .with_option(OptionType::BALLOT, ab.to_bytes())
                    .with_option(OptionType::VALUE, v.clone());
            }
            m
        }
        PaxosMsg::Reply(AcceptorReply::Accepted { ballot, value }) => Message::new(Verb::Tell)
            .with_flags(Flags::RESPONSE)
            .with_option(OptionType::BALLOT, ballot.to_bytes())
            .with_option(OptionType::VALUE, value.clone()),
        PaxosMsg::Reply(AcceptorReply::Nack { ballot, promised }) => Message::new(Verb::Tell)
            .with_flags(Flags::RESPONSE | Flags::ERROR)
            .with_option(OptionType::BALLOT, ballot.to_bytes())
            .with_option(OptionType::ERR, promised.to_bytes()),
    };
    conv(m)
}

/// Decodes a Paxos message; `Ok(None)` for messages without a CONV option.
pub fn decode(m: &Message) -> Result<Option<(u32, PaxosMsg)>, PaxosDecodeError> {
    let Some(conv) = m.option(OptionType::CONV) else {
        return Ok(None);
    };
    let decree = u32::from_be_bytes(
        conv.value
            .as_slice()
            .try_into()
            .map_err(|_| PaxosDecodeError::BadConv)?,
    );
    let ballots: Vec<Ballot> = m
        .options_of(OptionType::BALLOT)
        .map(|o| Ballot::from_bytes(&o.value).ok_or(PaxosDecodeError::BadBallot))
        .collect::<Result<_, _>>()?;
    let ballot = *ballots.first().ok_or(PaxosDecodeError::BadBallot)?;
    let value = match m.option(OptionType::VALUE) {
        Some(v) if v.value.len() > MAX_VALUE => return Err(PaxosDecodeError::ValueTooLong(v.value.len())),
        v => v.map(|o| o.value.clone()),
    };
    let msg = match (m.verb(), m.is_response(), m.is_error()) {
        (Verb::Ask, false, false) => PaxosMsg::Prepare(ballot),
        (Verb::Tell, false, false) => PaxosMsg::Accept {
            ballot,
            value: value.ok_or(PaxosDecodeError::MissingValue)?,
        },
        (Verb::Tell, true, true) => {
            let promised = m
                .option(OptionType::ERR)
                .and_then(|o| Ballot::from_bytes(&o.value))
                .ok_or(PaxosDecodeError::BadBallot)?;
            PaxosMsg::Reply(AcceptorReply::Nack { ballot, promised })
        }
        (Verb::Tell, true, false) => match (ballots.get(1), value) {
            (None, None) => PaxosMsg::promise(ballot, None),
            (Some(&ab), Some(v)) => PaxosMsg::promise(ballot, Some((ab, v))),
            (None, Some(value)) => PaxosMsg::Reply(AcceptorReply::Accepted { ballot, value }),
            (Some(_), None) => return Err(PaxosDecodeError::MissingValue),
        },
        _ => return Err(PaxosDecodeError::Shape),
    };
    Ok(Some((decree, msg)))
}

/// Knowledge-base fact announcing a decision: `decided(<decree>,<hex value>)`.
pub fn decision_literal(decree: u32, value: &[u8]) -> Literal {
    Literal::atom("decided", [decree.to_string(), hex::encode(value)])
}

pub fn parse_decision(lit: &Literal) -> Option<(u32, Vec<u8>)> {
    if lit.negated || lit.name != "decided" || lit.args.len() != 2 {
        return None;
    }
    Some((lit.args[0].parse().ok()?, hex::decode(&lit.args[1]).ok()?))
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Message, MAX_OPTIONS_BYTES, MAX_OPTION_COUNT, MAX_PAYLOAD, PROTOCOL_VERSION};

/// The five well-formedness clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Clause {
    /// The header is the 64-bit version-1 header.
    HeaderSize,
    /// The verb field names one of four values in 2 bits.
    VerbCode,
    /// Every option's value matches its declared length.
    OptionLength,
    /// Options total at most 1024 bytes.
    OptionTotal,
    /// Payload at most 2^16 - 1 bytes.
    PayloadSize,
}

impl Clause {
    pub const ALL: [Clause; 5] = [
        Clause::HeaderSize,
        Clause::VerbCode,
        Clause::OptionLength,
        Clause::OptionTotal,
        Clause::PayloadSize,
    ];

    pub fn numeral(self) -> &'static str {
        match self {
            Clause::HeaderSize => "i",
            Clause::VerbCode => "ii",
            Clause::OptionLength => "iii",
            Clause::OptionTotal => "iv",
            Clause::PayloadSize => "v",
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.numeral())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub clause: Clause,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
    /// The option count does not fit the one-byte count field. This is a
    /// framing limit rather than one of the five clauses.
    pub too_many_options: bool,
}

impl ValidityReport {
    pub fn is_well_formed(&self) -> bool {
        self.violations.is_empty() && !self.too_many_options
    }

    pub fn clauses(&self) -> Vec<Clause> {
        let mut c: Vec<_> = self.violations.iter().map(|v| v.clause).collect();
        c.dedup();
        c
    }

    pub fn violates(&self, clause: Clause) -> bool {
        self.violations.iter().any(|v| v.clause == clause)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncheckedOption {
    pub kind: u8,
    pub declared_len: usize,
    pub value: Vec<u8>,
}

/// A message as assembled by a producer, before any framing checks.
///
/// Unlike [`Message`] every field can hold an out-of-range value, so each
/// well-formedness clause can be violated independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncheckedMessage {
    pub header_bits: usize,
    pub version: u8,
    pub verb_code: u8,
    pub options: Vec<UncheckedOption>,
    pub payload: Vec<u8>,
}

impl From<&Message> for UncheckedMessage {
    fn from(m: &Message) -> Self {
        Self {
            header_bits: 64,
            version: m.header.version,
            verb_code: m.header.verb.code(),
            options: m
                .options
                .iter()
                .map(|o| UncheckedOption {
                    kind: o.kind.0,
                    declared_len: o.value.len(),
                    value: o.value.clone(),
                })
                .collect(),
            payload: m.payload.clone(),
        }
    }
}

impl UncheckedMessage {
    pub fn validate(&self) -> ValidityReport {
        let mut violations = Vec::new();
        let mut flag = |clause, detail: String| violations.push(Violation { clause, detail });

        if self.header_bits != 64 {
            flag(Clause::HeaderSize, format!("header is {} bits", self.header_bits));
        } else if self.version != PROTOCOL_VERSION {
            flag(
                Clause::HeaderSize,
                format!("version {} has no 64-bit header layout", self.version),
            );
        }
        if self.verb_code > 0b11 {
            flag(
                Clause::VerbCode,
                format!("verb code {} needs more than 2 bits", self.verb_code),
            );
        }
        for (i, o) in self.options.iter().enumerate() {
            if o.declared_len != o.value.len() || o.declared_len > u16::MAX as usize {
                flag(
                    Clause::OptionLength,
                    format!(
                        "option {i} (type 0x{:02x}) declares {} bytes, carries {}",
                        o.kind,
                        o.declared_len,
                        o.value.len()
                    ),
                );
            }
        }
        let total: usize = self.options.iter().map(|o| 3 + o.value.len()).sum();
        if total > MAX_OPTIONS_BYTES {
            flag(Clause::OptionTotal, format!("options total {total} bytes"));
        }
        if self.payload.len() > MAX_PAYLOAD {
            flag(Clause::PayloadSize, format!("payload is {} bytes", self.payload.len()));
        }
        ValidityReport {
            violations,
            too_many_options: self.options.len() > MAX_OPTION_COUNT,
        }
    }
}

/// Well-formedness report for a typed message.
pub fn validate(m: &Message) -> ValidityReport {
    UncheckedMessage::from(m).validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{OptionType, Verb};

    #[test]
    fn well_formed_ping_has_empty_report() {
        let r = validate(&Message::new(Verb::Ping));
        assert!(r.is_well_formed());
        assert!(r.clauses().is_empty());
    }

    #[test]
    fn options_over_1024_bytes_violate_clause_iv() {
        // 3 + 1022 = 1025
        let m = Message::new(Verb::Tell).with_option(OptionType::VALUE, vec![0u8; 1022]);
        assert_eq!(validate(&m).clauses(), [Clause::OptionTotal]);
    }

    #[test]
    fn large_payload_violates_clause_v() {
        let m = Message::new(Verb::Tell).with_payload(vec![0u8; 70_000]);
        assert_eq!(validate(&m).clauses(), [Clause::PayloadSize]);
    }

    #[test]
    fn unchecked_fields_map_to_their_clause() {
        let base = UncheckedMessage::from(&Message::new(Verb::Ask));
        let mut m = base.clone();
        m.header_bits = 72;
        assert_eq!(m.validate().clauses(), [Clause::HeaderSize]);
        let mut m = base.clone();
        m.verb_code = 4;
        assert_eq!(m.validate().clauses(), [Clause::VerbCode]);
        let mut m = base;
        m.options.push(UncheckedOption {
            kind: 1,
            declared_len: 4,
            value: vec![0; 2],
        });
        assert_eq!(m.validate().clauses(), [Clause::OptionLength]);
    }

    #[test]
    fn option_count_is_reported_separately() {
        let mut m = Message::new(Verb::Ask);
        m.options = vec![crate::wire::TlvOption::new(OptionType::CID, Vec::new()); 300];
        let r = validate(&m);
        assert!(r.clauses().is_empty());
        assert!(r.too_many_options);
        assert!(!r.is_well_formed());
    }
}

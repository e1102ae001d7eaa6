use std::fmt;

use serde::{Deserialize, Serialize};

use super::PROTOCOL_VERSION;

/// The four communication primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verb {
    Ping = 0,
    Tell = 1,
    Ask = 2,
    Observe = 3,
}

impl Verb {
    pub const ALL: [Verb; 4] = [Verb::Ping, Verb::Tell, Verb::Ask, Verb::Observe];

    /// 2-bit wire code.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Verb> {
        match code {
            0 => Some(Verb::Ping),
            1 => Some(Verb::Tell),
            2 => Some(Verb::Ask),
            3 => Some(Verb::Observe),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::Ping => "PING",
            Verb::Tell => "TELL",
            Verb::Ask => "ASK",
            Verb::Observe => "OBSERVE",
        }
    }

    pub fn from_name(name: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Delivery guarantee requested by the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QoS {
    #[default]
    AtMostOnce = 0,
    /// Retransmitted until acknowledged or the deadline passes.
    AtLeastOnce = 1,
    Reserved2 = 2,
    Reserved3 = 3,
}

impl QoS {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> QoS {
        match code & 0b11 {
            0 => QoS::AtMostOnce,
            1 => QoS::AtLeastOnce,
            2 => QoS::Reserved2,
            _ => QoS::Reserved3,
        }
    }
}

/// 8-bit flag set. Reserved bits are carried through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Flags(pub u8);

impl Flags {
    pub const NONE: Flags = Flags(0);
    pub const RESPONSE: Flags = Flags(0x01);
    pub const ERROR: Flags = Flags(0x02);

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl std::ops::BitOr for Flags {
    type Output = Flags;

    fn bitor(self, rhs: Flags) -> Flags {
        Flags(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for Flags {
    fn bitor_assign(&mut self, rhs: Flags) {
        self.0 |= rhs.0;
    }
}

/// Fixed 64-bit header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Header {
    pub version: u8,
    pub verb: Verb,
    pub qos: QoS,
    pub flags: Flags,
    pub message_id: u16,
    pub sequence: u16,
    pub correlation_id: u16,
}

impl Header {
    pub fn new(verb: Verb) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            verb,
            qos: QoS::AtMostOnce,
            flags: Flags::NONE,
            message_id: 0,
            sequence: 0,
            correlation_id: 0,
        }
    }

    pub(crate) fn to_bytes(self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[0] = ((self.version & 0x0f) << 4) | (self.verb.code() << 2) | self.qos.code();
        out[1] = self.flags.bits();
        out[2..4].copy_from_slice(&self.message_id.to_be_bytes());
        out[4..6].copy_from_slice(&self.sequence.to_be_bytes());
        out[6..8].copy_from_slice(&self.correlation_id.to_be_bytes());
        out
    }

    pub(crate) fn from_bytes(b: &[u8; 8]) -> Self {
        Self {
            version: b[0] >> 4,
            // Two bits always name one of the four verbs.
            verb: Verb::from_code((b[0] >> 2) & 0b11).expect("2-bit verb code"),
            qos: QoS::from_code(b[0]),
            flags: Flags(b[1]),
            message_id: u16::from_be_bytes([b[2], b[3]]),
            sequence: u16::from_be_bytes([b[4], b[5]]),
            correlation_id: u16::from_be_bytes([b[6], b[7]]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verb_codes_are_a_bijection() {
        let mut seen = [false; 4];
        for v in Verb::ALL {
            let c = v.code();
            assert!(c < 4);
            assert!(!seen[c as usize]);
            seen[c as usize] = true;
            assert_eq!(Verb::from_code(c), Some(v));
        }
        assert_eq!(Verb::from_code(4), None);
    }

    #[test]
    fn header_bit_layout() {
        let h = Header {
            verb: Verb::Ask,
            qos: QoS::AtLeastOnce,
            flags: Flags::RESPONSE | Flags::ERROR,
            message_id: 0x0102,
            sequence: 0x0304,
            correlation_id: 0x0506,
            ..Header::new(Verb::Ping)
        };
        // version 1 | ASK=10 | qos 01
        assert_eq!(h.to_bytes(), [0b0001_1001, 0x03, 1, 2, 3, 4, 5, 6]);
        assert_eq!(Header::from_bytes(&h.to_bytes()), h);
    }
}

//! Bit-exact encoding of messages.
//!
//! Layout, all multi-byte fields big-endian:
//!
//! ```text
//! [version:4][verb:2][qos:2] [flags:8] [message_id:16] [sequence:16] [correlation_id:16]
//! [option_count:8] ([opt_type:8][opt_len:16][opt_value])* [payload_len:16] [payload]
//! ```
//!
//! An option-free, payload-free message is 11 bytes.

mod codec;
mod gen;
mod header;
mod option;
mod validate;

pub use codec::{decode, encode, wire_size};
pub use gen::{random_message, MessageMix};
pub use header::{Flags, Header, QoS, Verb};
pub use option::{OptionRegistry, OptionType, RegistryError, TlvOption, K_MAX};
pub use validate::{validate, Clause, UncheckedMessage, UncheckedOption, ValidityReport, Violation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;
/// Header, option count and payload length.
pub const FIXED_OVERHEAD: usize = HEADER_LEN + 1 + 2;
pub const MAX_OPTIONS_BYTES: usize = 1024;
pub const MAX_OPTION_VALUE: usize = MAX_OPTIONS_BYTES - 3;
pub const MAX_OPTION_COUNT: usize = u8::MAX as usize;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("input truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("frame is {actual} bytes but its fields declare {declared}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("options occupy {0} bytes, limit is {MAX_OPTIONS_BYTES}")]
    OversizedOptions(usize),
    #[error("payload is {0} bytes, limit is {MAX_PAYLOAD}")]
    OversizedPayload(usize),
    #[error("{0} options, limit is {MAX_OPTION_COUNT}")]
    TooManyOptions(usize),
}

/// The wire unit: header, options and payload. The verb lives in the header.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub header: Header,
    pub options: Vec<TlvOption>,
    #[serde(with = "crate::serde_hex")]
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(verb: Verb) -> Self {
        Self {
            header: Header::new(verb),
            options: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn verb(&self) -> Verb {
        self.header.verb
    }

    pub fn with_option(mut self, kind: OptionType, value: impl Into<Vec<u8>>) -> Self {
        self.options.push(TlvOption::new(kind, value));
        self
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }

    pub fn with_qos(mut self, qos: QoS) -> Self {
        self.header.qos = qos;
        self
    }

    pub fn with_flags(mut self, flags: Flags) -> Self {
        self.header.flags = flags;
        self
    }

    pub fn with_message_id(mut self, id: u16) -> Self {
        self.header.message_id = id;
        self
    }

    pub fn with_correlation(mut self, cid: u16) -> Self {
        self.header.correlation_id = cid;
        self
    }

    /// First option of the given type.
    pub fn option(&self, kind: OptionType) -> Option<&TlvOption> {
        self.options.iter().find(|o| o.kind == kind)
    }

    pub fn options_of(&self, kind: OptionType) -> impl Iterator<Item = &TlvOption> {
        self.options.iter().filter(move |o| o.kind == kind)
    }

    pub fn has_option(&self, kind: OptionType) -> bool {
        self.option(kind).is_some()
    }

    /// Serialized size of all options, `Σ (3 + len)`.
    pub fn options_len(&self) -> usize {
        self.options.iter().map(TlvOption::encoded_len).sum()
    }

    pub fn is_response(&self) -> bool {
        self.header.flags.contains(Flags::RESPONSE)
    }

    pub fn is_error(&self) -> bool {
        self.header.flags.contains(Flags::ERROR)
    }
}

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of distinct registered option types.
pub const K_MAX: usize = 16;

/// One-byte option type code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OptionType(pub u8);

impl OptionType {
    /// Conversation (correlation) identifier.
    pub const CID: OptionType = OptionType(0x01);
    /// Procedural performative code.
    pub const PROC: OptionType = OptionType(0x02);
    pub const ERR: OptionType = OptionType(0x03);
    pub const BALLOT: OptionType = OptionType(0x04);
    pub const VALUE: OptionType = OptionType(0x05);
    pub const CONTENT_TYPE: OptionType = OptionType(0x06);
    pub const TOPIC: OptionType = OptionType(0x07);
    pub const DEADLINE: OptionType = OptionType(0x08);
    pub const CONV: OptionType = OptionType(0x09);
}

impl fmt::Display for OptionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match OptionRegistry::standard().name(*self) {
            Some(name) => f.write_str(name),
            None => write!(f, "0x{:02x}", self.0),
        }
    }
}

/// A type-length-value option. The length is implied by `value`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TlvOption {
    #[serde(rename = "type")]
    pub kind: OptionType,
    #[serde(with = "crate::serde_hex")]
    pub value: Vec<u8>,
}

impl TlvOption {
    pub fn new(kind: OptionType, value: impl Into<Vec<u8>>) -> Self {
        Self {
            kind,
            value: value.into(),
        }
    }

    /// type (1) + length (2) + value.
    pub fn encoded_len(&self) -> usize {
        3 + self.value.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("option code 0x{0:02x} already registered")]
    DuplicateCode(u8),
    #[error("registry is full ({K_MAX} types)")]
    Full,
}

/// Code-to-name mapping of the option vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionRegistry {
    names: BTreeMap<u8, &'static str>,
}

impl OptionRegistry {
    pub fn empty() -> Self {
        Self { names: BTreeMap::new() }
    }

    pub fn standard() -> &'static OptionRegistry {
        static STANDARD: std::sync::OnceLock<OptionRegistry> = std::sync::OnceLock::new();
        STANDARD.get_or_init(|| {
            let mut r = OptionRegistry::empty();
            for (kind, name) in [
                (OptionType::CID, "CID"),
                (OptionType::PROC, "PROC"),
                (OptionType::ERR, "ERR"),
                (OptionType::BALLOT, "BALLOT"),
                (OptionType::VALUE, "VALUE"),
                (OptionType::CONTENT_TYPE, "CONTENT_TYPE"),
                (OptionType::TOPIC, "TOPIC"),
                (OptionType::DEADLINE, "DEADLINE"),
                (OptionType::CONV, "CONV"),
            ] {
                r.register(kind, name).expect("standard registry is valid");
            }
            r
        })
    }

    pub fn register(&mut self, kind: OptionType, name: &'static str) -> Result<(), RegistryError> {
        if self.names.contains_key(&kind.0) {
            return Err(RegistryError::DuplicateCode(kind.0));
        }
        if self.names.len() >= K_MAX {
            return Err(RegistryError::Full);
        }
        self.names.insert(kind.0, name);
        Ok(())
    }

    pub fn name(&self, kind: OptionType) -> Option<&'static str> {
        self.names.get(&kind.0).copied()
    }

    pub fn lookup(&self, name: &str) -> Option<OptionType> {
        self.names
            .iter()
            .find(|(_, n)| n.eq_ignore_ascii_case(name))
            .map(|(c, _)| OptionType(*c))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_registry() {
        let r = OptionRegistry::standard();
        assert_eq!(r.len(), 9);
        assert!(r.len() <= K_MAX);
        assert_eq!(r.name(OptionType::BALLOT), Some("BALLOT"));
        assert_eq!(r.lookup("conv"), Some(OptionType::CONV));
        assert_eq!(r.name(OptionType(0x7f)), None);
    }

    #[test]
    fn registry_rejects_duplicates_and_overflow() {
        let mut r = OptionRegistry::standard().clone();
        assert_eq!(
            r.register(OptionType::CID, "AGAIN"),
            Err(RegistryError::DuplicateCode(1))
        );
        for code in 0x10..0x17 {
            r.register(OptionType(code), "X").unwrap();
        }
        assert_eq!(r.len(), K_MAX);
        assert_eq!(r.register(OptionType(0x20), "Y"), Err(RegistryError::Full));
    }
}

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, ChannelId, TransitionLabel};
use crate::wire::{self, Verb, WireError};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Send,
    Deliver,
    Drop,
    Dup,
    Crash,
    Timer,
}

/// One simulator event. Message events carry the encoded frame as hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: Tick,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet: Option<u64>,
    /// For duplicates, the packet that was copied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb: Option<Verb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_id: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent_at: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deliver_at: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl LogRecord {
    pub fn bare(tick: Tick, kind: EventKind) -> Self {
        Self {
            tick,
            kind,
            packet: None,
            origin: None,
            from: None,
            to: None,
            verb: None,
            message_id: None,
            sent_at: None,
            deliver_at: None,
            bytes: None,
            reason: None,
        }
    }

    pub(crate) fn for_label(tick: Tick, kind: EventKind, label: &TransitionLabel) -> Self {
        let bytes = wire::encode(&label.message).ok().map(hex::encode);
        Self {
            from: Some(label.sender),
            to: Some(label.receiver),
            verb: Some(label.message.verb()),
            message_id: Some(label.message.header.message_id),
            bytes,
            ..Self::bare(tick, kind)
        }
    }

    /// Rebuilds the transition label of a message record.
    pub fn label(&self) -> Option<Result<TransitionLabel, WireError>> {
        let (from, to, bytes) = (self.from?, self.to?, self.bytes.as_ref()?);
        let raw = hex::decode(bytes).ok()?;
        Some(wire::decode(&raw).map(|message| TransitionLabel {
            sender: from,
            receiver: to,
            channel: ChannelId::between(from, to),
            message,
        }))
    }

    pub fn wire_len(&self) -> Option<usize> {
        self.bytes.as_ref().map(|b| b.len() / 2)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimEventLog {
    pub records: Vec<LogRecord>,
}

impl SimEventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: LogRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.tick <= record.tick));
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LogRecord> {
        self.records.iter()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<SimEventLog> {
        let mut records = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(SimEventLog { records })
    }

    /// Every deliver refers to a packet that was sent or duplicated earlier.
    pub fn no_spurious_creation(&self) -> bool {
        let mut known = std::collections::HashSet::new();
        self.records.iter().all(|r| match r.kind {
            EventKind::Send | EventKind::Dup => {
                if let Some(p) = r.packet {
                    known.insert(p);
                }
                true
            }
            EventKind::Deliver => r.packet.is_some_and(|p| known.contains(&p)),
            _ => true,
        })
    }

    pub fn ticks_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[0].tick <= w[1].tick)
    }
}

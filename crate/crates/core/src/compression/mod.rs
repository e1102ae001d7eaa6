//! Entropy of message distributions and the compression bound check.
//!
//! A message is abstracted to its verb, its option profile (type and value
//! length of each option) and its payload bytes. The theoretical encoder
//! writes the fixed framing bits, a Huffman code for the verb, one option
//! type index, a Huffman code for the option profile given the verb and a
//! Huffman code for the payload given verb and profile.

mod huffman;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use huffman::{entropy_of, kraft_sum, HuffmanCode};

use crate::simnet::{EventKind, SimEventLog};
use crate::wire::{self, OptionType, Verb, FIXED_OVERHEAD, K_MAX};

/// Fixed framing bits: 64-bit header, option count and payload length.
pub const H_HDR: u32 = (FIXED_OVERHEAD * 8) as u32;
pub const MAX_SUPPORT: usize = 100_000;
const SUM_TOLERANCE: f64 = 1e-9;
/// Slack allowed when comparing a computed length against the bound.
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CompressionError {
    #[error("empty distribution")]
    Empty,
    #[error("support has {0} entries, limit is {MAX_SUPPORT}")]
    TooLarge(usize),
    #[error("probabilities sum to {0}")]
    NotNormalized(f64),
    #[error("probability {p} of entry {index} is not in [0, 1]")]
    BadProbability { index: usize, p: f64 },
    #[error("entry {0} repeats an earlier message")]
    Duplicate(usize),
    #[error("entry {index} is not encodable: {reason}")]
    Unencodable { index: usize, reason: String },
    #[error("log contains no decodable sends")]
    EmptyLog,
    #[error("expected length {expected} bits exceeds the bound {bound} bits")]
    BoundViolated { expected: f64, bound: f64 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OptionShape {
    #[serde(rename = "type")]
    pub kind: OptionType,
    pub len: u16,
}

/// A message up to the fields the bound is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AbstractMessage {
    pub verb: Verb,
    /// Option profile, kept sorted.
    #[serde(default)]
    pub options: Vec<OptionShape>,
    #[serde(default, with = "crate::serde_hex")]
    pub payload: Vec<u8>,
}

impl AbstractMessage {
    pub fn new(verb: Verb, mut options: Vec<OptionShape>, payload: Vec<u8>) -> Self {
        options.sort();
        Self { verb, options, payload }
    }

    pub fn of_message(m: &wire::Message) -> Self {
        let options = m
            .options
            .iter()
            .map(|o| OptionShape {
                kind: o.kind,
                len: o.value.len() as u16,
            })
            .collect();
        Self::new(m.verb(), options, m.payload.clone())
    }

    /// Size of the byte-aligned wire encoding.
    pub fn wire_bytes(&self) -> usize {
        FIXED_OVERHEAD + self.options.iter().map(|o| 3 + o.len as usize).sum::<usize>() + self.payload.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    #[serde(flatten)]
    pub message: AbstractMessage,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageDistribution {
    #[serde(default)]
    pub name: String,
    pub entries: Vec<Entry>,
}

impl MessageDistribution {
    pub fn new(name: impl Into<String>, entries: Vec<(AbstractMessage, f64)>) -> Result<Self, CompressionError> {
        let d = Self {
            name: name.into(),
            entries: entries.into_iter().map(|(message, p)| Entry { message, p }).collect(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn from_json(text: &str) -> Result<Self, CompressionError> {
        let mut d: MessageDistribution = serde_json::from_str(text)?;
        for e in &mut d.entries {
            e.message.options.sort();
        }
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), CompressionError> {
        if self.entries.is_empty() {
            return Err(CompressionError::Empty);
        }
        if self.entries.len() > MAX_SUPPORT {
            return Err(CompressionError::TooLarge(self.entries.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for (index, e) in self.entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.p) {
                return Err(CompressionError::BadProbability { index, p: e.p });
            }
            if !seen.insert(&e.message) {
                return Err(CompressionError::Duplicate(index));
            }
            let options: usize = e.message.options.iter().map(|o| 3 + o.len as usize).sum();
            if options > wire::MAX_OPTIONS_BYTES || e.message.options.len() > wire::MAX_OPTION_COUNT {
                return Err(CompressionError::Unencodable {
                    index,
                    reason: format!("{options} option bytes"),
                });
            }
            if e.message.payload.len() > wire::MAX_PAYLOAD {
                return Err(CompressionError::Unencodable {
                    index,
                    reason: "payload too long".into(),
                });
            }
        }
        let sum: f64 = self.entries.iter().map(|e| e.p).sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(CompressionError::NotNormalized(sum));
        }
        Ok(())
    }

    /// Seeded distribution over `support` random messages with random weights.
    pub fn random(seed: u64, support: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kinds = [
            OptionType::CID,
            OptionType::PROC,
            OptionType::ERR,
            OptionType::BALLOT,
            OptionType::VALUE,
            OptionType::CONTENT_TYPE,
            OptionType::TOPIC,
        ];
        let mut messages = std::collections::BTreeSet::new();
        while messages.len() < support.max(1) {
            let verb = Verb::ALL[rng.gen_range(0..4)];
            let options = (0..rng.gen_range(0..4))
                .map(|_| OptionShape {
                    kind: kinds[rng.gen_range(0..kinds.len())],
                    len: rng.gen_range(0..24),
                })
                .collect();
            let payload = (0..rng.gen_range(0..6)).map(|_| rng.gen_range(b'a'..=b'd')).collect();
            messages.insert(AbstractMessage::new(verb, options, payload));
        }
        // Skewed weights make the Huffman codes non-trivial.
        let weights: Vec<f64> = messages.iter().map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
        let total: f64 = weights.iter().sum();
        Self {
            name: format!("random-{seed}"),
            entries: messages
                .into_iter()
                .zip(weights)
                .map(|(message, w)| Entry { message, p: w / total })
                .collect(),
        }
    }

    fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.p).sum()
    }
}

/// Entropy decomposition in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h_v: f64,
    pub h_o_given_v: f64,
    pub h_p_given_vo: f64,
    pub h_total: f64,
}

impl EntropyReport {
    pub fn chain_rule_gap(&self) -> f64 {
        (self.h_total - (self.h_v + self.h_o_given_v + self.h_p_given_vo)).abs()
    }
}

type Profile = Vec<OptionShape>;

/// Probability tables grouped by verb and option profile, renormalized.
struct Grouped<'a> {
    verbs: BTreeMap<Verb, f64>,
    profiles: BTreeMap<Verb, BTreeMap<&'a Profile, f64>>,
    payloads: BTreeMap<(Verb, &'a Profile), BTreeMap<&'a [u8], f64>>,
}

fn group(d: &MessageDistribution) -> Grouped<'_> {
    let z = d.total();
    let mut g = Grouped {
        verbs: BTreeMap::new(),
        profiles: BTreeMap::new(),
        payloads: BTreeMap::new(),
    };
    for e in &d.entries {
        let p = e.p / z;
        let m = &e.message;
        *g.verbs.entry(m.verb).or_default() += p;
        *g.profiles.entry(m.verb).or_default().entry(&m.options).or_default() += p;
        *g.payloads
            .entry((m.verb, &m.options))
            .or_default()
            .entry(&m.payload)
            .or_default() += p;
    }
    g
}

/// Conditional distribution of the inner keys, as probabilities.
fn conditional<K>(joint: &BTreeMap<K, f64>) -> (f64, Vec<f64>) {
    let mass: f64 = joint.values().sum();
    let probs = joint
        .values()
        .map(|p| if mass > 0.0 { p / mass } else { 0.0 })
        .collect();
    (mass, probs)
}

/// Shannon entropies by direct summation over the support.
pub fn entropy(d: &MessageDistribution) -> Result<EntropyReport, CompressionError> {
    d.validate()?;
    let z = d.total();
    let g = group(d);
    let h_v = entropy_of(&g.verbs.values().copied().collect::<Vec<_>>());
    let h_o_given_v = g
        .profiles
        .values()
        .map(|t| {
            let (mass, probs) = conditional(t);
            mass * entropy_of(&probs)
        })
        .sum();
    let h_p_given_vo = g
        .payloads
        .values()
        .map(|t| {
            let (mass, probs) = conditional(t);
            mass * entropy_of(&probs)
        })
        .sum();
    let h_total = entropy_of(&d.entries.iter().map(|e| e.p / z).collect::<Vec<_>>());
    Ok(EntropyReport {
        h_v,
        h_o_given_v,
        h_p_given_vo,
        h_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundParameters {
    pub h_hdr: u32,
    pub k_max: u32,
    pub slack_constant: u32,
}

impl Default for BoundParameters {
    fn default() -> Self {
        Self {
            h_hdr: H_HDR,
            k_max: K_MAX as u32,
            slack_constant: 3,
        }
    }
}

impl BoundParameters {
    /// ⌈log₂ k_max⌉ bits for one option type index.
    pub fn index_bits(&self) -> u32 {
        self.k_max.max(1).next_power_of_two().trailing_zeros()
    }

    pub fn bound(&self, h_total: f64) -> f64 {
        h_total + self.h_hdr as f64 + self.index_bits() as f64 + self.slack_constant as f64
    }
}

/// Every term of the bound check, in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub distribution: String,
    pub support: usize,
    pub entropy: EntropyReport,
    pub params: BoundParameters,
    pub index_bits: u32,
    /// Expected Huffman lengths of the three components.
    pub l_v: f64,
    pub l_o_given_v: f64,
    pub l_p_given_vo: f64,
    /// Expected length of the theoretical encoder.
    pub expected_bits: f64,
    /// H(D) + h_hdr + ⌈log₂ k_max⌉ + slack.
    pub bound_bits: f64,
    pub holds: bool,
    /// Every Huffman table built satisfied Kraft and H ≤ L < H + 1.
    pub tables_ok: bool,
    pub tables_built: usize,
    /// Mean option count and the bound with one type index per option.
    pub expected_options: f64,
    pub multi_index_bits: f64,
    pub multi_index_bound_bits: f64,
    /// Byte-aligned codec: expected length and its gap to the theoretical
    /// encoder (negative when alignment happens to be cheaper).
    pub wire_expected_bits: f64,
    pub wire_alignment_slack_bits: f64,
    /// The wire spends a fixed 2 bits on the verb.
    pub wire_verb_bits: u32,
    pub wire_verb_bits_cover_h_v: bool,
}

fn check_table(probs: &[f64], report: &mut (bool, usize)) -> HuffmanCode {
    let code = HuffmanCode::build(probs);
    let upper_ok = probs.len() <= 1 || code.expected_length < code.entropy + 1.0 + 1e-9;
    let ok = code.kraft_sum() <= 1.0 + 1e-12 && code.expected_length >= code.entropy - 1e-9 && upper_ok;
    report.0 &= ok;
    report.1 += 1;
    code
}

/// Builds the theoretical encoder for `d` and compares its exact expected
/// length with the bound.
pub fn bound_report(d: &MessageDistribution, params: BoundParameters) -> Result<BoundReport, CompressionError> {
    let entropy = entropy(d)?;
    let z = d.total();
    let g = group(d);
    let mut tables = (true, 0usize);

    let verb_probs: Vec<f64> = g.verbs.values().copied().collect();
    let l_v = check_table(&verb_probs, &mut tables).expected_length;
    let mut l_o_given_v = 0.0;
    for t in g.profiles.values() {
        let (mass, probs) = conditional(t);
        l_o_given_v += mass * check_table(&probs, &mut tables).expected_length;
    }
    let mut l_p_given_vo = 0.0;
    for t in g.payloads.values() {
        let (mass, probs) = conditional(t);
        l_p_given_vo += mass * check_table(&probs, &mut tables).expected_length;
    }

    let index_bits = params.index_bits();
    let expected_bits = params.h_hdr as f64 + l_v + index_bits as f64 + l_o_given_v + l_p_given_vo;
    let bound_bits = params.bound(entropy.h_total);
    let expected_options: f64 = d.entries.iter().map(|e| e.p / z * e.message.options.len() as f64).sum();
    let multi_index_bits = expected_options * index_bits as f64;
    let wire_expected_bits: f64 = d
        .entries
        .iter()
        .map(|e| e.p / z * (8 * e.message.wire_bytes()) as f64)
        .sum();
    Ok(BoundReport {
        distribution: d.name.clone(),
        support: d.entries.len(),
        entropy,
        params,
        index_bits,
        l_v,
        l_o_given_v,
        l_p_given_vo,
        expected_bits,
        bound_bits,
        holds: expected_bits <= bound_bits + BOUND_TOLERANCE,
        tables_ok: tables.0,
        tables_built: tables.1,
        expected_options,
        multi_index_bits,
        multi_index_bound_bits: entropy.h_total
            + params.h_hdr as f64
            + multi_index_bits.max(index_bits as f64)
            + params.slack_constant as f64,
        wire_expected_bits,
        wire_alignment_slack_bits: wire_expected_bits - expected_bits,
        wire_verb_bits: 2,
        wire_verb_bits_cover_h_v: entropy.h_v <= 2.0 + 1e-12,
    })
}

/// Like [`bound_report`] but fails when the bound does not hold.
pub fn check_bound(d: &MessageDistribution, params: BoundParameters) -> Result<BoundReport, CompressionError> {
    let r = bound_report(d, params)?;
    if !r.holds {
        return Err(CompressionError::BoundViolated {
            expected: r.expected_bits,
            bound: r.bound_bits,
        });
    }
    Ok(r)
}

/// Empirical distribution of the messages sent in a simulation log.
pub fn corpus_ingest(log: &SimEventLog, name: &str) -> Result<MessageDistribution, CompressionError> {
    let mut counts: BTreeMap<AbstractMessage, u64> = BTreeMap::new();
    for r in log.of_kind(EventKind::Send) {
        let Some(m) = r
            .bytes
            .as_deref()
            .and_then(|h| hex::decode(h).ok())
            .and_then(|b| wire::decode(&b).ok())
        else {
            continue;
        };
        *counts.entry(AbstractMessage::of_message(&m)).or_default() += 1;
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(CompressionError::EmptyLog);
    }
    Ok(MessageDistribution {
        name: name.to_string(),
        entries: counts
            .into_iter()
            .map(|(message, c)| Entry {
                message,
                p: c as f64 / total as f64,
            })
            .collect(),
    })
}

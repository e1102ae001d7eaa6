use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Flags, Header, Message, OptionType, QoS, TlvOption, Verb, MAX_OPTIONS_BYTES, PROTOCOL_VERSION};

/// Shapes of generated messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageMix {
    /// No options and no payload: 11 bytes.
    Empty,
    /// One option whose TLV encoding is 12 bytes (9-byte value): 23 bytes.
    OneOption,
    /// Up to 6 options and a payload of up to 64 bytes.
    Random,
}

impl std::str::FromStr for MessageMix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "empty" => Ok(MessageMix::Empty),
            "one-option" => Ok(MessageMix::OneOption),
            "random" => Ok(MessageMix::Random),
            other => Err(format!("unknown mix {other:?}; expected empty, one-option or random")),
        }
    }
}

fn random_header<R: Rng>(rng: &mut R) -> Header {
    Header {
        version: PROTOCOL_VERSION,
        verb: Verb::ALL[rng.gen_range(0..4)],
        qos: QoS::from_code(rng.gen()),
        flags: Flags(rng.gen()),
        message_id: rng.gen(),
        sequence: rng.gen(),
        correlation_id: rng.gen(),
    }
}

/// A random well-formed message of the given mix.
pub fn random_message<R: Rng>(rng: &mut R, mix: MessageMix) -> Message {
    let header = random_header(rng);
    let (options, payload) = match mix {
        MessageMix::Empty => (Vec::new(), Vec::new()),
        MessageMix::OneOption => {
            let value: Vec<u8> = (0..9).map(|_| rng.gen()).collect();
            (
                vec![TlvOption::new(OptionType(rng.gen_range(1..=9)), value)],
                Vec::new(),
            )
        }
        MessageMix::Random => {
            let mut options = Vec::new();
            let mut budget = MAX_OPTIONS_BYTES;
            for _ in 0..rng.gen_range(0..=6) {
                let len = rng.gen_range(0..=48).min(budget - 3);
                budget -= 3 + len;
                let value: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                options.push(TlvOption::new(OptionType(rng.gen()), value));
            }
            let payload = (0..rng.gen_range(0..=64)).map(|_| rng.gen()).collect();
            (options, payload)
        }
    };
    Message {
        header,
        options,
        payload,
    }
}

use super::{
    Header, Message, OptionType, TlvOption, WireError, FIXED_OVERHEAD, HEADER_LEN, MAX_OPTIONS_BYTES, MAX_OPTION_COUNT,
    MAX_PAYLOAD, PROTOCOL_VERSION,
};

fn check_limits(m: &Message) -> Result<usize, WireError> {
    if m.header.version != PROTOCOL_VERSION {
        return Err(WireError::BadVersion(m.header.version));
    }
    if m.options.len() > MAX_OPTION_COUNT {
        return Err(WireError::TooManyOptions(m.options.len()));
    }
    let options = m.options_len();
    if options > MAX_OPTIONS_BYTES {
        return Err(WireError::OversizedOptions(options));
    }
    if m.payload.len() > MAX_PAYLOAD {
        return Err(WireError::OversizedPayload(m.payload.len()));
    }
    Ok(FIXED_OVERHEAD + options + m.payload.len())
}

/// Length of `encode(m)` without producing the bytes.
pub fn wire_size(m: &Message) -> Result<usize, WireError> {
    check_limits(m)
}

pub fn encode(m: &Message) -> Result<Vec<u8>, WireError> {
    let len = check_limits(m)?;
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&m.header.to_bytes());
    out.push(m.options.len() as u8);
    for opt in &m.options {
        out.push(opt.kind.0);
        out.extend_from_slice(&(opt.value.len() as u16).to_be_bytes());
        out.extend_from_slice(&opt.value);
    }
    out.extend_from_slice(&(m.payload.len() as u16).to_be_bytes());
    out.extend_from_slice(&m.payload);
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(WireError::Truncated {
                needed: self.pos + n,
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
}

/// Parses one frame. The whole input must be consumed.
///
/// Every allocation is bounded by a length that has already been checked
/// against the option and payload limits.
pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    if bytes.len() < FIXED_OVERHEAD {
        return Err(WireError::Truncated {
            needed: FIXED_OVERHEAD,
            available: bytes.len(),
        });
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    let raw: &[u8; HEADER_LEN] = r.take(HEADER_LEN)?.try_into().expect("8 bytes");
    let header = Header::from_bytes(raw);
    if header.version != PROTOCOL_VERSION {
        return Err(WireError::BadVersion(header.version));
    }

    let count = r.u8()? as usize;
    let mut options = Vec::with_capacity(count.min(MAX_OPTIONS_BYTES / 3));
    let mut options_len = 0usize;
    for _ in 0..count {
        let kind = OptionType(r.u8()?);
        let len = r.u16()? as usize;
        options_len += 3 + len;
        if options_len > MAX_OPTIONS_BYTES {
            return Err(WireError::OversizedOptions(options_len));
        }
        let value = r.take(len)?.to_vec();
        options.push(TlvOption { kind, value });
    }

    let payload_len = r.u16()? as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(WireError::OversizedPayload(payload_len));
    }
    let payload = r.take(payload_len)?.to_vec();
    if r.pos != bytes.len() {
        return Err(WireError::LengthMismatch {
            declared: r.pos,
            actual: bytes.len(),
        });
    }
    Ok(Message {
        header,
        options,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{Flags, QoS, Verb};

    #[test]
    fn empty_ping_is_eleven_bytes() {
        let m = Message::new(Verb::Ping);
        let bytes = encode(&m).unwrap();
        assert_eq!(bytes, [0x10, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(wire_size(&m).unwrap(), 11);
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn tell_with_ballot_option_is_twenty_three_bytes() {
        let m = Message::new(Verb::Tell).with_option(OptionType::BALLOT, vec![7u8; 9]);
        assert_eq!(encode(&m).unwrap().len(), 23);
        assert_eq!(wire_size(&m).unwrap(), 23);
    }

    #[test]
    fn payload_boundary() {
        let ok = Message::new(Verb::Tell).with_payload(vec![0u8; MAX_PAYLOAD]);
        assert_eq!(wire_size(&ok).unwrap(), 11 + MAX_PAYLOAD);
        let big = Message::new(Verb::Tell).with_payload(vec![0u8; MAX_PAYLOAD + 1]);
        assert_eq!(encode(&big), Err(WireError::OversizedPayload(65536)));
        assert_eq!(wire_size(&big), Err(WireError::OversizedPayload(65536)));
    }

    #[test]
    fn option_limits() {
        let at_limit = Message::new(Verb::Ask).with_option(OptionType::VALUE, vec![1u8; 1021]);
        assert_eq!(wire_size(&at_limit).unwrap(), 11 + 1024);
        let over = Message::new(Verb::Ask).with_option(OptionType::VALUE, vec![1u8; 1022]);
        assert_eq!(encode(&over), Err(WireError::OversizedOptions(1025)));

        let mut many = Message::new(Verb::Ask);
        many.options = vec![TlvOption::new(OptionType::CID, Vec::new()); 256];
        assert_eq!(encode(&many), Err(WireError::TooManyOptions(256)));
    }

    #[test]
    fn one_more_payload_byte_is_one_more_wire_byte() {
        let m = Message::new(Verb::Observe).with_option(OptionType::TOPIC, b"temp".to_vec());
        let n = wire_size(&m).unwrap();
        let m2 = m.with_payload(vec![0u8]);
        assert_eq!(wire_size(&m2).unwrap(), n + 1);
    }

    #[test]
    fn short_input_is_truncated() {
        assert!(matches!(decode(&[0x10; 10]), Err(WireError::Truncated { .. })));
        assert!(matches!(decode(&[]), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn declared_option_without_bytes_is_truncated() {
        // header, one option declared, then only the payload length.
        let bytes = [0x10, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0];
        assert!(matches!(decode(&bytes), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn bad_version_and_trailing_bytes() {
        let mut bytes = encode(&Message::new(Verb::Ping)).unwrap();
        bytes[0] = 0x20;
        assert_eq!(decode(&bytes), Err(WireError::BadVersion(2)));

        let mut bytes = encode(&Message::new(Verb::Ping)).unwrap();
        bytes.push(0);
        assert_eq!(
            decode(&bytes),
            Err(WireError::LengthMismatch {
                declared: 11,
                actual: 12
            })
        );
    }

    #[test]
    fn oversized_declared_option_is_rejected_before_allocation() {
        let mut bytes = vec![0x10, 0, 0, 0, 0, 0, 0, 0, 1, 0x05, 0xff, 0xff];
        bytes.extend_from_slice(&[0, 0]);
        assert_eq!(decode(&bytes), Err(WireError::OversizedOptions(3 + 0xffff)));
    }

    #[test]
    fn duplicate_options_keep_their_order() {
        let m = Message::new(Verb::Tell)
            .with_qos(QoS::AtLeastOnce)
            .with_flags(Flags::RESPONSE)
            .with_option(OptionType::BALLOT, vec![2])
            .with_option(OptionType::VALUE, vec![9])
            .with_option(OptionType::BALLOT, vec![1]);
        let back = decode(&encode(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let ballots: Vec<_> = back.options_of(OptionType::BALLOT).map(|o| o.value[0]).collect();
        assert_eq!(ballots, [2, 1]);
    }
}

//! TCP framing.
//!
//! A frame is a 4-byte big-endian payload length followed by the payload, which
//! is the portable encoding of `(sender, (seq, body))`. The body is itself a
//! portable encoding and is embedded as-is; `seq` is written as an int64.

use std::io::{self, Read};

use crate::portable::{decode, encode, DecodeError, Value};

/// Largest payload a frame may announce.
pub const MAX_FRAME: u32 = 64 * 1024 * 1024;

const SEQ_LIMIT: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: String,
    pub seq: u64,
    pub body: Vec<u8>,
}

#[derive(Debug)]
pub enum FrameError {
    Io(io::Error),
    Decode(DecodeError),
}

impl From<DecodeError> for FrameError {
    fn from(e: DecodeError) -> Self {
        FrameError::Decode(e)
    }
}

impl Envelope {
    pub fn payload(&self) -> Vec<u8> {
        assert!(self.seq <= SEQ_LIMIT, "sequence number overflow");
        let mut out = Vec::with_capacity(self.body.len() + self.sender.len() + 20);
        out.push(4);
        out.push(3);
        out.extend_from_slice(&(self.sender.len() as u32).to_be_bytes());
        out.extend_from_slice(self.sender.as_bytes());
        out.push(4);
        out.push(2);
        out.extend_from_slice(&(self.seq as i64).to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, DecodeError> {
        let v = decode(bytes)?;
        let (sender, rest) = v.as_pair()?;
        let (seq, body) = rest.as_pair()?;
        let seq = seq.as_int()?;
        if seq < 0 {
            return Err(DecodeError::Shape {
                expected: "non-negative sequence number",
                found: seq.to_string(),
            });
        }
        Ok(Envelope {
            sender: sender.as_text()?.to_owned(),
            seq: seq as u64,
            body: encode(body),
        })
    }

    pub fn to_frame(&self) -> Vec<u8> {
        let payload = self.payload();
        let len = u32::try_from(payload.len())
            .ok()
            .filter(|&l| l <= MAX_FRAME)
            .expect("frame exceeds the 64 MiB limit");
        let mut out = Vec::with_capacity(payload.len() + 4);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&payload);
        out
    }
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Envelope>, FrameError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(DecodeError::Truncated(got).into()),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(FrameError::Io(e)),
        }
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(DecodeError::FrameTooLarge(len as u64).into());
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Decode(DecodeError::Truncated(4)),
        _ => FrameError::Io(e),
    })?;
    Ok(Some(Envelope::from_payload(&payload)?))
}

/// The envelope as a portable value, for inspection.
pub fn envelope_value(env: &Envelope) -> Result<Value, DecodeError> {
    decode(&env.payload())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portable::Portable;

    #[test]
    fn frame_layout_is_bit_exact() {
        let env = Envelope {
            sender: "a".into(),
            seq: 1,
            body: true.to_bytes(),
        };
        let frame = env.to_frame();
        let expected: Vec<u8> = [
            &[0, 0, 0, 19][..],
            &[4, 3, 0, 0, 0, 1, b'a'],
            &[4, 2, 0, 0, 0, 0, 0, 0, 0, 1],
            &[1, 1],
        ]
        .concat();
        assert_eq!(frame, expected);
        let v = envelope_value(&env).unwrap();
        assert_eq!(
            v,
            Value::pair(Value::text("a"), Value::pair(Value::Int(1), Value::Bool(true)))
        );
    }

    #[test]
    fn round_trip_through_reader() {
        let envs = [
            Envelope { sender: "client".into(), seq: 0, body: "k".to_string().to_bytes() },
            Envelope { sender: "client".into(), seq: 1, body: (5i64, true).to_bytes() },
        ];
        let stream: Vec<u8> = envs.iter().flat_map(Envelope::to_frame).collect();
        let mut r = &stream[..];
        for e in &envs {
            assert_eq!(read_frame(&mut r).unwrap().as_ref(), Some(e));
        }
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn oversized_prefix_is_a_decode_error() {
        let mut bytes = (MAX_FRAME + 1).to_be_bytes().to_vec();
        bytes.extend_from_slice(&[0; 16]);
        assert!(matches!(
            read_frame(&mut &bytes[..]),
            Err(FrameError::Decode(DecodeError::FrameTooLarge(_)))
        ));
    }

    #[test]
    fn truncated_frames_are_decode_errors() {
        let frame = Envelope { sender: "a".into(), seq: 0, body: ().to_bytes() }.to_frame();
        for cut in 1..frame.len() {
            assert!(
                matches!(read_frame(&mut &frame[..cut]), Err(FrameError::Decode(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn malformed_payloads_are_rejected() {
        for payload in [vec![4u8, 0, 0], vec![4, 3, 0, 0, 0, 1, b'a', 4, 2, 255, 255, 255, 255, 255, 255, 255, 255, 0]] {
            assert!(Envelope::from_payload(&payload).is_err());
        }
    }
}

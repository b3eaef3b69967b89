//! Canonical vertex encoding.
//!
//! Field order is fixed: kind, body, sender, seq, sorted parent ids. Every
//! field is prefixed with its length as an 8-byte big-endian integer. The
//! event id is the SHA-256 of this encoding, and signatures are computed
//! over the same bytes.

use thiserror::Error;

use super::{EventPayload, Vertex};
use crate::ids::{sha256, EventId, ReplicaId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input truncated while reading {0}")]
    Truncated(&'static str),
    #[error("field {field} has length {len}, expected {expected}")]
    BadLength {
        field: &'static str,
        len: u64,
        expected: &'static str,
    },
    #[error("event kind is not valid UTF-8")]
    KindNotUtf8,
    #[error("parent ids are not in ascending order")]
    UnsortedParents,
    #[error("{0} trailing bytes after envelope")]
    TrailingBytes(usize),
}

fn put_field(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u64).to_be_bytes());
    buf.extend_from_slice(bytes);
}

/// Encodes the hashed fields of a vertex. `parents` may be in any order;
/// they are sorted before encoding.
pub fn canonical_encoding(
    payload: &EventPayload,
    sender: &ReplicaId,
    seq: u64,
    parents: &[EventId],
) -> Vec<u8> {
    let mut sorted: Vec<&EventId> = parents.iter().collect();
    sorted.sort();
    let mut parent_bytes = Vec::with_capacity(sorted.len() * EventId::LEN);
    for p in sorted {
        parent_bytes.extend_from_slice(p.as_bytes());
    }

    let mut buf = Vec::with_capacity(5 * 8 + payload.kind.len() + payload.body.len() + 40 + parent_bytes.len());
    put_field(&mut buf, payload.kind.as_bytes());
    put_field(&mut buf, &payload.body);
    put_field(&mut buf, sender.as_bytes());
    put_field(&mut buf, &seq.to_be_bytes());
    put_field(&mut buf, &parent_bytes);
    buf
}

pub fn compute_event_id(
    payload: &EventPayload,
    sender: &ReplicaId,
    seq: u64,
    parents: &[EventId],
) -> EventId {
    EventId(sha256(&canonical_encoding(payload, sender, seq, parents)))
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated(what))?;
        let out = self.bytes.get(self.pos..end).ok_or(DecodeError::Truncated(what))?;
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> Result<u64, DecodeError> {
        let raw = self.take(8, what)?;
        Ok(u64::from_be_bytes(raw.try_into().expect("8 bytes")))
    }

    pub(crate) fn field(&mut self, what: &'static str) -> Result<&'a [u8], DecodeError> {
        let len = self.u64(what)?;
        let len = usize::try_from(len).map_err(|_| DecodeError::Truncated(what))?;
        self.take(len, what)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses a canonical encoding from the front of `reader` and rebuilds the
/// vertex, recomputing its id from the bytes read.
pub(crate) fn decode_vertex(reader: &mut Reader<'_>) -> Result<Vertex, DecodeError> {
    let kind = reader.field("kind")?;
    let kind = std::str::from_utf8(kind).map_err(|_| DecodeError::KindNotUtf8)?.to_owned();
    let body = reader.field("body")?.to_vec();

    let sender = reader.field("sender")?;
    let sender: [u8; 32] = sender.try_into().map_err(|_| DecodeError::BadLength {
        field: "sender",
        len: sender.len() as u64,
        expected: "32",
    })?;

    let seq = reader.field("seq")?;
    let seq: [u8; 8] = seq.try_into().map_err(|_| DecodeError::BadLength {
        field: "seq",
        len: seq.len() as u64,
        expected: "8",
    })?;

    let parent_bytes = reader.field("parents")?;
    if parent_bytes.len() % EventId::LEN != 0 {
        return Err(DecodeError::BadLength {
            field: "parents",
            len: parent_bytes.len() as u64,
            expected: "a multiple of 32",
        });
    }
    let parents: Vec<EventId> = parent_bytes
        .chunks_exact(EventId::LEN)
        .map(|c| EventId(c.try_into().expect("32-byte chunk")))
        .collect();
    if parents.windows(2).any(|w| w[0] > w[1]) {
        return Err(DecodeError::UnsortedParents);
    }

    Ok(Vertex::new(
        EventPayload::unchecked(kind, body),
        parents,
        ReplicaId(sender),
        u64::from_be_bytes(seq),
    ))
}

/// Decodes a complete canonical encoding (no trailing bytes allowed).
pub fn decode_canonical(bytes: &[u8]) -> Result<Vertex, DecodeError> {
    let mut reader = Reader::new(bytes);
    let vertex = decode_vertex(&mut reader)?;
    match reader.remaining() {
        0 => Ok(vertex),
        n => Err(DecodeError::TrailingBytes(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(body: &[u8]) -> EventPayload {
        EventPayload::new("m.room.message", body.to_vec()).unwrap()
    }

    #[test]
    fn layout_is_length_prefixed_big_endian() {
        let p = EventPayload::new("ab", vec![7]).unwrap();
        let sender = ReplicaId([1; 32]);
        let parent = EventId([2; 32]);
        let enc = canonical_encoding(&p, &sender, 5, &[parent]);

        let mut expected = Vec::new();
        expected.extend_from_slice(&2u64.to_be_bytes());
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&1u64.to_be_bytes());
        expected.push(7);
        expected.extend_from_slice(&32u64.to_be_bytes());
        expected.extend_from_slice(&[1; 32]);
        expected.extend_from_slice(&8u64.to_be_bytes());
        expected.extend_from_slice(&5u64.to_be_bytes());
        expected.extend_from_slice(&32u64.to_be_bytes());
        expected.extend_from_slice(&[2; 32]);
        assert_eq!(enc, expected);
    }

    #[test]
    fn parent_order_does_not_change_the_id() {
        let a = EventId([1; 32]);
        let b = EventId([9; 32]);
        let s = ReplicaId([3; 32]);
        assert_eq!(
            compute_event_id(&payload(b"x"), &s, 1, &[a, b]),
            compute_event_id(&payload(b"x"), &s, 1, &[b, a])
        );
    }

    #[test]
    fn deterministic_and_sensitive_to_every_field() {
        let s = ReplicaId([3; 32]);
        let parents = [EventId([1; 32])];
        let base = compute_event_id(&payload(b"hello"), &s, 1, &parents);
        assert_eq!(base, compute_event_id(&payload(b"hello"), &s, 1, &parents));

        assert_ne!(base, compute_event_id(&payload(b"hellp"), &s, 1, &parents));
        assert_ne!(base, compute_event_id(&payload(b"hello"), &ReplicaId([4; 32]), 1, &parents));
        assert_ne!(base, compute_event_id(&payload(b"hello"), &s, 2, &parents));
        assert_ne!(base, compute_event_id(&payload(b"hello"), &s, 1, &[EventId([2; 32])]));
    }

    #[test]
    fn single_bit_flip_changes_about_half_the_digest_bits() {
        // Avalanche spot-check over every bit position of a 64-byte body.
        let s = ReplicaId([3; 32]);
        let parents = [EventId([1; 32])];
        let body: Vec<u8> = (0..64u8).collect();
        let base = compute_event_id(&payload(&body), &s, 1, &parents);
        let mut total = 0u32;
        let mut flips = 0u32;
        for bit in 0..body.len() * 8 {
            let mut b = body.clone();
            b[bit / 8] ^= 1 << (bit % 8);
            let id = compute_event_id(&payload(&b), &s, 1, &parents);
            let diff: u32 = base.0.iter().zip(id.0.iter()).map(|(x, y)| (x ^ y).count_ones()).sum();
            assert!(diff > 0);
            total += diff;
            flips += 1;
        }
        let mean = total as f64 / flips as f64;
        assert!((mean - 128.0).abs() < 8.0, "mean differing bits {mean}");
    }

    #[test]
    fn decode_rebuilds_the_vertex() {
        let v = Vertex::new(payload(b"body"), vec![EventId([5; 32]), EventId([1; 32])], ReplicaId([3; 32]), 42);
        let enc = v.canonical_encoding();
        let back = decode_canonical(&enc).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn decode_rejects_malformed_input() {
        let v = Vertex::new(payload(b"body"), vec![EventId([5; 32])], ReplicaId([3; 32]), 42);
        let enc = v.canonical_encoding();
        assert!(matches!(decode_canonical(&enc[..enc.len() - 1]), Err(DecodeError::Truncated(_))));

        let mut extra = enc.clone();
        extra.push(0);
        assert_eq!(decode_canonical(&extra), Err(DecodeError::TrailingBytes(1)));

        let p = payload(b"");
        let mut buf = Vec::new();
        put_field(&mut buf, p.kind.as_bytes());
        put_field(&mut buf, &p.body);
        put_field(&mut buf, &[3; 32]);
        put_field(&mut buf, &1u64.to_be_bytes());
        let mut parents = vec![9u8; 32];
        parents.extend_from_slice(&[1u8; 32]);
        put_field(&mut buf, &parents);
        assert_eq!(decode_canonical(&buf), Err(DecodeError::UnsortedParents));
    }
}

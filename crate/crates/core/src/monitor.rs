//! Reference monitor: signing, membership and the checks every inbound
//! operation must pass before it reaches the event graph.
//!
//! Two signature schemes sit behind one interface. `KeyedHash` is an
//! HMAC-SHA256 stand-in where the verification key equals the signing
//! key; it is cheap and fine for simulations where every replica is
//! honest about its own key. `Ed25519` is a real public-key scheme.

use std::collections::BTreeMap;

use ed25519_dalek::{Signer, Verifier};
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::graph::{decode_vertex, AddOperation, DecodeError, Reader, DEFAULT_MAX_BODY};
use crate::ids::{sha256, ReplicaId};

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureScheme {
    #[default]
    KeyedHash,
    Ed25519,
}

#[derive(Clone)]
pub enum SigningKey {
    KeyedHash([u8; 32]),
    Ed25519(ed25519_dalek::SigningKey),
}

impl std::fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKey({:?})", self.verifying_key().fingerprint())
    }
}

impl SigningKey {
    pub fn from_seed(scheme: SignatureScheme, seed: [u8; 32]) -> Self {
        match scheme {
            SignatureScheme::KeyedHash => Self::KeyedHash(seed),
            SignatureScheme::Ed25519 => Self::Ed25519(ed25519_dalek::SigningKey::from_bytes(&seed)),
        }
    }

    pub fn scheme(&self) -> SignatureScheme {
        match self {
            Self::KeyedHash(_) => SignatureScheme::KeyedHash,
            Self::Ed25519(_) => SignatureScheme::Ed25519,
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        match self {
            Self::KeyedHash(k) => VerifyingKey::KeyedHash(*k),
            Self::Ed25519(k) => VerifyingKey::Ed25519(k.verifying_key()),
        }
    }

    pub fn replica_id(&self) -> ReplicaId {
        self.verifying_key().fingerprint()
    }

    pub fn sign(&self, msg: &[u8]) -> Vec<u8> {
        match self {
            Self::KeyedHash(k) => {
                let mut mac = HmacSha256::new_from_slice(k).expect("HMAC accepts any key length");
                mac.update(msg);
                mac.finalize().into_bytes().to_vec()
            }
            Self::Ed25519(k) => k.sign(msg).to_bytes().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyingKey {
    KeyedHash([u8; 32]),
    Ed25519(ed25519_dalek::VerifyingKey),
}

impl VerifyingKey {
    /// SHA-256 of a scheme tag and the key bytes.
    pub fn fingerprint(&self) -> ReplicaId {
        let mut buf = Vec::with_capacity(40);
        match self {
            Self::KeyedHash(k) => {
                buf.extend_from_slice(b"hmac");
                buf.extend_from_slice(k);
            }
            Self::Ed25519(k) => {
                buf.extend_from_slice(b"ed25519");
                buf.extend_from_slice(k.as_bytes());
            }
        }
        ReplicaId(sha256(&buf))
    }

    pub fn verify(&self, msg: &[u8], sig: &[u8]) -> bool {
        match self {
            Self::KeyedHash(k) => {
                let mut mac = HmacSha256::new_from_slice(k).expect("HMAC accepts any key length");
                mac.update(msg);
                mac.verify_slice(sig).is_ok()
            }
            Self::Ed25519(k) => {
                let Ok(sig) = ed25519_dalek::Signature::from_slice(sig) else { return false };
                k.verify(msg, &sig).is_ok()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectoryError {
    #[error("membership needs n > f, got n = {n}, f = {f}")]
    TooManyFaulty { n: usize, f: usize },
}

/// Static membership: the known replicas and their verification keys.
#[derive(Debug, Clone)]
pub struct MembershipDirectory {
    members: BTreeMap<ReplicaId, VerifyingKey>,
    f: usize,
    max_payload: usize,
}

impl MembershipDirectory {
    pub fn new(keys: impl IntoIterator<Item = VerifyingKey>, f: usize) -> Result<Self, DirectoryError> {
        let members: BTreeMap<_, _> = keys.into_iter().map(|k| (k.fingerprint(), k)).collect();
        if members.len() <= f {
            return Err(DirectoryError::TooManyFaulty { n: members.len(), f });
        }
        Ok(Self { members, f, max_payload: DEFAULT_MAX_BODY })
    }

    pub fn with_max_payload(mut self, max_payload: usize) -> Self {
        self.max_payload = max_payload;
        self
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn max_payload(&self) -> usize {
        self.max_payload
    }

    pub fn key(&self, id: &ReplicaId) -> Option<&VerifyingKey> {
        self.members.get(id)
    }

    pub fn contains(&self, id: &ReplicaId) -> bool {
        self.members.contains_key(id)
    }

    pub fn members(&self) -> impl Iterator<Item = &ReplicaId> {
        self.members.keys()
    }
}

/// An operation together with its sender and the sender's signature over
/// the vertex's canonical encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedEnvelope {
    pub op: AddOperation,
    pub sender: ReplicaId,
    pub signature: Vec<u8>,
}

pub fn sign_envelope(op: AddOperation, key: &SigningKey) -> SignedEnvelope {
    let signature = key.sign(&op.vertex().canonical_encoding());
    SignedEnvelope { op, sender: key.replica_id(), signature }
}

impl SignedEnvelope {
    /// `canonical encoding ∥ sender ∥ u64 BE signature length ∥ signature`.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut buf = self.op.vertex().canonical_encoding();
        buf.extend_from_slice(self.sender.as_bytes());
        buf.extend_from_slice(&(self.signature.len() as u64).to_be_bytes());
        buf.extend_from_slice(&self.signature);
        buf
    }

    /// Parses the wire form. The event id is recomputed from the decoded
    /// fields, since the wire form does not carry one.
    pub fn from_wire(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let vertex = decode_vertex(&mut r)?;
        let sender: [u8; 32] = r.take(32, "sender id")?.try_into().expect("32 bytes");
        let signature = r.field("signature")?.to_vec();
        match r.remaining() {
            0 => Ok(Self { op: AddOperation::new(vertex), sender: ReplicaId(sender), signature }),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Error)]
pub enum VerificationError {
    #[error("claimed event id does not match the recomputed hash")]
    BadEventId,
    #[error("signature does not verify under the sender's key")]
    BadSignature,
    #[error("sender is not a member")]
    UnknownSender,
    #[error("parent list contains duplicates")]
    DuplicateParents,
    #[error("parent list is empty")]
    EmptyParents,
    #[error("payload exceeds the size bound")]
    OversizedPayload,
    #[error("event lists itself as a parent")]
    SelfParent,
}

/// Runs every check on `env`. Stateless; does not consult any replica state.
pub fn verify_envelope(env: &SignedEnvelope, dir: &MembershipDirectory) -> Result<(), VerificationError> {
    let Some(key) = dir.key(&env.sender) else {
        return Err(VerificationError::UnknownSender);
    };
    let v = env.op.vertex();
    if v.payload.body.len() > dir.max_payload() {
        return Err(VerificationError::OversizedPayload);
    }
    if v.parents.is_empty() {
        return Err(VerificationError::EmptyParents);
    }
    let mut sorted = v.parents.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(VerificationError::DuplicateParents);
    }
    if v.parents.contains(&v.id) {
        return Err(VerificationError::SelfParent);
    }
    if v.sender != env.sender || !key.verify(&v.canonical_encoding(), &env.signature) {
        return Err(VerificationError::BadSignature);
    }
    if !v.id_is_valid() {
        return Err(VerificationError::BadEventId);
    }
    Ok(())
}

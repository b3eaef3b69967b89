//! Fixed-width identifiers shared by the graph, the reference monitor and the simulator.

use std::fmt;

use sha2::{Digest, Sha256};

macro_rules! digest_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; 32]);

        impl $name {
            pub const LEN: usize = 32;

            pub fn from_bytes(bytes: [u8; 32]) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; 32] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            /// First 16 hex characters, as used in trace logs.
            pub fn short(&self) -> String {
                hex::encode(&self.0[..8])
            }

            pub fn from_hex(s: &str) -> Option<Self> {
                let raw = hex::decode(s).ok()?;
                let bytes: [u8; 32] = raw.try_into().ok()?;
                Some(Self(bytes))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.short())
            }
        }
    };
}

digest_newtype!(
    /// Content hash of a vertex's canonical encoding.
    ///
    /// Uniqueness rests on the collision resistance of SHA-256: two distinct
    /// vertices are assumed never to share an id.
    EventId
);

digest_newtype!(
    /// Replica identity: the fingerprint of the replica's verification key.
    ReplicaId
);

digest_newtype!(
    /// SHA-256 over the sorted vertex ids and sorted edges of a state.
    StateDigest
);

pub(crate) fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

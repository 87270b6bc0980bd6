use core::fmt;

use serde::{Deserialize, Serialize};

use crate::hash::Digest;

/// SHA-256 of a stored object's bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentAddress(pub Digest);

impl ContentAddress {
    pub fn of(bytes: &[u8]) -> Self {
        ContentAddress(Digest::of(bytes))
    }

    pub fn verify(&self, bytes: &[u8]) -> bool {
        Digest::of(bytes) == self.0
    }

    pub fn digest(&self) -> &Digest {
        &self.0
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        Digest::from_hex(s).map(ContentAddress)
    }
}

impl fmt::Debug for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cid:{}", self.0.short())
    }
}

impl fmt::Display for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

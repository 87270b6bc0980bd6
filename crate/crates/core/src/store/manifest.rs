use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ContentAddress;
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Digest;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkManifest {
    pub total_size: u64,
    pub chunk_addresses: Vec<ContentAddress>,
}

impl ChunkManifest {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(12 + 32 * self.chunk_addresses.len());
        w.u64(self.total_size).u32(self.chunk_addresses.len() as u32);
        for a in &self.chunk_addresses {
            w.fixed(a.0.as_bytes());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let total_size = r.u64()?;
        let n = r.count(32)?;
        let chunk_addresses = (0..n).map(|_| r.array::<32>().map(|d| ContentAddress(Digest(d)))).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(ChunkManifest { total_size, chunk_addresses })
    }
}

use alloc::vec::Vec;

use serde::Serialize;

use super::tx::RecordTransaction;
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Digest;
use crate::keys::NodeId;
use crate::pbft::Proposal;
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_root: Digest,
    pub proposer: NodeId,
    /// View in which the block was first proposed.
    pub view: u64,
    pub timestamp_us: u64,
    /// Digest of the validator set and quorum rule the chain runs under.
    pub params: Digest,
}

impl BlockHeader {
    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.height)
            .fixed(self.prev_hash.as_bytes())
            .fixed(self.tx_root.as_bytes())
            .u32(self.proposer.0)
            .u64(self.view)
            .u64(self.timestamp_us)
            .fixed(self.params.as_bytes());
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            height: r.u64()?,
            prev_hash: Digest(r.array()?),
            tx_root: Digest(r.array()?),
            proposer: NodeId(r.u32()?),
            view: r.u64()?,
            timestamp_us: r.u64()?,
            params: Digest(r.array()?),
        })
    }

    pub fn digest(&self) -> Digest {
        let mut w = Writer::with_capacity(128);
        self.encode(&mut w);
        Digest::of(&w.finish())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<RecordTransaction>,
}

impl Block {
    pub fn digest(&self) -> Digest {
        self.header.digest()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn compute_tx_root(&self) -> Digest {
        let ids: Vec<Digest> = self.transactions.iter().map(|t| t.id).collect();
        merkle_root(&ids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        Proposal::encode(self, &mut w);
        w.finish()
    }

    /// Transaction payload bytes, as counted for throughput.
    pub fn payload_bytes(&self) -> usize {
        self.transactions.iter().map(RecordTransaction::encoded_len).sum()
    }
}

impl Proposal for Block {
    fn digest(&self) -> Digest {
        self.header.digest()
    }

    fn timestamp(&self) -> SimTime {
        SimTime(self.header.timestamp_us)
    }

    fn encode(&self, w: &mut Writer) {
        self.header.encode(w);
        w.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode(w);
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let header = BlockHeader::decode(r)?;
        let n = r.count(32 + 64)?;
        let transactions = (0..n).map(|_| RecordTransaction::decode(r)).collect::<Result<_, _>>()?;
        Ok(Block { header, transactions })
    }
}

/// Binary Merkle root over `leaves`; odd levels duplicate their last node,
/// a parent is SHA-256(left || right), and the empty tree is all zeros.
pub fn merkle_root(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return Digest::ZERO;
    }
    let mut level: Vec<Digest> = leaves.to_vec();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().expect("non-empty level"));
        }
        level = level.chunks(2).map(|pair| Digest::of_parts(&[pair[0].as_bytes(), pair[1].as_bytes()])).collect();
    }
    level[0]
}

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::block::{merkle_root, Block, BlockHeader};
use super::state::LedgerState;
use super::tx::RecordTransaction;
use super::{LedgerError, TxError, Violation, ViolationKind};
use crate::codec::{Reader, Writer};
use crate::hash::Digest;
use crate::keys::{NodeId, ValidatorSet};
use crate::pbft::{CommitCertificate, Proposal, QuorumConfig, QuorumRule};

const EXPORT_MAGIC: &[u8; 8] = b"EHRCHAIN";
const EXPORT_VERSION: u8 = 1;

/// Validator set and quorum rule a chain is bound to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainParams {
    pub validators: ValidatorSet,
    pub rule: QuorumRule,
}

impl ChainParams {
    pub fn digest(&self) -> Digest {
        let mut w = Writer::new();
        w.fixed(b"ehr-chain-params-v1");
        self.validators.encode(&mut w);
        w.u8(self.rule.code());
        Digest::of(&w.finish())
    }

    pub fn genesis(&self) -> Block {
        Block {
            header: BlockHeader {
                height: 0,
                prev_hash: Digest::ZERO,
                tx_root: Digest::ZERO,
                proposer: NodeId(0),
                view: 0,
                timestamp_us: 0,
                params: self.digest(),
            },
            transactions: Vec::new(),
        }
    }
}

/// A block plus the commit certificate that finalized it (none for genesis).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainEntry {
    pub block: Block,
    pub certificate: Option<CommitCertificate>,
}

impl ChainEntry {
    /// `(view, sequence)` of the commit.
    pub fn committed_at(&self) -> Option<(u64, u64)> {
        self.certificate.as_ref().map(|c| (c.view, c.seq))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Applied {
    Appended,
    Duplicate,
}

#[derive(Clone, Debug)]
pub struct BuiltBlock {
    pub block: Block,
    pub excluded: Vec<(Digest, TxError)>,
}

#[derive(Clone, Debug)]
pub struct Chain {
    params: ChainParams,
    params_digest: Digest,
    quorum: QuorumConfig,
    entries: Vec<ChainEntry>,
    index: BTreeMap<Digest, (u64, usize)>,
    state: LedgerState,
}

impl Chain {
    pub fn new(validators: ValidatorSet, rule: QuorumRule) -> Result<Self, LedgerError> {
        let quorum = QuorumConfig::new(validators.len(), rule).map_err(LedgerError::Params)?;
        let params = ChainParams { validators, rule };
        let genesis = params.genesis();
        Ok(Chain {
            params_digest: params.digest(),
            params,
            quorum,
            entries: alloc::vec![ChainEntry { block: genesis, certificate: None }],
            index: BTreeMap::new(),
            state: LedgerState::default(),
        })
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn quorum(&self) -> &QuorumConfig {
        &self.quorum
    }

    pub fn entries(&self) -> &[ChainEntry] {
        &self.entries
    }

    pub fn tip(&self) -> &Block {
        &self.entries[self.entries.len() - 1].block
    }

    pub fn height(&self) -> u64 {
        self.tip().height()
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip().digest()
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.entries.get(height as usize).map(|e| &e.block)
    }

    /// `(height, offset)` of a committed transaction.
    pub fn locate(&self, tx: &Digest) -> Option<(u64, usize)> {
        self.index.get(tx).copied()
    }

    pub fn transaction_count(&self) -> usize {
        self.index.len()
    }

    /// Orders the valid part of `pending` into the next block.
    pub fn build_block(
        &self,
        pending: &[RecordTransaction],
        proposer: NodeId,
        view: u64,
        timestamp_us: u64,
        max_txs: usize,
    ) -> Result<BuiltBlock, LedgerError> {
        let mut ordered: Vec<&RecordTransaction> = pending.iter().collect();
        ordered.sort_by_key(|tx| (tx.timestamp_ms(), tx.id));
        ordered.dedup_by(|a, b| a.id == b.id);
        let mut scratch = self.state.clone();
        let mut included = Vec::new();
        let mut excluded = Vec::new();
        for tx in ordered {
            if included.len() >= max_txs {
                break;
            }
            if self.index.contains_key(&tx.id) {
                excluded.push((tx.id, TxError::AlreadyCommitted));
                continue;
            }
            match scratch.apply(tx) {
                Ok(()) => included.push(tx.clone()),
                Err(e) => excluded.push((tx.id, e)),
            }
        }
        if included.is_empty() {
            return Err(LedgerError::EmptyBatch);
        }
        let ids: Vec<Digest> = included.iter().map(|t| t.id).collect();
        let block = Block {
            header: BlockHeader {
                height: self.height() + 1,
                prev_hash: self.tip_hash(),
                tx_root: merkle_root(&ids),
                proposer,
                view,
                timestamp_us,
                params: self.params_digest,
            },
            transactions: included,
        };
        Ok(BuiltBlock { block, excluded })
    }

    /// Checks `block` as the next block, given that consensus is in `view`.
    pub fn validate_next(&self, block: &Block, view: u64) -> Result<LedgerState, ViolationKind> {
        let h = &block.header;
        if h.height != self.height() + 1 {
            return Err(ViolationKind::HeightMismatch);
        }
        if h.prev_hash != self.tip_hash() {
            return Err(ViolationKind::PrevHashMismatch);
        }
        if h.view > view {
            return Err(ViolationKind::FutureView);
        }
        self.check_body(block, &self.state, &self.index)
    }

    fn check_body(&self, block: &Block, state: &LedgerState, index: &BTreeMap<Digest, (u64, usize)>) -> Result<LedgerState, ViolationKind> {
        let h = &block.header;
        if h.params != self.params_digest {
            return Err(ViolationKind::ParamsMismatch);
        }
        if h.proposer != self.quorum.primary(h.view) {
            return Err(ViolationKind::WrongProposer);
        }
        if block.transactions.is_empty() {
            return Err(ViolationKind::EmptyBlock);
        }
        if block.compute_tx_root() != h.tx_root {
            return Err(ViolationKind::TxRootMismatch);
        }
        let mut seen = BTreeSet::new();
        let mut next = state.clone();
        for tx in &block.transactions {
            if index.contains_key(&tx.id) || !seen.insert(tx.id) {
                return Err(ViolationKind::DuplicateTransaction);
            }
            next.apply(tx).map_err(ViolationKind::Transaction)?;
        }
        Ok(next)
    }

    fn check_certificate(&self, block: &Block, cert: &CommitCertificate) -> Result<(), ViolationKind> {
        let ok = cert.seq == block.height()
            && cert.digest == block.digest()
            && cert.view >= block.header.view
            && cert.verify(&self.params.validators, &self.quorum);
        if ok {
            Ok(())
        } else {
            Err(ViolationKind::BadCertificate)
        }
    }

    /// Appends a committed block. Re-delivery of a block already on the
    /// chain is a no-op.
    pub fn apply_committed(&mut self, block: Block, certificate: CommitCertificate) -> Result<Applied, LedgerError> {
        let height = block.height();
        if let Some(existing) = self.entries.get(height as usize) {
            return if existing.block.digest() == block.digest() {
                Ok(Applied::Duplicate)
            } else {
                Err(LedgerError::ChainMismatch { height })
            };
        }
        if height != self.height() + 1 {
            return Err(LedgerError::HeightGap { expected: self.height() + 1, got: height });
        }
        if block.header.prev_hash != self.tip_hash() {
            return Err(LedgerError::ChainMismatch { height });
        }
        self.check_certificate(&block, &certificate).map_err(|reason| LedgerError::Invalid(Violation { height, reason }))?;
        let next =
            self.check_body(&block, &self.state, &self.index).map_err(|reason| LedgerError::Invalid(Violation { height, reason }))?;
        for (i, tx) in block.transactions.iter().enumerate() {
            self.index.insert(tx.id, (height, i));
        }
        self.state = next;
        self.entries.push(ChainEntry { block, certificate: Some(certificate) });
        Ok(Applied::Appended)
    }

    /// Re-verifies every block from genesis: linkage, roots, certificates,
    /// signatures and the authorization of each transaction against the
    /// state as of its block.
    pub fn validate_chain(&self) -> Result<(), Violation> {
        replay(&self.params, &self.quorum, &self.entries).map(|_| ())
    }

    /// Access state rebuilt from the blocks alone, without validation.
    pub fn replay_state(&self) -> LedgerState {
        let mut state = LedgerState::default();
        for entry in &self.entries {
            for tx in &entry.block.transactions {
                state.apply_unchecked(tx);
            }
        }
        state
    }

    /// Concatenated block encodings, without certificates.
    pub fn blocks_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for e in &self.entries {
            Proposal::encode(&e.block, &mut w);
        }
        w.finish()
    }

    pub fn export(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(EXPORT_MAGIC).u8(EXPORT_VERSION);
        self.params.validators.encode(&mut w);
        w.u8(self.params.rule.code()).u32(self.entries.len() as u32);
        for e in &self.entries {
            let mut inner = Writer::new();
            Proposal::encode(&e.block, &mut inner);
            match &e.certificate {
                Some(c) => {
                    inner.u8(1);
                    c.encode(&mut inner);
                }
                None => {
                    inner.u8(0);
                }
            }
            w.bytes(&inner.finish());
        }
        w.finish()
    }

    /// Decodes and fully validates an exported chain.
    pub fn import(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        if r.take(EXPORT_MAGIC.len())? != EXPORT_MAGIC || r.u8()? != EXPORT_VERSION {
            return Err(LedgerError::Decode(crate::codec::DecodeError::Invalid("chain header")));
        }
        let validators = ValidatorSet::decode(&mut r)?;
        let rule = QuorumRule::from_code(r.u8()?).ok_or(LedgerError::Decode(crate::codec::DecodeError::Invalid("quorum rule")))?;
        let n = r.count(4)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let raw = r.bytes()?;
            let mut inner = Reader::new(raw);
            let block = <Block as Proposal>::decode(&mut inner)?;
            let certificate = if inner.bool()? { Some(CommitCertificate::decode(&mut inner)?) } else { None };
            inner.finish()?;
            entries.push(ChainEntry { block, certificate });
        }
        r.finish()?;
        let mut chain = Chain::new(validators, rule)?;
        let (state, index) = replay(&chain.params, &chain.quorum, &entries).map_err(LedgerError::Invalid)?;
        chain.entries = entries;
        chain.state = state;
        chain.index = index;
        Ok(chain)
    }

    #[doc(hidden)]
    pub fn entries_mut(&mut self) -> &mut Vec<ChainEntry> {
        &mut self.entries
    }
}

type Replayed = (LedgerState, BTreeMap<Digest, (u64, usize)>);

fn replay(params: &ChainParams, quorum: &QuorumConfig, entries: &[ChainEntry]) -> Result<Replayed, Violation> {
    let checker = Chain {
        params: params.clone(),
        params_digest: params.digest(),
        quorum: *quorum,
        entries: Vec::new(),
        index: BTreeMap::new(),
        state: LedgerState::default(),
    };
    let fail = |height: u64, reason| Violation { height, reason };
    let Some(first) = entries.first() else {
        return Err(fail(0, ViolationKind::BadGenesis));
    };
    if first.block != params.genesis() || first.certificate.is_some() {
        return Err(fail(0, ViolationKind::BadGenesis));
    }
    let mut state = LedgerState::default();
    let mut index = BTreeMap::new();
    let mut prev = first.block.digest();
    for (i, entry) in entries.iter().enumerate().skip(1) {
        let height = i as u64;
        let block = &entry.block;
        if block.header.height != height {
            return Err(fail(height, ViolationKind::HeightMismatch));
        }
        if block.header.prev_hash != prev {
            return Err(fail(height, ViolationKind::PrevHashMismatch));
        }
        let cert = entry.certificate.as_ref().ok_or(fail(height, ViolationKind::MissingCertificate))?;
        checker.check_certificate(block, cert).map_err(|r| fail(height, r))?;
        state = checker.check_body(block, &state, &index).map_err(|r| fail(height, r))?;
        for (offset, tx) in block.transactions.iter().enumerate() {
            index.insert(tx.id, (height, offset));
        }
        prev = block.digest();
    }
    Ok((state, index))
}

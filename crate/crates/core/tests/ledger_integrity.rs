use std::sync::OnceLock;

use healthledger_core::codec::{Reader, Writer};
use healthledger_core::hash::Digest;
use healthledger_core::keys::{cluster_keys, KeyPair, NodeId};
use healthledger_core::ledger::{AccessScope, Block, Chain, RecordTransaction, Role, TxDraft};
use healthledger_core::pbft::{signing_bytes, CommitCertificate, MessageKind, Proposal, QuorumRule};
use healthledger_core::rng::seeded;
use healthledger_core::store::ContentAddress;
use proptest::prelude::*;
use rand::Rng;

fn certify(nodes: &[KeyPair], block: &Block, quorum: usize) -> CommitCertificate {
    let (seq, digest) = (block.height(), block.digest());
    let votes = (0..quorum)
        .map(|i| {
            let id = NodeId::from(i);
            (id, nodes[i].sign(&signing_bytes(MessageKind::Commit, block.header.view, seq, &digest, id)))
        })
        .collect();
    CommitCertificate { view: block.header.view, seq, digest, votes }
}

/// A chain of roughly `target` transactions from a small patient and doctor
/// population: registrations, record stores, grants and revokes.
fn build_chain(target: usize, seed: u64) -> Chain {
    let mut rng = seeded(seed);
    let (nodes, set) = cluster_keys(4, &mut rng);
    let mut chain = Chain::new(set, QuorumRule::TwoThirds).unwrap();
    let patients: Vec<(String, KeyPair)> = (0..6).map(|i| (format!("patient-{i}"), KeyPair::generate(&mut rng))).collect();
    let doctors: Vec<(String, KeyPair)> = (0..3).map(|i| (format!("doctor-{i}"), KeyPair::generate(&mut rng))).collect();
    let mut ts = 1u64;
    let mut pending: Vec<RecordTransaction> = Vec::new();
    for (id, k) in &patients {
        pending.push(TxDraft::register(id, Role::Patient, k.public(), ts).sign(k));
        ts += 1;
    }
    for (id, k) in &doctors {
        pending.push(TxDraft::register(id, Role::Doctor, k.public(), ts).sign(k));
        ts += 1;
    }
    let commit = |chain: &mut Chain, pending: &mut Vec<RecordTransaction>, ts: u64| {
        let built = chain.build_block(pending, NodeId(0), 0, ts * 1000, 64).unwrap();
        let cert = certify(&nodes, &built.block, 3);
        chain.apply_committed(built.block, cert).unwrap();
        pending.clear();
    };
    commit(&mut chain, &mut pending, ts);
    while chain.transaction_count() < target {
        for _ in 0..50 {
            let (pid, pk) = &patients[rng.gen_range(0..patients.len())];
            let (did, _) = &doctors[rng.gen_range(0..doctors.len())];
            let draft = match rng.gen_range(0..4) {
                0 | 1 => {
                    let addr = ContentAddress::of(&ts.to_le_bytes());
                    TxDraft::store(pid, addr, Digest::of(&addr.0 .0), ts)
                }
                2 => TxDraft::grant(pid, did, AccessScope::AllRecords, ts),
                _ => TxDraft::revoke(pid, did, AccessScope::AllRecords, ts),
            };
            pending.push(draft.sign(pk));
            ts += 1;
        }
        commit(&mut chain, &mut pending, ts);
    }
    chain
}

fn block_bytes(block: &Block) -> Vec<u8> {
    let mut w = Writer::new();
    Proposal::encode(block, &mut w);
    w.finish()
}

/// Rebuilds the chain with one byte of one block's encoding altered.
/// `None` when the altered bytes no longer decode as a block.
fn mutated(chain: &Chain, height: usize, pos: usize, delta: u8) -> Option<Chain> {
    let mut bytes = block_bytes(&chain.entries()[height].block);
    let i = pos % bytes.len();
    bytes[i] ^= delta;
    let mut r = Reader::new(&bytes);
    let block = <Block as Proposal>::decode(&mut r).ok()?;
    r.finish().ok()?;
    let mut copy = chain.clone();
    copy.entries_mut()[height].block = block;
    Some(copy)
}

#[test]
fn incremental_state_equals_full_replay() {
    for seed in 0..3 {
        let chain = build_chain(300, seed);
        assert!(chain.validate_chain().is_ok());
        assert_eq!(&chain.replay_state(), chain.state());
        let imported = Chain::import(&chain.export()).unwrap();
        assert_eq!(imported.state(), chain.state());
    }
}

#[test]
fn every_byte_of_one_block_is_covered() {
    let chain = build_chain(120, 9);
    let height = 1;
    let len = block_bytes(&chain.entries()[height].block).len();
    for pos in 0..len {
        if let Some(bad) = mutated(&chain, height, pos, 0x01) {
            assert!(bad.validate_chain().is_err(), "byte {pos} of {len} undetected");
        }
    }
}

#[test]
fn export_mutations_are_rejected_on_import() {
    let chain = build_chain(120, 4);
    let bytes = chain.export();
    let mut rng = seeded(5);
    for _ in 0..300 {
        let mut copy = bytes.clone();
        let i = rng.gen_range(0..copy.len());
        copy[i] ^= rng.gen_range(1..=255u8);
        assert!(Chain::import(&copy).is_err(), "export byte {i} undetected");
    }
}

static SHARED: OnceLock<Chain> = OnceLock::new();

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn single_byte_block_mutation_is_detected(height in 1usize..4, pos in any::<usize>(), delta in 1u8..=255) {
        let chain = SHARED.get_or_init(|| build_chain(150, 2));
        if let Some(bad) = mutated(chain, height, pos, delta) {
            prop_assert!(bad.validate_chain().is_err());
        }
    }
}

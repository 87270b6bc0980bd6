use alloc::vec::Vec;

use super::*;
use crate::hash::Digest;
use crate::keys::{cluster_keys, KeyPair, NodeId};
use crate::pbft::{signing_bytes, CommitCertificate, MessageKind, QuorumRule};
use crate::rng::seeded;
use crate::store::ContentAddress;

struct Fixture {
    nodes: Vec<KeyPair>,
    chain: Chain,
    alice: KeyPair,
    bob: KeyPair,
}

fn certify(nodes: &[KeyPair], block: &Block, quorum: usize) -> CommitCertificate {
    let (seq, digest) = (block.height(), block.digest());
    let votes = nodes
        .iter()
        .enumerate()
        .take(quorum)
        .map(|(i, k)| {
            let id = NodeId::from(i);
            (id, k.sign(&signing_bytes(MessageKind::Commit, block.header.view, seq, &digest, id)))
        })
        .collect();
    CommitCertificate { view: block.header.view, seq, digest, votes }
}

fn fixture() -> Fixture {
    let mut rng = seeded(11);
    let (nodes, set) = cluster_keys(4, &mut rng);
    let chain = Chain::new(set, QuorumRule::TwoThirds).unwrap();
    Fixture { nodes, chain, alice: KeyPair::generate(&mut rng), bob: KeyPair::generate(&mut rng) }
}

impl Fixture {
    fn commit(&mut self, txs: &[RecordTransaction]) -> Block {
        let built = self.chain.build_block(txs, NodeId(0), 0, 1, 100).unwrap();
        let cert = certify(&self.nodes, &built.block, 3);
        self.chain.apply_committed(built.block.clone(), cert).unwrap();
        built.block
    }

    fn register_both(&mut self) {
        let a = TxDraft::register("alice", Role::Patient, self.alice.public(), 1).sign(&self.alice);
        let b = TxDraft::register("bob", Role::Doctor, self.bob.public(), 2).sign(&self.bob);
        self.commit(&[a, b]);
    }
}

#[test]
fn merkle_matches_hand_computation() {
    let l: Vec<Digest> = (0u8..3).map(|i| Digest::of(&[i])).collect();
    let h = |a: &Digest, b: &Digest| Digest::of_parts(&[a.as_bytes(), b.as_bytes()]);
    assert_eq!(merkle_root(&l[..1]), l[0]);
    assert_eq!(merkle_root(&l[..2]), h(&l[0], &l[1]));
    assert_eq!(merkle_root(&l), h(&h(&l[0], &l[1]), &h(&l[2], &l[2])));
    assert_eq!(merkle_root(&[]), Digest::ZERO);
}

#[test]
fn two_valid_transactions_form_next_block() {
    let f = fixture();
    let a = TxDraft::register("alice", Role::Patient, f.alice.public(), 1).sign(&f.alice);
    let b = TxDraft::register("bob", Role::Doctor, f.bob.public(), 2).sign(&f.bob);
    let built = f.chain.build_block(&[b.clone(), a.clone()], NodeId(0), 0, 1, 100).unwrap();
    assert_eq!(built.block.height(), 1);
    assert_eq!(built.block.transactions, [a.clone(), b.clone()]);
    assert_eq!(built.block.header.tx_root, merkle_root(&[a.id, b.id]));
    let again = f.chain.build_block(&[a, b], NodeId(0), 0, 1, 100).unwrap();
    assert_eq!(again.block.digest(), built.block.digest());
}

#[test]
fn forged_signature_is_excluded() {
    let mut f = fixture();
    f.register_both();
    let addr = ContentAddress::of(b"rec");
    let forged = TxDraft::store("alice", addr, Digest::of(b"env"), 3).sign(&f.bob);
    let good = TxDraft::grant("alice", "bob", AccessScope::AllRecords, 4).sign(&f.alice);
    let built = f.chain.build_block(&[forged.clone(), good.clone()], NodeId(0), 0, 1, 100).unwrap();
    assert_eq!(built.block.transactions, [good]);
    assert_eq!(built.excluded, [(forged.id, TxError::BadSignature)]);
    assert_eq!(f.chain.build_block(&[forged], NodeId(0), 0, 1, 100).unwrap_err(), LedgerError::EmptyBatch);
}

#[test]
fn grant_then_revoke_leaves_no_live_grant() {
    let mut f = fixture();
    f.register_both();
    let addr = ContentAddress::of(b"rec");
    f.commit(&[TxDraft::store("alice", addr, Digest::of(b"env"), 3).sign(&f.alice)]);
    f.commit(&[TxDraft::grant("alice", "bob", AccessScope::AllRecords, 4).sign(&f.alice)]);
    assert!(f.chain.state().authorize_read("bob", "alice", &addr).is_ok());
    f.commit(&[TxDraft::revoke("alice", "bob", AccessScope::AllRecords, 5).sign(&f.alice)]);
    assert!(f.chain.state().live_grant("alice", "bob", AccessScope::AllRecords).is_none());
    assert_eq!(f.chain.state().authorize_read("bob", "alice", &addr), Err(AccessDenied::NoGrant));
    assert_eq!(&f.chain.replay_state(), f.chain.state());
    assert!(f.chain.validate_chain().is_ok());
}

#[test]
fn wrong_prev_hash_is_chain_mismatch_and_redelivery_is_noop() {
    let mut f = fixture();
    let a = TxDraft::register("alice", Role::Patient, f.alice.public(), 1).sign(&f.alice);
    let first = f.commit(&[a]);
    let cert = certify(&f.nodes, &first, 3);
    assert_eq!(f.chain.apply_committed(first, cert), Ok(Applied::Duplicate));
    let b = TxDraft::register("bob", Role::Doctor, f.bob.public(), 2).sign(&f.bob);
    let mut block = f.chain.build_block(&[b], NodeId(0), 0, 1, 100).unwrap().block;
    block.header.prev_hash = Digest::of(b"elsewhere");
    let cert = certify(&f.nodes, &block, 3);
    assert_eq!(f.chain.apply_committed(block, cert), Err(LedgerError::ChainMismatch { height: 2 }));
}

#[test]
fn too_few_commit_votes_rejected() {
    let mut f = fixture();
    let a = TxDraft::register("alice", Role::Patient, f.alice.public(), 1).sign(&f.alice);
    let block = f.chain.build_block(&[a], NodeId(0), 0, 1, 100).unwrap().block;
    let cert = certify(&f.nodes, &block, 2);
    assert!(matches!(
        f.chain.apply_committed(block, cert),
        Err(LedgerError::Invalid(Violation { height: 1, reason: ViolationKind::BadCertificate }))
    ));
}

#[test]
fn tampering_and_reordering_are_detected() {
    let mut f = fixture();
    f.register_both();
    let addr = ContentAddress::of(b"rec");
    f.commit(&[TxDraft::store("alice", addr, Digest::of(b"env"), 3).sign(&f.alice)]);
    assert!(f.chain.validate_chain().is_ok());

    let mut tampered = f.chain.clone();
    tampered.entries_mut()[2].block.transactions[0].body.timestamp_ms += 1;
    assert_eq!(tampered.validate_chain().unwrap_err().height, 2);

    let mut reordered = f.chain.clone();
    reordered.entries_mut().swap(1, 2);
    assert_eq!(reordered.validate_chain().unwrap_err().reason, ViolationKind::HeightMismatch);
}

#[test]
fn export_import_round_trip() {
    let mut f = fixture();
    f.register_both();
    let bytes = f.chain.export();
    let back = Chain::import(&bytes).unwrap();
    assert_eq!(back.blocks_bytes(), f.chain.blocks_bytes());
    assert_eq!(back.state(), f.chain.state());
    assert!(Chain::import(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn doctor_record_scope() {
    let mut f = fixture();
    f.register_both();
    let a1 = ContentAddress::of(b"one");
    let a2 = ContentAddress::of(b"two");
    f.commit(&[
        TxDraft::store("alice", a1, Digest::of(b"e1"), 3).sign(&f.alice),
        TxDraft::store("alice", a2, Digest::of(b"e2"), 3).sign(&f.alice),
    ]);
    f.commit(&[TxDraft::grant("alice", "bob", AccessScope::Record(a1), 4).sign(&f.alice)]);
    let s = f.chain.state();
    assert!(s.authorize_read("bob", "alice", &a1).is_ok());
    assert_eq!(s.authorize_read("bob", "alice", &a2), Err(AccessDenied::NoGrant));
    assert!(s.authorize_read("alice", "alice", &a2).is_ok());
    // patients cannot grant on someone else's behalf
    let bad = TxDraft::grant("bob", "alice", AccessScope::AllRecords, 5).sign(&f.bob);
    assert_eq!(s.check(&bad), Err(TxError::Denied(AccessDenied::RoleViolation)));
}

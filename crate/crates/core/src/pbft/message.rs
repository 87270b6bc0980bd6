use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt::Debug;

use serde::Serialize;

use super::QuorumConfig;
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Digest;
use crate::keys::{KeyPair, NodeId, Signature, ValidatorSet};
use crate::time::SimTime;

const DOMAIN: &[u8] = b"pbft-v1";

/// A value replicas agree on.
pub trait Proposal: Clone + Debug {
    fn digest(&self) -> Digest;
    /// When the proposer created it.
    fn timestamp(&self) -> SimTime;
    fn encode(&self, w: &mut Writer);
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    PrePrepare,
    Prepare,
    Commit,
    ViewChange,
    NewView,
    Fetch,
    BlockReply,
}

impl MessageKind {
    fn code(self) -> u8 {
        self as u8
    }
}

/// Bytes every consensus signature covers.
pub fn signing_bytes(kind: MessageKind, view: u64, seq: u64, digest: &Digest, sender: NodeId) -> Vec<u8> {
    let mut w = Writer::with_capacity(DOMAIN.len() + 1 + 8 + 8 + 32 + 4);
    w.fixed(DOMAIN).u8(kind.code()).u64(view).u64(seq).fixed(digest.as_bytes()).u32(sender.0);
    w.finish()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitCertificate {
    pub view: u64,
    pub seq: u64,
    pub digest: Digest,
    pub votes: Vec<(NodeId, Signature)>,
}

impl CommitCertificate {
    pub fn verify(&self, validators: &ValidatorSet, quorum: &QuorumConfig) -> bool {
        verify_votes(MessageKind::Commit, self.view, self.seq, &self.digest, &self.votes, validators, quorum)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.view).u64(self.seq).fixed(self.digest.as_bytes()).u32(self.votes.len() as u32);
        for (node, sig) in &self.votes {
            w.u32(node.0).fixed(&sig.0);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let view = r.u64()?;
        let seq = r.u64()?;
        let digest = Digest(r.array()?);
        let n = r.count(4 + 64)?;
        let votes = (0..n).map(|_| Ok((NodeId(r.u32()?), Signature(r.array()?)))).collect::<Result<_, DecodeError>>()?;
        Ok(CommitCertificate { view, seq, digest, votes })
    }
}

/// A pre-prepare plus a quorum of matching prepares.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedCertificate<P> {
    pub pre_prepare: Message<P>,
    pub prepares: Vec<(NodeId, Signature)>,
}

impl<P: Proposal> PreparedCertificate<P> {
    pub fn view(&self) -> u64 {
        self.pre_prepare.view
    }

    pub fn seq(&self) -> u64 {
        self.pre_prepare.seq
    }

    pub fn digest(&self) -> Digest {
        self.pre_prepare.digest
    }

    pub fn proposal(&self) -> Option<&P> {
        match &self.pre_prepare.payload {
            Payload::PrePrepare(p) => Some(p),
            _ => None,
        }
    }

    pub fn verify(&self, validators: &ValidatorSet, quorum: &QuorumConfig) -> bool {
        let pp = &self.pre_prepare;
        pp.kind() == MessageKind::PrePrepare
            && pp.sender == quorum.primary(pp.view)
            && pp.verify(validators)
            && verify_votes(MessageKind::Prepare, pp.view, pp.seq, &pp.digest, &self.prepares, validators, quorum)
    }

    fn encode(&self, w: &mut Writer) {
        self.pre_prepare.encode(w);
        w.u32(self.prepares.len() as u32);
        for (node, sig) in &self.prepares {
            w.u32(node.0).fixed(&sig.0);
        }
    }
}

fn verify_votes(
    kind: MessageKind,
    view: u64,
    seq: u64,
    digest: &Digest,
    votes: &[(NodeId, Signature)],
    validators: &ValidatorSet,
    quorum: &QuorumConfig,
) -> bool {
    let mut seen = BTreeSet::new();
    for (node, sig) in votes {
        if !seen.insert(*node) {
            return false;
        }
        let bytes = signing_bytes(kind, view, seq, digest, *node);
        if !validators.verify(*node, &bytes, sig) {
            return false;
        }
    }
    seen.len() >= quorum.quorum
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewChangeBody<P> {
    pub last_committed: u64,
    pub commit_certificate: Option<CommitCertificate>,
    pub prepared: Vec<PreparedCertificate<P>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload<P> {
    PrePrepare(P),
    Prepare,
    Commit,
    ViewChange(ViewChangeBody<P>),
    NewView(Vec<Message<P>>),
    /// Request committed blocks from `seq` onward.
    Fetch,
    BlockReply(P, CommitCertificate),
}

/// A signed consensus message. `digest` binds the payload: the proposal's
/// digest for PrePrepare, Prepare, Commit and BlockReply, the digest of the
/// encoded body for ViewChange and NewView, and zero for Fetch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message<P> {
    pub view: u64,
    pub seq: u64,
    pub digest: Digest,
    pub sender: NodeId,
    pub signature: Signature,
    pub payload: Payload<P>,
}

impl<P: Proposal> Message<P> {
    pub fn kind(&self) -> MessageKind {
        match self.payload {
            Payload::PrePrepare(_) => MessageKind::PrePrepare,
            Payload::Prepare => MessageKind::Prepare,
            Payload::Commit => MessageKind::Commit,
            Payload::ViewChange(_) => MessageKind::ViewChange,
            Payload::NewView(_) => MessageKind::NewView,
            Payload::Fetch => MessageKind::Fetch,
            Payload::BlockReply(..) => MessageKind::BlockReply,
        }
    }

    /// Builds and signs a message, deriving the digest from the payload
    /// where it carries one.
    pub fn sign(view: u64, seq: u64, digest: Digest, payload: Payload<P>, keys: &KeyPair, sender: NodeId) -> Self {
        let digest = payload_digest(&payload).unwrap_or(digest);
        let mut msg = Message { view, seq, digest, sender, signature: Signature([0; 64]), payload };
        msg.resign(keys);
        msg
    }

    pub fn resign(&mut self, keys: &KeyPair) {
        let bytes = signing_bytes(self.kind(), self.view, self.seq, &self.digest, self.sender);
        self.signature = keys.sign(&bytes);
    }

    /// Signature valid and digest consistent with the payload.
    pub fn verify(&self, validators: &ValidatorSet) -> bool {
        if let Some(d) = payload_digest(&self.payload) {
            if d != self.digest {
                return false;
            }
        }
        let bytes = signing_bytes(self.kind(), self.view, self.seq, &self.digest, self.sender);
        validators.verify(self.sender, &bytes, &self.signature)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u8(self.kind().code()).u64(self.view).u64(self.seq).fixed(self.digest.as_bytes()).u32(self.sender.0).fixed(&self.signature.0);
        encode_payload(&self.payload, w);
    }

    pub fn encoded_len(&self) -> usize {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.len()
    }
}

fn encode_payload<P: Proposal>(payload: &Payload<P>, w: &mut Writer) {
    match payload {
        Payload::PrePrepare(p) => p.encode(w),
        Payload::Prepare | Payload::Commit | Payload::Fetch => {}
        Payload::ViewChange(body) => {
            w.u64(body.last_committed);
            match &body.commit_certificate {
                Some(c) => {
                    w.u8(1);
                    c.encode(w);
                }
                None => {
                    w.u8(0);
                }
            }
            w.u32(body.prepared.len() as u32);
            for cert in &body.prepared {
                cert.encode(w);
            }
        }
        Payload::NewView(vcs) => {
            w.u32(vcs.len() as u32);
            for vc in vcs {
                vc.encode(w);
            }
        }
        Payload::BlockReply(p, cert) => {
            p.encode(w);
            cert.encode(w);
        }
    }
}

fn payload_digest<P: Proposal>(payload: &Payload<P>) -> Option<Digest> {
    match payload {
        Payload::PrePrepare(p) | Payload::BlockReply(p, _) => Some(p.digest()),
        Payload::ViewChange(_) | Payload::NewView(_) => {
            let mut w = Writer::new();
            encode_payload(payload, &mut w);
            Some(Digest::of(&w.finish()))
        }
        Payload::Fetch => Some(Digest::ZERO),
        Payload::Prepare | Payload::Commit => None,
    }
}

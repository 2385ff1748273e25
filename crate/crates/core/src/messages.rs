//! Messages exchanged between nodes, beyond the core domain values.

use crate::crypto::Signature;
use crate::types::{
    BatchAttestationShare, BlockHeader, ComplaintVote, Digest, PartyId, ShardId, ShareRef,
    Transaction, TxId,
};

/// What a batch pull asks for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PullTarget {
    /// Consecutive batches of `term` starting at `seq` (secondary replication).
    Seq { term: u64, seq: u64, max: u16 },
    /// A specific batch by digest (assembler retrieval).
    Digest(Digest),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPullRequest {
    pub shard: ShardId,
    pub target: PullTarget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeaderPullRequest {
    pub from_number: u64,
}

/// A consenter's signature over a derived header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeaderSignature {
    pub number: u64,
    pub header_hash: Digest,
    pub signer: PartyId,
    pub sig: Signature,
}

/// Consenter to batchers: `shard` moved to `new_term`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermNotice {
    pub shard: ShardId,
    pub new_term: u64,
    /// Exactly the F+1 signers whose complaints triggered the change.
    pub complainers: Vec<PartyId>,
    /// Pending shares of the shard whose digest has not been collected.
    pub pending: Vec<BatchAttestationShare>,
}

/// Consenter to its own party's batcher: pending-list observations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingFeed {
    pub shard: ShardId,
    pub epoch: u64,
    /// Pending shares at least one full epoch old (orphan pointer candidates).
    pub aged: Vec<ShareRef>,
    /// Shares pruned by pointer votes before their digest was collected.
    pub pruned: Vec<ShareRef>,
}

/// One-byte router acknowledgement codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AckCode {
    Accepted = 0x00,
    RejectEmpty = 0x01,
    RejectOversized = 0x02,
    RejectBadSignature = 0x03,
    Unavailable = 0x04,
}

impl AckCode {
    pub fn from_byte(b: u8) -> Option<AckCode> {
        Some(match b {
            0x00 => AckCode::Accepted,
            0x01 => AckCode::RejectEmpty,
            0x02 => AckCode::RejectOversized,
            0x03 => AckCode::RejectBadSignature,
            0x04 => AckCode::Unavailable,
            _ => return None,
        })
    }
}

/// Router reply to a client submission.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ack {
    pub code: AckCode,
    pub party: PartyId,
    /// The shard the tx was delivered to; `None` for redirects and rejects.
    pub shard: Option<ShardId>,
    pub tx_id: TxId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockPullRequest {
    pub from_height: u64,
    pub max: u32,
}

/// A payload carried through the total-order port.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ordered {
    Share(BatchAttestationShare),
    Complaint(ComplaintVote),
    Reconfig(Transaction),
}

/// One agreed round of the total-order port.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round {
    pub number: u64,
    /// Epoch stamped by the sequencer; drives deterministic GC.
    pub epoch: u64,
    pub payloads: Vec<Ordered>,
}

/// Every frame type on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Transaction(Transaction),
    Batch(crate::types::Batch),
    Share(BatchAttestationShare),
    Complaint(ComplaintVote),
    Header(BlockHeader),
    BatchPullRequest(BatchPullRequest),
    HeaderPullRequest(HeaderPullRequest),
    HeaderSignature(HeaderSignature),
    TermNotice(TermNotice),
    PendingFeed(PendingFeed),
    Ack(Ack),
    Block(crate::types::Block),
    BlockPullRequest(BlockPullRequest),
    Submit(Ordered),
    Round(Round),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Transaction(_) => "transaction",
            Message::Batch(_) => "batch",
            Message::Share(_) => "share",
            Message::Complaint(_) => "complaint",
            Message::Header(_) => "header",
            Message::BatchPullRequest(_) => "batch-pull",
            Message::HeaderPullRequest(_) => "header-pull",
            Message::HeaderSignature(_) => "header-sig",
            Message::TermNotice(_) => "term-notice",
            Message::PendingFeed(_) => "pending-feed",
            Message::Ack(_) => "ack",
            Message::Block(_) => "block",
            Message::BlockPullRequest(_) => "block-pull",
            Message::Submit(_) => "submit",
            Message::Round(_) => "round",
        }
    }
}

//! Domain values shared by every node role.
//!
//! All values here are immutable after construction and cheap to clone:
//! transaction payloads are reference counted, everything else is small.

use std::cmp::Ordering;
use std::fmt;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::crypto::Signature;
use crate::hash::{compute_tx_id, merkle_root, sha256};

/// A 32-byte SHA-256 output. Rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

/// Identity of a transaction: SHA-256 of its payload.
pub type TxId = Digest;

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let raw = hex::decode(s).ok()?;
        let arr: [u8; 32] = raw.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..12])
    }
}

/// Index of a party in `[0, N)`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PartyId(pub u32);

/// Index of a shard in `[0, k)`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ShardId(pub u32);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ShardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// The primary batcher of `shard` during `term`: round robin offset by shard.
pub fn primary_party(shard: ShardId, term: u64, n_parties: u32) -> PartyId {
    let n = u64::from(n_parties);
    PartyId(((u64::from(shard.0) + term) % n) as u32)
}

/// A client's signature over a transaction payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClientSig {
    pub client: u32,
    pub sig: Signature,
}

/// An opaque client payload with its identity hash.
#[derive(Clone, PartialEq, Eq)]
pub struct Transaction {
    payload: Bytes,
    id: TxId,
    client_sig: Option<ClientSig>,
}

impl Transaction {
    pub fn new(payload: impl Into<Bytes>) -> Self {
        let payload = payload.into();
        let id = compute_tx_id(&payload);
        Transaction {
            payload,
            id,
            client_sig: None,
        }
    }

    pub fn with_signature(mut self, sig: ClientSig) -> Self {
        self.client_sig = Some(sig);
        self
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn id(&self) -> TxId {
        self.id
    }

    pub fn client_sig(&self) -> Option<&ClientSig> {
        self.client_sig.as_ref()
    }

    /// Payload plus signature bytes, as counted against batch byte limits.
    pub fn wire_size(&self) -> usize {
        self.payload.len() + if self.client_sig.is_some() { 68 } else { 0 }
    }
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transaction")
            .field("id", &self.id)
            .field("len", &self.payload.len())
            .field("signed", &self.client_sig.is_some())
            .finish()
    }
}

/// Identifies a batch: shard, proposing primary, term, and per-term sequence.
///
/// Ordered by `(shard, term, seq)`, with `primary` as the final tie-break.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct BatchId {
    pub shard: ShardId,
    pub primary: PartyId,
    pub term: u64,
    pub seq: u64,
}

impl BatchId {
    /// True when `self` comes strictly before `other` in the same shard.
    pub fn precedes(&self, other: &BatchId) -> bool {
        self.shard == other.shard && (self.term, self.seq) < (other.term, other.seq)
    }
}

impl Ord for BatchId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.shard, self.term, self.seq, self.primary).cmp(&(
            other.shard,
            other.term,
            other.seq,
            other.primary,
        ))
    }
}

impl PartialOrd for BatchId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/t{}/#{}",
            self.shard, self.primary, self.term, self.seq
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("a batch must contain at least one transaction")]
pub struct EmptyBatch;

/// An ordered transaction list owned by one `(shard, primary, term, seq)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub id: BatchId,
    pub txs: Vec<Transaction>,
    pub digest: Digest,
}

impl Batch {
    /// Builds a batch and computes its Merkle digest.
    pub fn new(id: BatchId, txs: Vec<Transaction>) -> Result<Batch, EmptyBatch> {
        let ids: Vec<TxId> = txs.iter().map(Transaction::id).collect();
        let digest = merkle_root(&ids)?;
        Ok(Batch { id, txs, digest })
    }

    /// Recomputes the Merkle root and compares it to the carried digest.
    pub fn digest_matches(&self) -> bool {
        let ids: Vec<TxId> = self.txs.iter().map(Transaction::id).collect();
        matches!(merkle_root(&ids), Ok(d) if d == self.digest)
    }

    pub fn byte_size(&self) -> usize {
        self.txs.iter().map(Transaction::wire_size).sum()
    }
}

/// Grouping key for attestation shares: batch identity plus digest.
///
/// Ordered by `(shard, term, seq, digest, primary)`, which is also the
/// order in which threshold groups are emitted by a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShareKey {
    pub batch_id: BatchId,
    pub digest: Digest,
}

impl Ord for ShareKey {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = &self.batch_id;
        let b = &other.batch_id;
        (a.shard, a.term, a.seq, self.digest, a.primary).cmp(&(
            b.shard,
            b.term,
            b.seq,
            other.digest,
            b.primary,
        ))
    }
}

impl PartialOrd for ShareKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A reference to one party's share: used for orphan pointers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShareRef {
    pub key: ShareKey,
    pub signer: PartyId,
}

/// One party's signed claim that a batch is persisted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchAttestationShare {
    pub batch_id: BatchId,
    pub digest: Digest,
    pub signer: PartyId,
    pub epoch: u64,
    pub orphan_ptrs: Vec<ShareRef>,
    pub sig: Signature,
}

impl BatchAttestationShare {
    pub fn key(&self) -> ShareKey {
        ShareKey {
            batch_id: self.batch_id,
            digest: self.digest,
        }
    }

    pub fn share_ref(&self) -> ShareRef {
        ShareRef {
            key: self.key(),
            signer: self.signer,
        }
    }

    /// Pointers must name the same shard and an earlier `(term, seq)`.
    pub fn pointers_well_formed(&self) -> bool {
        self.orphan_ptrs
            .iter()
            .all(|p| p.key.batch_id.precedes(&self.batch_id))
    }
}

/// A signed accusation against the primary of `shard` during `term`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplaintVote {
    pub shard: ShardId,
    pub term: u64,
    pub signer: PartyId,
    pub evidence_tx_id: Option<TxId>,
    pub sig: Signature,
}

/// A hash-chained header naming one batch digest, plus consenter signatures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockHeader {
    pub number: u64,
    pub prev_hash: Digest,
    pub batch_id: BatchId,
    pub digest: Digest,
    /// Sorted by party, at most one per party.
    pub sigs: Vec<(PartyId, Signature)>,
}

impl BlockHeader {
    pub fn unsigned(number: u64, prev_hash: Digest, batch_id: BatchId, digest: Digest) -> Self {
        BlockHeader {
            number,
            prev_hash,
            batch_id,
            digest,
            sigs: Vec::new(),
        }
    }

    /// SHA-256 of the header encoding without signatures.
    pub fn hash(&self) -> Digest {
        sha256(&crate::codec::header_body_bytes(self))
    }

    /// Inserts or replaces a signature, keeping `sigs` sorted by party.
    pub fn add_signature(&mut self, party: PartyId, sig: Signature) {
        match self.sigs.binary_search_by_key(&party, |(p, _)| *p) {
            Ok(i) => self.sigs[i].1 = sig,
            Err(i) => self.sigs.insert(i, (party, sig)),
        }
    }
}

/// A header joined with the batch it names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub batch: Batch,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(shard: u32, term: u64, seq: u64, primary: u32) -> BatchId {
        BatchId {
            shard: ShardId(shard),
            primary: PartyId(primary),
            term,
            seq,
        }
    }

    #[test]
    fn batch_id_orders_by_shard_term_seq() {
        let mut ids = vec![
            id(1, 0, 0, 0),
            id(0, 1, 0, 3),
            id(0, 0, 5, 1),
            id(0, 0, 2, 2),
        ];
        ids.sort();
        assert_eq!(
            ids,
            vec![
                id(0, 0, 2, 2),
                id(0, 0, 5, 1),
                id(0, 1, 0, 3),
                id(1, 0, 0, 0)
            ]
        );
    }

    #[test]
    fn precedes_requires_same_shard() {
        assert!(id(0, 0, 1, 0).precedes(&id(0, 0, 2, 0)));
        assert!(id(0, 0, 9, 0).precedes(&id(0, 1, 0, 1)));
        assert!(!id(0, 0, 1, 0).precedes(&id(1, 0, 2, 0)));
        assert!(!id(0, 1, 0, 0).precedes(&id(0, 1, 0, 0)));
    }

    #[test]
    fn primary_rotates_with_term_and_offsets_by_shard() {
        assert_eq!(primary_party(ShardId(0), 0, 4), PartyId(0));
        assert_eq!(primary_party(ShardId(0), 1, 4), PartyId(1));
        assert_eq!(primary_party(ShardId(3), 2, 4), PartyId(1));
    }

    #[test]
    fn tx_id_is_payload_hash() {
        let tx = Transaction::new(&b"abc"[..]);
        assert_eq!(tx.id(), sha256(b"abc"));
    }

    #[test]
    fn empty_batch_rejected() {
        assert_eq!(Batch::new(id(0, 0, 0, 0), vec![]), Err(EmptyBatch));
    }

    #[test]
    fn header_signatures_stay_sorted_and_unique() {
        let mut h = BlockHeader::unsigned(0, Digest::ZERO, id(0, 0, 0, 0), Digest::ZERO);
        h.add_signature(PartyId(2), Signature([2; 64]));
        h.add_signature(PartyId(0), Signature([0; 64]));
        h.add_signature(PartyId(2), Signature([9; 64]));
        assert_eq!(h.sigs.len(), 2);
        assert_eq!(h.sigs[0].0, PartyId(0));
        assert_eq!(h.sigs[1].1, Signature([9; 64]));
    }
}

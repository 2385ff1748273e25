//! Byte-exact wire codec.
//!
//! Frame layout: 4-byte big-endian payload length, 1-byte message tag,
//! payload. The length counts payload bytes only, so a bare tag is a 5-byte
//! frame. All integers are big-endian fixed width.

use bytes::Bytes;

use crate::crypto::Signature;
use crate::messages::{
    Ack, AckCode, BatchPullRequest, BlockPullRequest, HeaderPullRequest, HeaderSignature, Message,
    Ordered, PendingFeed, PullTarget, Round, TermNotice,
};
use crate::types::{
    Batch, BatchAttestationShare, BatchId, Block, BlockHeader, ClientSig, ComplaintVote, Digest,
    PartyId, ShardId, ShareKey, ShareRef, Transaction,
};

pub const FRAME_HEADER_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("incomplete: need {needed} bytes, have {have}")]
    Incomplete { needed: usize, have: usize },
    #[error("unknown type: tag {0:#04x}")]
    UnknownType(u8),
    #[error("oversized: declared {len} bytes, limit {max}")]
    Oversized { len: usize, max: usize },
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
}

/// Message tags. Tags 1-7 are the core wire types; the rest carry node
/// coordination traffic.
pub mod tag {
    pub const TRANSACTION: u8 = 1;
    pub const BATCH: u8 = 2;
    pub const SHARE: u8 = 3;
    pub const COMPLAINT: u8 = 4;
    pub const HEADER: u8 = 5;
    pub const BATCH_PULL: u8 = 6;
    pub const HEADER_PULL: u8 = 7;
    pub const HEADER_SIG: u8 = 8;
    pub const TERM_NOTICE: u8 = 9;
    pub const PENDING_FEED: u8 = 10;
    pub const ACK: u8 = 11;
    pub const BLOCK: u8 = 12;
    pub const BLOCK_PULL: u8 = 13;
    pub const SUBMIT: u8 = 14;
    pub const ROUND: u8 = 15;
}

/// A raw frame: tag plus undecoded payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame<'a> {
    pub tag: u8,
    pub payload: &'a [u8],
}

pub fn encode_raw_frame(tag: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.push(tag);
    out.extend_from_slice(payload);
    out
}

/// Splits one frame off the front of `buf`, returning it and the bytes consumed.
pub fn split_frame(buf: &[u8], max_payload: usize) -> Result<(Frame<'_>, usize), CodecError> {
    if buf.len() < 4 {
        return Err(CodecError::Incomplete {
            needed: FRAME_HEADER_LEN,
            have: buf.len(),
        });
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > max_payload {
        return Err(CodecError::Oversized {
            len,
            max: max_payload,
        });
    }
    let total = FRAME_HEADER_LEN + len;
    if buf.len() < total {
        return Err(CodecError::Incomplete {
            needed: total,
            have: buf.len(),
        });
    }
    Ok((
        Frame {
            tag: buf[4],
            payload: &buf[FRAME_HEADER_LEN..total],
        },
        total,
    ))
}

pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let mut payload = Vec::new();
    let tag = encode_message_body(msg, &mut payload);
    encode_raw_frame(tag, &payload)
}

/// Decodes one frame from the front of `buf`.
pub fn decode_frame(buf: &[u8], max_payload: usize) -> Result<(Message, usize), CodecError> {
    let (frame, used) = split_frame(buf, max_payload)?;
    let mut r = Reader::new(frame.payload);
    let msg = decode_message_body(frame.tag, &mut r)?;
    r.finish()?;
    Ok((msg, used))
}

fn encode_message_body(msg: &Message, w: &mut Vec<u8>) -> u8 {
    match msg {
        Message::Transaction(tx) => {
            tx.encode(w);
            tag::TRANSACTION
        }
        Message::Batch(b) => {
            b.encode(w);
            tag::BATCH
        }
        Message::Share(s) => {
            s.encode(w);
            tag::SHARE
        }
        Message::Complaint(c) => {
            c.encode(w);
            tag::COMPLAINT
        }
        Message::Header(h) => {
            h.encode(w);
            tag::HEADER
        }
        Message::BatchPullRequest(p) => {
            p.encode(w);
            tag::BATCH_PULL
        }
        Message::HeaderPullRequest(p) => {
            w.put_u64(p.from_number);
            tag::HEADER_PULL
        }
        Message::HeaderSignature(s) => {
            s.encode(w);
            tag::HEADER_SIG
        }
        Message::TermNotice(n) => {
            n.encode(w);
            tag::TERM_NOTICE
        }
        Message::PendingFeed(f) => {
            f.encode(w);
            tag::PENDING_FEED
        }
        Message::Ack(a) => {
            a.encode(w);
            tag::ACK
        }
        Message::Block(b) => {
            b.encode(w);
            tag::BLOCK
        }
        Message::BlockPullRequest(p) => {
            w.put_u64(p.from_height);
            w.put_u32(p.max);
            tag::BLOCK_PULL
        }
        Message::Submit(o) => {
            o.encode(w);
            tag::SUBMIT
        }
        Message::Round(r) => {
            r.encode(w);
            tag::ROUND
        }
    }
}

fn decode_message_body(t: u8, r: &mut Reader<'_>) -> Result<Message, CodecError> {
    Ok(match t {
        tag::TRANSACTION => Message::Transaction(Transaction::decode(r)?),
        tag::BATCH => Message::Batch(Batch::decode(r)?),
        tag::SHARE => Message::Share(BatchAttestationShare::decode(r)?),
        tag::COMPLAINT => Message::Complaint(ComplaintVote::decode(r)?),
        tag::HEADER => Message::Header(BlockHeader::decode(r)?),
        tag::BATCH_PULL => Message::BatchPullRequest(BatchPullRequest::decode(r)?),
        tag::HEADER_PULL => Message::HeaderPullRequest(HeaderPullRequest {
            from_number: r.u64()?,
        }),
        tag::HEADER_SIG => Message::HeaderSignature(HeaderSignature::decode(r)?),
        tag::TERM_NOTICE => Message::TermNotice(TermNotice::decode(r)?),
        tag::PENDING_FEED => Message::PendingFeed(PendingFeed::decode(r)?),
        tag::ACK => Message::Ack(Ack::decode(r)?),
        tag::BLOCK => Message::Block(Block::decode(r)?),
        tag::BLOCK_PULL => Message::BlockPullRequest(BlockPullRequest {
            from_height: r.u64()?,
            max: r.u32()?,
        }),
        tag::SUBMIT => Message::Submit(Ordered::decode(r)?),
        tag::ROUND => Message::Round(Round::decode(r)?),
        other => return Err(CodecError::UnknownType(other)),
    })
}

/// Bounds-checked cursor over a payload.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Malformed("payload shorter than its contents"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn digest(&mut self) -> Result<Digest, CodecError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }

    pub fn sig(&mut self) -> Result<Signature, CodecError> {
        Ok(Signature(self.take(64)?.try_into().unwrap()))
    }

    pub fn var_bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn flag(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CodecError::Malformed("flag byte not 0 or 1")),
        }
    }

    /// Count prefix for a list whose items are at least `min_item` bytes.
    fn count(&mut self, min_item: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(CodecError::Malformed("list count exceeds payload"));
        }
        Ok(n)
    }

    pub fn finish(&self) -> Result<(), CodecError> {
        if self.pos != self.buf.len() {
            return Err(CodecError::Malformed("trailing bytes after payload"));
        }
        Ok(())
    }
}

/// Big-endian writer helpers over `Vec<u8>`.
pub trait Writer {
    fn put_u8(&mut self, v: u8);
    fn put_u16(&mut self, v: u16);
    fn put_u32(&mut self, v: u32);
    fn put_u64(&mut self, v: u64);
    fn put_slice(&mut self, v: &[u8]);
    fn put_var_bytes(&mut self, v: &[u8]) {
        self.put_u32(v.len() as u32);
        self.put_slice(v);
    }
}

impl Writer for Vec<u8> {
    fn put_u8(&mut self, v: u8) {
        self.push(v);
    }
    fn put_u16(&mut self, v: u16) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn put_u32(&mut self, v: u32) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn put_u64(&mut self, v: u64) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn put_slice(&mut self, v: &[u8]) {
        self.extend_from_slice(v);
    }
}

/// Values with a fixed wire encoding.
pub trait Wire: Sized {
    fn encode(&self, w: &mut Vec<u8>);
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.encode(&mut v);
        v
    }

    /// Decodes a value that must span all of `bytes`.
    fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

impl Wire for BatchId {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u32(self.shard.0);
        w.put_u32(self.primary.0);
        w.put_u64(self.term);
        w.put_u64(self.seq);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(BatchId {
            shard: ShardId(r.u32()?),
            primary: PartyId(r.u32()?),
            term: r.u64()?,
            seq: r.u64()?,
        })
    }
}

impl Wire for Transaction {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_var_bytes(self.payload());
        match self.client_sig() {
            None => w.put_u8(0),
            Some(cs) => {
                w.put_u8(1);
                w.put_u32(cs.client);
                w.put_slice(&cs.sig.0);
            }
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let payload = Bytes::copy_from_slice(r.var_bytes()?);
        let tx = Transaction::new(payload);
        if r.flag()? {
            let client = r.u32()?;
            let sig = r.sig()?;
            Ok(tx.with_signature(ClientSig { client, sig }))
        } else {
            Ok(tx)
        }
    }
}

impl Wire for Batch {
    fn encode(&self, w: &mut Vec<u8>) {
        self.id.encode(w);
        w.put_slice(&self.digest.0);
        w.put_u32(self.txs.len() as u32);
        for tx in &self.txs {
            tx.encode(w);
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let id = BatchId::decode(r)?;
        let digest = r.digest()?;
        let n = r.count(5)?;
        let mut txs = Vec::with_capacity(n);
        for _ in 0..n {
            txs.push(Transaction::decode(r)?);
        }
        // The digest is carried, not recomputed: receivers check it.
        Ok(Batch { id, txs, digest })
    }
}

impl Wire for ShareRef {
    fn encode(&self, w: &mut Vec<u8>) {
        self.key.batch_id.encode(w);
        w.put_slice(&self.key.digest.0);
        w.put_u32(self.signer.0);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let batch_id = BatchId::decode(r)?;
        let digest = r.digest()?;
        Ok(ShareRef {
            key: ShareKey { batch_id, digest },
            signer: PartyId(r.u32()?),
        })
    }
}

fn encode_refs(refs: &[ShareRef], w: &mut Vec<u8>) {
    w.put_u32(refs.len() as u32);
    for p in refs {
        p.encode(w);
    }
}

fn decode_refs(r: &mut Reader<'_>) -> Result<Vec<ShareRef>, CodecError> {
    let n = r.count(60)?;
    (0..n).map(|_| ShareRef::decode(r)).collect()
}

/// Bytes covered by a share signature.
pub fn share_signing_bytes(
    batch_id: &BatchId,
    digest: &Digest,
    epoch: u64,
    orphan_ptrs: &[ShareRef],
    signer: PartyId,
) -> Vec<u8> {
    let mut w = Vec::with_capacity(96 + orphan_ptrs.len() * 60);
    w.put_slice(b"arma/share/v1");
    batch_id.encode(&mut w);
    w.put_slice(&digest.0);
    w.put_u64(epoch);
    encode_refs(orphan_ptrs, &mut w);
    w.put_u32(signer.0);
    w
}

/// Bytes covered by a complaint signature: term, shard, signer.
pub fn complaint_signing_bytes(term: u64, shard: ShardId, signer: PartyId) -> Vec<u8> {
    let mut w = Vec::with_capacity(32);
    w.put_slice(b"arma/complaint/v1");
    w.put_u64(term);
    w.put_u32(shard.0);
    w.put_u32(signer.0);
    w
}

/// Bytes covered by a consenter's header signature.
pub fn header_signing_bytes(header_hash: &Digest) -> Vec<u8> {
    let mut w = Vec::with_capacity(48);
    w.put_slice(b"arma/header/v1");
    w.put_slice(&header_hash.0);
    w
}

/// Bytes covered by a client's transaction signature.
pub fn client_signing_bytes(payload: &[u8]) -> Vec<u8> {
    let mut w = Vec::with_capacity(10 + payload.len());
    w.put_slice(b"arma/tx/v1");
    w.put_slice(payload);
    w
}

impl Wire for BatchAttestationShare {
    fn encode(&self, w: &mut Vec<u8>) {
        self.batch_id.encode(w);
        w.put_slice(&self.digest.0);
        w.put_u32(self.signer.0);
        w.put_u64(self.epoch);
        encode_refs(&self.orphan_ptrs, w);
        w.put_slice(&self.sig.0);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(BatchAttestationShare {
            batch_id: BatchId::decode(r)?,
            digest: r.digest()?,
            signer: PartyId(r.u32()?),
            epoch: r.u64()?,
            orphan_ptrs: decode_refs(r)?,
            sig: r.sig()?,
        })
    }
}

impl Wire for ComplaintVote {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u32(self.shard.0);
        w.put_u64(self.term);
        w.put_u32(self.signer.0);
        match &self.evidence_tx_id {
            None => w.put_u8(0),
            Some(d) => {
                w.put_u8(1);
                w.put_slice(&d.0);
            }
        }
        w.put_slice(&self.sig.0);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let shard = ShardId(r.u32()?);
        let term = r.u64()?;
        let signer = PartyId(r.u32()?);
        let evidence_tx_id = if r.flag()? { Some(r.digest()?) } else { None };
        Ok(ComplaintVote {
            shard,
            term,
            signer,
            evidence_tx_id,
            sig: r.sig()?,
        })
    }
}

/// Header encoding without signatures; its SHA-256 is the header hash.
pub fn header_body_bytes(h: &BlockHeader) -> Vec<u8> {
    let mut w = Vec::with_capacity(96);
    w.put_u64(h.number);
    w.put_slice(&h.prev_hash.0);
    h.batch_id.encode(&mut w);
    w.put_slice(&h.digest.0);
    w
}

impl Wire for BlockHeader {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_slice(&header_body_bytes(self));
        w.put_u32(self.sigs.len() as u32);
        for (p, s) in &self.sigs {
            w.put_u32(p.0);
            w.put_slice(&s.0);
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let number = r.u64()?;
        let prev_hash = r.digest()?;
        let batch_id = BatchId::decode(r)?;
        let digest = r.digest()?;
        let n = r.count(68)?;
        let mut sigs = Vec::with_capacity(n);
        for _ in 0..n {
            sigs.push((PartyId(r.u32()?), r.sig()?));
        }
        Ok(BlockHeader {
            number,
            prev_hash,
            batch_id,
            digest,
            sigs,
        })
    }
}

impl Wire for Block {
    fn encode(&self, w: &mut Vec<u8>) {
        self.header.encode(w);
        self.batch.encode(w);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Block {
            header: BlockHeader::decode(r)?,
            batch: Batch::decode(r)?,
        })
    }
}

impl Wire for BatchPullRequest {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u32(self.shard.0);
        match self.target {
            PullTarget::Seq { term, seq, max } => {
                w.put_u8(0);
                w.put_u64(term);
                w.put_u64(seq);
                w.put_u16(max);
            }
            PullTarget::Digest(d) => {
                w.put_u8(1);
                w.put_slice(&d.0);
            }
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let shard = ShardId(r.u32()?);
        let target = match r.u8()? {
            0 => PullTarget::Seq {
                term: r.u64()?,
                seq: r.u64()?,
                max: r.u16()?,
            },
            1 => PullTarget::Digest(r.digest()?),
            _ => return Err(CodecError::Malformed("unknown pull target")),
        };
        Ok(BatchPullRequest { shard, target })
    }
}

impl Wire for HeaderSignature {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u64(self.number);
        w.put_slice(&self.header_hash.0);
        w.put_u32(self.signer.0);
        w.put_slice(&self.sig.0);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(HeaderSignature {
            number: r.u64()?,
            header_hash: r.digest()?,
            signer: PartyId(r.u32()?),
            sig: r.sig()?,
        })
    }
}

impl Wire for TermNotice {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u32(self.shard.0);
        w.put_u64(self.new_term);
        w.put_u32(self.complainers.len() as u32);
        for p in &self.complainers {
            w.put_u32(p.0);
        }
        w.put_u32(self.pending.len() as u32);
        for s in &self.pending {
            s.encode(w);
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let shard = ShardId(r.u32()?);
        let new_term = r.u64()?;
        let n = r.count(4)?;
        let complainers = (0..n)
            .map(|_| r.u32().map(PartyId))
            .collect::<Result<_, _>>()?;
        let m = r.count(136)?;
        let pending = (0..m)
            .map(|_| BatchAttestationShare::decode(r))
            .collect::<Result<_, _>>()?;
        Ok(TermNotice {
            shard,
            new_term,
            complainers,
            pending,
        })
    }
}

impl Wire for PendingFeed {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u32(self.shard.0);
        w.put_u64(self.epoch);
        encode_refs(&self.aged, w);
        encode_refs(&self.pruned, w);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(PendingFeed {
            shard: ShardId(r.u32()?),
            epoch: r.u64()?,
            aged: decode_refs(r)?,
            pruned: decode_refs(r)?,
        })
    }
}

impl Wire for Ack {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u8(self.code as u8);
        w.put_u32(self.party.0);
        w.put_u32(self.shard.map_or(u32::MAX, |s| s.0));
        w.put_slice(&self.tx_id.0);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let code = AckCode::from_byte(r.u8()?).ok_or(CodecError::Malformed("unknown ack code"))?;
        let party = PartyId(r.u32()?);
        let shard = match r.u32()? {
            u32::MAX => None,
            s => Some(ShardId(s)),
        };
        Ok(Ack {
            code,
            party,
            shard,
            tx_id: r.digest()?,
        })
    }
}

impl Wire for Ordered {
    fn encode(&self, w: &mut Vec<u8>) {
        match self {
            Ordered::Share(s) => {
                w.put_u8(tag::SHARE);
                s.encode(w);
            }
            Ordered::Complaint(c) => {
                w.put_u8(tag::COMPLAINT);
                c.encode(w);
            }
            Ordered::Reconfig(tx) => {
                w.put_u8(tag::TRANSACTION);
                tx.encode(w);
            }
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.u8()? {
            tag::SHARE => Ordered::Share(BatchAttestationShare::decode(r)?),
            tag::COMPLAINT => Ordered::Complaint(ComplaintVote::decode(r)?),
            tag::TRANSACTION => Ordered::Reconfig(Transaction::decode(r)?),
            other => return Err(CodecError::UnknownType(other)),
        })
    }
}

impl Wire for Round {
    fn encode(&self, w: &mut Vec<u8>) {
        w.put_u64(self.number);
        w.put_u64(self.epoch);
        w.put_u32(self.payloads.len() as u32);
        for p in &self.payloads {
            p.encode(w);
        }
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let number = r.u64()?;
        let epoch = r.u64()?;
        let n = r.count(1)?;
        let payloads = (0..n)
            .map(|_| Ordered::decode(r))
            .collect::<Result<_, _>>()?;
        Ok(Round {
            number,
            epoch,
            payloads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messages::AckCode;

    const MAX: usize = 1 << 20;

    fn sample_batch() -> Batch {
        let txs = vec![
            Transaction::new(&b"one"[..]),
            Transaction::new(&b"two"[..]).with_signature(ClientSig {
                client: 3,
                sig: Signature([7; 64]),
            }),
        ];
        let id = BatchId {
            shard: ShardId(1),
            primary: PartyId(2),
            term: 3,
            seq: 4,
        };
        Batch::new(id, txs).unwrap()
    }

    #[test]
    fn bare_tag_is_five_bytes() {
        let frame = encode_raw_frame(tag::HEADER_PULL, &[]);
        assert_eq!(frame, vec![0, 0, 0, 0, tag::HEADER_PULL]);
        let (f, used) = split_frame(&frame, MAX).unwrap();
        assert_eq!(used, 5);
        assert!(f.payload.is_empty());
    }

    #[test]
    fn batch_round_trip() {
        let msg = Message::Batch(sample_batch());
        let bytes = encode_frame(&msg);
        let (back, used) = decode_frame(&bytes, MAX).unwrap();
        assert_eq!(back, msg);
        assert_eq!(used, bytes.len());
        assert_eq!(
            u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize,
            bytes.len() - 5
        );
    }

    #[test]
    fn oversized_checked_before_completeness() {
        let buf = [0x80, 0, 0, 0, tag::BATCH];
        assert_eq!(
            decode_frame(&buf, MAX),
            Err(CodecError::Oversized {
                len: 1 << 31,
                max: MAX
            })
        );
    }

    #[test]
    fn truncated_frame_is_incomplete() {
        let bytes = encode_frame(&Message::Batch(sample_batch()));
        for cut in [0, 3, 4, 5, bytes.len() - 1] {
            assert!(
                matches!(
                    decode_frame(&bytes[..cut], MAX),
                    Err(CodecError::Incomplete { .. })
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn unknown_tag_rejected() {
        let frame = encode_raw_frame(0xEE, &[1, 2, 3]);
        assert_eq!(
            decode_frame(&frame, MAX),
            Err(CodecError::UnknownType(0xEE))
        );
    }

    #[test]
    fn trailing_payload_bytes_are_malformed() {
        let mut payload = Vec::new();
        payload.put_u64(9);
        payload.push(0);
        let frame = encode_raw_frame(tag::HEADER_PULL, &payload);
        assert!(matches!(
            decode_frame(&frame, MAX),
            Err(CodecError::Malformed(_))
        ));
    }

    #[test]
    fn huge_list_count_does_not_allocate() {
        let mut payload = Vec::new();
        sample_batch().id.encode(&mut payload);
        payload.extend_from_slice(&[0; 32]);
        payload.put_u32(u32::MAX);
        let frame = encode_raw_frame(tag::BATCH, &payload);
        assert!(matches!(
            decode_frame(&frame, MAX),
            Err(CodecError::Malformed(_))
        ));
    }

    #[test]
    fn ack_codes_are_single_bytes() {
        let ack = Ack {
            code: AckCode::Unavailable,
            party: PartyId(1),
            shard: None,
            tx_id: Digest([1; 32]),
        };
        let bytes = encode_frame(&Message::Ack(ack));
        assert_eq!(bytes[5], 0x04);
        assert_eq!(decode_frame(&bytes, MAX).unwrap().0, Message::Ack(ack));
    }

    #[test]
    fn frames_concatenate() {
        let a = encode_frame(&Message::HeaderPullRequest(HeaderPullRequest {
            from_number: 1,
        }));
        let b = encode_frame(&Message::Batch(sample_batch()));
        let mut buf = a.clone();
        buf.extend_from_slice(&b);
        let (_, used) = decode_frame(&buf, MAX).unwrap();
        assert_eq!(used, a.len());
        let (m, _) = decode_frame(&buf[used..], MAX).unwrap();
        assert_eq!(m, Message::Batch(sample_batch()));
    }
}

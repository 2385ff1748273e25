use arma_core::codec::{decode_frame, encode_frame, CodecError, FRAME_HEADER_LEN};
use arma_core::crypto::Signature;
use arma_core::messages::*;
use arma_core::types::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX: usize = 64 << 20;

fn digest(r: &mut ChaCha8Rng) -> Digest {
    Digest(r.gen())
}

fn sig(r: &mut ChaCha8Rng) -> Signature {
    let mut s = [0u8; 64];
    r.fill(&mut s[..]);
    Signature(s)
}

fn batch_id(r: &mut ChaCha8Rng) -> BatchId {
    BatchId {
        shard: ShardId(r.gen_range(0..8)),
        primary: PartyId(r.gen_range(0..10)),
        term: r.gen(),
        seq: r.gen(),
    }
}

fn tx(r: &mut ChaCha8Rng) -> Transaction {
    let len = r.gen_range(1..300);
    let payload: Vec<u8> = (0..len).map(|_| r.gen()).collect();
    let t = Transaction::new(payload);
    if r.gen_bool(0.5) {
        t.with_signature(ClientSig {
            client: r.gen(),
            sig: sig(r),
        })
    } else {
        t
    }
}

fn batch(r: &mut ChaCha8Rng) -> Batch {
    let n = r.gen_range(1..6);
    Batch::new(batch_id(r), (0..n).map(|_| tx(r)).collect()).unwrap()
}

fn share_ref(r: &mut ChaCha8Rng) -> ShareRef {
    ShareRef {
        key: ShareKey {
            batch_id: batch_id(r),
            digest: digest(r),
        },
        signer: PartyId(r.gen_range(0..10)),
    }
}

fn share(r: &mut ChaCha8Rng) -> BatchAttestationShare {
    let ptrs = r.gen_range(0..4);
    BatchAttestationShare {
        batch_id: batch_id(r),
        digest: digest(r),
        signer: PartyId(r.gen_range(0..10)),
        epoch: r.gen(),
        orphan_ptrs: (0..ptrs).map(|_| share_ref(r)).collect(),
        sig: sig(r),
    }
}

fn complaint(r: &mut ChaCha8Rng) -> ComplaintVote {
    ComplaintVote {
        shard: ShardId(r.gen_range(0..8)),
        term: r.gen(),
        signer: PartyId(r.gen_range(0..10)),
        evidence_tx_id: r.gen_bool(0.5).then(|| digest(r)),
        sig: sig(r),
    }
}

fn header(r: &mut ChaCha8Rng) -> BlockHeader {
    let mut h = BlockHeader::unsigned(r.gen(), digest(r), batch_id(r), digest(r));
    for p in 0..r.gen_range(0..5) {
        h.add_signature(PartyId(p), sig(r));
    }
    h
}

fn ordered(r: &mut ChaCha8Rng) -> Ordered {
    match r.gen_range(0..3) {
        0 => Ordered::Share(share(r)),
        1 => Ordered::Complaint(complaint(r)),
        _ => Ordered::Reconfig(tx(r)),
    }
}

/// One random message of the `kind`-th variant.
fn message(kind: u8, r: &mut ChaCha8Rng) -> Message {
    match kind {
        0 => Message::Transaction(tx(r)),
        1 => Message::Batch(batch(r)),
        2 => Message::Share(share(r)),
        3 => Message::Complaint(complaint(r)),
        4 => Message::Header(header(r)),
        5 => Message::BatchPullRequest(BatchPullRequest {
            shard: ShardId(r.gen_range(0..8)),
            target: if r.gen_bool(0.5) {
                PullTarget::Seq {
                    term: r.gen(),
                    seq: r.gen(),
                    max: r.gen(),
                }
            } else {
                PullTarget::Digest(digest(r))
            },
        }),
        6 => Message::HeaderPullRequest(HeaderPullRequest {
            from_number: r.gen(),
        }),
        7 => Message::HeaderSignature(HeaderSignature {
            number: r.gen(),
            header_hash: digest(r),
            signer: PartyId(r.gen_range(0..10)),
            sig: sig(r),
        }),
        8 => Message::TermNotice(TermNotice {
            shard: ShardId(r.gen_range(0..8)),
            new_term: r.gen(),
            complainers: (0..r.gen_range(0..4)).map(PartyId).collect(),
            pending: (0..r.gen_range(0..4)).map(|_| share(r)).collect(),
        }),
        9 => Message::PendingFeed(PendingFeed {
            shard: ShardId(r.gen_range(0..8)),
            epoch: r.gen(),
            aged: (0..r.gen_range(0..4)).map(|_| share_ref(r)).collect(),
            pruned: (0..r.gen_range(0..4)).map(|_| share_ref(r)).collect(),
        }),
        10 => Message::Ack(Ack {
            code: [
                AckCode::Accepted,
                AckCode::RejectEmpty,
                AckCode::RejectOversized,
                AckCode::RejectBadSignature,
                AckCode::Unavailable,
            ][r.gen_range(0..5)],
            party: PartyId(r.gen_range(0..10)),
            shard: r.gen_bool(0.5).then(|| ShardId(r.gen_range(0..8))),
            tx_id: digest(r),
        }),
        11 => Message::Block(Block {
            header: header(r),
            batch: batch(r),
        }),
        12 => Message::BlockPullRequest(BlockPullRequest {
            from_height: r.gen(),
            max: r.gen(),
        }),
        13 => Message::Submit(ordered(r)),
        _ => Message::Round(Round {
            number: r.gen(),
            epoch: r.gen(),
            payloads: (0..r.gen_range(0..5)).map(|_| ordered(r)).collect(),
        }),
    }
}

proptest! {
    #[test]
    fn every_message_round_trips(kind in 0u8..15, seed in any::<u64>()) {
        let msg = message(kind, &mut ChaCha8Rng::seed_from_u64(seed));
        let frame = encode_frame(&msg);
        let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(len + FRAME_HEADER_LEN, frame.len());
        let (back, used) = decode_frame(&frame, MAX).unwrap();
        prop_assert_eq!(used, frame.len());
        prop_assert_eq!(back, msg);
    }

    #[test]
    fn every_strict_prefix_is_incomplete(kind in 0u8..15, seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let frame = encode_frame(&message(kind, &mut ChaCha8Rng::seed_from_u64(seed)));
        let at = cut.index(frame.len());
        let is_incomplete = matches!(decode_frame(&frame[..at], MAX), Err(CodecError::Incomplete { .. }));
        prop_assert!(is_incomplete);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = decode_frame(&bytes, 4096);
    }

    #[test]
    fn back_to_back_frames_decode_in_order(kinds in prop::collection::vec(0u8..15, 1..6), seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let msgs: Vec<Message> = kinds.iter().map(|&k| message(k, &mut r)).collect();
        let stream: Vec<u8> = msgs.iter().flat_map(encode_frame).collect();
        let mut at = 0;
        for m in &msgs {
            let (back, used) = decode_frame(&stream[at..], MAX).unwrap();
            prop_assert_eq!(&back, m);
            at += used;
        }
        prop_assert_eq!(at, stream.len());
    }
}

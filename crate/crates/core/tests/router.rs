use std::sync::Arc;

use arma_core::codec::client_signing_bytes;
use arma_core::crypto::{SignatureScheme, TestKeys};
use arma_core::messages::{AckCode, Message};
use arma_core::router::{RouterNode, RouterSinks, StandardValidator, Unavailable, RECONFIG_MARKER};
use arma_core::types::{ClientSig, PartyId, ShardId, Transaction};
use arma_core::Config;
use proptest::prelude::*;

#[derive(Default)]
struct Capture {
    out: Vec<(Option<ShardId>, Message)>,
}

impl RouterSinks for Capture {
    fn to_batcher(&mut self, shard: ShardId, msg: Message) -> Result<(), Unavailable> {
        self.out.push((Some(shard), msg));
        Ok(())
    }
    fn to_consenter(&mut self, msg: Message) -> Result<(), Unavailable> {
        self.out.push((None, msg));
        Ok(())
    }
}

fn crc32(data: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 == 1 {
                (crc >> 1) ^ 0xEDB8_8320
            } else {
                crc >> 1
            };
        }
    }
    !crc
}

fn routers(n: u32, shards: u32) -> (Vec<RouterNode>, TestKeys) {
    let keys = TestKeys::generate(SignatureScheme::Ed25519, 3, n, 1);
    let cfg = Config::new(n, (n - 1) / 3, shards);
    let v = Arc::new(StandardValidator::new(&cfg, Arc::new(keys.keyring())));
    let rs = (0..n)
        .map(|p| RouterNode::new(PartyId(p), &cfg, v.clone()))
        .collect();
    (rs, keys)
}

fn signed(keys: &TestKeys, payload: Vec<u8>) -> Transaction {
    let sig = keys.clients[0].sign(&client_signing_bytes(&payload));
    Transaction::new(payload).with_signature(ClientSig { client: 0, sig })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_router_picks_the_same_shard(
        payloads in prop::collection::vec(prop::collection::vec(1u8..=0xBF, 1..64), 1..20),
        shards in 1u32..9,
    ) {
        let (rs, keys) = routers(4, shards);
        for p in payloads {
            let tx = signed(&keys, p);
            let want = ShardId(crc32(&tx.id().0) % shards);
            for r in &rs {
                let mut sink = Capture::default();
                let ack = r.route(tx.clone(), &mut sink);
                prop_assert_eq!(ack.code, AckCode::Accepted);
                prop_assert_eq!(ack.shard, Some(want));
                prop_assert_eq!(ack.party, r.party);
                prop_assert_eq!(&sink.out, &vec![(Some(want), Message::Transaction(tx.clone()))]);
            }
        }
    }

    #[test]
    fn routing_ignores_history(
        payloads in prop::collection::vec(prop::collection::vec(1u8..=0xBF, 1..32), 2..20),
        rot in any::<prop::sample::Index>(),
    ) {
        let (rs, keys) = routers(4, 3);
        let txs: Vec<Transaction> = payloads.into_iter().map(|p| signed(&keys, p)).collect();
        let mut shuffled = txs.clone();
        shuffled.rotate_left(rot.index(txs.len()));
        let route_all = |txs: &[Transaction]| {
            let mut sink = Capture::default();
            let acks: Vec<_> = txs.iter().map(|t| rs[0].route(t.clone(), &mut sink)).collect();
            (acks, sink.out)
        };
        let (a, out_a) = route_all(&txs);
        let (b, out_b) = route_all(&shuffled);
        for (i, ack) in a.iter().enumerate() {
            let j = b.iter().position(|x| x.tx_id == ack.tx_id).unwrap();
            prop_assert_eq!(ack, &b[j]);
            prop_assert_eq!(&out_a[i], &out_b[j]);
        }
    }
}

#[test]
fn reconfig_bypasses_batchers_at_every_party() {
    let (rs, keys) = routers(7, 4);
    let tx = signed(&keys, vec![RECONFIG_MARKER, 1, 2, 3]);
    for r in &rs {
        let mut sink = Capture::default();
        let ack = r.route(tx.clone(), &mut sink);
        assert_eq!(ack.code, AckCode::Accepted);
        assert_eq!(ack.shard, None);
        assert_eq!(sink.out, vec![(None, Message::Transaction(tx.clone()))]);
    }
}

#[test]
fn forged_signature_is_rejected_everywhere() {
    let (rs, keys) = routers(4, 2);
    let mut tx = signed(&keys, b"pay 5".to_vec());
    let other = signed(&keys, b"pay 6".to_vec());
    tx = Transaction::new(tx.payload().to_vec()).with_signature(*other.client_sig().unwrap());
    for r in &rs {
        let mut sink = Capture::default();
        assert_eq!(
            r.route(tx.clone(), &mut sink).code,
            AckCode::RejectBadSignature
        );
        assert!(sink.out.is_empty());
    }
}

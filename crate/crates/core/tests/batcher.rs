use std::collections::VecDeque;
use std::sync::Arc;

use arma_core::batcher::{BatcherEvent, BatcherNode, ComplaintReason};
use arma_core::codec::{complaint_signing_bytes, share_signing_bytes};
use arma_core::crypto::{SignatureScheme, TestKeys};
use arma_core::messages::Message;
use arma_core::net::{Endpoint, Outbound};
use arma_core::router::{Reject, TxValidator};
use arma_core::types::{PartyId, ShardId, Transaction};
use arma_core::Config;

struct AcceptAll;

impl TxValidator for AcceptAll {
    fn check(&self, _: &Transaction) -> Result<(), Reject> {
        Ok(())
    }
}

/// Four batchers of shard 0 on an instant network. Messages for
/// consenters and routers are captured instead of delivered.
struct Shard {
    keys: TestKeys,
    nodes: Vec<BatcherNode>,
    down: Vec<bool>,
    captured: Vec<(PartyId, Outbound)>,
    now: u64,
}

impl Shard {
    fn new(cfg: Config) -> Self {
        let cfg = Arc::new(cfg);
        let keys = TestKeys::generate(SignatureScheme::Ed25519, 5, 4, 0);
        let nodes = (0..4)
            .map(|p| {
                BatcherNode::new(
                    PartyId(p),
                    ShardId(0),
                    cfg.clone(),
                    keys.parties[p as usize].clone(),
                    Arc::new(AcceptAll),
                    1,
                )
            })
            .collect();
        Shard {
            keys,
            nodes,
            down: vec![false; 4],
            captured: Vec::new(),
            now: 0,
        }
    }

    fn submit(&mut self, tx: Transaction) {
        for (p, n) in self.nodes.iter_mut().enumerate() {
            if !self.down[p] {
                n.on_tx(tx.clone(), self.now);
            }
        }
    }

    fn run_until(&mut self, end: u64, step: u64) {
        while self.now < end {
            self.now += step;
            let mut q = VecDeque::new();
            for (p, n) in self.nodes.iter_mut().enumerate() {
                if self.down[p] {
                    continue;
                }
                let mut out = arma_core::net::Outbox::new();
                n.on_tick(self.now, &mut out);
                q.extend(out.take().into_iter().map(|o| (PartyId(p as u32), o)));
            }
            while let Some((from, o)) = q.pop_front() {
                match o.to {
                    Endpoint::Batcher(to, _) if !self.down[to.0 as usize] => {
                        let mut out = arma_core::net::Outbox::new();
                        let src = Endpoint::Batcher(from, ShardId(0));
                        self.nodes[to.0 as usize].on_message(src, o.msg, self.now, &mut out);
                        q.extend(out.take().into_iter().map(|x| (to, x)));
                    }
                    Endpoint::Batcher(..) => {}
                    _ => self.captured.push((from, o)),
                }
            }
        }
    }

    /// Distinct messages each party sent to consenters, deduplicated across
    /// the per-consenter fan-out.
    fn to_consenters(&self) -> Vec<(PartyId, Message)> {
        let mut out: Vec<(PartyId, Message)> = Vec::new();
        for (from, o) in &self.captured {
            if o.to == Endpoint::Consenter(PartyId(0)) {
                out.push((*from, o.msg.clone()));
            }
        }
        out
    }
}

fn tx(i: u32) -> Transaction {
    Transaction::new(i.to_be_bytes().to_vec())
}

#[test]
fn secondaries_replicate_and_attest_every_batch() {
    let mut cfg = Config::new(4, 1, 1);
    cfg.batch_max_txs = 10;
    cfg.sample_size = 3;
    let mut s = Shard::new(cfg);
    for i in 0..95 {
        s.submit(tx(i));
    }
    s.run_until(200_000, 5_000);

    let heights: Vec<u64> = s.nodes.iter().map(|n| n.ledger().height(0)).collect();
    assert_eq!(heights, vec![10; 4]);
    let keyring = s.keys.keyring();
    let mut shares = [0usize; 4];
    for (from, m) in s.to_consenters() {
        let Message::Share(sh) = m else {
            panic!("unexpected {m:?}")
        };
        assert_eq!(sh.signer, from);
        let b = s.nodes[0].ledger().get(0, sh.batch_id.seq).unwrap();
        assert_eq!(sh.digest, b.digest);
        let bytes = share_signing_bytes(
            &sh.batch_id,
            &sh.digest,
            sh.epoch,
            &sh.orphan_ptrs,
            sh.signer,
        );
        assert!(keyring.verify_party(sh.signer, &bytes, &sh.sig));
        shares[from.0 as usize] += 1;
    }
    assert_eq!(shares, [10; 4]);
    for n in &s.nodes[1..] {
        for seq in 0..10 {
            assert_eq!(n.ledger().get(0, seq), s.nodes[0].ledger().get(0, seq));
        }
        assert!(n.tracking().is_empty());
    }
}

#[test]
fn silent_primary_draws_one_complaint_per_secondary() {
    let cfg = Config::new(4, 1, 1);
    let (forward, complaint) = (cfg.forward_timeout_us, cfg.complaint_timeout_us);
    let mut s = Shard::new(cfg);
    s.down[0] = true;
    s.submit(tx(1));
    s.run_until(forward - 10_000, 5_000);
    assert!(s.captured.is_empty());

    s.run_until(forward + 10_000, 5_000);
    let forwarded: Vec<PartyId> = s
        .captured
        .iter()
        .filter(|(_, o)| o.to == Endpoint::Router(PartyId(0)))
        .map(|(p, _)| *p)
        .collect();
    assert_eq!(forwarded, vec![PartyId(1), PartyId(2), PartyId(3)]);
    assert!(s.to_consenters().is_empty());

    s.run_until(complaint + 200_000, 5_000);
    let keyring = s.keys.keyring();
    let complaints: Vec<_> = s.to_consenters();
    assert_eq!(complaints.len(), 3);
    for (from, m) in complaints {
        let Message::Complaint(c) = m else {
            panic!("unexpected {m:?}")
        };
        assert_eq!((c.signer, c.term, c.shard), (from, 0, ShardId(0)));
        assert!(keyring.verify_party(from, &complaint_signing_bytes(0, ShardId(0), from), &c.sig));
    }
    for n in &mut s.nodes[1..] {
        let ev = n.take_events();
        assert!(ev.contains(&BatcherEvent::Complained {
            term: 0,
            reason: ComplaintReason::Overdue
        }));
    }
}

//! Assembler: joins quorum-signed headers with retrieved batches into a
//! committed block ledger.

mod index;
mod ledger;

pub use index::{BatchIndex, IngestError};
pub use ledger::{
    verify_block, verify_ledger, BlockFault, BlockLedger, FailureReason, LedgerFailure,
    LedgerReport,
};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::codec::Wire;
use crate::consenter::valid_signers;
use crate::crypto::Keyring;
use crate::messages::{BatchPullRequest, HeaderPullRequest, Message, PullTarget};
use crate::net::{Endpoint, Outbox};
use crate::storage::RecordLog;
use crate::types::{Batch, BatchId, Block, BlockHeader, Digest, PartyId, ShardId, TxId};
use crate::Config;

/// Blocks served per block-pull reply.
pub const BLOCK_BATCH: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommittedBlock {
    pub number: u64,
    pub header_hash: Digest,
    pub batch_id: BatchId,
    pub digest: Digest,
    pub tx_ids: Vec<TxId>,
}

#[derive(Clone, Copy, Debug)]
struct Fetch {
    shard: ShardId,
    attempt: u32,
    sent_at: u64,
}

pub struct AssemblerNode {
    pub party: PartyId,
    cfg: Arc<Config>,
    keyring: Arc<Keyring>,
    index: BatchIndex,
    ledger: BlockLedger,
    waiting: BTreeMap<u64, BlockHeader>,
    parked: RecordLog,
    fetches: BTreeMap<Digest, Fetch>,
    suspects: BTreeSet<(PartyId, ShardId)>,
    next_poll: u64,
    commits: Vec<CommittedBlock>,
    rejected_headers: u64,
}

impl AssemblerNode {
    pub fn new(party: PartyId, cfg: Arc<Config>, keyring: Arc<Keyring>) -> Self {
        AssemblerNode {
            party,
            cfg,
            keyring,
            index: BatchIndex::new(),
            ledger: BlockLedger::in_memory(),
            waiting: BTreeMap::new(),
            parked: RecordLog::in_memory(),
            fetches: BTreeMap::new(),
            suspects: BTreeSet::new(),
            next_poll: 0,
            commits: Vec::new(),
            rejected_headers: 0,
        }
    }

    /// Restores persisted state: parked headers are replayed on top of the
    /// ledger and index.
    pub fn restore(mut self, ledger: BlockLedger, index: BatchIndex, parked: RecordLog) -> Self {
        self.ledger = ledger;
        self.index = index;
        for rec in parked.iter() {
            if let Ok(h) = BlockHeader::from_bytes(rec) {
                if h.number >= self.ledger.height() {
                    self.waiting.insert(h.number, h);
                }
            }
        }
        self.parked = parked;
        self.try_commit();
        self
    }

    pub fn ledger(&self) -> &BlockLedger {
        &self.ledger
    }

    pub fn index(&self) -> &BatchIndex {
        &self.index
    }

    pub fn height(&self) -> u64 {
        self.ledger.height()
    }

    pub fn parked_len(&self) -> usize {
        self.waiting.len()
    }

    pub fn rejected_headers(&self) -> u64 {
        self.rejected_headers
    }

    pub fn suspects(&self) -> &BTreeSet<(PartyId, ShardId)> {
        &self.suspects
    }

    pub fn take_commits(&mut self) -> Vec<CommittedBlock> {
        std::mem::take(&mut self.commits)
    }

    /// `(shard, digest)` of every batch still needed by a parked header.
    pub fn missing_batches(&self) -> Vec<(ShardId, Digest)> {
        self.fetches.iter().map(|(d, f)| (f.shard, *d)).collect()
    }

    fn fetch_timeout(&self) -> u64 {
        self.cfg.pull_timeout_us * 2
    }

    pub fn on_message(&mut self, from: Endpoint, msg: Message, now: u64, out: &mut Outbox) {
        match msg {
            Message::Header(h) => self.on_header(h, now, out),
            Message::Batch(b) => self.on_batch(b, from, now, out),
            Message::BlockPullRequest(req) => {
                let max = u64::from(req.max.clamp(1, BLOCK_BATCH));
                for n in req.from_height..(req.from_height + max).min(self.height()) {
                    if let Some(b) = self.ledger.get(n) {
                        out.send(from, Message::Block(b));
                    }
                }
            }
            _ => {}
        }
    }

    /// First header number not yet held.
    fn next_needed(&self) -> u64 {
        let mut n = self.height();
        while self.waiting.contains_key(&n) {
            n += 1;
        }
        n
    }

    pub fn on_tick(&mut self, now: u64, out: &mut Outbox) {
        if now >= self.next_poll {
            self.next_poll = now + self.fetch_timeout();
            let from_number = self.next_needed();
            for p in 0..self.cfg.n_parties {
                out.send(
                    Endpoint::Consenter(PartyId(p)),
                    Message::HeaderPullRequest(HeaderPullRequest { from_number }),
                );
            }
        }
        let timeout = self.fetch_timeout();
        let due: Vec<Digest> = self
            .fetches
            .iter()
            .filter(|(_, f)| now >= f.sent_at + timeout)
            .map(|(d, _)| *d)
            .collect();
        for d in due {
            if let Some(f) = self.fetches.get_mut(&d) {
                f.attempt += 1;
            }
            self.request(d, now, out);
        }
    }

    pub fn on_header(&mut self, h: BlockHeader, now: u64, out: &mut Outbox) {
        if h.number < self.height() || self.waiting.contains_key(&h.number) {
            return;
        }
        if valid_signers(&h, &self.keyring) < self.cfg.quorum() {
            self.rejected_headers += 1;
            return;
        }
        let _ = self.parked.append(&h.to_bytes());
        let digest = h.digest;
        let shard = h.batch_id.shard;
        self.waiting.insert(h.number, h);
        if !self.index.contains(&digest) && !self.fetches.contains_key(&digest) {
            self.fetches.insert(
                digest,
                Fetch {
                    shard,
                    attempt: 0,
                    sent_at: now,
                },
            );
            self.request(digest, now, out);
        }
        self.try_commit();
    }

    /// The batcher to ask on the current attempt: round robin from our own
    /// party, skipping suspects while any unsuspected party remains.
    fn target(&self, shard: ShardId, attempt: u32) -> PartyId {
        let n = self.cfg.n_parties;
        let healthy: Vec<PartyId> = (0..n)
            .map(|i| PartyId((self.party.0 + i) % n))
            .filter(|p| !self.suspects.contains(&(*p, shard)))
            .collect();
        if healthy.is_empty() {
            PartyId((self.party.0 + attempt) % n)
        } else {
            healthy[attempt as usize % healthy.len()]
        }
    }

    fn request(&mut self, d: Digest, now: u64, out: &mut Outbox) {
        let Some(f) = self.fetches.get_mut(&d) else {
            return;
        };
        f.sent_at = now;
        let (shard, attempt) = (f.shard, f.attempt);
        let p = self.target(shard, attempt);
        out.send(
            Endpoint::Batcher(p, shard),
            Message::BatchPullRequest(BatchPullRequest {
                shard,
                target: PullTarget::Digest(d),
            }),
        );
    }

    pub fn on_batch(&mut self, b: Batch, from: Endpoint, now: u64, out: &mut Outbox) {
        let claimed = b.digest;
        if !self.fetches.contains_key(&claimed) {
            return;
        }
        match self.index.ingest(b) {
            Ok(_) => {
                self.fetches.remove(&claimed);
                self.try_commit();
            }
            Err(_) => {
                if let Endpoint::Batcher(p, s) = from {
                    self.suspects.insert((p, s));
                }
                if let Some(f) = self.fetches.get_mut(&claimed) {
                    f.attempt += 1;
                }
                self.request(claimed, now, out);
            }
        }
    }

    fn try_commit(&mut self) {
        while let Some(h) = self.waiting.get(&self.height()) {
            let Some(b) = self.index.get(&h.digest) else {
                break;
            };
            let h = self.waiting.remove(&self.height()).expect("present");
            // Re-proposed batches share a digest but not an id.
            let batch = Batch {
                id: h.batch_id,
                txs: b.txs.clone(),
                digest: b.digest,
            };
            let block = Block { header: h, batch };
            if verify_block(
                &block,
                self.height(),
                self.ledger.tip_hash(),
                &self.keyring,
                self.cfg.quorum(),
            )
            .is_err()
            {
                self.rejected_headers += 1;
                continue;
            }
            self.ledger.append(&block).expect("ledger write");
            self.commits.push(CommittedBlock {
                number: block.header.number,
                header_hash: block.header.hash(),
                batch_id: block.header.batch_id,
                digest: block.header.digest,
                tx_ids: block.batch.txs.iter().map(|t| t.id()).collect(),
            });
        }
    }

    /// Replicates a ledger prefix from peers, verifying every block.
    pub fn catch_up(&mut self, peers: &[&dyn BlockSource]) -> CatchUp {
        let mut report = CatchUp::default();
        'peers: for peer in peers {
            loop {
                let blocks = peer.blocks_from(self.height(), BLOCK_BATCH as usize);
                if blocks.is_empty() {
                    break;
                }
                for b in blocks {
                    if let Err(e) = verify_block(
                        &b,
                        self.height(),
                        self.ledger.tip_hash(),
                        &self.keyring,
                        self.cfg.quorum(),
                    ) {
                        report.dropped.push((peer.source_id(), e));
                        continue 'peers;
                    }
                    let _ = self.index.ingest(b.batch.clone());
                    self.ledger.append(&b).expect("ledger write");
                    report.appended += 1;
                }
            }
        }
        self.waiting.retain(|&n, _| n >= self.ledger.height());
        self.try_commit();
        report
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CatchUp {
    pub appended: u64,
    pub dropped: Vec<(PartyId, BlockFault)>,
}

/// A peer that can serve committed blocks.
pub trait BlockSource {
    fn source_id(&self) -> PartyId;
    fn blocks_from(&self, height: u64, max: usize) -> Vec<Block>;
}

impl BlockSource for AssemblerNode {
    fn source_id(&self) -> PartyId {
        self.party
    }

    fn blocks_from(&self, height: u64, max: usize) -> Vec<Block> {
        (height..self.height().min(height + max as u64))
            .filter_map(|n| self.ledger.get(n))
            .collect()
    }
}

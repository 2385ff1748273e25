//! Per-(party, shard) batcher: forms batches as primary, replicates and
//! attests them as secondary, watches for censorship, and carries batches
//! over when it becomes primary after a term change.

mod failover;
mod ledger;
mod sampling;

pub use failover::carry_over;
pub use ledger::{BatchLedger, LedgerError};
pub use sampling::{sample_verify, sample_verify_batch, Sampled};

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{complaint_signing_bytes, share_signing_bytes};
use crate::crypto::{Signature, SigningKey};
use crate::mempool::{BundlingPool, Limits, TrackingPool, TrackingTimers};
use crate::messages::{BatchPullRequest, Message, PendingFeed, PullTarget, TermNotice};
use crate::net::{Endpoint, Outbox};
use crate::router::TxValidator;
use crate::types::{
    primary_party, Batch, BatchAttestationShare, BatchId, ClientSig, ComplaintVote, Digest,
    PartyId, ShardId, ShareRef, Transaction, TxId,
};
use crate::Config;

/// How many batches a secondary asks for per pull. The next window is
/// requested once half of the current one has arrived.
pub const PULL_WINDOW: u16 = 64;
const MAX_BUFFERED: usize = 1024;
const MAX_STEPS_PER_TICK: usize = 256;

/// Scripted Byzantine behaviour that needs the node's cooperation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Misbehavior {
    /// Appends this many unsigned garbage txs to every batch it proposes.
    BogusPrimary { invalid_per_batch: usize },
    /// Sends a second share per batch naming a digest that does not exist.
    EquivocateShares,
    /// Periodically re-sends its old shares unchanged.
    StaleEpochReplay,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BatcherEvent {
    Proposed {
        id: BatchId,
        digest: Digest,
        reproposal: bool,
    },
    Persisted {
        id: BatchId,
        digest: Digest,
    },
    Complained {
        term: u64,
        reason: ComplaintReason,
    },
    TermAdopted {
        term: u64,
        primary: bool,
        carried_over: usize,
    },
    Resubmitted {
        share: ShareRef,
    },
    Halted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComplaintReason {
    Overdue,
    DigestMismatch,
    InvalidTx(TxId),
}

#[derive(Clone, Copy, Debug)]
struct Pull {
    /// End of the requested range, exclusive.
    end: u64,
    /// Last request or accepted batch, whichever is later.
    active_at: u64,
}

/// A pull the primary could not fully serve yet.
#[derive(Clone, Copy, Debug)]
struct LongPoll {
    term: u64,
    next: u64,
    end: u64,
}

pub struct BatcherNode {
    pub party: PartyId,
    pub shard: ShardId,
    cfg: Arc<Config>,
    key: SigningKey,
    validator: Arc<dyn TxValidator>,
    rng: ChaCha8Rng,
    term: u64,
    next_seq: u64,
    ledger: BatchLedger,
    bundling: BundlingPool,
    tracking: TrackingPool,
    /// Digests re-proposed by this node in some failover.
    reproposed: HashSet<Digest>,
    pull: Option<Pull>,
    buffered: BTreeMap<u64, Batch>,
    long_polls: BTreeMap<Endpoint, LongPoll>,
    complained_term: Option<u64>,
    halted_term: Option<u64>,
    notices: BTreeMap<u64, BTreeMap<PartyId, TermNotice>>,
    ptr_candidates: Vec<ShareRef>,
    voted: HashSet<ShareRef>,
    resubmits: BTreeMap<ShareRef, u32>,
    sent_shares: VecDeque<BatchAttestationShare>,
    last_replay_epoch: Option<u64>,
    misbehavior: Option<Misbehavior>,
    failed: bool,
    events: Vec<BatcherEvent>,
}

impl BatcherNode {
    pub fn new(
        party: PartyId,
        shard: ShardId,
        cfg: Arc<Config>,
        key: SigningKey,
        validator: Arc<dyn TxValidator>,
        seed: u64,
    ) -> Self {
        let rng_seed = seed ^ (u64::from(party.0) << 32) ^ u64::from(shard.0) ^ 0xba7c_4e25;
        BatcherNode {
            party,
            shard,
            bundling: BundlingPool::new(Limits::from_config(&cfg)),
            tracking: TrackingPool::new(TrackingTimers::from_config(&cfg)),
            cfg,
            key,
            validator,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            term: 0,
            next_seq: 0,
            ledger: BatchLedger::in_memory(),
            reproposed: HashSet::new(),
            pull: None,
            buffered: BTreeMap::new(),
            long_polls: BTreeMap::new(),
            complained_term: None,
            halted_term: None,
            notices: BTreeMap::new(),
            ptr_candidates: Vec::new(),
            voted: HashSet::new(),
            resubmits: BTreeMap::new(),
            sent_shares: VecDeque::new(),
            last_replay_epoch: None,
            misbehavior: None,
            failed: false,
            events: Vec::new(),
        }
    }

    /// Replaces the in-memory ledger, e.g. with a file-backed one.
    pub fn with_ledger(mut self, ledger: BatchLedger) -> Self {
        self.next_seq = ledger.height(self.term);
        self.ledger = ledger;
        self
    }

    pub fn set_misbehavior(&mut self, m: Option<Misbehavior>) {
        self.misbehavior = m;
    }

    pub fn term(&self) -> u64 {
        self.term
    }

    pub fn primary(&self) -> PartyId {
        primary_party(self.shard, self.term, self.cfg.n_parties)
    }

    pub fn is_primary(&self) -> bool {
        self.primary() == self.party
    }

    pub fn ledger(&self) -> &BatchLedger {
        &self.ledger
    }

    pub fn tracking(&self) -> &TrackingPool {
        &self.tracking
    }

    pub fn bundling(&self) -> &BundlingPool {
        &self.bundling
    }

    pub fn has_failed(&self) -> bool {
        self.failed
    }

    pub fn take_events(&mut self) -> Vec<BatcherEvent> {
        std::mem::take(&mut self.events)
    }

    /// True when the node holds no work that a timer could still advance.
    pub fn is_idle(&self) -> bool {
        self.bundling.is_empty() && self.tracking.is_empty() && self.buffered.is_empty()
    }

    pub fn on_message(&mut self, from: Endpoint, msg: Message, now: u64, out: &mut Outbox) {
        if self.failed {
            return;
        }
        match msg {
            Message::Transaction(tx) => self.on_tx(tx, now),
            Message::BatchPullRequest(req) => self.on_pull_request(from, req, out),
            Message::Batch(b) => self.on_batch(b, now, out),
            Message::TermNotice(n) => {
                if let Endpoint::Consenter(p) = from {
                    self.on_term_notice(p, n, now, out);
                }
            }
            Message::PendingFeed(f) if from == Endpoint::Consenter(self.party) => {
                self.on_pending_feed(f, now, out);
            }
            _ => {}
        }
    }

    pub fn on_tx(&mut self, tx: Transaction, now: u64) {
        if self.tracking.is_seen(&tx.id()) {
            return;
        }
        if self.is_primary() {
            // Backpressure drops the tx; clients and secondaries resend.
            let _ = self.bundling.insert(tx, now);
        } else {
            self.tracking.insert(tx, now);
        }
    }

    pub fn on_tick(&mut self, now: u64, out: &mut Outbox) {
        if self.failed {
            return;
        }
        let epoch = self.cfg.epoch_at(now);
        self.tracking.expire_seen(epoch);
        if self.is_primary() {
            for _ in 0..MAX_STEPS_PER_TICK {
                if !self.primary_step(now, out) {
                    break;
                }
            }
        } else {
            self.secondary_tick(now, out);
        }
        if self.misbehavior == Some(Misbehavior::StaleEpochReplay)
            && self.last_replay_epoch != Some(epoch)
        {
            self.last_replay_epoch = Some(epoch);
            for s in &self.sent_shares {
                out.to_consenters(self.cfg.n_parties, Message::Share(s.clone()));
            }
        }
    }

    /// Forms, persists and attests one batch. Returns false when idle.
    pub fn primary_step(&mut self, now: u64, out: &mut Outbox) -> bool {
        let Some(mut txs) = self.bundling.next_batch(now) else {
            return false;
        };
        txs.retain(|t| !self.tracking.is_seen(&t.id()));
        if txs.is_empty() {
            return true;
        }
        if let Some(Misbehavior::BogusPrimary { invalid_per_batch }) = self.misbehavior {
            for _ in 0..invalid_per_batch {
                let mut payload = vec![0u8; 24];
                self.rng.fill_bytes(&mut payload);
                payload[0] = 0x01;
                txs.push(Transaction::new(payload).with_signature(ClientSig {
                    client: 0,
                    sig: Signature([0; 64]),
                }));
            }
        }
        self.propose(txs, now, false, out);
        true
    }

    fn propose(&mut self, txs: Vec<Transaction>, now: u64, reproposal: bool, out: &mut Outbox) {
        let id = BatchId {
            shard: self.shard,
            primary: self.party,
            term: self.term,
            seq: self.next_seq,
        };
        let Ok(batch) = Batch::new(id, txs) else {
            return;
        };
        let epoch = self.cfg.epoch_at(now);
        for tx in &batch.txs {
            self.tracking.mark_seen(tx.id(), epoch);
        }
        let digest = batch.digest;
        if self.ledger.append(batch).is_err() {
            self.halt_on_storage_failure();
            return;
        }
        self.next_seq += 1;
        self.events.push(BatcherEvent::Proposed {
            id,
            digest,
            reproposal,
        });
        self.attest(id, digest, now, out);
        if self.misbehavior == Some(Misbehavior::EquivocateShares) {
            let fake = crate::hash::sha256(&digest.0);
            let s = self.sign_share(id, fake, now, Vec::new());
            out.to_consenters(self.cfg.n_parties, Message::Share(s));
        }
        self.serve_long_polls(out);
    }

    fn halt_on_storage_failure(&mut self) {
        self.failed = true;
        self.events.push(BatcherEvent::Halted);
    }

    fn sign_share(
        &self,
        batch_id: BatchId,
        digest: Digest,
        now: u64,
        orphan_ptrs: Vec<ShareRef>,
    ) -> BatchAttestationShare {
        let epoch = self.cfg.epoch_at(now);
        let sig = self.key.sign(&share_signing_bytes(
            &batch_id,
            &digest,
            epoch,
            &orphan_ptrs,
            self.party,
        ));
        BatchAttestationShare {
            batch_id,
            digest,
            signer: self.party,
            epoch,
            orphan_ptrs,
            sig,
        }
    }

    /// Signs a share for a persisted batch and sends it to every consenter.
    fn attest(&mut self, batch_id: BatchId, digest: Digest, now: u64, out: &mut Outbox) {
        let mut ptrs = Vec::new();
        for c in &self.ptr_candidates {
            if ptrs.len() >= self.cfg.orphan_ptr_cap {
                break;
            }
            if c.key.batch_id.precedes(&batch_id) && !self.voted.contains(c) {
                ptrs.push(*c);
            }
        }
        for p in &ptrs {
            self.voted.insert(*p);
        }
        let share = self.sign_share(batch_id, digest, now, ptrs);
        if self.misbehavior == Some(Misbehavior::StaleEpochReplay) {
            self.sent_shares.push_back(share.clone());
            if self.sent_shares.len() > 64 {
                self.sent_shares.pop_front();
            }
        }
        out.to_consenters(self.cfg.n_parties, Message::Share(share));
    }

    fn serve_long_polls(&mut self, out: &mut Outbox) {
        let waiting = std::mem::take(&mut self.long_polls);
        for (to, mut poll) in waiting {
            poll.next = self.serve_range(to, poll.term, poll.next, poll.end, out);
            if poll.next < poll.end {
                self.long_polls.insert(to, poll);
            }
        }
    }

    /// Sends stored batches `term/seq..end`, stopping at the first gap.
    /// Returns the first seq not sent.
    fn serve_range(&self, to: Endpoint, term: u64, seq: u64, end: u64, out: &mut Outbox) -> u64 {
        let mut s = seq;
        while s < end {
            match self.ledger.get(term, s) {
                Some(b) => out.send(to, Message::Batch(b.clone())),
                None => break,
            }
            s += 1;
        }
        s
    }

    pub fn on_pull_request(&mut self, from: Endpoint, req: BatchPullRequest, out: &mut Outbox) {
        if req.shard != self.shard {
            return;
        }
        match req.target {
            PullTarget::Seq { term, seq, max } => {
                let end = seq + u64::from(max.max(1));
                let next = self.serve_range(from, term, seq, end, out);
                if next == end || term != self.term || !self.is_primary() {
                    return;
                }
                // A pipelined request extends the open one; anything else
                // replaces it.
                let poll = match self.long_polls.get(&from) {
                    Some(p) if p.term == term && p.next <= seq && seq <= p.end => LongPoll {
                        term,
                        next: p.next,
                        end: end.max(p.end),
                    },
                    _ => LongPoll { term, next, end },
                };
                self.long_polls.insert(from, poll);
            }
            PullTarget::Digest(d) => {
                if let Some(b) = self.ledger.by_digest(&d) {
                    out.send(from, Message::Batch(b.clone()));
                }
            }
        }
    }

    fn secondary_tick(&mut self, now: u64, out: &mut Outbox) {
        let halted = self.halted_term == Some(self.term);
        if !halted {
            let reissue = match self.pull {
                None => true,
                Some(p) => now >= p.active_at + self.cfg.pull_timeout_us,
            };
            if reissue {
                let seq = self.ledger.height(self.term);
                self.send_pull(seq, now, out);
            }
        }
        let overdue = self.tracking.overdue(now);
        let router = Endpoint::Router(self.primary());
        for tx in overdue.forward {
            out.send(router, Message::Transaction(tx));
        }
        if overdue.complaint_due {
            self.complain(ComplaintReason::Overdue, out);
        }
    }

    /// Requests `PULL_WINDOW` batches of the current term from `seq`.
    fn send_pull(&mut self, seq: u64, now: u64, out: &mut Outbox) {
        self.pull = Some(Pull {
            end: seq + u64::from(PULL_WINDOW),
            active_at: now,
        });
        out.send(
            Endpoint::Batcher(self.primary(), self.shard),
            Message::BatchPullRequest(BatchPullRequest {
                shard: self.shard,
                target: PullTarget::Seq {
                    term: self.term,
                    seq,
                    max: PULL_WINDOW,
                },
            }),
        );
    }

    /// At most one complaint per term.
    fn complain(&mut self, reason: ComplaintReason, out: &mut Outbox) {
        if self.complained_term == Some(self.term) {
            return;
        }
        self.complained_term = Some(self.term);
        let evidence_tx_id = match reason {
            ComplaintReason::InvalidTx(id) => Some(id),
            _ => None,
        };
        let sig = self
            .key
            .sign(&complaint_signing_bytes(self.term, self.shard, self.party));
        out.to_consenters(
            self.cfg.n_parties,
            Message::Complaint(ComplaintVote {
                shard: self.shard,
                term: self.term,
                signer: self.party,
                evidence_tx_id,
                sig,
            }),
        );
        self.events.push(BatcherEvent::Complained {
            term: self.term,
            reason,
        });
    }

    pub fn on_batch(&mut self, batch: Batch, now: u64, out: &mut Outbox) {
        if batch.id.shard != self.shard
            || batch.id.term != self.term
            || self.is_primary()
            || batch.id.primary != self.primary()
            || self.halted_term == Some(self.term)
        {
            return;
        }
        let height = self.ledger.height(self.term);
        if batch.id.seq < height {
            return;
        }
        if batch.id.seq > height {
            if self.buffered.len() < MAX_BUFFERED {
                self.buffered.insert(batch.id.seq, batch);
            }
            return;
        }
        self.process_pulled(batch, now, out);
        loop {
            let h = self.ledger.height(self.term);
            let Some(next) = self.buffered.remove(&h) else {
                break;
            };
            if self.halted_term == Some(self.term) || self.failed {
                break;
            }
            self.process_pulled(next, now, out);
        }
        self.buffered
            .retain(|&s, _| s >= self.ledger.height(self.term));
        if let Some(p) = self.pull.as_mut() {
            p.active_at = now;
            let height = self.ledger.height(self.term);
            if height + u64::from(PULL_WINDOW / 2) >= p.end
                && self.halted_term != Some(self.term)
                && !self.failed
            {
                let from = p.end.max(height);
                self.send_pull(from, now, out);
            }
        }
    }

    fn process_pulled(&mut self, batch: Batch, now: u64, out: &mut Outbox) {
        if !batch.digest_matches() {
            self.reject_batch(ComplaintReason::DigestMismatch, out);
            return;
        }
        if let Sampled::Invalid(id) = sample_verify(
            &batch.txs,
            self.cfg.sample_size,
            &mut self.rng,
            self.validator.as_ref(),
        ) {
            self.reject_batch(ComplaintReason::InvalidTx(id), out);
            return;
        }
        let (id, digest) = (batch.id, batch.digest);
        self.tracking
            .remove_batch(&batch.txs, self.cfg.epoch_at(now));
        if self.ledger.append(batch).is_err() {
            self.halt_on_storage_failure();
            return;
        }
        self.events.push(BatcherEvent::Persisted { id, digest });
        self.attest(id, digest, now, out);
    }

    fn reject_batch(&mut self, reason: ComplaintReason, out: &mut Outbox) {
        self.halted_term = Some(self.term);
        self.buffered.clear();
        self.pull = None;
        self.complain(reason, out);
    }

    pub fn on_term_notice(&mut self, from: PartyId, n: TermNotice, now: u64, out: &mut Outbox) {
        if n.shard != self.shard || n.new_term <= self.term {
            return;
        }
        let term = n.new_term;
        let senders = self.notices.entry(term).or_default();
        senders.insert(from, n);
        let agreeing = {
            let mut found = None;
            for a in senders.values() {
                let count = senders.values().filter(|b| *b == a).count();
                if count >= self.cfg.threshold() {
                    found = Some(a.clone());
                    break;
                }
            }
            found
        };
        if let Some(notice) = agreeing {
            self.notices.retain(|&t, _| t > term);
            self.on_term_change(term, &notice.pending, now, out);
        }
    }

    /// Adopts `new_term`; a node that becomes primary carries over batches.
    pub fn on_term_change(
        &mut self,
        new_term: u64,
        pending: &[BatchAttestationShare],
        now: u64,
        out: &mut Outbox,
    ) {
        if new_term <= self.term {
            return;
        }
        let was_primary = self.is_primary();
        self.term = new_term;
        self.next_seq = self.ledger.height(new_term);
        self.pull = None;
        self.buffered.clear();
        self.long_polls.clear();
        let mut carried = 0;
        if self.is_primary() {
            let mut txs = self.tracking.drain();
            if was_primary {
                let mut rest = self.bundling.drain_all();
                rest.append(&mut txs);
                txs = rest;
            }
            let batches: Vec<Vec<Transaction>> = carry_over(
                pending,
                self.cfg.threshold(),
                &self.ledger,
                &mut self.reproposed,
            )
            .into_iter()
            .filter(|b| b.id.shard == self.shard)
            .map(|b| b.txs.clone())
            .collect();
            for b in batches {
                carried += 1;
                self.propose(b, now, true, out);
            }
            for tx in txs {
                if !self.tracking.is_seen(&tx.id()) {
                    let _ = self.bundling.insert(tx, now);
                }
            }
        } else {
            if was_primary {
                for tx in self.bundling.drain_all() {
                    self.tracking.insert(tx, now);
                }
            }
            self.tracking.reset_timers(now);
        }
        self.events.push(BatcherEvent::TermAdopted {
            term: new_term,
            primary: self.is_primary(),
            carried_over: carried,
        });
    }

    pub fn on_pending_feed(&mut self, f: PendingFeed, now: u64, out: &mut Outbox) {
        if f.shard != self.shard {
            return;
        }
        let aged: HashSet<ShareRef> = f.aged.iter().copied().collect();
        self.voted.retain(|r| aged.contains(r));
        self.ptr_candidates = f
            .aged
            .into_iter()
            .filter(|r| !self.voted.contains(r))
            .collect();
        for r in f.pruned {
            if r.signer != self.party || r.key.batch_id.term != self.term {
                continue;
            }
            if self.ledger.by_digest(&r.key.digest).is_none() {
                continue;
            }
            let n = self.resubmits.entry(r).or_insert(0);
            if *n >= self.cfg.resubmit_limit {
                continue;
            }
            *n += 1;
            let s = self.sign_share(r.key.batch_id, r.key.digest, now, Vec::new());
            out.to_consenters(self.cfg.n_parties, Message::Share(s));
            self.events.push(BatcherEvent::Resubmitted { share: r });
        }
        let term = self.term;
        self.resubmits.retain(|r, _| r.key.batch_id.term == term);
    }
}

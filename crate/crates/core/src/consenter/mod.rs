//! Consenter: admits shares and complaints into the total order, applies
//! ordered rounds, rotates primaries, and finalizes block headers.

mod headers;
mod port;
mod state;

pub use headers::{valid_signers, Conflict, HeaderChain};
pub use port::{SequencerParams, SimSequencer, TotalOrderPort};
pub use state::{
    AdmitReject, CollectedGroup, ConsensusState, Dropped, RoundOutput, StateParams, TermChange,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::crypto::{Keyring, SigningKey};
use crate::messages::{
    HeaderPullRequest, HeaderSignature, Message, Ordered, PendingFeed, Round, TermNotice,
};
use crate::net::{Endpoint, Outbox};
use crate::router::is_reconfig;
use crate::storage::RecordLog;
use crate::types::{BlockHeader, PartyId, ShardId, ShareRef};
use crate::Config;

/// Most headers sent in reply to one pull.
pub const HEADER_BATCH: usize = 256;
const MAX_BUFFERED_ROUNDS: usize = 4096;
/// Own signatures re-sent per stall.
const RESIGN_WINDOW: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConsenterEvent {
    TermChanged {
        round: u64,
        shard: ShardId,
        new_term: u64,
        complainers: Vec<PartyId>,
    },
    Finalized {
        number: u64,
        header: BlockHeader,
    },
    Rejected(AdmitReject),
    PendingLen(usize),
}

pub struct ConsenterNode {
    pub party: PartyId,
    cfg: Arc<Config>,
    key: SigningKey,
    keyring: Arc<Keyring>,
    state: ConsensusState,
    chain: HeaderChain,
    next_round: u64,
    rounds: BTreeMap<u64, Round>,
    subscribers: BTreeMap<Endpoint, u64>,
    last_aged: BTreeMap<ShardId, Vec<ShareRef>>,
    notices: BTreeMap<ShardId, TermNotice>,
    stall: Option<(u64, u64)>,
    reconfigs: usize,
    pruned: u64,
    expired: u64,
    events: Vec<ConsenterEvent>,
}

impl ConsenterNode {
    pub fn new(party: PartyId, cfg: Arc<Config>, key: SigningKey, keyring: Arc<Keyring>) -> Self {
        Self::with_log(party, cfg, key, keyring, RecordLog::in_memory())
    }

    pub fn with_log(
        party: PartyId,
        cfg: Arc<Config>,
        key: SigningKey,
        keyring: Arc<Keyring>,
        header_log: RecordLog,
    ) -> Self {
        ConsenterNode {
            party,
            state: ConsensusState::new(StateParams::from_config(&cfg)),
            chain: HeaderChain::with_log(cfg.quorum(), header_log),
            cfg,
            key,
            keyring,
            next_round: 0,
            rounds: BTreeMap::new(),
            subscribers: BTreeMap::new(),
            last_aged: BTreeMap::new(),
            notices: BTreeMap::new(),
            stall: None,
            reconfigs: 0,
            pruned: 0,
            expired: 0,
            events: Vec::new(),
        }
    }

    pub fn state(&self) -> &ConsensusState {
        &self.state
    }

    pub fn chain(&self) -> &HeaderChain {
        &self.chain
    }

    pub fn reconfigs_ordered(&self) -> usize {
        self.reconfigs
    }

    /// Pending shares dropped by pointer votes so far.
    pub fn pruned_total(&self) -> u64 {
        self.pruned
    }

    /// Pending shares that aged out of the admission window so far.
    pub fn expired_total(&self) -> u64 {
        self.expired
    }

    pub fn take_events(&mut self) -> Vec<ConsenterEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn on_message(&mut self, from: Endpoint, msg: Message, now: u64, out: &mut Outbox) {
        match msg {
            Message::Share(s) => self.admit(Ordered::Share(s), now, out),
            Message::Complaint(c) => self.admit(Ordered::Complaint(c), now, out),
            Message::Transaction(tx) if is_reconfig(&tx) => {
                out.send(Endpoint::Sequencer, Message::Submit(Ordered::Reconfig(tx)));
            }
            Message::Round(r) => self.on_round(r, out),
            Message::HeaderSignature(hs) => {
                let done = self
                    .chain
                    .add_signature(hs, &self.keyring)
                    .expect("header log write");
                self.publish(done, out);
            }
            Message::HeaderPullRequest(req) => match from {
                // Peers catching up get a replay but no subscription.
                Endpoint::Consenter(_) => {
                    for h in self.chain.stream(req.from_number, HEADER_BATCH) {
                        out.send(from, Message::Header(h.clone()));
                    }
                }
                _ => self.on_header_pull(from, req.from_number, out),
            },
            Message::Header(h) => {
                let done = self
                    .chain
                    .absorb(&h, &self.keyring)
                    .expect("header log write");
                self.publish(done, out);
            }
            _ => {}
        }
    }

    fn admit(&mut self, payload: Ordered, now: u64, out: &mut Outbox) {
        let epoch = self.cfg.epoch_at(now);
        match self.state.admit(&payload, epoch, &self.keyring) {
            Ok(()) => out.send(Endpoint::Sequencer, Message::Submit(payload)),
            Err(r) => {
                // A batcher complaining about an old term missed the notice.
                if let (AdmitReject::StaleTerm, Ordered::Complaint(c)) = (r, &payload) {
                    if let Some(n) = self.notices.get(&c.shard) {
                        out.send(
                            Endpoint::Batcher(c.signer, c.shard),
                            Message::TermNotice(n.clone()),
                        );
                    }
                }
                self.events.push(ConsenterEvent::Rejected(r));
            }
        }
    }

    /// Asks peers for finalized headers when our own chain stalls.
    pub fn on_tick(&mut self, now: u64, out: &mut Outbox) {
        let fin = self.chain.finalized_len();
        if self.chain.derived_len() <= fin {
            self.stall = None;
            return;
        }
        match self.stall {
            Some((n, since)) if n == fin => {
                if now >= since + self.cfg.pull_timeout_us {
                    self.stall = Some((fin, now));
                    // Peers may have finalized already, or may have lost
                    // our signatures; ask for the former, resend the latter.
                    let resend: Vec<HeaderSignature> = self
                        .chain
                        .derived()
                        .iter()
                        .skip(fin as usize)
                        .take(RESIGN_WINDOW)
                        .map(|h| self.chain.sign(h, &self.key, self.party))
                        .collect();
                    for p in 0..self.cfg.n_parties {
                        if PartyId(p) == self.party {
                            continue;
                        }
                        let to = Endpoint::Consenter(PartyId(p));
                        out.send(
                            to,
                            Message::HeaderPullRequest(HeaderPullRequest { from_number: fin }),
                        );
                        for hs in &resend {
                            out.send(to, Message::HeaderSignature(*hs));
                        }
                    }
                }
            }
            _ => self.stall = Some((fin, now)),
        }
    }

    fn on_round(&mut self, r: Round, out: &mut Outbox) {
        if r.number < self.next_round || self.rounds.len() >= MAX_BUFFERED_ROUNDS {
            return;
        }
        self.rounds.insert(r.number, r);
        while let Some(r) = self.rounds.remove(&self.next_round) {
            self.next_round += 1;
            self.apply_round(&r, out);
        }
    }

    /// Applies one ordered round and emits everything it implies.
    pub fn apply_round(&mut self, r: &Round, out: &mut Outbox) -> RoundOutput {
        let res = self.state.process_round(r);
        self.reconfigs += res.reconfigs.len();
        self.pruned += res.pruned.len() as u64;
        self.expired += res.expired.len() as u64;
        let n = self.cfg.n_parties;

        for tc in &res.term_changes {
            self.events.push(ConsenterEvent::TermChanged {
                round: r.number,
                shard: tc.shard,
                new_term: tc.new_term,
                complainers: tc.complainers.clone(),
            });
            let notice = TermNotice {
                shard: tc.shard,
                new_term: tc.new_term,
                complainers: tc.complainers.clone(),
                pending: tc.pending.clone(),
            };
            self.notices.insert(tc.shard, notice.clone());
            for p in 0..n {
                out.send(
                    Endpoint::Batcher(PartyId(p), tc.shard),
                    Message::TermNotice(notice.clone()),
                );
            }
        }

        let new_headers = self.chain.derive(&res.collected);
        for h in &new_headers {
            let hs = self.chain.sign(h, &self.key, self.party);
            for p in 0..n {
                if PartyId(p) != self.party {
                    out.send(
                        Endpoint::Consenter(PartyId(p)),
                        Message::HeaderSignature(hs),
                    );
                }
            }
            let done = self
                .chain
                .add_signature(hs, &self.keyring)
                .expect("header log write");
            self.publish(done, out);
        }

        self.feed_batchers(&res, r.epoch, out);
        self.events
            .push(ConsenterEvent::PendingLen(self.state.pending().len()));
        res
    }

    fn feed_batchers(&mut self, res: &RoundOutput, epoch: u64, out: &mut Outbox) {
        let cap = self.cfg.orphan_ptr_cap * 4;
        for s in 0..self.cfg.n_shards {
            let shard = ShardId(s);
            let aged = self.state.aged(shard, epoch, cap);
            let pruned: Vec<ShareRef> = res
                .pruned
                .iter()
                .chain(&res.expired)
                .filter(|d| !d.collected && d.share.key.batch_id.shard == shard)
                .map(|d| d.share)
                .collect();
            let changed = self.last_aged.get(&shard) != Some(&aged);
            if !changed && pruned.is_empty() {
                continue;
            }
            self.last_aged.insert(shard, aged.clone());
            out.send(
                Endpoint::Batcher(self.party, shard),
                Message::PendingFeed(PendingFeed {
                    shard,
                    epoch,
                    aged,
                    pruned,
                }),
            );
        }
    }

    fn publish(&mut self, done: Vec<BlockHeader>, out: &mut Outbox) {
        for h in done {
            let number = h.number;
            for (to, next) in self.subscribers.iter_mut() {
                if *next == number {
                    out.send(*to, Message::Header(h.clone()));
                    *next += 1;
                }
            }
            self.events
                .push(ConsenterEvent::Finalized { number, header: h });
        }
    }

    /// Replays finalized headers from `from` and keeps the puller subscribed.
    pub fn on_header_pull(&mut self, to: Endpoint, from: u64, out: &mut Outbox) {
        let batch = self.chain.stream(from, HEADER_BATCH);
        for h in batch {
            out.send(to, Message::Header(h.clone()));
        }
        self.subscribers.insert(to, from + batch.len() as u64);
    }
}

/// Driver around a `SimSequencer` speaking the message protocol.
pub struct SequencerNode {
    seq: SimSequencer,
    n_parties: u32,
}

impl SequencerNode {
    pub fn new(cfg: &Config, params: SequencerParams) -> Self {
        SequencerNode {
            seq: SimSequencer::new(params),
            n_parties: cfg.n_parties,
        }
    }

    pub fn on_message(&mut self, msg: Message, now: u64) {
        if let Message::Submit(p) = msg {
            self.seq.submit(p, now);
        }
    }

    pub fn on_tick(&mut self, now: u64, out: &mut Outbox) -> Option<u64> {
        let r = self.seq.next_round(now)?;
        let number = r.number;
        for p in 0..self.n_parties {
            out.send(Endpoint::Consenter(PartyId(p)), Message::Round(r.clone()));
        }
        Some(number)
    }

    pub fn queued(&self) -> usize {
        self.seq.queued()
    }

    pub fn next_cut_at(&self) -> u64 {
        self.seq.next_cut_at()
    }

    pub fn rounds_cut(&self) -> u64 {
        self.seq.rounds_cut()
    }
}

//! The discrete-event driver.
//!
//! One priority queue of timestamped events, one RNG for the network, and
//! every message passes through the wire codec on its way.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;

use arma_core::assembler::AssemblerNode;
use arma_core::batcher::{BatcherEvent, BatcherNode, Misbehavior};
use arma_core::codec::{client_signing_bytes, decode_frame, encode_frame};
use arma_core::consenter::{ConsenterEvent, ConsenterNode, SequencerNode, SequencerParams};
use arma_core::crypto::TestKeys;
use arma_core::messages::{AckCode, Message};
use arma_core::net::{Endpoint, Outbox};
use arma_core::router::{RouterNode, RouterSinks, StandardValidator, TxValidator, Unavailable};
use arma_core::types::{ClientSig, Digest, PartyId, ShardId, Transaction, TxId};
use arma_core::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checks::{check_agreement, check_censorship_bound, check_no_dup, t_max};
use crate::report::{
    AssemblerReport, CensorshipReport, Checks, DuplicateCause, DuplicateRecord, Latency, NetStats,
    Occurrence, PendingReport, RunReport, TermChangeRecord, TxLine, Violation, REPORT_FORMAT,
};
use crate::scenario::{FaultKind, Scenario, ScenarioError};

const TRACE_LEN: usize = 48;
/// First payload byte of every simulated client transaction.
pub const CLIENT_TX_TAG: u8 = 0x01;

/// Everything a finished run leaves behind.
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<TxLine>,
    /// Raw ledger bytes of each correct assembler.
    pub ledgers: BTreeMap<u32, Vec<u8>>,
    pub keys: TestKeys,
}

pub fn run(sc: &Scenario) -> Result<RunOutput, ScenarioError> {
    Ok(Sim::new(sc.clone())?.run())
}

enum Event {
    Deliver {
        from: Endpoint,
        to: Endpoint,
        frame: Vec<u8>,
    },
    Tick,
    Submit,
}

struct Scheduled {
    at: u64,
    seq: u64,
    ev: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.at, self.seq) == (o.at, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and we want the earliest first.
    fn cmp(&self, o: &Self) -> Ordering {
        (o.at, o.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Clone, Copy)]
struct TraceEntry {
    at: u64,
    from: Endpoint,
    to: Endpoint,
    kind: &'static str,
}

struct TxRec {
    id: TxId,
    client: u32,
    seq: u64,
    submit_us: u64,
    accepted: u32,
    ack_us: Option<u64>,
    commit_us: Vec<Option<u64>>,
    committed_on: u32,
}

struct ClientGen {
    phase: usize,
    next_at: u64,
    seq: u64,
}

struct Sinks<'a> {
    party: PartyId,
    down: &'a dyn Fn(&Endpoint) -> bool,
    out: &'a mut Outbox,
}

impl RouterSinks for Sinks<'_> {
    fn to_batcher(&mut self, shard: ShardId, msg: Message) -> Result<(), Unavailable> {
        let to = Endpoint::Batcher(self.party, shard);
        if (self.down)(&to) {
            return Err(Unavailable);
        }
        self.out.send(to, msg);
        Ok(())
    }

    fn to_consenter(&mut self, msg: Message) -> Result<(), Unavailable> {
        let to = Endpoint::Consenter(self.party);
        if (self.down)(&to) {
            return Err(Unavailable);
        }
        self.out.send(to, msg);
        Ok(())
    }
}

pub struct Sim {
    sc: Scenario,
    cfg: Arc<Config>,
    keys: TestKeys,
    now: u64,
    next_seq: u64,
    queue: BinaryHeap<Scheduled>,
    rng: ChaCha8Rng,
    links: Vec<Vec<u64>>,
    routers: Vec<RouterNode>,
    batchers: Vec<Vec<BatcherNode>>,
    consenters: Vec<ConsenterNode>,
    assemblers: Vec<AssemblerNode>,
    sequencer: SequencerNode,
    /// Parties without any fault; their assemblers are the ones checked.
    observed: Vec<PartyId>,
    observed_slot: Vec<Option<usize>>,
    crash_at: HashMap<Endpoint, u64>,
    gen: ClientGen,
    txs: Vec<TxRec>,
    tx_index: HashMap<TxId, usize>,
    outstanding: u64,
    acked: u64,
    canonical: Vec<Digest>,
    terms: Vec<TermChangeRecord>,
    seen_terms: BTreeSet<(u32, u64)>,
    pending: PendingReport,
    net: NetStats,
    trace: VecDeque<TraceEntry>,
    violation: Option<Violation>,
}

impl Sim {
    pub fn new(sc: Scenario) -> Result<Self, ScenarioError> {
        sc.validate()?;
        let cfg = Arc::new(sc.config.clone());
        let n = cfg.n_parties;
        let keys = TestKeys::generate(cfg.scheme, sc.seed, n, sc.clients.count);
        let keyring = Arc::new(keys.keyring());
        let validator: Arc<dyn TxValidator> =
            Arc::new(StandardValidator::new(&cfg, keyring.clone()));
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed ^ 0x6e65_7477_6f72_6b00);

        let m = n as usize;
        let mut links = vec![vec![sc.network.intra_party_us; m]; m];
        for (a, b) in (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))) {
            let ms = sc.network.latencies_ms[rng.gen_range(0..sc.network.latencies_ms.len())];
            links[a][b] = ms * 1_000;
            links[b][a] = ms * 1_000;
        }

        let routers = (0..n)
            .map(|p| RouterNode::new(PartyId(p), &cfg, validator.clone()))
            .collect();
        let batchers = (0..n)
            .map(|p| {
                (0..cfg.n_shards)
                    .map(|s| {
                        BatcherNode::new(
                            PartyId(p),
                            ShardId(s),
                            cfg.clone(),
                            keys.parties[p as usize].clone(),
                            validator.clone(),
                            sc.seed,
                        )
                    })
                    .collect()
            })
            .collect();
        let consenters = (0..n)
            .map(|p| {
                ConsenterNode::new(
                    PartyId(p),
                    cfg.clone(),
                    keys.parties[p as usize].clone(),
                    keyring.clone(),
                )
            })
            .collect();
        let assemblers = (0..n)
            .map(|p| AssemblerNode::new(PartyId(p), cfg.clone(), keyring.clone()))
            .collect();
        let sequencer = SequencerNode::new(
            &cfg,
            SequencerParams {
                round_interval_us: sc.sequencer.round_interval_us,
                max_round_payloads: sc.sequencer.max_round_payloads,
                epoch_length_us: cfg.epoch_length_us,
                dedup_epochs: sc.sequencer.dedup_epochs,
            },
        );

        let faulted = sc.faulted_parties();
        let observed: Vec<PartyId> = (0..n)
            .map(PartyId)
            .filter(|p| !faulted.contains(p))
            .collect();
        let mut observed_slot = vec![None; n as usize];
        for (i, p) in observed.iter().enumerate() {
            observed_slot[p.0 as usize] = Some(i);
        }

        let mut crash_at = HashMap::new();
        for f in sc.faults.iter().filter(|f| f.kind == FaultKind::Crash) {
            for e in endpoints_of(&cfg, PartyId(f.party)) {
                if f.targets(&e) {
                    let at = crash_at.entry(e).or_insert(f.start_us);
                    *at = (*at).min(f.start_us);
                }
            }
        }

        let first = sc.clients.phases.iter().position(|p| p.tx_count() > 0);
        let gen = ClientGen {
            phase: first.unwrap_or(usize::MAX),
            next_at: first.map_or(0, |i| sc.clients.phases[i].start_us),
            seq: 0,
        };
        let pending = PendingReport {
            bound: cfg.max_pending_shares,
            ..PendingReport::default()
        };

        let mut sim = Sim {
            sc,
            cfg,
            keys,
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            rng,
            links,
            routers,
            batchers,
            consenters,
            assemblers,
            sequencer,
            observed,
            observed_slot,
            crash_at,
            gen,
            txs: Vec::new(),
            tx_index: HashMap::new(),
            outstanding: 0,
            acked: 0,
            canonical: Vec::new(),
            terms: Vec::new(),
            seen_terms: BTreeSet::new(),
            pending,
            net: NetStats::default(),
            trace: VecDeque::with_capacity(TRACE_LEN),
            violation: None,
        };
        sim.schedule(0, Event::Tick);
        if sim.gen.phase != usize::MAX {
            let at = sim.gen.next_at;
            sim.schedule(at, Event::Submit);
        }
        Ok(sim)
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.next_seq += 1;
        self.queue.push(Scheduled {
            at,
            seq: self.next_seq,
            ev,
        });
    }

    fn is_down(&self, e: &Endpoint) -> bool {
        self.crash_at.get(e).is_some_and(|&at| self.now >= at)
    }

    pub fn run(mut self) -> RunOutput {
        let mut quiescent = false;
        while let Some(s) = self.queue.pop() {
            if s.at > self.sc.duration_us {
                break;
            }
            self.now = s.at;
            match s.ev {
                Event::Deliver { from, to, frame } => self.deliver(from, to, &frame),
                Event::Submit => self.submit(),
                Event::Tick => {
                    self.tick();
                    if self.quiescent() {
                        quiescent = true;
                        break;
                    }
                    let at = self.now + self.cfg.tick_us;
                    self.schedule(at, Event::Tick);
                }
            }
            if self.violation.is_some() {
                break;
            }
        }
        self.finish(quiescent)
    }

    // ---- clients ----

    fn submit(&mut self) {
        let Some(phase) = self.sc.clients.phases.get(self.gen.phase).copied() else {
            return;
        };
        let seq = self.gen.seq;
        self.gen.seq += 1;
        let client = (seq % u64::from(self.sc.clients.count)) as u32;
        let mut payload = Vec::with_capacity(self.sc.clients.tx_bytes);
        payload.push(CLIENT_TX_TAG);
        payload.extend_from_slice(&client.to_be_bytes());
        payload.extend_from_slice(&seq.to_be_bytes());
        payload.extend_from_slice(&self.now.to_be_bytes());
        payload.resize(self.sc.clients.tx_bytes, 0xAB);
        let sig = self.keys.clients[client as usize].sign(&client_signing_bytes(&payload));
        let tx = Transaction::new(payload).with_signature(ClientSig { client, sig });

        let slots = self.observed.len();
        self.tx_index.insert(tx.id(), self.txs.len());
        self.txs.push(TxRec {
            id: tx.id(),
            client,
            seq,
            submit_us: self.now,
            accepted: 0,
            ack_us: None,
            commit_us: vec![None; slots],
            committed_on: 0,
        });
        let from = Endpoint::Client(client);
        let frame = encode_frame(&Message::Transaction(tx));
        for p in 0..self.cfg.n_parties {
            let to = Endpoint::Router(PartyId(p));
            let at = self.now + self.delay(&from, &to);
            self.schedule(
                at,
                Event::Deliver {
                    from,
                    to,
                    frame: frame.clone(),
                },
            );
        }

        let mut next = self.now + phase.interval_us();
        if next >= phase.end_us {
            let phases = &self.sc.clients.phases;
            let later = (self.gen.phase + 1..phases.len()).find(|&i| phases[i].tx_count() > 0);
            match later {
                Some(i) => {
                    self.gen.phase = i;
                    next = phases[i].start_us.max(self.now + 1);
                }
                None => {
                    self.gen.phase = usize::MAX;
                    return;
                }
            }
        }
        self.gen.next_at = next;
        self.schedule(next, Event::Submit);
    }

    fn on_ack(&mut self, msg: Message) {
        let Message::Ack(ack) = msg else {
            return;
        };
        if ack.code != AckCode::Accepted {
            return;
        }
        let Some(&i) = self.tx_index.get(&ack.tx_id) else {
            return;
        };
        let need = self.cfg.n_parties - self.cfg.f;
        let rec = &mut self.txs[i];
        rec.accepted += 1;
        if rec.accepted == need && rec.ack_us.is_none() {
            rec.ack_us = Some(self.now);
            self.acked += 1;
            if (rec.committed_on as usize) < self.observed.len() {
                self.outstanding += 1;
            }
        }
    }

    // ---- network ----

    fn site(&self, e: &Endpoint) -> Option<usize> {
        match e {
            Endpoint::Client(c) => Some((*c % self.cfg.n_parties) as usize),
            Endpoint::Sequencer => None,
            _ => e.party().map(|p| p.0 as usize),
        }
    }

    fn delay(&mut self, from: &Endpoint, to: &Endpoint) -> u64 {
        let net = &self.sc.network;
        let base = match (self.site(from), self.site(to)) {
            _ if from.party().is_some() && from.party() == to.party() => net.intra_party_us,
            (Some(a), Some(b)) => self.links[a][b],
            _ => net.sequencer_link_us,
        };
        let jitter = if net.jitter_us > 0 {
            self.rng.gen_range(0..=net.jitter_us)
        } else {
            0
        };
        base + jitter
    }

    /// Whether the network loses this message.
    fn lost(&mut self, from: &Endpoint, to: &Endpoint) -> bool {
        let now = self.now;
        if self
            .sc
            .network
            .blocks
            .iter()
            .any(|b| b.blocks(from, to, now))
        {
            return true;
        }
        let (Some(a), Some(b)) = (from.party(), to.party()) else {
            return false;
        };
        if self
            .sc
            .network
            .partitions
            .iter()
            .any(|p| p.separates(a, b, now))
        {
            return true;
        }
        a != b && self.sc.network.drop_rate > 0.0 && self.rng.gen_bool(self.sc.network.drop_rate)
    }

    fn silenced(&self, from: &Endpoint) -> bool {
        let Endpoint::Batcher(p, s) = *from else {
            return false;
        };
        self.sc.faults.iter().any(|f| {
            f.kind == FaultKind::SilentPrimary
                && f.active(self.now)
                && f.targets(from)
                && self.batchers[p.0 as usize][s.0 as usize].is_primary()
        })
    }

    fn dispatch(&mut self, from: Endpoint, out: Outbox) {
        if out.is_empty() {
            return;
        }
        let silent = self.silenced(&from);
        for o in out.msgs {
            if silent || self.lost(&from, &o.to) {
                self.net.dropped += 1;
                continue;
            }
            let frame = encode_frame(&o.msg);
            self.net.bytes += frame.len() as u64;
            let at = self.now + self.delay(&from, &o.to);
            self.schedule(
                at,
                Event::Deliver {
                    from,
                    to: o.to,
                    frame,
                },
            );
        }
    }

    fn censored(&self, to: &Endpoint, tx: &Transaction) -> bool {
        let p = tx.payload();
        if p.len() < 21 || p[0] != CLIENT_TX_TAG {
            return false;
        }
        let seq = u64::from_be_bytes(p[5..13].try_into().expect("8 bytes"));
        let submitted = u64::from_be_bytes(p[13..21].try_into().expect("8 bytes"));
        self.sc.faults.iter().any(|f| match f.kind {
            FaultKind::Censor { predicate } => {
                f.active(self.now) && f.targets(to) && predicate.matches(seq, submitted)
            }
            _ => false,
        })
    }

    fn deliver(&mut self, from: Endpoint, to: Endpoint, frame: &[u8]) {
        if self.is_down(&to) {
            self.net.dropped += 1;
            return;
        }
        let (msg, _) = decode_frame(frame, self.cfg.max_frame_bytes)
            .expect("frames produced by the harness decode");
        self.net.delivered += 1;
        if self.trace.len() == TRACE_LEN {
            self.trace.pop_front();
        }
        self.trace.push_back(TraceEntry {
            at: self.now,
            from,
            to,
            kind: msg.kind(),
        });
        if let (Endpoint::Batcher(..), Message::Transaction(tx)) = (&to, &msg) {
            if self.censored(&to, tx) {
                return;
            }
        }
        let now = self.now;
        let mut out = Outbox::new();
        match to {
            Endpoint::Router(p) => {
                let Message::Transaction(tx) = msg else {
                    return;
                };
                let crash_at = &self.crash_at;
                let down = |e: &Endpoint| crash_at.get(e).is_some_and(|&at| now >= at);
                let mut sinks = Sinks {
                    party: p,
                    down: &down,
                    out: &mut out,
                };
                let ack = self.routers[p.0 as usize].route(tx, &mut sinks);
                if let Endpoint::Client(_) = from {
                    out.send(from, Message::Ack(ack));
                }
            }
            Endpoint::Batcher(p, s) => {
                let b = &mut self.batchers[p.0 as usize][s.0 as usize];
                b.on_message(from, msg, now, &mut out);
                self.batcher_events(p, s);
            }
            Endpoint::Consenter(p) => {
                self.consenters[p.0 as usize].on_message(from, msg, now, &mut out);
                self.consenter_events(p);
            }
            Endpoint::Assembler(p) => {
                self.assemblers[p.0 as usize].on_message(from, msg, now, &mut out);
                self.assembler_commits(p);
            }
            Endpoint::Sequencer => self.sequencer.on_message(msg, now),
            Endpoint::Client(_) => self.on_ack(msg),
        }
        self.dispatch(to, out);
    }

    // ---- timers ----

    fn tick(&mut self) {
        let now = self.now;
        let n = self.cfg.n_parties;
        let k = self.cfg.n_shards;
        for p in 0..n {
            for s in 0..k {
                let e = Endpoint::Batcher(PartyId(p), ShardId(s));
                if self.is_down(&e) {
                    continue;
                }
                let m = self.misbehavior(&e);
                let b = &mut self.batchers[p as usize][s as usize];
                b.set_misbehavior(m);
                let mut out = Outbox::new();
                b.on_tick(now, &mut out);
                self.batcher_events(PartyId(p), ShardId(s));
                self.dispatch(e, out);
            }
            let e = Endpoint::Consenter(PartyId(p));
            if !self.is_down(&e) {
                let mut out = Outbox::new();
                self.consenters[p as usize].on_tick(now, &mut out);
                self.dispatch(e, out);
            }
            let e = Endpoint::Assembler(PartyId(p));
            if !self.is_down(&e) {
                let mut out = Outbox::new();
                self.assemblers[p as usize].on_tick(now, &mut out);
                self.dispatch(e, out);
            }
        }
        let mut out = Outbox::new();
        if self.sequencer.on_tick(now, &mut out).is_some() {
            self.dispatch(Endpoint::Sequencer, out);
        }
    }

    fn misbehavior(&self, e: &Endpoint) -> Option<Misbehavior> {
        self.sc
            .faults
            .iter()
            .filter(|f| f.active(self.now) && f.targets(e))
            .find_map(|f| match f.kind {
                FaultKind::BogusPrimary { invalid_per_batch } => {
                    Some(Misbehavior::BogusPrimary { invalid_per_batch })
                }
                FaultKind::EquivocateShares => Some(Misbehavior::EquivocateShares),
                FaultKind::StaleEpochReplayer => Some(Misbehavior::StaleEpochReplay),
                _ => None,
            })
    }

    fn quiescent(&self) -> bool {
        if self.gen.phase != usize::MAX || self.outstanding > 0 || self.sequencer.queued() > 0 {
            return false;
        }
        let finalized = self
            .observed
            .iter()
            .map(|p| self.consenters[p.0 as usize].chain().finalized_len())
            .max()
            .unwrap_or(0);
        let drained = |p: &PartyId| {
            !self.sc.expect.drain_pending
                || self.consenters[p.0 as usize].state().pending().is_empty()
        };
        self.observed.iter().all(|p| {
            let a = &self.assemblers[p.0 as usize];
            a.height() == finalized && a.parked_len() == 0 && drained(p)
        })
    }

    // ---- node events and invariants ----

    fn violate(&mut self, what: String) {
        if self.violation.is_some() {
            return;
        }
        let trace = self
            .trace
            .iter()
            .map(|t| format!("t={}us {} -> {} {}", t.at, t.from, t.to, t.kind))
            .collect();
        self.violation = Some(Violation {
            at_us: self.now,
            what,
            trace,
        });
    }

    fn batcher_events(&mut self, p: PartyId, s: ShardId) {
        for ev in self.batchers[p.0 as usize][s.0 as usize].take_events() {
            if let BatcherEvent::Resubmitted { .. } = ev {
                self.pending.resubmitted += 1;
            }
        }
    }

    fn consenter_events(&mut self, p: PartyId) {
        for ev in self.consenters[p.0 as usize].take_events() {
            match ev {
                ConsenterEvent::TermChanged {
                    round,
                    shard,
                    new_term,
                    complainers,
                } => {
                    if self.seen_terms.insert((shard.0, new_term)) {
                        self.terms.push(TermChangeRecord {
                            at_us: self.now,
                            round,
                            shard: shard.0,
                            new_term,
                            complainers: complainers.iter().map(|c| c.0).collect(),
                        });
                    }
                }
                ConsenterEvent::Finalized { number, header } => {
                    self.check_header(number, header.hash(), Endpoint::Consenter(p));
                }
                ConsenterEvent::PendingLen(len) => {
                    self.pending.max_len = self.pending.max_len.max(len);
                    if len > self.cfg.max_pending_shares {
                        self.violate(format!(
                            "consenter/{p} holds {len} pending shares, bound is {}",
                            self.cfg.max_pending_shares
                        ));
                    }
                }
                ConsenterEvent::Rejected(_) => {}
            }
        }
    }

    fn check_header(&mut self, number: u64, hash: Digest, at: Endpoint) {
        let n = number as usize;
        match self.canonical.get(n) {
            Some(h) if *h != hash => {
                let what = format!(
                    "{at} has header {number} = {}, others have {}",
                    hash.to_hex(),
                    h.to_hex()
                );
                self.violate(what);
            }
            Some(_) => {}
            None if n == self.canonical.len() => self.canonical.push(hash),
            None => self.violate(format!("{at} finalized header {number} out of order")),
        }
    }

    fn assembler_commits(&mut self, p: PartyId) {
        let commits = self.assemblers[p.0 as usize].take_commits();
        if commits.is_empty() {
            return;
        }
        let slot = self.observed_slot[p.0 as usize];
        let everyone = self.observed.len() as u32;
        for c in commits {
            self.check_header(c.number, c.header_hash, Endpoint::Assembler(p));
            let Some(slot) = slot else {
                continue;
            };
            for id in &c.tx_ids {
                let Some(&i) = self.tx_index.get(id) else {
                    continue;
                };
                let rec = &mut self.txs[i];
                if rec.commit_us[slot].is_some() {
                    continue;
                }
                rec.commit_us[slot] = Some(self.now);
                rec.committed_on += 1;
                if rec.committed_on == everyone && rec.ack_us.is_some() {
                    self.outstanding -= 1;
                }
            }
        }
    }

    // ---- report ----

    fn finish(mut self, quiescent: bool) -> RunOutput {
        let t_max_us = t_max(&self.sc);
        let mut assemblers = Vec::new();
        let mut ledgers = BTreeMap::new();
        for (slot, p) in self.observed.iter().enumerate() {
            let a = &self.assemblers[p.0 as usize];
            let mut samples = Vec::new();
            let mut last = 0;
            for t in &self.txs {
                if let Some(c) = t.commit_us[slot] {
                    samples.push(c - t.submit_us);
                    last = last.max(c);
                }
            }
            let first = self.txs.first().map_or(0, |t| t.submit_us);
            let span = last.saturating_sub(first);
            let committed = samples.len() as u64;
            let throughput_tps = if span == 0 {
                0.0
            } else {
                (committed as f64 * 1e6 / span as f64).round()
            };
            let txs = (0..a.height())
                .filter_map(|n| a.ledger().get(n))
                .map(|b| {
                    b.batch
                        .txs
                        .iter()
                        .filter(|t| self.tx_index.contains_key(&t.id()))
                        .count() as u64
                })
                .sum();
            assemblers.push(AssemblerReport {
                party: p.0,
                height: a.height(),
                txs,
                tip_hash: a.ledger().tip_hash().to_hex(),
                throughput_tps,
                latency: Latency::from_samples(samples),
            });
            ledgers.insert(p.0, a.ledger().as_bytes().to_vec());
        }

        let mut censorship = CensorshipReport {
            t_max_us,
            ..CensorshipReport::default()
        };
        for t in &self.txs {
            let Some(ack) = t.ack_us else {
                continue;
            };
            if t.commit_us.iter().any(Option::is_none) {
                censorship.uncommitted += 1;
                continue;
            }
            let worst = t
                .commit_us
                .iter()
                .flatten()
                .map(|c| c.saturating_sub(ack))
                .max()
                .unwrap_or(0);
            censorship.worst_us = censorship.worst_us.max(worst);
            if worst > t_max_us {
                censorship.late += 1;
            }
        }

        let duplicates = self.duplicates();
        self.pending.final_len = self
            .observed
            .iter()
            .map(|p| self.consenters[p.0 as usize].state().pending().len())
            .max()
            .unwrap_or(0);
        let (pruned, expired) = self.drop_counts();
        self.pending.pruned = pruned;
        self.pending.expired = expired;

        let records = self
            .txs
            .iter()
            .map(|t| TxLine {
                tx: hex::encode(&t.id.0[..8]),
                client: t.client,
                seq: t.seq,
                submit_us: t.submit_us,
                ack_us: t.ack_us,
                commit_us: t.commit_us.clone(),
            })
            .collect();

        let mut report = RunReport {
            format: REPORT_FORMAT.to_string(),
            scenario: self.sc.name.clone(),
            seed: self.sc.seed,
            n_parties: self.cfg.n_parties,
            f: self.cfg.f,
            n_shards: self.cfg.n_shards,
            end_us: self.now,
            quiescent,
            submitted: self.txs.len() as u64,
            acked: self.acked,
            assemblers,
            term_changes: self.terms.clone(),
            duplicates,
            censorship,
            pending: self.pending,
            network: self.net,
            violation: self.violation.clone(),
            checks: Checks::default(),
        };
        let agreement = check_agreement(&report);
        let no_dup = check_no_dup(&report);
        let bound = check_censorship_bound(&report, t_max_us);
        let e = self.sc.expect;
        report.checks = Checks {
            agreement,
            no_dup,
            censorship_bound: bound,
            passed: report.violation.is_none()
                && (!e.agreement || agreement)
                && (!e.no_dup || no_dup)
                && (!e.censorship_bound || bound),
        };
        RunOutput {
            report,
            records,
            ledgers,
            keys: self.keys,
        }
    }

    fn drop_counts(&self) -> (u64, u64) {
        // Counted once, on the first correct consenter.
        let Some(p) = self.observed.first() else {
            return (0, 0);
        };
        let c = &self.consenters[p.0 as usize];
        (c.pruned_total(), c.expired_total())
    }

    /// Client transactions committed more than once on the first correct
    /// assembler, with the failover explanation when one applies.
    fn duplicates(&self) -> Vec<DuplicateRecord> {
        let Some(p) = self.observed.first() else {
            return Vec::new();
        };
        let a = &self.assemblers[p.0 as usize];
        let mut seen: HashMap<TxId, Vec<u64>> = HashMap::new();
        let mut blocks = Vec::new();
        for n in 0..a.height() {
            let b = a.ledger().get(n).expect("committed block decodes");
            for t in &b.batch.txs {
                if self.tx_index.contains_key(&t.id()) {
                    seen.entry(t.id()).or_default().push(n);
                }
            }
            blocks.push(b);
        }
        let mut dups: Vec<(TxId, Vec<u64>)> =
            seen.into_iter().filter(|(_, v)| v.len() > 1).collect();
        dups.sort_by_key(|(id, v)| (v[0], *id));
        dups.into_iter()
            .map(|(id, at)| {
                let explained = at.windows(2).all(|w| {
                    let (x, y) = (&blocks[w[0] as usize].header, &blocks[w[1] as usize].header);
                    let later =
                        &self.batchers[y.batch_id.primary.0 as usize][y.batch_id.shard.0 as usize];
                    x.batch_id.term < y.batch_id.term
                        && x.digest != y.digest
                        && later.ledger().by_digest(&x.digest).is_none()
                });
                DuplicateRecord {
                    tx: hex::encode(&id.0[..8]),
                    blocks: at
                        .iter()
                        .map(|&n| {
                            let h = &blocks[n as usize].header;
                            Occurrence {
                                block: n,
                                batch: h.batch_id.to_string(),
                                digest: h.digest.to_hex(),
                            }
                        })
                        .collect(),
                    cause: if explained {
                        DuplicateCause::NewPrimaryLackedBatch
                    } else {
                        DuplicateCause::Unexplained
                    },
                }
            })
            .collect()
    }

    // ---- introspection for tests ----

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn batcher(&self, p: u32, s: u32) -> &BatcherNode {
        &self.batchers[p as usize][s as usize]
    }

    pub fn consenter(&self, p: u32) -> &ConsenterNode {
        &self.consenters[p as usize]
    }
}

fn endpoints_of(cfg: &Config, p: PartyId) -> Vec<Endpoint> {
    let mut v = vec![
        Endpoint::Router(p),
        Endpoint::Consenter(p),
        Endpoint::Assembler(p),
    ];
    v.extend((0..cfg.n_shards).map(|s| Endpoint::Batcher(p, ShardId(s))));
    v
}

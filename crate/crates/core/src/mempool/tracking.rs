//! The secondary's pool: time buckets of transactions awaiting a batch.
//!
//! A tx first waits in the bucket covering its arrival time. Once it has
//! waited `forward_timeout` it is reported for forwarding and moves to a
//! second timer; if that one also expires the primary is suspect.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::types::{Transaction, TxId};

/// Recently batched tx ids, forgotten after a fixed number of epochs.
#[derive(Debug, Default)]
pub struct SeenSet {
    by_id: HashMap<TxId, u64>,
    order: VecDeque<(u64, TxId)>,
    ttl_epochs: u64,
}

impl SeenSet {
    pub fn new(ttl_epochs: u64) -> Self {
        SeenSet {
            ttl_epochs,
            ..SeenSet::default()
        }
    }

    pub fn insert(&mut self, id: TxId, epoch: u64) {
        if self.by_id.insert(id, epoch) != Some(epoch) {
            self.order.push_back((epoch, id));
        }
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn expire(&mut self, current_epoch: u64) {
        while let Some(&(e, id)) = self.order.front() {
            if e + self.ttl_epochs >= current_epoch {
                break;
            }
            self.order.pop_front();
            if self.by_id.get(&id) == Some(&e) {
                self.by_id.remove(&id);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrackingTimers {
    pub bucket_width_us: u64,
    pub forward_timeout_us: u64,
    pub complaint_timeout_us: u64,
    pub max_txs: usize,
    pub seen_ttl_epochs: u64,
}

impl TrackingTimers {
    pub fn from_config(cfg: &crate::Config) -> Self {
        TrackingTimers {
            bucket_width_us: cfg.bucket_width_us(),
            forward_timeout_us: cfg.forward_timeout_us,
            complaint_timeout_us: cfg.complaint_timeout_us,
            max_txs: cfg.max_pool_txs,
            seen_ttl_epochs: cfg.max_epoch_skew,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackInsert {
    Inserted,
    Duplicate,
    AlreadyBatched,
    Full,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Overdue {
    pub forward: Vec<Transaction>,
    pub complaint_due: bool,
}

#[derive(Clone, Copy, Debug)]
enum State {
    Waiting { bucket: u64 },
    Forwarded { deadline: u64 },
}

#[derive(Debug)]
struct Entry {
    tx: Transaction,
    counter: u64,
    inserted_at: u64,
    state: State,
}

#[derive(Debug)]
pub struct TrackingPool {
    timers: TrackingTimers,
    entries: HashMap<TxId, Entry>,
    buckets: BTreeMap<u64, BTreeMap<u64, TxId>>,
    forwarded: BTreeMap<(u64, u64), TxId>,
    counter: u64,
    seen: SeenSet,
}

impl TrackingPool {
    pub fn new(timers: TrackingTimers) -> Self {
        TrackingPool {
            timers,
            entries: HashMap::new(),
            buckets: BTreeMap::new(),
            forwarded: BTreeMap::new(),
            counter: 0,
            seen: SeenSet::new(timers.seen_ttl_epochs),
        }
    }

    fn bucket_of(&self, t: u64) -> u64 {
        t / self.timers.bucket_width_us
    }

    pub fn insert(&mut self, tx: Transaction, now: u64) -> TrackInsert {
        let id = tx.id();
        if self.entries.contains_key(&id) {
            return TrackInsert::Duplicate;
        }
        if self.seen.contains(&id) {
            return TrackInsert::AlreadyBatched;
        }
        if self.entries.len() >= self.timers.max_txs {
            return TrackInsert::Full;
        }
        self.place(tx, now);
        TrackInsert::Inserted
    }

    fn place(&mut self, tx: Transaction, now: u64) {
        let id = tx.id();
        let bucket = self.bucket_of(now);
        let counter = self.counter;
        self.counter += 1;
        self.buckets.entry(bucket).or_default().insert(counter, id);
        self.entries.insert(
            id,
            Entry {
                tx,
                counter,
                inserted_at: now,
                state: State::Waiting { bucket },
            },
        );
    }

    fn unlink(&mut self, e: &Entry) {
        match e.state {
            State::Waiting { bucket } => {
                if let Some(b) = self.buckets.get_mut(&bucket) {
                    b.remove(&e.counter);
                    if b.is_empty() {
                        self.buckets.remove(&bucket);
                    }
                }
            }
            State::Forwarded { deadline } => {
                self.forwarded.remove(&(deadline, e.counter));
            }
        }
    }

    /// Drops every pooled tx in `txs` and remembers all of them as batched.
    pub fn remove_batch(&mut self, txs: &[Transaction], epoch: u64) -> usize {
        let mut removed = 0;
        for tx in txs {
            let id = tx.id();
            if let Some(e) = self.entries.remove(&id) {
                self.unlink(&e);
                removed += 1;
            }
            self.seen.insert(id, epoch);
        }
        removed
    }

    /// Records ids as batched without touching pooled entries.
    pub fn mark_seen(&mut self, id: TxId, epoch: u64) {
        self.seen.insert(id, epoch);
    }

    pub fn is_seen(&self, id: &TxId) -> bool {
        self.seen.contains(id)
    }

    pub fn expire_seen(&mut self, current_epoch: u64) {
        self.seen.expire(current_epoch);
    }

    /// Moves every tx past its first deadline to the second stage and
    /// reports whether any second-stage deadline has passed.
    pub fn overdue(&mut self, now: u64) -> Overdue {
        let ft = self.timers.forward_timeout_us;
        let stage2 = self.timers.complaint_timeout_us - ft;
        let width = self.timers.bucket_width_us;
        let mut due = Vec::new();
        for (&bucket, ids) in &self.buckets {
            if bucket * width + ft > now {
                break;
            }
            for (&counter, id) in ids {
                let e = &self.entries[id];
                if e.inserted_at + ft > now {
                    break;
                }
                due.push((bucket, counter, *id));
            }
        }
        let mut out = Overdue::default();
        for (bucket, counter, id) in due {
            let b = self.buckets.get_mut(&bucket).expect("bucket exists");
            b.remove(&counter);
            if b.is_empty() {
                self.buckets.remove(&bucket);
            }
            let deadline = now + stage2;
            let e = self.entries.get_mut(&id).expect("entry exists");
            e.state = State::Forwarded { deadline };
            self.forwarded.insert((deadline, counter), id);
            out.forward.push(e.tx.clone());
        }
        out.complaint_due = self
            .forwarded
            .first_key_value()
            .is_some_and(|(&(d, _), _)| d <= now);
        out
    }

    /// Restarts both timers of every pooled tx from `now`, keeping order.
    pub fn reset_timers(&mut self, now: u64) {
        for tx in self.drain() {
            self.place(tx, now);
        }
    }

    /// Removes and returns every pooled tx in arrival order.
    pub fn drain(&mut self) -> Vec<Transaction> {
        let mut all: Vec<Entry> = self.entries.drain().map(|(_, e)| e).collect();
        all.sort_by_key(|e| e.counter);
        self.buckets.clear();
        self.forwarded.clear();
        all.into_iter().map(|e| e.tx).collect()
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn forwarded_count(&self) -> usize {
        self.forwarded.len()
    }

    pub fn seen_len(&self) -> usize {
        self.seen.len()
    }

    /// Earliest instant at which `overdue` could report something new.
    pub fn next_deadline(&self) -> Option<u64> {
        let ft = self.timers.forward_timeout_us;
        let first_wait = self
            .buckets
            .values()
            .next()
            .and_then(|b| b.values().next())
            .map(|id| self.entries[id].inserted_at + ft);
        let first_fwd = self.forwarded.keys().next().map(|&(d, _)| d);
        match (first_wait, first_fwd) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FT: u64 = 400;
    const CT: u64 = 800;

    fn pool() -> TrackingPool {
        TrackingPool::new(TrackingTimers {
            bucket_width_us: FT / 4,
            forward_timeout_us: FT,
            complaint_timeout_us: CT,
            max_txs: 1000,
            seen_ttl_epochs: 2,
        })
    }

    fn tx(i: u32) -> Transaction {
        Transaction::new(i.to_be_bytes().to_vec())
    }

    #[test]
    fn removal_empties_buckets() {
        let mut p = pool();
        p.insert(tx(1), 0);
        assert_eq!(p.bucket_count(), 1);
        assert_eq!(p.remove_batch(&[tx(1)], 0), 1);
        assert_eq!(p.bucket_count(), 0);
        assert!(p.is_empty());
    }

    #[test]
    fn batched_tx_not_reinserted() {
        let mut p = pool();
        p.remove_batch(&[tx(5)], 0);
        assert_eq!(p.insert(tx(5), 10), TrackInsert::AlreadyBatched);
        assert_eq!(p.insert(tx(6), 10), TrackInsert::Inserted);
        assert_eq!(p.insert(tx(6), 11), TrackInsert::Duplicate);
    }

    #[test]
    fn seen_set_expires_by_epoch() {
        let mut p = pool();
        p.remove_batch(&[tx(5)], 3);
        p.expire_seen(5);
        assert!(p.is_seen(&tx(5).id()));
        p.expire_seen(6);
        assert!(!p.is_seen(&tx(5).id()));
        assert_eq!(p.insert(tx(5), 0), TrackInsert::Inserted);
    }

    #[test]
    fn partial_removal_leaves_the_rest_flagged() {
        let mut p = pool();
        p.insert(tx(1), 10);
        p.insert(tx(2), 20);
        p.remove_batch(&[tx(1)], 0);
        assert_eq!(p.overdue(FT + 19), Overdue::default());
        let o = p.overdue(FT + 20);
        assert_eq!(o.forward, vec![tx(2)]);
        assert!(!o.complaint_due);
    }

    #[test]
    fn two_stage_timers() {
        let mut p = pool();
        p.insert(tx(1), 0);
        assert_eq!(p.overdue(FT - 1), Overdue::default());
        let o = p.overdue(FT);
        assert_eq!(o.forward, vec![tx(1)]);
        assert!(!o.complaint_due);
        // Already forwarded: not reported again.
        assert!(p.overdue(FT + 1).forward.is_empty());
        assert!(!p.overdue(CT - 1).complaint_due);
        let o = p.overdue(CT);
        assert!(o.forward.is_empty());
        assert!(o.complaint_due);
    }

    #[test]
    fn stage_two_counts_from_forward_time() {
        let mut p = pool();
        p.insert(tx(1), 0);
        // Forwarding noticed late, at t = 600.
        p.overdue(600);
        assert!(!p.overdue(600 + (CT - FT) - 1).complaint_due);
        assert!(p.overdue(600 + (CT - FT)).complaint_due);
    }

    #[test]
    fn removal_before_stage_two_prevents_complaint() {
        let mut p = pool();
        p.insert(tx(1), 0);
        p.overdue(FT);
        p.remove_batch(&[tx(1)], 0);
        assert!(!p.overdue(10 * CT).complaint_due);
    }

    #[test]
    fn reset_restarts_timers() {
        let mut p = pool();
        p.insert(tx(1), 0);
        p.insert(tx(2), 5);
        p.overdue(FT);
        p.reset_timers(1_000);
        assert_eq!(p.forwarded_count(), 0);
        assert!(p.overdue(1_000 + FT - 1).forward.is_empty());
        assert_eq!(p.overdue(1_000 + FT).forward, vec![tx(1), tx(2)]);
    }

    #[test]
    fn drain_preserves_arrival_order() {
        let mut p = pool();
        for i in (0..10).rev() {
            p.insert(tx(i), u64::from(10 - i) * 70);
        }
        let order: Vec<_> = p.drain().iter().map(Transaction::id).collect();
        let want: Vec<_> = (0..10).rev().map(|i| tx(i).id()).collect();
        assert_eq!(order, want);
        assert_eq!(p.bucket_count(), 0);
    }
}

//! The primary's pool: one batch being filled plus a FIFO of sealed batches.

use std::collections::{HashSet, VecDeque};

use crate::types::{Transaction, TxId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_txs: usize,
    pub max_bytes: usize,
    pub timeout_us: u64,
    pub max_pool_txs: usize,
}

impl Limits {
    pub fn from_config(cfg: &crate::Config) -> Self {
        Limits {
            max_txs: cfg.batch_max_txs,
            max_bytes: cfg.batch_max_bytes,
            timeout_us: cfg.batch_timeout_us,
            max_pool_txs: cfg.max_pool_txs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inserted {
    Accepted,
    Duplicate,
}

/// The pool is at capacity; the caller should retry later.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("pool full")]
pub struct Backpressure;

#[derive(Debug, Default)]
struct Open {
    txs: Vec<Transaction>,
    bytes: usize,
    since: u64,
}

#[derive(Debug)]
pub struct BundlingPool {
    limits: Limits,
    open: Open,
    full: VecDeque<Vec<Transaction>>,
    pooled: HashSet<TxId>,
    queue_ops: u64,
}

impl BundlingPool {
    pub fn new(limits: Limits) -> Self {
        BundlingPool {
            limits,
            open: Open::default(),
            full: VecDeque::new(),
            pooled: HashSet::new(),
            queue_ops: 0,
        }
    }

    pub fn insert(&mut self, tx: Transaction, now: u64) -> Result<Inserted, Backpressure> {
        if self.pooled.contains(&tx.id()) {
            return Ok(Inserted::Duplicate);
        }
        if self.pooled.len() >= self.limits.max_pool_txs {
            return Err(Backpressure);
        }
        // A tx that would overflow the byte limit closes the current batch first.
        if !self.open.txs.is_empty() && self.open.bytes + tx.wire_size() > self.limits.max_bytes {
            self.seal();
        }
        if self.open.txs.is_empty() {
            self.open.since = now;
        }
        self.pooled.insert(tx.id());
        self.open.bytes += tx.wire_size();
        self.open.txs.push(tx);
        if self.open.txs.len() >= self.limits.max_txs || self.open.bytes >= self.limits.max_bytes {
            self.seal();
        }
        Ok(Inserted::Accepted)
    }

    fn seal(&mut self) {
        let open = std::mem::take(&mut self.open);
        self.full.push_back(open.txs);
        self.queue_ops += 1;
    }

    /// Oldest sealed batch, else the open batch once it has aged past the
    /// batch timeout, else nothing.
    pub fn next_batch(&mut self, now: u64) -> Option<Vec<Transaction>> {
        let txs = if let Some(b) = self.full.pop_front() {
            self.queue_ops += 1;
            b
        } else if !self.open.txs.is_empty()
            && now.saturating_sub(self.open.since) >= self.limits.timeout_us
        {
            self.queue_ops += 1;
            std::mem::take(&mut self.open).txs
        } else {
            return None;
        };
        for tx in &txs {
            self.pooled.remove(&tx.id());
        }
        Some(txs)
    }

    /// Puts a batch back at the head of the queue.
    pub fn requeue_front(&mut self, txs: Vec<Transaction>) {
        for tx in &txs {
            self.pooled.insert(tx.id());
        }
        self.full.push_front(txs);
        self.queue_ops += 1;
    }

    /// Earliest time at which `next_batch` may yield the open batch.
    pub fn open_deadline(&self) -> Option<u64> {
        (!self.open.txs.is_empty()).then(|| self.open.since + self.limits.timeout_us)
    }

    pub fn has_full(&self) -> bool {
        !self.full.is_empty()
    }

    pub fn contains(&self, id: &TxId) -> bool {
        self.pooled.contains(id)
    }

    pub fn len(&self) -> usize {
        self.pooled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pooled.is_empty()
    }

    pub fn full_batches(&self) -> usize {
        self.full.len()
    }

    /// Queue operations performed so far (seal, dequeue, swap).
    pub fn queue_ops(&self) -> u64 {
        self.queue_ops
    }

    /// Empties the pool, oldest first.
    pub fn drain_all(&mut self) -> Vec<Transaction> {
        let mut out: Vec<Transaction> = self.full.drain(..).flatten().collect();
        out.append(&mut std::mem::take(&mut self.open).txs);
        self.pooled.clear();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits(max_txs: usize) -> Limits {
        Limits {
            max_txs,
            max_bytes: 1 << 20,
            timeout_us: 1_000,
            max_pool_txs: 1_000,
        }
    }

    fn tx(i: u32) -> Transaction {
        Transaction::new(i.to_be_bytes().to_vec())
    }

    fn ids(txs: &[Transaction]) -> Vec<TxId> {
        txs.iter().map(Transaction::id).collect()
    }

    #[test]
    fn two_inserts_seal_a_batch_of_two() {
        let mut p = BundlingPool::new(limits(2));
        p.insert(tx(1), 0).unwrap();
        p.insert(tx(2), 0).unwrap();
        assert_eq!(p.full_batches(), 1);
        assert_eq!(p.open_deadline(), None);
        assert_eq!(ids(&p.next_batch(0).unwrap()), ids(&[tx(1), tx(2)]));
    }

    #[test]
    fn duplicates_rejected() {
        let mut p = BundlingPool::new(limits(5));
        assert_eq!(p.insert(tx(1), 0), Ok(Inserted::Accepted));
        assert_eq!(p.insert(tx(1), 0), Ok(Inserted::Duplicate));
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn open_batch_waits_for_timeout() {
        let mut p = BundlingPool::new(limits(5));
        assert_eq!(p.next_batch(0), None);
        p.insert(tx(1), 100).unwrap();
        assert_eq!(p.next_batch(100), None);
        assert_eq!(p.next_batch(1_099), None);
        assert_eq!(ids(&p.next_batch(1_100).unwrap()), ids(&[tx(1)]));
        assert_eq!(p.next_batch(5_000), None);
    }

    #[test]
    fn fifo_across_sealed_batches() {
        let mut p = BundlingPool::new(limits(1));
        p.insert(tx(1), 0).unwrap();
        p.insert(tx(2), 0).unwrap();
        assert_eq!(ids(&p.next_batch(0).unwrap()), ids(&[tx(1)]));
        assert_eq!(ids(&p.next_batch(0).unwrap()), ids(&[tx(2)]));
    }

    #[test]
    fn byte_limit_seals_before_overflow() {
        let mut p = BundlingPool::new(Limits {
            max_bytes: 10,
            ..limits(100)
        });
        p.insert(Transaction::new(vec![0; 6]), 0).unwrap();
        p.insert(Transaction::new(vec![1; 6]), 0).unwrap();
        assert_eq!(p.full_batches(), 1);
        assert_eq!(p.next_batch(0).unwrap().len(), 1);
    }

    #[test]
    fn backpressure_at_capacity() {
        let mut p = BundlingPool::new(Limits {
            max_pool_txs: 2,
            ..limits(10)
        });
        p.insert(tx(1), 0).unwrap();
        p.insert(tx(2), 0).unwrap();
        assert_eq!(p.insert(tx(3), 0), Err(Backpressure));
        p.next_batch(10_000).unwrap();
        assert_eq!(p.insert(tx(3), 0), Ok(Inserted::Accepted));
    }

    #[test]
    fn retrieval_op_count_is_population_independent() {
        let mut counts = Vec::new();
        for pop in [10u32, 100_000] {
            let mut p = BundlingPool::new(Limits {
                max_pool_txs: 1 << 20,
                ..limits(10)
            });
            for i in 0..pop {
                p.insert(tx(i), 0).unwrap();
            }
            let before = p.queue_ops();
            p.next_batch(0).unwrap();
            counts.push(p.queue_ops() - before);
        }
        assert_eq!(counts[0], counts[1]);
    }

    #[test]
    fn requeue_and_drain() {
        let mut p = BundlingPool::new(limits(2));
        for i in 0..5 {
            p.insert(tx(i), 0).unwrap();
        }
        let b = p.next_batch(0).unwrap();
        p.requeue_front(b.clone());
        assert_eq!(ids(&p.next_batch(0).unwrap()), ids(&b));
        let rest = p.drain_all();
        assert_eq!(ids(&rest), ids(&[tx(2), tx(3), tx(4)]));
        assert!(p.is_empty());
    }
}

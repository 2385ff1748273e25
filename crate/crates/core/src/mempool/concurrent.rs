//! Bundling pool variant for one inserting and one retrieving thread.
//!
//! Sealed batches move through a lock-free queue, so a retriever draining
//! full batches never waits on an inserter that is filling the open batch.

use std::sync::atomic::{AtomicUsize, Ordering};

use crossbeam_queue::SegQueue;
use parking_lot::Mutex;

use super::bundling::Limits;
use crate::types::Transaction;

#[derive(Default)]
struct Open {
    txs: Vec<Transaction>,
    bytes: usize,
    since: u64,
}

pub struct ConcurrentBundlingPool {
    limits: Limits,
    open: Mutex<Open>,
    full: SegQueue<Vec<Transaction>>,
    pooled: AtomicUsize,
}

impl ConcurrentBundlingPool {
    pub fn new(limits: Limits) -> Self {
        ConcurrentBundlingPool {
            limits,
            open: Mutex::new(Open::default()),
            full: SegQueue::new(),
            pooled: AtomicUsize::new(0),
        }
    }

    /// Returns false when the pool is at capacity.
    pub fn insert(&self, tx: Transaction, now: u64) -> bool {
        if self.pooled.load(Ordering::Acquire) >= self.limits.max_pool_txs {
            return false;
        }
        let mut open = self.open.lock();
        if open.txs.is_empty() {
            open.since = now;
        }
        open.bytes += tx.wire_size();
        open.txs.push(tx);
        self.pooled.fetch_add(1, Ordering::AcqRel);
        if open.txs.len() >= self.limits.max_txs || open.bytes >= self.limits.max_bytes {
            let sealed = std::mem::take(&mut *open);
            self.full.push(sealed.txs);
        }
        true
    }

    pub fn next_batch(&self, now: u64) -> Option<Vec<Transaction>> {
        let txs = match self.full.pop() {
            Some(b) => b,
            None => {
                let mut open = self.open.lock();
                // A batch may have been sealed while we waited for the lock.
                if let Some(b) = self.full.pop() {
                    drop(open);
                    self.pooled.fetch_sub(b.len(), Ordering::AcqRel);
                    return Some(b);
                }
                if open.txs.is_empty() || now.saturating_sub(open.since) < self.limits.timeout_us {
                    return None;
                }
                std::mem::take(&mut *open).txs
            }
        };
        self.pooled.fetch_sub(txs.len(), Ordering::AcqRel);
        Some(txs)
    }

    pub fn len(&self) -> usize {
        self.pooled.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::Arc;

    #[test]
    fn one_inserter_one_retriever_conserve_txs() {
        let pool = Arc::new(ConcurrentBundlingPool::new(Limits {
            max_txs: 7,
            max_bytes: 1 << 20,
            timeout_us: 0,
            max_pool_txs: usize::MAX,
        }));
        let total = 20_000u32;
        let p = pool.clone();
        let inserter = std::thread::spawn(move || {
            for i in 0..total {
                assert!(p.insert(Transaction::new(i.to_be_bytes().to_vec()), 0));
            }
        });
        let mut seen = Vec::new();
        while seen.len() < total as usize {
            if let Some(b) = pool.next_batch(1) {
                assert!(!b.is_empty());
                seen.extend(b);
            }
        }
        inserter.join().unwrap();
        let ids: HashSet<_> = seen.iter().map(Transaction::id).collect();
        assert_eq!(ids.len(), total as usize);
        // Per-inserter FIFO is preserved.
        let order: Vec<u32> = seen
            .iter()
            .map(|t| u32::from_be_bytes(t.payload().try_into().unwrap()))
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert!(pool.is_empty());
    }
}

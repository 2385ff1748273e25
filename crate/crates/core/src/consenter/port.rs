//! The total-order port and a deterministic single-leader implementation.
//!
//! A real BFT engine can sit behind `TotalOrderPort`; the consenter only
//! relies on every correct replica seeing the same rounds in the same order.

use std::collections::{HashSet, VecDeque};

use crate::codec::Wire;
use crate::hash::sha256;
use crate::messages::{Ordered, Round};
use crate::types::Digest;

pub trait TotalOrderPort {
    fn broadcast(&mut self, payload: Ordered);
    /// Cuts the next round, if one is due.
    fn next_round(&mut self, now_us: u64) -> Option<Round>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequencerParams {
    pub round_interval_us: u64,
    pub max_round_payloads: usize,
    pub epoch_length_us: u64,
    /// Epochs a payload hash is remembered for de-duplication.
    pub dedup_epochs: u64,
}

/// Orders payloads in arrival order, dropping exact re-submissions.
#[derive(Debug)]
pub struct SimSequencer {
    params: SequencerParams,
    queue: VecDeque<Ordered>,
    seen: HashSet<Digest>,
    seen_order: VecDeque<(u64, Digest)>,
    next_number: u64,
    next_cut: u64,
    last_epoch: Option<u64>,
}

impl SimSequencer {
    pub fn new(params: SequencerParams) -> Self {
        SimSequencer {
            params,
            queue: VecDeque::new(),
            seen: HashSet::new(),
            seen_order: VecDeque::new(),
            next_number: 0,
            next_cut: 0,
            last_epoch: None,
        }
    }

    pub fn params(&self) -> &SequencerParams {
        &self.params
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn rounds_cut(&self) -> u64 {
        self.next_number
    }

    fn epoch(&self, now: u64) -> u64 {
        now / self.params.epoch_length_us
    }

    /// Accepts a payload submitted at `now`; duplicates are dropped.
    pub fn submit(&mut self, payload: Ordered, now: u64) {
        let h = sha256(&payload.to_bytes());
        if !self.seen.insert(h) {
            return;
        }
        self.seen_order.push_back((self.epoch(now), h));
        self.queue.push_back(payload);
    }

    /// Next instant a round could be cut.
    pub fn next_cut_at(&self) -> u64 {
        self.next_cut
    }
}

impl TotalOrderPort for SimSequencer {
    fn broadcast(&mut self, payload: Ordered) {
        let now = self.last_epoch.unwrap_or(0) * self.params.epoch_length_us;
        self.submit(payload, now);
    }

    fn next_round(&mut self, now: u64) -> Option<Round> {
        if now < self.next_cut {
            return None;
        }
        let epoch = self.epoch(now);
        while let Some(&(e, h)) = self.seen_order.front() {
            if e + self.params.dedup_epochs >= epoch {
                break;
            }
            self.seen_order.pop_front();
            self.seen.remove(&h);
        }
        // Empty rounds are only cut to carry a new epoch.
        if self.queue.is_empty() && self.last_epoch == Some(epoch) {
            return None;
        }
        self.next_cut = now + self.params.round_interval_us;
        self.last_epoch = Some(epoch);
        let take = self.queue.len().min(self.params.max_round_payloads);
        let payloads = self.queue.drain(..take).collect();
        let number = self.next_number;
        self.next_number += 1;
        Some(Round {
            number,
            epoch,
            payloads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Transaction;

    fn seq() -> SimSequencer {
        SimSequencer::new(SequencerParams {
            round_interval_us: 10,
            max_round_payloads: 2,
            epoch_length_us: 100,
            dedup_epochs: 1,
        })
    }

    fn p(i: u8) -> Ordered {
        Ordered::Reconfig(Transaction::new(vec![0xC0, i]))
    }

    #[test]
    fn rounds_are_capped_and_paced() {
        let mut s = seq();
        for i in 0..3 {
            s.submit(p(i), 0);
        }
        s.submit(p(0), 0);
        let r0 = s.next_round(0).unwrap();
        assert_eq!(r0.payloads, vec![p(0), p(1)]);
        assert!(s.next_round(5).is_none());
        let r1 = s.next_round(10).unwrap();
        assert_eq!((r1.number, r1.payloads.clone()), (1, vec![p(2)]));
        // Nothing queued, same epoch: no round.
        assert!(s.next_round(20).is_none());
        // New epoch: an empty round carries it.
        let r2 = s.next_round(100).unwrap();
        assert_eq!((r2.epoch, r2.payloads.len()), (1, 0));
    }

    #[test]
    fn dedup_window_expires() {
        let mut s = seq();
        s.submit(p(1), 0);
        s.next_round(0).unwrap();
        s.submit(p(1), 50);
        assert_eq!(s.queued(), 0);
        s.next_round(250);
        s.submit(p(1), 250);
        assert_eq!(s.queued(), 1);
    }
}

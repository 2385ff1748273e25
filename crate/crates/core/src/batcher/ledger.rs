//! Append-only persisted batch log with term/seq and digest indexes.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::Path;

use crate::codec::Wire;
use crate::storage::{RecordLog, Tail};
use crate::types::{Batch, Digest};

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("batch {term}/{seq} is not the next in its term (height {height})")]
    NotNext { term: u64, seq: u64, height: u64 },
    #[error("ledger io: {0}")]
    Io(#[from] io::Error),
    #[error("undecodable record {0}")]
    Corrupt(usize),
}

#[derive(Debug, Default)]
pub struct BatchLedger {
    log: RecordLog,
    batches: Vec<Batch>,
    by_term_seq: HashMap<(u64, u64), usize>,
    by_digest: HashMap<Digest, usize>,
    heights: BTreeMap<u64, u64>,
}

impl BatchLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Tail), LedgerError> {
        let (log, tail) = RecordLog::open(path)?;
        Ok((Self::index(log)?, tail))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Tail), LedgerError> {
        let (log, tail) = RecordLog::from_bytes(bytes);
        Ok((Self::index(log)?, tail))
    }

    fn index(log: RecordLog) -> Result<Self, LedgerError> {
        let mut l = BatchLedger::default();
        for (i, rec) in log.iter().enumerate() {
            let b = Batch::from_bytes(rec).map_err(|_| LedgerError::Corrupt(i))?;
            l.insert_index(b);
        }
        l.log = log;
        Ok(l)
    }

    fn insert_index(&mut self, b: Batch) {
        let i = self.batches.len();
        self.by_term_seq.insert((b.id.term, b.id.seq), i);
        self.by_digest.entry(b.digest).or_insert(i);
        *self.heights.entry(b.id.term).or_default() = b.id.seq + 1;
        self.batches.push(b);
    }

    /// Persists `b`, which must be the next sequence of its term.
    pub fn append(&mut self, b: Batch) -> Result<(), LedgerError> {
        let height = self.height(b.id.term);
        if b.id.seq != height {
            return Err(LedgerError::NotNext {
                term: b.id.term,
                seq: b.id.seq,
                height,
            });
        }
        self.log.append(&b.to_bytes())?;
        self.insert_index(b);
        Ok(())
    }

    pub fn height(&self, term: u64) -> u64 {
        self.heights.get(&term).copied().unwrap_or(0)
    }

    pub fn get(&self, term: u64, seq: u64) -> Option<&Batch> {
        self.by_term_seq
            .get(&(term, seq))
            .map(|&i| &self.batches[i])
    }

    pub fn by_digest(&self, d: &Digest) -> Option<&Batch> {
        self.by_digest.get(d).map(|&i| &self.batches[i])
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Batch> {
        self.batches.iter()
    }

    pub fn raw(&self) -> &RecordLog {
        &self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BatchId, PartyId, ShardId, Transaction};

    fn batch(term: u64, seq: u64) -> Batch {
        let id = BatchId {
            shard: ShardId(0),
            primary: PartyId(0),
            term,
            seq,
        };
        Batch::new(
            id,
            vec![Transaction::new(format!("{term}:{seq}").into_bytes())],
        )
        .unwrap()
    }

    #[test]
    fn heights_are_contiguous_per_term() {
        let mut l = BatchLedger::in_memory();
        l.append(batch(0, 0)).unwrap();
        l.append(batch(0, 1)).unwrap();
        assert!(matches!(
            l.append(batch(0, 3)),
            Err(LedgerError::NotNext { .. })
        ));
        l.append(batch(1, 0)).unwrap();
        assert_eq!((l.height(0), l.height(1), l.height(2)), (2, 1, 0));
        let d = batch(0, 1).digest;
        assert_eq!(l.by_digest(&d).unwrap().id.seq, 1);
        assert_eq!(l.get(1, 0).unwrap().id.term, 1);
    }

    #[test]
    fn reopen_rebuilds_index_and_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batches.log");
        {
            let (mut l, _) = BatchLedger::open(&path).unwrap();
            for s in 0..3 {
                l.append(batch(0, s)).unwrap();
            }
        }
        let len = std::fs::metadata(&path).unwrap().len();
        std::fs::OpenOptions::new()
            .write(true)
            .open(&path)
            .unwrap()
            .set_len(len - 1)
            .unwrap();
        let (l, tail) = BatchLedger::open(&path).unwrap();
        assert!(matches!(tail, Tail::Truncated { .. }));
        assert_eq!(l.height(0), 2);
        assert!(l.by_digest(&batch(0, 2).digest).is_none());
    }
}

//! Digest-addressed store of retrieved batches.

use std::collections::HashMap;
use std::io;

use crate::codec::Wire;
use crate::storage::RecordLog;
use crate::types::{Batch, Digest};

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("batch content does not hash to its digest")]
    DigestMismatch,
    #[error("index write failed: {0}")]
    Io(String),
}

#[derive(Debug, Default)]
pub struct BatchIndex {
    batches: HashMap<Digest, Batch>,
    log: RecordLog,
}

impl BatchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_log(log: RecordLog) -> io::Result<Self> {
        let mut batches = HashMap::new();
        for rec in log.iter() {
            if let Ok(b) = Batch::from_bytes(rec) {
                if b.digest_matches() {
                    batches.insert(b.digest, b);
                }
            }
        }
        Ok(BatchIndex { batches, log })
    }

    /// Verifies and stores a batch. Returns false if it was already present.
    pub fn ingest(&mut self, b: Batch) -> Result<bool, IngestError> {
        if !b.digest_matches() {
            return Err(IngestError::DigestMismatch);
        }
        if self.batches.contains_key(&b.digest) {
            return Ok(false);
        }
        // The index is written before it is used.
        self.log
            .append(&b.to_bytes())
            .map_err(|e| IngestError::Io(e.to_string()))?;
        self.batches.insert(b.digest, b);
        Ok(true)
    }

    pub fn get(&self, d: &Digest) -> Option<&Batch> {
        self.batches.get(d)
    }

    pub fn contains(&self, d: &Digest) -> bool {
        self.batches.contains_key(d)
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

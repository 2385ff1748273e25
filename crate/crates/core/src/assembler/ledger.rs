//! The committed block ledger and its offline verifier.

use std::fmt;
use std::io;
use std::path::Path;

use crate::codec::Wire;
use crate::consenter::valid_signers;
use crate::crypto::Keyring;
use crate::storage::{scan, RecordLog, Tail};
use crate::types::{Block, Digest};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockFault {
    Number { expected: u64, found: u64 },
    Linkage,
    Quorum { valid: usize, needed: usize },
    Digest,
    BatchId,
}

impl fmt::Display for BlockFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockFault::Number { expected, found } => {
                write!(f, "number: expected {expected}, found {found}")
            }
            BlockFault::Linkage => f.write_str("linkage: prev_hash does not match"),
            BlockFault::Quorum { valid, needed } => {
                write!(f, "quorum: {valid} valid signatures, {needed} needed")
            }
            BlockFault::Digest => f.write_str("digest: batch root does not match header"),
            BlockFault::BatchId => f.write_str("batch id differs from header"),
        }
    }
}

/// Checks one block against its expected height and predecessor hash.
pub fn verify_block(
    b: &Block,
    height: u64,
    prev_hash: Digest,
    keyring: &Keyring,
    quorum: usize,
) -> Result<(), BlockFault> {
    if b.header.number != height {
        return Err(BlockFault::Number {
            expected: height,
            found: b.header.number,
        });
    }
    if b.header.prev_hash != prev_hash {
        return Err(BlockFault::Linkage);
    }
    let valid = valid_signers(&b.header, keyring);
    if valid < quorum {
        return Err(BlockFault::Quorum {
            valid,
            needed: quorum,
        });
    }
    if b.batch.digest != b.header.digest || !b.batch.digest_matches() {
        return Err(BlockFault::Digest);
    }
    if b.batch.id != b.header.batch_id {
        return Err(BlockFault::BatchId);
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct BlockLedger {
    log: RecordLog,
    hashes: Vec<Digest>,
}

impl BlockLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a file-backed ledger, dropping a damaged tail.
    pub fn open(path: impl AsRef<Path>) -> io::Result<(Self, Tail)> {
        let (log, tail) = RecordLog::open(path)?;
        let mut hashes = Vec::with_capacity(log.len());
        for rec in log.iter() {
            let b = Block::from_bytes(rec)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            hashes.push(b.header.hash());
        }
        Ok((BlockLedger { log, hashes }, tail))
    }

    pub fn height(&self) -> u64 {
        self.hashes.len() as u64
    }

    pub fn tip_hash(&self) -> Digest {
        self.hashes.last().copied().unwrap_or(Digest::ZERO)
    }

    pub fn header_hashes(&self) -> &[Digest] {
        &self.hashes
    }

    /// Appends a block that the caller has already verified.
    pub fn append(&mut self, b: &Block) -> io::Result<()> {
        self.log.append(&b.to_bytes())?;
        self.hashes.push(b.header.hash());
        Ok(())
    }

    pub fn get(&self, n: u64) -> Option<Block> {
        self.log
            .get(n as usize)
            .and_then(|r| Block::from_bytes(r).ok())
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.log.as_bytes()
    }

    pub fn offset_of(&self, n: u64) -> Option<usize> {
        self.log.offset_of(n as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FailureReason {
    Crc,
    Decode,
    Block(BlockFault),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Crc => f.write_str("crc: record checksum mismatch"),
            FailureReason::Decode => f.write_str("decode: record is not a block"),
            FailureReason::Block(b) => b.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerFailure {
    pub block: u64,
    pub offset: usize,
    pub reason: FailureReason,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerReport {
    pub blocks_verified: u64,
    pub failure: Option<LedgerFailure>,
    /// Offset of a torn final record, which is not a failure.
    pub truncated_at: Option<usize>,
}

impl LedgerReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Re-proves CRCs, numbering, linkage, quorums and digests for every block.
pub fn verify_ledger(bytes: &[u8], keyring: &Keyring, quorum: usize) -> LedgerReport {
    let s = scan(bytes);
    let mut prev = Digest::ZERO;
    let mut report = LedgerReport {
        blocks_verified: 0,
        failure: None,
        truncated_at: None,
    };
    for (i, (offset, range)) in s.records.iter().enumerate() {
        let fail = |reason| LedgerFailure {
            block: i as u64,
            offset: *offset,
            reason,
        };
        let b = match Block::from_bytes(&bytes[range.clone()]) {
            Ok(b) => b,
            Err(_) => {
                report.failure = Some(fail(FailureReason::Decode));
                return report;
            }
        };
        if let Err(e) = verify_block(&b, i as u64, prev, keyring, quorum) {
            report.failure = Some(fail(FailureReason::Block(e)));
            return report;
        }
        prev = b.header.hash();
        report.blocks_verified += 1;
    }
    match s.tail {
        Tail::Clean => {}
        Tail::Truncated { offset } => report.truncated_at = Some(offset),
        Tail::Corrupt { offset } => {
            report.failure = Some(LedgerFailure {
                block: s.records.len() as u64,
                offset,
                reason: FailureReason::Crc,
            })
        }
    }
    report
}

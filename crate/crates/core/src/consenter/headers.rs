//! Hash-chained block headers and their signature quorums.

use std::collections::BTreeMap;
use std::io;

use crate::codec::{header_signing_bytes, Wire};
use crate::crypto::{Keyring, SigningKey};
use crate::messages::HeaderSignature;
use crate::storage::RecordLog;
use crate::types::{BlockHeader, Digest, PartyId};

use super::state::CollectedGroup;

/// How far past the derived tip we keep early signatures.
const EARLY_SIG_WINDOW: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub number: u64,
    pub party: PartyId,
    pub first: Digest,
    pub second: Digest,
}

#[derive(Debug)]
pub struct HeaderChain {
    quorum: usize,
    derived: Vec<BlockHeader>,
    hashes: Vec<Digest>,
    sigs: BTreeMap<u64, BTreeMap<PartyId, HeaderSignature>>,
    finalized: Vec<BlockHeader>,
    log: RecordLog,
    conflicts: Vec<Conflict>,
}

impl HeaderChain {
    pub fn new(quorum: usize) -> Self {
        Self::with_log(quorum, RecordLog::in_memory())
    }

    pub fn with_log(quorum: usize, log: RecordLog) -> Self {
        HeaderChain {
            quorum,
            derived: Vec::new(),
            hashes: Vec::new(),
            sigs: BTreeMap::new(),
            finalized: Vec::new(),
            log,
            conflicts: Vec::new(),
        }
    }

    /// Appends one unsigned header per group, in order.
    pub fn derive(&mut self, groups: &[CollectedGroup]) -> Vec<BlockHeader> {
        let mut new = Vec::with_capacity(groups.len());
        for g in groups {
            let number = self.derived.len() as u64;
            let prev = self.hashes.last().copied().unwrap_or(Digest::ZERO);
            let h = BlockHeader::unsigned(number, prev, g.key.batch_id, g.key.digest);
            self.hashes.push(h.hash());
            self.derived.push(h.clone());
            new.push(h);
        }
        new
    }

    pub fn sign(&self, header: &BlockHeader, key: &SigningKey, me: PartyId) -> HeaderSignature {
        let header_hash = header.hash();
        HeaderSignature {
            number: header.number,
            header_hash,
            signer: me,
            sig: key.sign(&header_signing_bytes(&header_hash)),
        }
    }

    /// Records a signature; returns headers that became final, in order.
    pub fn add_signature(
        &mut self,
        hs: HeaderSignature,
        keyring: &Keyring,
    ) -> io::Result<Vec<BlockHeader>> {
        let n = hs.number;
        if n < self.finalized.len() as u64 || n > self.derived.len() as u64 + EARLY_SIG_WINDOW {
            return Ok(Vec::new());
        }
        if !keyring.verify_party(hs.signer, &header_signing_bytes(&hs.header_hash), &hs.sig) {
            return Ok(Vec::new());
        }
        let slot = self.sigs.entry(n).or_default();
        match slot.get(&hs.signer) {
            Some(prev) if prev.header_hash != hs.header_hash => {
                self.conflicts.push(Conflict {
                    number: n,
                    party: hs.signer,
                    first: prev.header_hash,
                    second: hs.header_hash,
                });
                return Ok(Vec::new());
            }
            Some(_) => return Ok(Vec::new()),
            None => {
                slot.insert(hs.signer, hs);
            }
        }
        self.try_finalize()
    }

    /// Takes the signatures carried by a peer's finalized header.
    pub fn absorb(&mut self, h: &BlockHeader, keyring: &Keyring) -> io::Result<Vec<BlockHeader>> {
        let header_hash = h.hash();
        let mut done = Vec::new();
        for (signer, sig) in &h.sigs {
            let hs = HeaderSignature {
                number: h.number,
                header_hash,
                signer: *signer,
                sig: *sig,
            };
            done.extend(self.add_signature(hs, keyring)?);
        }
        Ok(done)
    }

    /// Finalizes derived headers in order while quorums are present.
    pub fn try_finalize(&mut self) -> io::Result<Vec<BlockHeader>> {
        let mut done = Vec::new();
        loop {
            let n = self.finalized.len();
            let Some(hash) = self.hashes.get(n).copied() else {
                break;
            };
            let Some(slot) = self.sigs.get(&(n as u64)) else {
                break;
            };
            let matching: Vec<&HeaderSignature> =
                slot.values().filter(|s| s.header_hash == hash).collect();
            if matching.len() < self.quorum {
                break;
            }
            let mut h = self.derived[n].clone();
            for s in matching {
                h.add_signature(s.signer, s.sig);
            }
            self.sigs.remove(&(n as u64));
            self.log.append(&h.to_bytes())?;
            self.finalized.push(h.clone());
            done.push(h);
        }
        Ok(done)
    }

    pub fn derived_len(&self) -> u64 {
        self.derived.len() as u64
    }

    pub fn derived(&self) -> &[BlockHeader] {
        &self.derived
    }

    pub fn finalized(&self) -> &[BlockHeader] {
        &self.finalized
    }

    pub fn finalized_len(&self) -> u64 {
        self.finalized.len() as u64
    }

    /// Finalized headers from `from`, at most `max`.
    pub fn stream(&self, from: u64, max: usize) -> &[BlockHeader] {
        let start = (from as usize).min(self.finalized.len());
        let end = (start + max).min(self.finalized.len());
        &self.finalized[start..end]
    }

    pub fn conflicts(&self) -> &[Conflict] {
        &self.conflicts
    }

    pub fn log(&self) -> &RecordLog {
        &self.log
    }

    /// Encoding of the derived chain without signatures.
    pub fn unsigned_chain_bytes(&self) -> Vec<u8> {
        self.derived
            .iter()
            .flat_map(crate::codec::header_body_bytes)
            .collect()
    }
}

/// Counts distinct parties with a valid signature over `h`.
pub fn valid_signers(h: &BlockHeader, keyring: &Keyring) -> usize {
    let msg = header_signing_bytes(&h.hash());
    let mut seen = std::collections::BTreeSet::new();
    for (p, sig) in &h.sigs {
        if keyring.verify_party(*p, &msg, sig) {
            seen.insert(*p);
        }
    }
    seen.len()
}

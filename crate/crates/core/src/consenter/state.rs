//! Deterministic share and complaint processing, one ordered round at a time.
//!
//! Every correct consenter applies the same rounds to the same state, so
//! everything here must be a pure function of the round stream: no hash
//! map iteration reaches an output.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::codec::{complaint_signing_bytes, share_signing_bytes};
use crate::crypto::Keyring;
use crate::messages::{Ordered, Round};
use crate::types::{
    BatchAttestationShare, ComplaintVote, Digest, PartyId, ShardId, ShareKey, ShareRef,
};
use crate::Config;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateParams {
    pub n_parties: u32,
    pub f: u32,
    pub n_shards: u32,
    pub max_epoch_skew: u64,
    pub orphan_ptr_cap: usize,
}

impl StateParams {
    pub fn from_config(cfg: &Config) -> Self {
        StateParams {
            n_parties: cfg.n_parties,
            f: cfg.f,
            n_shards: cfg.n_shards,
            max_epoch_skew: cfg.max_epoch_skew,
            orphan_ptr_cap: cfg.orphan_ptr_cap,
        }
    }

    pub fn threshold(&self) -> usize {
        self.f as usize + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdmitReject {
    StaleEpoch,
    FutureEpoch,
    Duplicate,
    BadSignature,
    /// Unknown signer or shard, too many or ill-ordered pointers.
    Malformed,
    StaleTerm,
}

/// A share group that reached the threshold and names a new digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollectedGroup {
    pub key: ShareKey,
    pub signers: Vec<PartyId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermChange {
    pub shard: ShardId,
    pub new_term: u64,
    /// The threshold-many distinct signers whose complaints caused it.
    pub complainers: Vec<PartyId>,
    /// The shard's pending shares whose digest was never collected.
    pub pending: Vec<BatchAttestationShare>,
}

/// A share that left the pending list without being counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dropped {
    pub share: ShareRef,
    /// Whether the share's digest had been collected when it was dropped.
    pub collected: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundOutput {
    pub round: u64,
    pub epoch: u64,
    pub collected: Vec<CollectedGroup>,
    /// Threshold groups whose digest had already been collected.
    pub suppressed: Vec<ShareKey>,
    pub term_changes: Vec<TermChange>,
    /// Pruned by pointer votes.
    pub pruned: Vec<Dropped>,
    /// Aged out of the admission window while pending.
    pub expired: Vec<Dropped>,
    pub reconfigs: Vec<crate::types::Transaction>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct ShardTerm {
    term: u64,
    complainers: BTreeSet<PartyId>,
}

#[derive(Clone, Debug)]
pub struct ConsensusState {
    params: StateParams,
    pending: Vec<BatchAttestationShare>,
    pending_refs: HashSet<ShareRef>,
    counted: HashMap<ShareRef, u64>,
    collected: HashMap<Digest, u64>,
    votes: BTreeMap<ShareRef, BTreeSet<PartyId>>,
    terms: Vec<ShardTerm>,
    rounds: u64,
}

impl ConsensusState {
    pub fn new(params: StateParams) -> Self {
        ConsensusState {
            params,
            pending: Vec::new(),
            pending_refs: HashSet::new(),
            counted: HashMap::new(),
            collected: HashMap::new(),
            votes: BTreeMap::new(),
            terms: vec![ShardTerm::default(); params.n_shards as usize],
            rounds: 0,
        }
    }

    pub fn params(&self) -> &StateParams {
        &self.params
    }

    pub fn pending(&self) -> &[BatchAttestationShare] {
        &self.pending
    }

    pub fn term(&self, shard: ShardId) -> u64 {
        self.terms.get(shard.0 as usize).map_or(0, |t| t.term)
    }

    pub fn is_collected(&self, d: &Digest) -> bool {
        self.collected.contains_key(d)
    }

    pub fn collected_len(&self) -> usize {
        self.collected.len()
    }

    pub fn rounds_processed(&self) -> u64 {
        self.rounds
    }

    fn is_known(&self, r: &ShareRef) -> bool {
        self.pending_refs.contains(r) || self.counted.contains_key(r)
    }

    /// Local pre-ordering filter. Round processing re-applies the epoch and
    /// duplicate rules, since a payload admitted here may be ordered late.
    pub fn admit(
        &self,
        payload: &Ordered,
        now_epoch: u64,
        keyring: &Keyring,
    ) -> Result<(), AdmitReject> {
        let p = &self.params;
        match payload {
            Ordered::Share(s) => {
                if s.signer.0 >= p.n_parties
                    || s.batch_id.shard.0 >= p.n_shards
                    || s.orphan_ptrs.len() > p.orphan_ptr_cap
                    || !s.pointers_well_formed()
                {
                    return Err(AdmitReject::Malformed);
                }
                if now_epoch.saturating_sub(s.epoch) > p.max_epoch_skew {
                    return Err(AdmitReject::StaleEpoch);
                }
                if s.epoch > now_epoch + 1 {
                    return Err(AdmitReject::FutureEpoch);
                }
                let msg =
                    share_signing_bytes(&s.batch_id, &s.digest, s.epoch, &s.orphan_ptrs, s.signer);
                if !keyring.verify_party(s.signer, &msg, &s.sig) {
                    return Err(AdmitReject::BadSignature);
                }
                if self.is_known(&s.share_ref()) {
                    return Err(AdmitReject::Duplicate);
                }
                Ok(())
            }
            Ordered::Complaint(c) => {
                if c.signer.0 >= p.n_parties || c.shard.0 >= p.n_shards {
                    return Err(AdmitReject::Malformed);
                }
                let msg = complaint_signing_bytes(c.term, c.shard, c.signer);
                if !keyring.verify_party(c.signer, &msg, &c.sig) {
                    return Err(AdmitReject::BadSignature);
                }
                let st = &self.terms[c.shard.0 as usize];
                if c.term < st.term {
                    return Err(AdmitReject::StaleTerm);
                }
                if c.term == st.term && st.complainers.contains(&c.signer) {
                    return Err(AdmitReject::Duplicate);
                }
                Ok(())
            }
            Ordered::Reconfig(_) => Ok(()),
        }
    }

    pub fn process_round(&mut self, round: &Round) -> RoundOutput {
        let p = self.params;
        let threshold = p.threshold();
        let mut out = RoundOutput {
            round: round.number,
            epoch: round.epoch,
            ..RoundOutput::default()
        };
        self.rounds += 1;

        // Append fresh shares in order; remember pointer votes and complaints.
        let mut pointer_votes: Vec<(PartyId, Vec<ShareRef>)> = Vec::new();
        let mut complaints: Vec<&ComplaintVote> = Vec::new();
        for payload in &round.payloads {
            match payload {
                Ordered::Share(s) => {
                    if s.epoch + p.max_epoch_skew < round.epoch
                        || s.epoch > round.epoch + 1
                        || s.batch_id.shard.0 >= p.n_shards
                    {
                        continue;
                    }
                    let r = s.share_ref();
                    if self.is_known(&r) {
                        continue;
                    }
                    if !s.orphan_ptrs.is_empty() {
                        pointer_votes.push((s.signer, s.orphan_ptrs.clone()));
                    }
                    // Late shares for a digest that is already in a block.
                    if self.collected.contains_key(&s.digest) {
                        self.counted.insert(r, round.epoch);
                        continue;
                    }
                    self.pending_refs.insert(r);
                    self.pending.push(s.clone());
                }
                Ordered::Complaint(c) => complaints.push(c),
                Ordered::Reconfig(tx) => out.reconfigs.push(tx.clone()),
            }
        }

        // Threshold groups leave the pending list; new digests are collected.
        let mut groups: BTreeMap<ShareKey, BTreeSet<PartyId>> = BTreeMap::new();
        for s in &self.pending {
            groups.entry(s.key()).or_default().insert(s.signer);
        }
        let full: BTreeMap<ShareKey, BTreeSet<PartyId>> = groups
            .into_iter()
            .filter(|(_, signers)| signers.len() >= threshold)
            .collect();
        if !full.is_empty() {
            let mut kept = Vec::with_capacity(self.pending.len());
            for s in std::mem::take(&mut self.pending) {
                if full.contains_key(&s.key()) {
                    let r = s.share_ref();
                    self.pending_refs.remove(&r);
                    self.votes.remove(&r);
                    self.counted.insert(r, round.epoch);
                } else {
                    kept.push(s);
                }
            }
            self.pending = kept;
            for (key, signers) in full {
                match self.collected.entry(key.digest) {
                    Entry::Occupied(_) => out.suppressed.push(key),
                    Entry::Vacant(v) => {
                        v.insert(round.epoch);
                        out.collected.push(CollectedGroup {
                            key,
                            signers: signers.into_iter().collect(),
                        });
                    }
                }
            }
        }

        // Pointer votes prune pending shares that enough parties call orphaned.
        let mut pruned_refs = HashSet::new();
        for (voter, targets) in pointer_votes {
            for t in targets {
                if !self.pending_refs.contains(&t) {
                    continue;
                }
                let voters = self.votes.entry(t).or_default();
                voters.insert(voter);
                if voters.len() >= threshold {
                    self.votes.remove(&t);
                    self.pending_refs.remove(&t);
                    pruned_refs.insert(t);
                    out.pruned.push(Dropped {
                        share: t,
                        collected: self.collected.contains_key(&t.key.digest),
                    });
                }
            }
        }
        if !pruned_refs.is_empty() {
            self.pending
                .retain(|s| !pruned_refs.contains(&s.share_ref()));
        }

        // Complaints about the current term rotate the primary at threshold.
        for c in complaints {
            let Some(st) = self.terms.get_mut(c.shard.0 as usize) else {
                continue;
            };
            if c.term != st.term || !st.complainers.insert(c.signer) {
                continue;
            }
            if st.complainers.len() >= threshold {
                let complainers: Vec<PartyId> =
                    std::mem::take(&mut st.complainers).into_iter().collect();
                st.term += 1;
                let new_term = st.term;
                let pending = self
                    .pending
                    .iter()
                    .filter(|s| {
                        s.batch_id.shard == c.shard && !self.collected.contains_key(&s.digest)
                    })
                    .cloned()
                    .collect();
                out.term_changes.push(TermChange {
                    shard: c.shard,
                    new_term,
                    complainers,
                    pending,
                });
            }
        }

        // Forget what can no longer be admitted.
        let horizon = round.epoch.saturating_sub(p.max_epoch_skew);
        self.collected.retain(|_, e| *e >= horizon);
        self.counted.retain(|_, e| *e >= horizon);
        if self.pending.iter().any(|s| s.epoch < horizon) {
            let mut kept = Vec::with_capacity(self.pending.len());
            for s in std::mem::take(&mut self.pending) {
                if s.epoch < horizon {
                    let r = s.share_ref();
                    self.pending_refs.remove(&r);
                    self.votes.remove(&r);
                    out.expired.push(Dropped {
                        share: r,
                        collected: self.collected.contains_key(&s.digest),
                    });
                } else {
                    kept.push(s);
                }
            }
            self.pending = kept;
        }
        out
    }

    /// Pending shares of `shard` that have waited at least one full epoch.
    pub fn aged(&self, shard: ShardId, epoch: u64, cap: usize) -> Vec<ShareRef> {
        self.pending
            .iter()
            .filter(|s| s.batch_id.shard == shard && s.epoch + 1 < epoch)
            .take(cap)
            .map(BatchAttestationShare::share_ref)
            .collect()
    }

    /// Canonical encoding of the replicated state, for replica comparison.
    pub fn fingerprint(&self) -> Digest {
        use crate::codec::{Wire, Writer};
        let mut w = Vec::new();
        w.put_u64(self.rounds);
        w.put_u32(self.pending.len() as u32);
        for s in &self.pending {
            s.encode(&mut w);
        }
        let mut collected: Vec<_> = self.collected.iter().collect();
        collected.sort();
        for (d, e) in collected {
            w.put_slice(&d.0);
            w.put_u64(*e);
        }
        let mut counted: Vec<_> = self.counted.iter().collect();
        counted.sort();
        for (r, e) in counted {
            r.encode(&mut w);
            w.put_u64(*e);
        }
        for (r, vs) in &self.votes {
            r.encode(&mut w);
            for v in vs {
                w.put_u32(v.0);
            }
        }
        for t in &self.terms {
            w.put_u64(t.term);
            for c in &t.complainers {
                w.put_u32(c.0);
            }
        }
        crate::hash::sha256(&w)
    }
}

//! Choosing which earlier-term batches a new primary re-proposes.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::ledger::BatchLedger;
use crate::types::{Batch, BatchAttestationShare, Digest, PartyId, ShareKey};

/// Batches to re-propose, in share-key order.
///
/// Pending shares are grouped by key; groups that already reached
/// `threshold` are safe and skipped. Each remaining group whose batch is in
/// the local ledger is re-proposed once per digest: `reproposed` holds the
/// digests handled in earlier failovers and is extended here.
pub fn carry_over<'a>(
    pending: &[BatchAttestationShare],
    threshold: usize,
    ledger: &'a BatchLedger,
    reproposed: &mut HashSet<Digest>,
) -> Vec<&'a Batch> {
    let mut groups: BTreeMap<ShareKey, BTreeSet<PartyId>> = BTreeMap::new();
    for s in pending {
        groups.entry(s.key()).or_default().insert(s.signer);
    }
    let mut out = Vec::new();
    for (key, signers) in groups {
        if signers.len() >= threshold {
            continue;
        }
        if reproposed.contains(&key.digest) {
            continue;
        }
        if let Some(b) = ledger.by_digest(&key.digest) {
            reproposed.insert(key.digest);
            out.push(b);
        }
    }
    out
}

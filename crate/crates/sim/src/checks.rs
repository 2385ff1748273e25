//! Whole-run verdicts computed from a finished report.

use crate::report::{DuplicateCause, RunReport};
use crate::scenario::Scenario;

/// Every correct assembler ended with the same ledger and nothing diverged.
pub fn check_agreement(r: &RunReport) -> bool {
    if r.violation.is_some() {
        return false;
    }
    let Some(first) = r.assemblers.first() else {
        return true;
    };
    r.assemblers
        .iter()
        .all(|a| a.height == first.height && a.tip_hash == first.tip_hash)
}

/// Every repeat commit is explained by a new primary that lacked the
/// earlier batch.
pub fn check_no_dup(r: &RunReport) -> bool {
    r.duplicates
        .iter()
        .all(|d| d.cause == DuplicateCause::NewPrimaryLackedBatch)
}

/// Every acked transaction committed everywhere within `t_max_us` of its ack.
pub fn check_censorship_bound(r: &RunReport, t_max_us: u64) -> bool {
    r.censorship.uncommitted == 0 && r.censorship.worst_us <= t_max_us
}

/// Worst-case ack-to-commit time with `f` successive censoring primaries.
///
/// Each censoring term costs the complaint timeout plus the time to
/// order the complaints and deliver the new term; the last, correct
/// primary then needs one forward timeout (it may never have seen the tx)
/// and the ordinary commit path.
pub fn t_max(sc: &Scenario) -> u64 {
    let c = &sc.config;
    let d = sc.network.max_delay_us();
    let round = sc.sequencer.round_interval_us;
    let rotation = c.complaint_timeout_us + c.bucket_width_us() + 2 * c.tick_us + round + 5 * d;
    let commit = c.batch_timeout_us + 2 * c.tick_us + c.pull_timeout_us + round + 10 * d;
    u64::from(c.f) * rotation + c.forward_timeout_us + commit
}

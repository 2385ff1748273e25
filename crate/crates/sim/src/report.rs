//! Machine-readable run output.

use serde::{Deserialize, Serialize};

pub const REPORT_FORMAT: &str = "arma-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub scenario: String,
    pub seed: u64,
    pub n_parties: u32,
    pub f: u32,
    pub n_shards: u32,
    /// Logical time at which the run stopped.
    pub end_us: u64,
    pub quiescent: bool,
    pub submitted: u64,
    pub acked: u64,
    pub assemblers: Vec<AssemblerReport>,
    pub term_changes: Vec<TermChangeRecord>,
    pub duplicates: Vec<DuplicateRecord>,
    pub censorship: CensorshipReport,
    pub pending: PendingReport,
    pub network: NetStats,
    pub violation: Option<Violation>,
    pub checks: Checks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblerReport {
    pub party: u32,
    pub height: u64,
    /// Client transactions committed, counting repeats.
    pub txs: u64,
    pub tip_hash: String,
    pub throughput_tps: f64,
    pub latency: Latency,
}

/// Submit-to-commit latency percentiles, nearest rank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latency {
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
    pub max_us: u64,
}

impl Latency {
    pub fn from_samples(mut v: Vec<u64>) -> Self {
        if v.is_empty() {
            return Latency::default();
        }
        v.sort_unstable();
        let rank = |q: f64| {
            let i = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
            v[i - 1]
        };
        Latency {
            p50_us: rank(0.50),
            p95_us: rank(0.95),
            p99_us: rank(0.99),
            max_us: *v.last().expect("non-empty"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermChangeRecord {
    pub at_us: u64,
    pub round: u64,
    pub shard: u32,
    pub new_term: u64,
    pub complainers: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicateCause {
    /// The later batch came from a new primary that never held the earlier
    /// batch, so the transactions were still in its pool.
    NewPrimaryLackedBatch,
    Unexplained,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateRecord {
    pub tx: String,
    pub blocks: Vec<Occurrence>,
    pub cause: DuplicateCause,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub block: u64,
    pub batch: String,
    pub digest: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensorshipReport {
    /// The harness bound for this scenario.
    pub t_max_us: u64,
    /// Worst ack-to-commit delay over acked txs, on any correct assembler.
    pub worst_us: u64,
    pub late: u64,
    /// Acked txs missing from some correct assembler at the end.
    pub uncommitted: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReport {
    pub bound: usize,
    pub max_len: usize,
    pub final_len: usize,
    pub pruned: u64,
    pub expired: u64,
    pub resubmitted: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStats {
    pub delivered: u64,
    pub dropped: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub at_us: u64,
    pub what: String,
    /// The last events before the violation, oldest first.
    pub trace: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub agreement: bool,
    pub no_dup: bool,
    pub censorship_bound: bool,
    /// All checks the scenario expects, plus the absence of a violation.
    pub passed: bool,
}

/// One line of `records.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxLine {
    pub tx: String,
    pub client: u32,
    pub seq: u64,
    pub submit_us: u64,
    pub ack_us: Option<u64>,
    /// Commit time on each correct assembler, in report order.
    pub commit_us: Vec<Option<u64>>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

pub fn records_jsonl(lines: &[TxLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let l = Latency::from_samples((1..=100).collect());
        assert_eq!((l.p50_us, l.p95_us, l.p99_us, l.max_us), (50, 95, 99, 100));
        let one = Latency::from_samples(vec![7]);
        assert_eq!((one.p50_us, one.p99_us), (7, 7));
        assert_eq!(Latency::from_samples(vec![]), Latency::default());
    }
}

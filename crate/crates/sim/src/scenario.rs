//! Scenario files: everything a run needs, in one TOML document.

use std::collections::BTreeSet;

use arma_core::net::Endpoint;
use arma_core::types::{PartyId, ShardId};
use arma_core::{Config, ConfigError};
use serde::{Deserialize, Serialize};

pub const SCENARIO_FORMAT: &str = "arma-scenario/1";

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format tag {0:?}, expected {SCENARIO_FORMAT:?}")]
    Format(String),
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("{faulted} parties are faulted but f = {f}; mark the scenario negative to allow it")]
    FaultBudget { faulted: usize, f: u32 },
    #[error("fault targets party {0}, which does not exist")]
    UnknownParty(u32),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: String,
    pub name: String,
    pub seed: u64,
    /// Hard cap on logical time.
    pub duration_us: u64,
    /// Allows more than f faulted parties.
    #[serde(default)]
    pub negative: bool,
    #[serde(default)]
    pub config: Config,
    #[serde(default)]
    pub clients: ClientPlan,
    #[serde(default)]
    pub network: NetModel,
    #[serde(default)]
    pub sequencer: SequencerPlan,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub expect: Expect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientPlan {
    pub count: u32,
    pub tx_bytes: usize,
    pub phases: Vec<Phase>,
}

impl Default for ClientPlan {
    fn default() -> Self {
        ClientPlan {
            count: 4,
            tx_bytes: 64,
            phases: vec![Phase {
                start_us: 0,
                end_us: 500_000,
                rate_tps: 1_000,
            }],
        }
    }
}

impl ClientPlan {
    /// Transactions the plan will submit.
    pub fn total_txs(&self) -> u64 {
        self.phases.iter().map(Phase::tx_count).sum()
    }

    pub fn end_us(&self) -> u64 {
        self.phases.iter().map(|p| p.end_us).max().unwrap_or(0)
    }
}

/// Evenly spaced submissions at `rate_tps` over `[start_us, end_us)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub start_us: u64,
    pub end_us: u64,
    pub rate_tps: u64,
}

impl Phase {
    pub fn interval_us(&self) -> u64 {
        (1_000_000 / self.rate_tps.max(1)).max(1)
    }

    pub fn tx_count(&self) -> u64 {
        if self.rate_tps == 0 || self.end_us <= self.start_us {
            return 0;
        }
        (self.end_us - self.start_us).div_ceil(self.interval_us())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetModel {
    /// Per-pair one-way latencies are drawn once per run from this set.
    pub latencies_ms: Vec<u64>,
    pub jitter_us: u64,
    /// Latency between two nodes of the same party.
    pub intra_party_us: u64,
    /// Latency between any consenter and the ordering service.
    pub sequencer_link_us: u64,
    pub drop_rate: f64,
    pub partitions: Vec<Partition>,
    pub blocks: Vec<LinkBlock>,
}

impl Default for NetModel {
    fn default() -> Self {
        NetModel {
            latencies_ms: vec![10, 17, 20],
            jitter_us: 1_000,
            intra_party_us: 200,
            sequencer_link_us: 5_000,
            drop_rate: 0.0,
            partitions: Vec::new(),
            blocks: Vec::new(),
        }
    }
}

impl NetModel {
    /// Largest one-way delay any message can see.
    pub fn max_delay_us(&self) -> u64 {
        let wan = self.latencies_ms.iter().max().copied().unwrap_or(0) * 1_000;
        wan.max(self.intra_party_us).max(self.sequencer_link_us) + self.jitter_us
    }
}

/// Parties in different groups cannot talk during the window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub start_us: u64,
    pub end_us: u64,
    pub groups: Vec<Vec<u32>>,
}

impl Partition {
    fn group_of(&self, p: PartyId) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&p.0))
    }

    pub fn separates(&self, a: PartyId, b: PartyId, now: u64) -> bool {
        if now < self.start_us || now >= self.end_us || a == b {
            return false;
        }
        match (self.group_of(a), self.group_of(b)) {
            (Some(x), Some(y)) => x != y,
            // Parties outside every group are unaffected.
            _ => false,
        }
    }
}

/// Drops messages from endpoints matching `from` to those matching `to`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBlock {
    pub from: EndpointPattern,
    pub to: EndpointPattern,
    pub start_us: u64,
    #[serde(default)]
    pub end_us: Option<u64>,
}

impl LinkBlock {
    pub fn blocks(&self, from: &Endpoint, to: &Endpoint, now: u64) -> bool {
        now >= self.start_us
            && self.end_us.is_none_or(|e| now < e)
            && self.from.matches(from)
            && self.to.matches(to)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    All,
    Router,
    Batcher,
    Consenter,
    Assembler,
}

impl Role {
    pub fn matches(self, e: &Endpoint) -> bool {
        matches!(
            (self, e),
            (Role::All, Endpoint::Router(_) | Endpoint::Batcher(..))
                | (Role::All, Endpoint::Consenter(_) | Endpoint::Assembler(_))
                | (Role::Router, Endpoint::Router(_))
                | (Role::Batcher, Endpoint::Batcher(..))
                | (Role::Consenter, Endpoint::Consenter(_))
                | (Role::Assembler, Endpoint::Assembler(_))
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointPattern {
    #[serde(default)]
    pub role: Role,
    /// Any party when absent.
    #[serde(default)]
    pub party: Option<u32>,
    #[serde(default)]
    pub shard: Option<u32>,
}

impl EndpointPattern {
    pub fn matches(&self, e: &Endpoint) -> bool {
        let Some(p) = e.party() else {
            return false;
        };
        if !self.role.matches(e) || self.party.is_some_and(|x| x != p.0) {
            return false;
        }
        match (self.shard, e) {
            (Some(s), Endpoint::Batcher(_, shard)) => *shard == ShardId(s),
            _ => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequencerPlan {
    pub round_interval_us: u64,
    pub max_round_payloads: usize,
    pub dedup_epochs: u64,
}

impl Default for SequencerPlan {
    fn default() -> Self {
        SequencerPlan {
            round_interval_us: 10_000,
            max_round_payloads: 50_000,
            dedup_epochs: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub party: u32,
    #[serde(default)]
    pub role: Role,
    /// Batcher faults apply to every shard when absent.
    #[serde(default)]
    pub shard: Option<u32>,
    #[serde(flatten)]
    pub kind: FaultKind,
    #[serde(default)]
    pub start_us: u64,
    #[serde(default)]
    pub end_us: Option<u64>,
}

impl FaultSpec {
    pub fn active(&self, now: u64) -> bool {
        now >= self.start_us && self.end_us.is_none_or(|e| now < e)
    }

    pub fn targets(&self, e: &Endpoint) -> bool {
        EndpointPattern {
            role: self.role,
            party: Some(self.party),
            shard: self.shard,
        }
        .matches(e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// Permanent from `start_us`; `end_us` is ignored.
    Crash,
    Censor {
        #[serde(default)]
        predicate: CensorPredicate,
    },
    BogusPrimary {
        invalid_per_batch: usize,
    },
    SilentPrimary,
    EquivocateShares,
    StaleEpochReplayer,
}

/// Which client transactions a censoring batcher drops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CensorPredicate {
    #[default]
    All,
    /// Transactions whose per-run sequence number is `r` modulo `m`.
    SeqMod { m: u64, r: u64 },
    /// Transactions submitted before the given instant.
    SubmittedBefore { us: u64 },
}

impl CensorPredicate {
    pub fn matches(&self, seq: u64, submitted_us: u64) -> bool {
        match *self {
            CensorPredicate::All => true,
            CensorPredicate::SeqMod { m, r } => m > 0 && seq % m == r,
            CensorPredicate::SubmittedBefore { us } => submitted_us < us,
        }
    }
}

/// Which checks decide the run's verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expect {
    pub agreement: bool,
    pub no_dup: bool,
    pub censorship_bound: bool,
    /// Quiescence also waits for every observed pending list to empty.
    pub drain_pending: bool,
}

impl Default for Expect {
    fn default() -> Self {
        Expect {
            agreement: true,
            no_dup: true,
            censorship_bound: false,
            drain_pending: false,
        }
    }
}

impl Scenario {
    /// A fault-free scenario with default network and clients.
    pub fn new(name: &str, seed: u64, config: Config) -> Self {
        Scenario {
            format: SCENARIO_FORMAT.to_string(),
            name: name.to_string(),
            seed,
            duration_us: 10_000_000,
            negative: false,
            config,
            clients: ClientPlan::default(),
            network: NetModel::default(),
            sequencer: SequencerPlan::default(),
            faults: Vec::new(),
            expect: Expect::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Distinct parties named by any fault.
    pub fn faulted_parties(&self) -> BTreeSet<PartyId> {
        self.faults.iter().map(|f| PartyId(f.party)).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.format != SCENARIO_FORMAT {
            return Err(ScenarioError::Format(self.format.clone()));
        }
        self.config.validate()?;
        let n = self.config.n_parties;
        for f in &self.faults {
            if f.party >= n {
                return Err(ScenarioError::UnknownParty(f.party));
            }
        }
        let faulted = self.faulted_parties().len();
        if !self.negative && faulted > self.config.f as usize {
            return Err(ScenarioError::FaultBudget {
                faulted,
                f: self.config.f,
            });
        }
        if self.network.latencies_ms.is_empty() {
            return Err(ScenarioError::Invalid(
                "network.latencies_ms is empty".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.network.drop_rate) {
            return Err(ScenarioError::Invalid(
                "network.drop_rate must be in [0, 1)".into(),
            ));
        }
        if self.clients.count == 0 && self.clients.total_txs() > 0 {
            return Err(ScenarioError::Invalid(
                "clients.count must be positive".into(),
            ));
        }
        if self.clients.tx_bytes < 21 || self.clients.tx_bytes > self.config.max_tx_bytes {
            return Err(ScenarioError::Invalid(format!(
                "clients.tx_bytes must be in [21, {}]",
                self.config.max_tx_bytes
            )));
        }
        if self.sequencer.round_interval_us == 0 || self.sequencer.max_round_payloads == 0 {
            return Err(ScenarioError::Invalid(
                "sequencer limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

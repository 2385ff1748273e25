//! Ready-made scenarios: fault-free runs, censoring chains, the five
//! primary-failover cases, and a randomized generator.

use arma_core::crypto::SignatureScheme;
use arma_core::Config;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{
    CensorPredicate, ClientPlan, EndpointPattern, FaultKind, FaultSpec, LinkBlock, Partition,
    Phase, Role, Scenario,
};

/// Simulation defaults: cheap signatures, everything else stock.
pub fn sim_config(n: u32, f: u32, k: u32) -> Config {
    Config {
        scheme: SignatureScheme::KeyedMac,
        ..Config::new(n, f, k)
    }
}

fn clients(count: u32, tx_bytes: usize, phases: &[(u64, u64, u64)]) -> ClientPlan {
    ClientPlan {
        count,
        tx_bytes,
        phases: phases
            .iter()
            .map(|&(start_us, end_us, rate_tps)| Phase {
                start_us,
                end_us,
                rate_tps,
            })
            .collect(),
    }
}

/// `txs` transactions at 2000 tx/s, no faults.
pub fn fault_free(n: u32, k: u32, txs: u64, seed: u64) -> Scenario {
    let f = (n - 1) / 3;
    let mut sc = Scenario::new("fault-free", seed, sim_config(n, f, k));
    let rate = 2_000;
    sc.clients = clients(8, 64, &[(0, txs * 1_000_000 / rate, rate)]);
    sc
}

/// The regression-floor throughput run: 300-byte transactions.
pub fn throughput(seed: u64) -> Scenario {
    let mut sc = Scenario::new("throughput", seed, sim_config(4, 1, 4));
    sc.clients = clients(64, 300, &[(0, 2_000_000, 15_000)]);
    sc
}

pub fn smoke(seed: u64) -> Scenario {
    let mut sc = fault_free(4, 2, 1_000, seed);
    sc.name = "smoke".into();
    sc
}

/// Sustained load in tiny batches while party 3 is cut off for three
/// epochs; its late shares become orphans once the batches they attest
/// have left the admission window.
pub fn pending_pressure(seed: u64) -> Scenario {
    let mut cfg = sim_config(4, 1, 4);
    cfg.batch_max_txs = 4;
    cfg.sample_size = 2;
    cfg.max_epoch_skew = 2;
    cfg.max_pending_shares = 4_096;
    let epoch = cfg.epoch_length_us;
    let mut sc = Scenario::new("pending-pressure", seed, cfg);
    sc.clients = clients(16, 32, &[(0, 6 * epoch, 7_000)]);
    sc.network.partitions.push(Partition {
        start_us: epoch,
        end_us: 4 * epoch,
        groups: vec![vec![3], vec![0, 1, 2]],
    });
    sc.expect.drain_pending = true;
    sc.duration_us = 60 * epoch;
    sc
}

fn censor(party: u32, shard: u32) -> FaultSpec {
    FaultSpec {
        party,
        role: Role::Batcher,
        shard: Some(shard),
        kind: FaultKind::Censor {
            predicate: CensorPredicate::All,
        },
        start_us: 0,
        end_us: None,
    }
}

/// The first `f` primaries of shard 0 all censor every transaction.
pub fn censor_chain(n: u32, seed: u64) -> Scenario {
    let f = (n - 1) / 3;
    let mut sc = Scenario::new(&format!("censor-chain-n{n}"), seed, sim_config(n, f, 1));
    sc.clients = clients(8, 64, &[(0, 2_000_000, 200)]);
    // Shard 0's primary in term t is party t.
    sc.faults = (0..f).map(|p| censor(p, 0)).collect();
    sc.expect.censorship_bound = true;
    sc.duration_us = 30_000_000;
    sc
}

/// The primary of shard 0 stops serving batches from `start_us`.
pub fn silent_primary(n: u32, seed: u64, start_us: u64) -> Scenario {
    let f = (n - 1) / 3;
    let mut sc = Scenario::new("silent-primary", seed, sim_config(n, f, 1));
    sc.clients = clients(8, 64, &[(0, 1_500_000, 200)]);
    sc.faults = vec![FaultSpec {
        party: 0,
        role: Role::Batcher,
        shard: Some(0),
        kind: FaultKind::SilentPrimary,
        start_us,
        end_us: None,
    }];
    sc
}

/// Where the old primary's last batch ended up when it crashed.
///
/// `A`: the next primary received it. `B`: a quorum of parties did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailoverCase {
    /// Everyone received the batch.
    AB,
    /// Fewer than a quorum but at least f+1 correct batchers received it;
    /// the next primary did not and ignores its transactions.
    NotANotBThresholdHeld,
    /// At most f correct batchers received it; the next primary did not
    /// and ignores its transactions until it is voted out.
    NotANotBFewHeld,
    /// A quorum received it but the next primary did not.
    NotAB,
    /// Only the next primary received it.
    ANotB,
}

impl FailoverCase {
    pub const ALL: [FailoverCase; 5] = [
        FailoverCase::AB,
        FailoverCase::NotANotBThresholdHeld,
        FailoverCase::NotANotBFewHeld,
        FailoverCase::NotAB,
        FailoverCase::ANotB,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FailoverCase::AB => "AB",
            FailoverCase::NotANotBThresholdHeld => "~A~B(a)",
            FailoverCase::NotANotBFewHeld => "~A~B(b)",
            FailoverCase::NotAB => "~AB",
            FailoverCase::ANotB => "A~B",
        }
    }

    /// The only case in which the same transactions may commit twice.
    pub fn expects_duplicates(self) -> bool {
        self == FailoverCase::NotAB
    }
}

fn batch_link(from: u32, to: EndpointPattern) -> LinkBlock {
    LinkBlock {
        from: EndpointPattern {
            role: Role::Batcher,
            party: Some(from),
            shard: None,
        },
        to,
        start_us: 0,
        end_us: None,
    }
}

fn batcher(p: u32) -> EndpointPattern {
    EndpointPattern {
        role: Role::Batcher,
        party: Some(p),
        shard: None,
    }
}

/// Submissions before `FAILOVER_CRASH_US` form the old primary's last batch.
pub const FAILOVER_BURST_END_US: u64 = 10_000;
pub const FAILOVER_CRASH_US: u64 = 150_000;

/// Shard 0's term-0 primary (party 0) proposes one batch, then crashes.
/// Link blocks decide who receives that batch. Party 1 is the next primary.
pub fn failover(case: FailoverCase, seed: u64) -> Scenario {
    let n = match case {
        FailoverCase::AB | FailoverCase::NotAB | FailoverCase::ANotB => 4,
        _ => 7,
    };
    let f = (n - 1) / 3;
    let mut cfg = sim_config(n, f, 1);
    // One batch holds the whole opening burst.
    cfg.batch_timeout_us = 60_000;
    let mut sc = Scenario::new(&format!("failover-{}", case.label()), seed, cfg);
    sc.clients = clients(
        4,
        64,
        &[(0, FAILOVER_BURST_END_US, 2_000), (300_000, 700_000, 50)],
    );
    sc.duration_us = 30_000_000;
    let mut faults = vec![FaultSpec {
        party: 0,
        role: Role::Batcher,
        shard: None,
        kind: FaultKind::Crash,
        start_us: FAILOVER_CRASH_US,
        end_us: None,
    }];
    let receivers: &[u32] = match case {
        FailoverCase::AB => &[1, 2, 3],
        FailoverCase::NotAB => &[2, 3],
        FailoverCase::ANotB => &[1],
        FailoverCase::NotANotBThresholdHeld => &[2, 3, 4],
        FailoverCase::NotANotBFewHeld => &[3],
    };
    for p in 1..n {
        if !receivers.contains(&p) {
            sc.network.blocks.push(batch_link(0, batcher(p)));
        }
    }
    if case == FailoverCase::ANotB {
        // The old primary's own share never reaches the ordering service.
        sc.network.blocks.push(batch_link(
            0,
            EndpointPattern {
                role: Role::Consenter,
                party: None,
                shard: None,
            },
        ));
    }
    if matches!(
        case,
        FailoverCase::NotANotBThresholdHeld | FailoverCase::NotANotBFewHeld
    ) {
        faults.push(censor(1, 0));
    }
    sc.faults = faults;
    sc
}

/// A randomized scenario with at most f faulted parties.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = *[4u32, 7, 10].choose(&mut rng).expect("non-empty");
    let k = *[1u32, 2, 4].choose(&mut rng).expect("non-empty");
    let f = (n - 1) / 3;
    let mut sc = Scenario::new(&format!("random-{seed}"), seed, sim_config(n, f, k));
    let rate = rng.gen_range(300..=900);
    let end = rng.gen_range(200_000..=500_000);
    sc.clients = clients(8, rng.gen_range(32..=256), &[(0, end, rate)]);
    sc.network.jitter_us = rng.gen_range(0..=3_000);
    sc.network.drop_rate = *[0.0, 0.0, 0.002, 0.01].choose(&mut rng).expect("non-empty");
    if rng.gen_bool(0.25) {
        let start = rng.gen_range(0..300_000);
        let lone = rng.gen_range(0..n);
        sc.network.partitions.push(Partition {
            start_us: start,
            end_us: start + rng.gen_range(100_000..600_000),
            groups: vec![vec![lone], (0..n).filter(|&p| p != lone).collect()],
        });
    }
    let mut parties: Vec<u32> = (0..n).collect();
    parties.shuffle(&mut rng);
    let faulted = rng.gen_range(0..=f) as usize;
    for &party in &parties[..faulted] {
        let start_us = rng.gen_range(0..400_000);
        let (role, kind) = match rng.gen_range(0..7) {
            0 => (
                *[
                    Role::All,
                    Role::Router,
                    Role::Batcher,
                    Role::Consenter,
                    Role::Assembler,
                ]
                .choose(&mut rng)
                .expect("non-empty"),
                FaultKind::Crash,
            ),
            1 => (
                Role::Batcher,
                FaultKind::Censor {
                    predicate: if rng.gen_bool(0.5) {
                        CensorPredicate::All
                    } else {
                        CensorPredicate::SeqMod { m: 3, r: 1 }
                    },
                },
            ),
            2 => (
                Role::Batcher,
                FaultKind::BogusPrimary {
                    invalid_per_batch: rng.gen_range(1..=4),
                },
            ),
            3 => (Role::Batcher, FaultKind::SilentPrimary),
            4 => (Role::Batcher, FaultKind::EquivocateShares),
            5 => (Role::Batcher, FaultKind::StaleEpochReplayer),
            _ => (Role::Consenter, FaultKind::Crash),
        };
        sc.faults.push(FaultSpec {
            party,
            role,
            shard: None,
            kind,
            start_us,
            end_us: None,
        });
    }
    sc.duration_us = 40_000_000;
    sc
}

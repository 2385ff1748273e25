use std::collections::BTreeMap;

use arma_core::codec::Wire;
use arma_core::storage::scan;
use arma_core::types::Block;
use arma_sim::report::RunReport;
use arma_sim::scenario::{FaultKind, Role};
use arma_sim::scripted::{self, FailoverCase};
use arma_sim::{run, t_max, Scenario, ScenarioError};

/// `(client, seq)` -> number of times committed, from raw ledger bytes.
fn commit_counts(ledger: &[u8]) -> BTreeMap<(u32, u64), usize> {
    let mut out = BTreeMap::new();
    for (_, r) in scan(ledger).records {
        let b = Block::from_bytes(&ledger[r]).unwrap();
        for tx in &b.batch.txs {
            let p = tx.payload();
            let client = u32::from_be_bytes(p[1..5].try_into().unwrap());
            let seq = u64::from_be_bytes(p[5..13].try_into().unwrap());
            *out.entry((client, seq)).or_insert(0) += 1;
        }
    }
    out
}

fn healthy(r: &RunReport) {
    assert!(r.violation.is_none(), "{:?}", r.violation);
    assert!(r.quiescent);
    assert!(r.checks.passed, "{:?}", r.checks);
}

#[test]
fn fault_free_commits_every_tx_exactly_once() {
    let sc = scripted::fault_free(4, 2, 1_000, 1);
    let out = run(&sc).unwrap();
    healthy(&out.report);
    assert_eq!(out.report.submitted, 1_000);
    assert_eq!(out.report.acked, 1_000);
    assert_eq!(out.ledgers.len(), 4);
    for ledger in out.ledgers.values() {
        let counts = commit_counts(ledger);
        assert_eq!(counts.len(), 1_000);
        assert!(counts.values().all(|&c| c == 1));
    }
    assert!(out.report.term_changes.is_empty());
}

#[test]
fn censoring_primary_is_rotated_out() {
    let sc = scripted::censor_chain(4, 2);
    let out = run(&sc).unwrap();
    let r = &out.report;
    healthy(r);
    assert_eq!(r.term_changes.len(), 1);
    assert_eq!(r.term_changes[0].shard, 0);
    assert_eq!(r.term_changes[0].new_term, 1);
    assert_eq!(r.term_changes[0].complainers.len(), 2);
    assert!(!r.term_changes[0].complainers.contains(&0));
    assert!(r.censorship.worst_us <= t_max(&sc));
}

#[test]
fn consenter_crash_keeps_headers_flowing() {
    let mut sc = scripted::fault_free(4, 2, 600, 3);
    sc.faults.push(arma_sim::scenario::FaultSpec {
        party: 2,
        role: Role::Consenter,
        shard: None,
        kind: FaultKind::Crash,
        start_us: 100_000,
        end_us: None,
    });
    let out = run(&sc).unwrap();
    healthy(&out.report);
    // The crashed party is not observed; the other three agree.
    assert_eq!(out.ledgers.len(), 3);
    for ledger in out.ledgers.values() {
        assert_eq!(commit_counts(ledger).len(), 600);
    }
}

#[test]
fn silent_primary_is_replaced_within_bound() {
    let start = 200_000;
    let sc = scripted::silent_primary(4, 1, start);
    let out = run(&sc).unwrap();
    let r = &out.report;
    healthy(r);
    let tc = r.term_changes.first().expect("a rotation");
    assert!(tc.at_us > start);
    let c = &sc.config;
    let slack = 2 * c.tick_us + sc.sequencer.round_interval_us + 4 * sc.network.max_delay_us();
    assert!(
        tc.at_us - start <= c.complaint_timeout_us + c.bucket_width_us() + slack,
        "rotated {}us after going silent",
        tc.at_us - start
    );
}

#[test]
fn only_not_a_b_failover_duplicates() {
    for case in FailoverCase::ALL {
        let out = run(&scripted::failover(case, 2)).unwrap();
        healthy(&out.report);
        let dups = out.report.duplicates.len();
        assert_eq!(
            dups > 0,
            case.expects_duplicates(),
            "{}: {dups}",
            case.label()
        );
    }
}

#[test]
fn same_seed_same_bytes() {
    let sc = scripted::random_scenario(77);
    let a = run(&sc).unwrap();
    let b = run(&sc).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.ledgers, b.ledgers);
    let mut other = sc.clone();
    other.seed += 1;
    let c = run(&other).unwrap();
    assert_ne!(a.report.to_json(), c.report.to_json());
}

#[test]
fn report_json_round_trips() {
    let out = run(&scripted::smoke(5)).unwrap();
    let json = out.report.to_json();
    let back = RunReport::from_json(&json).unwrap();
    assert_eq!(back.to_json(), json);
}

#[test]
fn scenario_toml_round_trips_and_runs() {
    let sc = scripted::failover(FailoverCase::NotANotBFewHeld, 4);
    let text = sc.to_toml();
    let back = Scenario::from_toml(&text).unwrap();
    assert_eq!(back, sc);
    assert_eq!(
        run(&back).unwrap().report.to_json(),
        run(&sc).unwrap().report.to_json()
    );
}

#[test]
fn fault_budget_is_enforced() {
    let mut sc = scripted::censor_chain(4, 1);
    sc.faults.push(sc.faults[0].clone());
    sc.faults[1].party = 1;
    assert!(matches!(
        run(&sc),
        Err(ScenarioError::FaultBudget { faulted: 2, f: 1 })
    ));
}

#[test]
fn lossy_network_still_agrees() {
    let mut sc = scripted::fault_free(7, 2, 800, 9);
    sc.network.drop_rate = 0.02;
    sc.network.jitter_us = 4_000;
    let out = run(&sc).unwrap();
    healthy(&out.report);
    assert!(out.report.network.dropped > 0);
    let first = commit_counts(out.ledgers.values().next().unwrap());
    assert_eq!(first.len(), 800);
}

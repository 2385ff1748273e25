//! `arma`: run simulated scenarios, generate configs, verify ledgers and
//! summarize runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arma_core::assembler::verify_ledger;
use arma_core::crypto::TestKeys;
use arma_core::Config;
use arma_sim::keys::{read_key_dir, write_key_dir};
use arma_sim::report::records_jsonl;
use arma_sim::{run, RunReport, Scenario};
use clap::{Parser, Subcommand};

/// Seed for keys made by `gen-config`.
const GEN_CONFIG_SEED: u64 = 0;
const CONFIG_FILE: &str = "config.toml";
const REPORT_FILE: &str = "report.json";

#[derive(Parser)]
#[command(
    name = "arma",
    version,
    about = "Sharded BFT ordering: simulator and tools"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write its report, tx records, ledgers and keys.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a config and seeded test keys.
    GenConfig {
        #[arg(long)]
        parties: u32,
        #[arg(long)]
        shards: u32,
        #[arg(long)]
        faults: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check every block of a ledger file against a key directory.
    VerifyLedger {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        keys: PathBuf,
    },
    /// Print throughput and latency per assembler from a run directory.
    Stats {
        #[arg(long)]
        report: PathBuf,
    },
}

enum Failure {
    /// A check or verification failed: exit 1.
    Check(String),
    /// Bad input: exit 2.
    Usage(String),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, data).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(scenario: &Path, seed: u64, out: &Path) -> Outcome {
    let text = String::from_utf8(read(scenario)?).map_err(|_| usage("scenario is not UTF-8"))?;
    let mut sc =
        Scenario::from_toml(&text).map_err(|e| usage(format!("{}: {e}", scenario.display())))?;
    sc.seed = seed;
    let res = run(&sc).map_err(usage)?;
    fs::create_dir_all(out).map_err(usage)?;
    write(&out.join(REPORT_FILE), res.report.to_json())?;
    write(&out.join("records.jsonl"), records_jsonl(&res.records))?;
    for (p, bytes) in &res.ledgers {
        write(&out.join(format!("ledger-{p}.log")), bytes)?;
    }
    write_key_dir(out, &res.keys, &sc.config, seed).map_err(usage)?;

    let r = &res.report;
    let height = r.assemblers.iter().map(|a| a.height).max().unwrap_or(0);
    println!(
        "{}: seed {} submitted {} acked {} blocks {} term changes {} duplicates {}",
        r.scenario,
        r.seed,
        r.submitted,
        r.acked,
        height,
        r.term_changes.len(),
        r.duplicates.len()
    );
    println!(
        "checks: agreement {} no_dup {} censorship_bound {} quiescent {}",
        r.checks.agreement, r.checks.no_dup, r.checks.censorship_bound, r.quiescent
    );
    if let Some(v) = &r.violation {
        return Err(Failure::Check(format!("violation: {v:?}")));
    }
    if !r.checks.passed {
        return Err(Failure::Check("checks failed".into()));
    }
    Ok(())
}

fn cmd_gen_config(parties: u32, shards: u32, faults: u32, out: &Path) -> Outcome {
    let cfg = Config::new(parties, faults, shards);
    cfg.validate().map_err(usage)?;
    fs::create_dir_all(out).map_err(usage)?;
    let text = toml::to_string(&cfg).map_err(usage)?;
    write(&out.join(CONFIG_FILE), text)?;
    let keys = TestKeys::generate(cfg.scheme, GEN_CONFIG_SEED, parties, 0);
    write_key_dir(out, &keys, &cfg, GEN_CONFIG_SEED).map_err(usage)?;
    println!(
        "parties {parties} faults {faults} shards {shards} quorum {}",
        cfg.quorum()
    );
    println!("wrote {} and keys to {}", CONFIG_FILE, out.display());
    Ok(())
}

fn cmd_verify_ledger(ledger: &Path, keys: &Path) -> Outcome {
    let bytes = read(ledger)?;
    let kf = read_key_dir(keys).map_err(usage)?;
    let keyring = kf.keyring().map_err(usage)?;
    let rep = verify_ledger(&bytes, &keyring, kf.quorum());
    if let Some(f) = rep.failure {
        return Err(Failure::Check(format!(
            "FAIL: block {} at offset {}: {} ({} blocks verified before it)",
            f.block, f.offset, f.reason, rep.blocks_verified
        )));
    }
    println!("ok: {} blocks verified", rep.blocks_verified);
    if let Some(at) = rep.truncated_at {
        println!("note: truncated final record at offset {at} ignored");
    }
    Ok(())
}

fn cmd_stats(dir: &Path) -> Outcome {
    let path = if dir.is_dir() {
        dir.join(REPORT_FILE)
    } else {
        dir.to_path_buf()
    };
    let text = String::from_utf8(read(&path)?).map_err(|_| usage("report is not UTF-8"))?;
    let r = RunReport::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    println!(
        "{:>5} {:>8} {:>10} {:>12} {:>10} {:>10} {:>10}",
        "party", "height", "txs", "tx/s", "p50_us", "p95_us", "p99_us"
    );
    for a in &r.assemblers {
        println!(
            "{:>5} {:>8} {:>10} {:>12.1} {:>10} {:>10} {:>10}",
            a.party,
            a.height,
            a.txs,
            a.throughput_tps,
            a.latency.p50_us,
            a.latency.p95_us,
            a.latency.p99_us
        );
    }
    if r.assemblers.is_empty() {
        println!(
            "{:>5} {:>8} {:>10} {:>12.1} {:>10} {:>10} {:>10}",
            "-", 0, 0, 0.0, 0, 0, 0
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version print to stdout and exit 0; everything else is 2.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match &cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
        } => cmd_run(scenario, *seed, out),
        Cmd::GenConfig {
            parties,
            shards,
            faults,
            out,
        } => cmd_gen_config(*parties, *shards, *faults, out),
        Cmd::VerifyLedger { ledger, keys } => cmd_verify_ledger(ledger, keys),
        Cmd::Stats { report } => cmd_stats(report),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

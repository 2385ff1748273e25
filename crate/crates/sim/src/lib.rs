//! Deterministic simulation of a full deployment: clients, network,
//! scripted faults, and whole-run checks.

pub mod checks;
pub mod harness;
pub mod keys;
pub mod report;
pub mod scenario;
pub mod scripted;

pub use checks::{check_agreement, check_censorship_bound, check_no_dup, t_max};
pub use harness::{run, RunOutput, Sim};
pub use report::RunReport;
pub use scenario::{Scenario, ScenarioError};

//! Experiment harness: wires the core modules into the round and epoch
//! event loop and reports throughput, latency, gas and chain growth.

pub mod baseline;
pub mod chain;
pub mod config;
pub mod metrics;
pub mod shadow;
pub mod sim;
pub mod sweep;

pub use baseline::{compare_baseline, Comparison};
pub use config::{ExperimentConfig, RollbackSpec};
pub use metrics::MetricsReport;
pub use shadow::shadow_oracle;
pub use sim::{committee_for, leader_miner, run, RunOutput};

use thiserror::Error;

use l2amm_core::auth::AuthError;
use l2amm_core::bank::BankError;
use l2amm_core::consensus::ConsensusError;
use l2amm_core::ledger::LedgerError;
use l2amm_core::mainchain::MainchainError;
use l2amm_core::workload::WorkloadError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("epoch {epoch}: {faulty} faulty committee members exceed f = {f}")]
    AssumptionViolated { epoch: u64, faulty: usize, f: usize },
    #[error("sync of {gas} gas cannot be split under a {limit} block limit")]
    SyncTooLarge { gas: u64, limit: u64 },
    #[error("direct replay diverges: {0}")]
    Divergence(String),
    #[error("run did not settle: {0}")]
    Stuck(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Mainchain(#[from] MainchainError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

//! Sidechain transactions, epoch execution, summaries and pruning.

mod chain;
mod epoch;
mod summary;
mod tx;

pub use chain::SideChain;
pub use epoch::{
    apply_meta_block, build_block, snapshot_bank, verify_block, BuiltBlock, EpochState, MetaBlock, MintDepositRule, Rejection,
    TxEffect,
};
pub use summary::{build_sync_payload, merge_summaries, payouts_from, replay_effects, summarize_epoch, SummaryBlock};
pub use tx::{SidechainTx, TxBody, TxKind};

use thiserror::Error;

use crate::num::ByteSize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("block of {size} exceeds the {limit} limit")]
    BlockOverCapacity { size: ByteSize, limit: ByteSize },
    #[error("transaction {index} rejected: {reason}")]
    InvalidTransaction { index: usize, reason: Rejection },
    #[error("summary replay disagrees with execution: {0}")]
    InconsistentReplay(String),
    #[error("meta-block at round {round} does not extend its parent")]
    BrokenChain { round: u64 },
    #[error("sync covering epoch {0} is not confirmed")]
    SyncNotConfirmed(u64),
    #[error("a sync needs consecutive summaries")]
    EmptySync,
}

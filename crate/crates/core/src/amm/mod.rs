//! Constant-product pool with tick-ranged liquidity positions.
//!
//! Every mutating operation either succeeds completely or returns an error
//! with the pool untouched. The same functions back the sidechain executor,
//! the token bank's flash loans and the shadow replay.

mod pool;
mod tick;

pub use pool::{BurnOutcome, CollectOutcome, MintOutcome, PoolState, Position, PriceLimit, Side, SwapResult};
pub use tick::{tick_of, TickRange, MAX_TICK, MIN_TICK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fee rates are expressed in parts per million.
pub const PPM: u32 = 1_000_000;
/// Default pool fee: 0.3 %.
pub const DEFAULT_FEE_PPM: u32 = 3_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EngineError {
    #[error("deadline round passed")]
    ExpiredDeadline,
    #[error("output below minimum or input above maximum")]
    SlippageExceeded,
    #[error("trade crosses the price limit or the active tick range")]
    PriceLimitHit,
    #[error("amount must be nonzero")]
    ZeroAmount,
    #[error("pool reserve insufficient")]
    InsufficientReserve,
    #[error("caller does not own the position")]
    NotOwner,
    #[error("liquidity would be zero")]
    ZeroLiquidity,
    #[error("invalid tick range")]
    BadRange,
    #[error("unknown position")]
    UnknownPosition,
    #[error("position id already exists")]
    DuplicatePosition,
    #[error("token is not part of this pool")]
    UnknownToken,
    #[error("no in-range liquidity to receive the fee")]
    NoActiveLiquidity,
    #[error("fee rate must be below one million ppm")]
    BadFeeRate,
    #[error("arithmetic overflow")]
    Overflow,
}

pub type Result<T> = std::result::Result<T, EngineError>;

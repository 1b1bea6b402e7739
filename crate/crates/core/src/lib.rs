//! Core library of an epoch-based AMM sidechain simulator.
//!
//! Modules, bottom-up:
//! - [`amm`]: constant-product pool and position logic.
//! - [`bank`]: the mainchain contract holding pools, deposits and positions of record.
//! - [`auth`]: threshold Schnorr signatures certifying sync payloads.
//! - [`ledger`]: sidechain transactions, meta-blocks, summaries and pruning.
//! - [`consensus`]: committee election and leader-based agreement.
//! - [`mainchain`]: block production, confirmation depth and rollbacks.
//! - [`workload`]: synthetic traffic.

pub mod amm;
pub mod auth;
pub mod bank;
pub mod consensus;
pub mod ids;
pub mod ledger;
pub mod mainchain;
pub mod num;
pub mod workload;

pub use ids::{PoolId, PositionId, PublicKey, TokenId};
pub use num::{Amount, ByteSize};

/// Token amounts in minimal units.
pub type TokenAmount = u128;
/// Pool over the default amount type.
pub type Pool = amm::PoolState<TokenAmount>;
/// Position over the default amount type.
pub type LiquidityPosition = amm::Position<TokenAmount>;

//! Mainchain gas and storage-size model.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BankError;
use crate::num::ByteSize;

/// Constant charge per disbursed payout.
pub const PAYOUT_GAS: u64 = 15_771;
/// Storage cost per 32-byte word.
pub const WORD_GAS: u64 = 22_100;
pub const PAYOUT_WORDS: u64 = 11;
pub const POSITION_WORDS: u64 = 13;
/// vk (128 B) plus signature (64 B).
pub const AUTH_WORDS: u64 = 6;
pub const PAIRING_GAS: u64 = 113_000;
pub const EC_MUL_GAS: u64 = 6_000;
pub const HASH_BASE_GAS: u64 = 30;
pub const HASH_CHUNK_GAS: u64 = 6;
pub const HASH_CHUNK_BYTES: u64 = 256;
pub const DEPOSIT_TWO_TOKEN_GAS: u64 = 105_392;

/// Mainchain encodings.
pub const PAYOUT_MAIN_BYTES: u64 = 352;
pub const POSITION_MAIN_BYTES: u64 = 416;
pub const AUTH_MAIN_BYTES: u64 = 192;
/// Handoff certificate message: epoch and next vk.
pub const HANDOFF_MSG_BYTES: u64 = 136;
/// Sidechain summary encodings.
pub const PAYOUT_SIDE_BYTES: u64 = 97;
pub const POSITION_SIDE_BYTES: u64 = 215;

/// Operations executed directly on the mainchain by the reference AMM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineOp {
    Swap,
    Mint,
    Burn,
    Collect,
}

impl BaselineOp {
    pub const ALL: [BaselineOp; 4] = [BaselineOp::Swap, BaselineOp::Mint, BaselineOp::Burn, BaselineOp::Collect];

    pub fn gas(self) -> u64 {
        match self {
            BaselineOp::Swap => 160_601,
            BaselineOp::Mint => 435_610,
            BaselineOp::Burn => 158_473,
            BaselineOp::Collect => 163_743,
        }
    }

    /// Transaction size on a public test network.
    pub fn size(self) -> ByteSize {
        ByteSize::from_centibytes(match self {
            BaselineOp::Swap => 36_527,
            BaselineOp::Mint => 56_555,
            BaselineOp::Burn => 28_021,
            BaselineOp::Collect => 15_018,
        })
    }
}

impl FromStr for BaselineOp {
    type Err = BankError;
    fn from_str(s: &str) -> Result<Self, BankError> {
        match s {
            "swap" => Ok(BaselineOp::Swap),
            "mint" => Ok(BaselineOp::Mint),
            "burn" => Ok(BaselineOp::Burn),
            "collect" => Ok(BaselineOp::Collect),
            other => Err(BankError::UnknownOp(other.to_string())),
        }
    }
}

/// Operation descriptor for [`gas_cost`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GasOp {
    /// A sync carrying `payouts` and `positions` entries whose summary data
    /// occupies `summary_bytes`, plus `handoffs` chained key certificates.
    Sync {
        payouts: u64,
        positions: u64,
        summary_bytes: u64,
        handoffs: u64,
    },
    /// A deposit of one or two tokens.
    Deposit {
        tokens: u32,
    },
    Baseline(BaselineOp),
}

impl GasOp {
    /// Sync descriptor with the mainchain summary size derived from the entry counts.
    pub fn sync(payouts: u64, positions: u64, handoffs: u64) -> GasOp {
        GasOp::Sync { payouts, positions, summary_bytes: payouts * PAYOUT_MAIN_BYTES + positions * POSITION_MAIN_BYTES, handoffs }
    }
}

fn hash_gas(bytes: u64) -> u64 {
    HASH_BASE_GAS + HASH_CHUNK_GAS * bytes.div_ceil(HASH_CHUNK_BYTES)
}

/// Authentication cost of one signature check: pairing, hash-to-point and
/// storage of vk and signature.
fn auth_gas(message_bytes: u64) -> u64 {
    PAIRING_GAS + EC_MUL_GAS + hash_gas(message_bytes) + WORD_GAS * AUTH_WORDS
}

pub fn gas_cost(op: GasOp) -> Result<u64, BankError> {
    match op {
        GasOp::Sync { payouts, positions, summary_bytes, handoffs } => Ok(PAYOUT_GAS * payouts
            + WORD_GAS * (PAYOUT_WORDS * payouts + POSITION_WORDS * positions)
            + auth_gas(summary_bytes)
            + handoffs * auth_gas(HANDOFF_MSG_BYTES)),
        GasOp::Deposit { tokens: 2 } => Ok(DEPOSIT_TWO_TOKEN_GAS),
        GasOp::Deposit { tokens: 1 } => Ok(DEPOSIT_TWO_TOKEN_GAS / 2),
        GasOp::Deposit { tokens } => Err(BankError::UnknownOp(format!("deposit of {tokens} tokens"))),
        GasOp::Baseline(b) => Ok(b.gas()),
    }
}

/// Mainchain bytes of a sync payload.
pub fn sync_main_size(payouts: u64, positions: u64, handoffs: u64) -> ByteSize {
    ByteSize::from_bytes(payouts * PAYOUT_MAIN_BYTES + positions * POSITION_MAIN_BYTES + AUTH_MAIN_BYTES * (1 + handoffs))
}

/// Sidechain bytes of a summary block.
pub fn summary_side_size(payouts: u64, positions: u64) -> ByteSize {
    ByteSize::from_bytes(payouts * PAYOUT_SIDE_BYTES + positions * POSITION_SIDE_BYTES)
}

//! The token bank as mainchain contract state, and the sizing of the
//! transactions that reach it.

use std::collections::{BTreeMap, BTreeSet};

use l2amm_core::bank::gas::{PAYOUT_GAS, PAYOUT_MAIN_BYTES, PAYOUT_WORDS, POSITION_MAIN_BYTES, POSITION_WORDS, WORD_GAS};
use l2amm_core::bank::{gas_cost, BankState, DepositReceipt, Disbursement, GasOp, SyncPayload};
use l2amm_core::mainchain::ChainState;
use l2amm_core::workload::DepositIntent;
use l2amm_core::ByteSize;

use crate::SimError;

/// Encoded size of a two-token deposit call.
pub const DEPOSIT_MAIN_BYTES: u64 = 242;
/// Bytes saved by leaving out one token of a deposit.
pub const DEPOSIT_TOKEN_BYTES: u64 = 64;

#[derive(Clone, Debug)]
pub enum MainBody {
    Deposit(DepositIntent),
    /// Carries part of a sync's entries; only its gas and bytes matter.
    SyncPart {
        sync: u64,
        part: u32,
    },
    /// Authenticates and applies the sync once all `parts` are staged.
    SyncFinal {
        sync: u64,
        parts: u32,
        payload: Box<SyncPayload>,
    },
}

#[derive(Clone, Debug)]
pub enum MainOutput {
    Deposited(Vec<DepositReceipt>),
    Staged,
    Synced { first: u64, last: u64, disbursed: Vec<Disbursement> },
}

/// Bank state plus the staging area of multi-block syncs.
#[derive(Clone, Debug)]
pub struct BankChain {
    pub bank: BankState,
    staged: BTreeMap<u64, BTreeSet<u32>>,
    epoch_duration_s: f64,
    /// Time after inclusion until a deposit is considered settled.
    settle_s: f64,
}

impl BankChain {
    pub fn new(bank: BankState, epoch_duration_s: f64, settle_s: f64) -> Self {
        BankChain { bank, staged: BTreeMap::new(), epoch_duration_s, settle_s }
    }

    /// Epoch in progress at `time_s`.
    pub fn epoch_at(&self, time_s: f64) -> u64 {
        (time_s / self.epoch_duration_s).floor().max(0.0) as u64
    }
}

impl ChainState for BankChain {
    type Tx = MainBody;
    type Output = MainOutput;

    fn apply(&mut self, tx: &MainBody, _height: u64, time_s: f64) -> Result<MainOutput, String> {
        let out = match tx {
            MainBody::Deposit(d) => {
                // A deposit only funds epochs that start after it has settled.
                let current = self.epoch_at(time_s + self.settle_s);
                let mut receipts = Vec::new();
                for &(token, amount) in &d.amounts {
                    let r = self.bank.deposit_for_epoch(d.user, token, amount, current, d.target_epoch);
                    receipts.push(r.map_err(|e| e.to_string())?);
                }
                MainOutput::Deposited(receipts)
            }
            MainBody::SyncPart { sync, part } => {
                self.staged.entry(*sync).or_default().insert(*part);
                MainOutput::Staged
            }
            MainBody::SyncFinal { sync, parts, payload } => {
                let have = self.staged.get(sync).map_or(0, BTreeSet::len);
                if have != *parts as usize {
                    return Err(format!("sync {sync} has {have} of {parts} parts staged"));
                }
                let disbursed = self.bank.process_sync(payload).map_err(|e| e.to_string())?;
                self.staged.remove(sync);
                MainOutput::Synced { first: payload.first_epoch, last: payload.last_epoch, disbursed }
            }
        };
        self.bank.check_custody().map_err(|e| format!("custody: {e}"))?;
        Ok(out)
    }
}

/// Gas and bytes of a deposit call.
pub fn deposit_cost(d: &DepositIntent) -> Result<(u64, ByteSize), SimError> {
    let tokens = d.amounts.len() as u32;
    let gas = gas_cost(GasOp::Deposit { tokens }).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
    let bytes = DEPOSIT_MAIN_BYTES - DEPOSIT_TOKEN_BYTES * (2 - tokens as u64);
    Ok((gas, ByteSize::from_bytes(bytes)))
}

/// Splits a sync into transactions that each fit `gas_limit`. Entries are
/// spread over leading parts; the last transaction carries the signature
/// checks and whatever entries still fit. Totals equal the unsplit sync.
pub fn plan_sync(payload: &SyncPayload, gas_limit: u64) -> Result<Vec<(u64, ByteSize)>, SimError> {
    let payout = (PAYOUT_GAS + WORD_GAS * PAYOUT_WORDS, PAYOUT_MAIN_BYTES);
    let position = (WORD_GAS * POSITION_WORDS, POSITION_MAIN_BYTES);
    let entries: Vec<(u64, u64)> = std::iter::repeat_n(payout, payload.payouts.len())
        .chain(std::iter::repeat_n(position, payload.positions.len()))
        .collect();
    let entry_gas: u64 = entries.iter().map(|e| e.0).sum();
    let entry_bytes: u64 = entries.iter().map(|e| e.1).sum();
    let fixed_gas = payload.gas() - entry_gas;
    let fixed_bytes = payload.main_size().ceil_bytes() - entry_bytes;
    let too_big = || SimError::SyncTooLarge { gas: payload.gas(), limit: gas_limit };
    if fixed_gas > gas_limit || entries.iter().any(|e| e.0 > gas_limit) {
        return Err(too_big());
    }
    let mut last = (fixed_gas, fixed_bytes);
    let mut rest = entries.len();
    while rest > 0 && last.0 + entries[rest - 1].0 <= gas_limit {
        rest -= 1;
        last.0 += entries[rest].0;
        last.1 += entries[rest].1;
    }
    let mut parts = Vec::new();
    let mut cur = (0u64, 0u64);
    for e in &entries[..rest] {
        if cur.0 + e.0 > gas_limit {
            parts.push(cur);
            cur = (0, 0);
        }
        cur.0 += e.0;
        cur.1 += e.1;
    }
    if cur.0 > 0 {
        parts.push(cur);
    }
    parts.push(last);
    Ok(parts.into_iter().map(|(g, b)| (g, ByteSize::from_bytes(b))).collect())
}

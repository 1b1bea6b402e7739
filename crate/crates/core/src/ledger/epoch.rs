use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::{EngineError, Side, TickRange};
use crate::bank::{Balances, BankState};
use crate::ids::{Encoder, Hash32, PoolId, PositionId, PublicKey, TokenId};
use crate::num::{decimal, ByteSize};
use crate::{Pool, TokenAmount};

use super::tx::{SidechainTx, TxBody};
use super::LedgerError;

/// Why a transaction was refused.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Rejection {
    #[error("deposit does not cover the required input")]
    InsufficientDeposit,
    #[error("issuer does not own the position")]
    NotOwner,
    #[error("deadline round passed")]
    Expired,
    #[error("malformed transaction: {0}")]
    Malformed(String),
    #[error("engine refused: {0}")]
    Engine(EngineError),
}

impl From<EngineError> for Rejection {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::ExpiredDeadline => Rejection::Expired,
            EngineError::NotOwner => Rejection::NotOwner,
            e => Rejection::Engine(e),
        }
    }
}

/// How a mint changes the minter's deposit of token B. The prose rule
/// deducts both tokens; the printed pseudocode adds token B back.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MintDepositRule {
    #[default]
    Deduct,
    AddAsPrinted,
}

/// Net effect of one applied transaction: the input of the summary replay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxEffect {
    Swap {
        pool: PoolId,
        user: PublicKey,
        token_in: TokenId,
        #[serde(with = "decimal")]
        amount_in: TokenAmount,
        token_out: TokenId,
        #[serde(with = "decimal")]
        amount_out: TokenAmount,
        #[serde(with = "decimal")]
        fee: TokenAmount,
        /// Tick at which the fee was split.
        tick: i32,
    },
    Mint {
        pool: PoolId,
        user: PublicKey,
        position: PositionId,
        #[serde(with = "decimal")]
        used_a: TokenAmount,
        #[serde(with = "decimal")]
        used_b: TokenAmount,
        #[serde(with = "decimal")]
        liquidity: TokenAmount,
        range: TickRange,
    },
    Burn {
        pool: PoolId,
        user: PublicKey,
        position: PositionId,
        #[serde(with = "decimal")]
        withdrawn_a: TokenAmount,
        #[serde(with = "decimal")]
        withdrawn_b: TokenAmount,
        #[serde(with = "decimal")]
        fees_a: TokenAmount,
        #[serde(with = "decimal")]
        fees_b: TokenAmount,
        #[serde(with = "decimal")]
        liquidity_removed: TokenAmount,
        deleted: bool,
    },
    Collect {
        pool: PoolId,
        user: PublicKey,
        position: PositionId,
        #[serde(with = "decimal")]
        paid_a: TokenAmount,
        #[serde(with = "decimal")]
        paid_b: TokenAmount,
    },
}

/// The committee's working view of one epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochState {
    pub epoch: u64,
    pub snapshot_deposits: Balances,
    pub snapshot_pools: BTreeMap<PoolId, Pool>,
    pub working_deposits: Balances,
    pub pools: BTreeMap<PoolId, Pool>,
    pub mint_rule: MintDepositRule,
}

/// Copies the balances spendable in `epoch` and every pool. `bank` must
/// already reflect all epochs before `epoch`.
pub fn snapshot_bank(bank: &BankState, epoch: u64) -> EpochState {
    EpochState::new(epoch, bank.deposits.spendable(epoch), bank.pools.clone())
}

impl EpochState {
    pub fn new(epoch: u64, deposits: Balances, pools: BTreeMap<PoolId, Pool>) -> Self {
        EpochState {
            epoch,
            snapshot_deposits: deposits.clone(),
            snapshot_pools: pools.clone(),
            working_deposits: deposits,
            pools,
            mint_rule: MintDepositRule::Deduct,
        }
    }

    fn pool(&self, id: &PoolId) -> Result<&Pool, Rejection> {
        self.pools.get(id).ok_or_else(|| Rejection::Malformed("unknown pool".into()))
    }

    fn require(&self, user: &PublicKey, token: TokenId, amount: TokenAmount) -> Result<(), Rejection> {
        if self.working_deposits.get(user, token) < amount {
            Err(Rejection::InsufficientDeposit)
        } else {
            Ok(())
        }
    }

    /// Checks deposit coverage, ownership, deadline and amounts against the
    /// working state, without changing it.
    pub fn verify_transaction(&self, tx: &SidechainTx, now_round: u64) -> Result<(), Rejection> {
        if tx.size == ByteSize::ZERO {
            return Err(Rejection::Malformed("zero size".into()));
        }
        let pool = self.pool(tx.body.pool())?;
        let u = &tx.issuer;
        match &tx.body {
            TxBody::SwapExactIn { token_in, amount_in, deadline, .. } => {
                if now_round > *deadline {
                    return Err(Rejection::Expired);
                }
                if *amount_in == 0 {
                    return Err(Rejection::Malformed("zero amount".into()));
                }
                pool.side_of(*token_in)?;
                self.require(u, *token_in, *amount_in)
            }
            TxBody::SwapExactOut { token_out, amount_out, max_in, deadline, .. } => {
                if now_round > *deadline {
                    return Err(Rejection::Expired);
                }
                if *amount_out == 0 {
                    return Err(Rejection::Malformed("zero amount".into()));
                }
                let side_out = pool.side_of(*token_out)?;
                let gross = pool.quote_exact_output(side_out, *amount_out)?;
                if gross > *max_in {
                    return Err(EngineError::SlippageExceeded.into());
                }
                self.require(u, pool.token(side_out.other()), gross)
            }
            TxBody::Mint { desired_a, desired_b, existing, .. } => {
                if *desired_a == 0 && *desired_b == 0 {
                    return Err(Rejection::Malformed("zero amount".into()));
                }
                if let Some(id) = existing {
                    self.owned(pool, u, id)?;
                }
                self.require(u, pool.token_a, *desired_a)?;
                self.require(u, pool.token_b, *desired_b)
            }
            TxBody::Burn { position, .. } | TxBody::Collect { position, .. } => self.owned(pool, u, position),
        }
    }

    fn owned(&self, pool: &Pool, user: &PublicKey, id: &PositionId) -> Result<(), Rejection> {
        match pool.positions.get(id) {
            None => Err(Rejection::Malformed("unknown position".into())),
            Some(p) if &p.owner != user => Err(Rejection::NotOwner),
            Some(_) => Ok(()),
        }
    }

    fn credit(&mut self, user: PublicKey, token: TokenId, amount: TokenAmount) {
        self.working_deposits.credit(user, token, amount);
    }

    fn debit(&mut self, user: &PublicKey, token: TokenId, amount: TokenAmount) {
        let ok = self.working_deposits.debit(user, token, amount);
        debug_assert!(ok, "coverage checked before the engine call");
    }

    /// Verifies and applies one transaction. On rejection nothing changes.
    pub fn try_apply(&mut self, tx: &SidechainTx, now_round: u64) -> Result<TxEffect, Rejection> {
        self.verify_transaction(tx, now_round)?;
        let pool_id = *tx.body.pool();
        let u = tx.issuer;
        let pool = self.pools.get_mut(&pool_id).expect("verified");
        let (ta, tb) = (pool.token_a, pool.token_b);
        match &tx.body {
            TxBody::SwapExactIn { token_in, amount_in, min_out, price_limit, deadline, .. } => {
                let r = pool.swap_exact_input(*token_in, *amount_in, *min_out, *price_limit, *deadline, now_round)?;
                Ok(self.settle_swap(pool_id, u, r))
            }
            TxBody::SwapExactOut { token_out, amount_out, max_in, price_limit, deadline, .. } => {
                let r = pool.swap_exact_output(*token_out, *amount_out, *max_in, *price_limit, *deadline, now_round)?;
                Ok(self.settle_swap(pool_id, u, r))
            }
            TxBody::Mint { desired_a, desired_b, range, existing, .. } => {
                let m = pool.mint(u, *desired_a, *desired_b, *range, *existing, tx.hash().as_bytes())?;
                self.debit(&u, ta, m.used_a);
                match self.mint_rule {
                    MintDepositRule::Deduct => self.debit(&u, tb, m.used_b),
                    MintDepositRule::AddAsPrinted => self.credit(u, tb, m.used_b),
                }
                Ok(TxEffect::Mint {
                    pool: pool_id,
                    user: u,
                    position: m.position.id,
                    used_a: m.used_a,
                    used_b: m.used_b,
                    liquidity: m.liquidity_added,
                    range: *range,
                })
            }
            TxBody::Burn { position, amount_a, amount_b, .. } => {
                let b = pool.burn(&u, position, *amount_a, *amount_b)?;
                self.credit(u, ta, b.withdrawn_a + b.fees_a);
                self.credit(u, tb, b.withdrawn_b + b.fees_b);
                Ok(TxEffect::Burn {
                    pool: pool_id,
                    user: u,
                    position: *position,
                    withdrawn_a: b.withdrawn_a,
                    withdrawn_b: b.withdrawn_b,
                    fees_a: b.fees_a,
                    fees_b: b.fees_b,
                    liquidity_removed: b.liquidity_removed,
                    deleted: b.position_deleted,
                })
            }
            TxBody::Collect { position, amount_a, amount_b, .. } => {
                let c = pool.collect(&u, position, *amount_a, *amount_b)?;
                self.credit(u, ta, c.paid_a);
                self.credit(u, tb, c.paid_b);
                Ok(TxEffect::Collect { pool: pool_id, user: u, position: *position, paid_a: c.paid_a, paid_b: c.paid_b })
            }
        }
    }

    fn settle_swap(&mut self, pool: PoolId, user: PublicKey, r: crate::amm::SwapResult) -> TxEffect {
        self.debit(&user, r.token_in, r.amount_in_charged);
        self.credit(user, r.token_out, r.amount_out);
        TxEffect::Swap {
            pool,
            user,
            token_in: r.token_in,
            amount_in: r.amount_in_charged,
            token_out: r.token_out,
            amount_out: r.amount_out,
            fee: r.fee_paid,
            tick: r.tick_before,
        }
    }

    /// Hash of the canonical working-state encoding.
    pub fn state_root(&self) -> Hash32 {
        let mut e = Encoder::new();
        e.tag("state").u64(self.epoch).u32(self.working_deposits.0.len() as u32);
        for (u, t, a) in self.working_deposits.iter() {
            e.fixed(&u.0).u32(t.0).amount(a);
        }
        e.u32(self.pools.len() as u32);
        for (id, p) in &self.pools {
            e.fixed(&id.0)
                .u32(p.token_a.0)
                .u32(p.token_b.0)
                .amount(p.reserve_a)
                .amount(p.reserve_b)
                .amount(p.total_liquidity)
                .u32(p.fee_rate_ppm)
                .i32(p.current_tick)
                .u32(p.positions.len() as u32);
            for pos in p.positions.values() {
                crate::bank::encode_position(&mut e, id, pos);
            }
        }
        e.digest()
    }

    /// Balance of `token` for `user` in the working state.
    pub fn balance(&self, user: &PublicKey, token: TokenId) -> TokenAmount {
        self.working_deposits.get(user, token)
    }

    pub fn side_of(&self, pool: &PoolId, token: TokenId) -> Option<Side> {
        self.pools.get(pool).and_then(|p| p.side_of(token).ok())
    }
}

/// A temporary sidechain block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaBlock {
    pub epoch: u64,
    pub round: u64,
    pub parent_hash: Hash32,
    pub txs: Vec<SidechainTx>,
    pub effects: Vec<TxEffect>,
    pub state_root: Hash32,
    pub votes: Vec<PublicKey>,
}

impl MetaBlock {
    pub fn size(&self) -> ByteSize {
        self.txs.iter().map(|t| t.size).sum()
    }

    pub fn hash(&self) -> Hash32 {
        let mut e = Encoder::new();
        e.tag("meta").u64(self.epoch).u64(self.round).fixed(&self.parent_hash.0).u32(self.txs.len() as u32);
        for t in &self.txs {
            e.fixed(&t.hash().0);
        }
        e.fixed(&self.state_root.0);
        e.digest()
    }
}

/// Applies `txs` in order; every one must be valid. The state is
/// untouched on error.
pub fn apply_meta_block(
    state: &mut EpochState,
    txs: Vec<SidechainTx>,
    round: u64,
    parent_hash: Hash32,
    capacity: ByteSize,
) -> Result<MetaBlock, LedgerError> {
    let size: ByteSize = txs.iter().map(|t| t.size).sum();
    if size > capacity {
        return Err(LedgerError::BlockOverCapacity { size, limit: capacity });
    }
    let mut next = state.clone();
    let mut effects = Vec::with_capacity(txs.len());
    for (i, tx) in txs.iter().enumerate() {
        effects.push(next.try_apply(tx, round).map_err(|reason| LedgerError::InvalidTransaction { index: i, reason })?);
    }
    *state = next;
    Ok(MetaBlock { epoch: state.epoch, round, parent_hash, txs, effects, state_root: state.state_root(), votes: Vec::new() })
}

/// Result of leader-side block assembly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuiltBlock {
    pub block: MetaBlock,
    /// Transactions dropped as invalid, with reasons.
    pub rejected: Vec<(SidechainTx, Rejection)>,
}

/// Takes transactions from the front of `queue` in arrival order until the
/// next one no longer fits. Invalid ones are dropped and reported.
pub fn build_block(
    state: &mut EpochState,
    queue: &mut std::collections::VecDeque<SidechainTx>,
    round: u64,
    parent_hash: Hash32,
    capacity: ByteSize,
) -> BuiltBlock {
    let mut used = ByteSize::ZERO;
    let mut txs = Vec::new();
    let mut effects = Vec::new();
    let mut rejected = Vec::new();
    while let Some(tx) = queue.front() {
        if used + tx.size > capacity {
            break;
        }
        let tx = queue.pop_front().expect("front exists");
        match state.try_apply(&tx, round) {
            Ok(eff) => {
                used += tx.size;
                effects.push(eff);
                txs.push(tx);
            }
            Err(r) => rejected.push((tx, r)),
        }
    }
    let block =
        MetaBlock { epoch: state.epoch, round, parent_hash, txs, effects, state_root: state.state_root(), votes: Vec::new() };
    BuiltBlock { block, rejected }
}

/// Re-executes a proposed block on a copy of `state`; returns the post-state
/// if the effects and state root match.
pub fn verify_block(state: &EpochState, block: &MetaBlock, capacity: ByteSize) -> Result<EpochState, LedgerError> {
    let mut copy = state.clone();
    let replay = apply_meta_block(&mut copy, block.txs.clone(), block.round, block.parent_hash, capacity)?;
    if replay.effects != block.effects || replay.state_root != block.state_root || block.epoch != state.epoch {
        return Err(LedgerError::InconsistentReplay("block effects or state root differ".into()));
    }
    Ok(copy)
}

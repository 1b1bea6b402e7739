//! The mainchain token bank: pools, epoch-keyed deposits, positions of
//! record, authenticated sync processing and flash loans.

mod deposits;
pub mod gas;
mod sync;

pub use deposits::{Balances, DepositBook};
pub use gas::{gas_cost, BaselineOp, GasOp};
pub(crate) use sync::encode_position;
pub use sync::{handoff_message, Disbursement, HandoffCert, PayoutEntry, PositionImage, SyncPayload};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::{EngineError, MintOutcome, Side, TickRange, PPM};
use crate::auth::VerifyingKey;
use crate::ids::{hash_parts, PoolId, PositionId, PublicKey, TokenId};
use crate::num::{decimal, mul_div_ceil};
use crate::{Pool, TokenAmount};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BankError {
    #[error("pool already exists")]
    PoolExists,
    #[error("a pool needs two distinct tokens")]
    SameToken,
    #[error("token {0} already belongs to another pool")]
    TokenInUse(TokenId),
    #[error("unknown pool")]
    UnknownPool,
    #[error("token {0} has no pool")]
    UnknownToken(TokenId),
    #[error("amount must be nonzero")]
    ZeroAmount,
    #[error("sync signature does not verify")]
    BadSignature,
    #[error("sync must start at epoch {expected}, got {first}..={last}")]
    EpochGap { expected: u64, first: u64, last: u64 },
    #[error("reconciliation drives the {0} reserve negative")]
    NegativeReserve(TokenId),
    #[error("loan exceeds pool reserve")]
    InsufficientReserve,
    #[error("flash loan not repaid with fee")]
    RepaymentFailed,
    #[error("unknown operation: {0}")]
    UnknownOp(String),
    #[error("custody identity broken for {0}")]
    CustodyViolation(TokenId),
    #[error("arithmetic overflow")]
    Overflow,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub type Result<T> = std::result::Result<T, BankError>;

fn ck<T>(v: Option<T>) -> Result<T> {
    v.ok_or(BankError::Overflow)
}

/// Cumulative tokens that entered and left bank custody.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Custody {
    #[serde(with = "decimal")]
    pub inflow: TokenAmount,
    #[serde(with = "decimal")]
    pub outflow: TokenAmount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositReceipt {
    pub user: PublicKey,
    pub token: TokenId,
    #[serde(with = "decimal")]
    pub amount: TokenAmount,
    /// First epoch whose snapshot includes the deposit.
    pub activation_epoch: u64,
}

/// Tokens handed to a flash borrower.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Loan {
    pub amount_a: TokenAmount,
    pub amount_b: TokenAmount,
    /// Minimum repayment per token, principal plus fee.
    pub due_a: TokenAmount,
    pub due_b: TokenAmount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankState {
    pub pools: BTreeMap<PoolId, Pool>,
    /// Each token trades in exactly one pool, so per-token reconciliation
    /// attributes flows unambiguously.
    pub token_pool: BTreeMap<TokenId, PoolId>,
    pub deposits: DepositBook,
    pub committee_vk: VerifyingKey,
    pub last_synced_epoch: Option<u64>,
    /// Keep end-of-epoch balances on the sidechain instead of paying them out.
    pub carry_over_deposits: bool,
    pub custody: BTreeMap<TokenId, Custody>,
}

impl BankState {
    pub fn new(genesis_vk: VerifyingKey, carry_over_deposits: bool) -> Self {
        BankState {
            pools: BTreeMap::new(),
            token_pool: BTreeMap::new(),
            deposits: DepositBook::default(),
            committee_vk: genesis_vk,
            last_synced_epoch: None,
            carry_over_deposits,
            custody: BTreeMap::new(),
        }
    }

    pub fn pool_id(token_a: TokenId, token_b: TokenId, fee_rate_ppm: u32) -> PoolId {
        PoolId(hash_parts("pool", &[&token_a.0.to_be_bytes(), &token_b.0.to_be_bytes(), &fee_rate_ppm.to_be_bytes()]))
    }

    /// First epoch the next sync must cover.
    pub fn next_sync_epoch(&self) -> u64 {
        self.last_synced_epoch.map_or(0, |e| e + 1)
    }

    pub fn create_pool(&mut self, token_a: TokenId, token_b: TokenId, fee_rate_ppm: u32) -> Result<PoolId> {
        if token_a == token_b {
            return Err(BankError::SameToken);
        }
        let id = Self::pool_id(token_a, token_b, fee_rate_ppm);
        if self.pools.contains_key(&id) {
            return Err(BankError::PoolExists);
        }
        for t in [token_a, token_b] {
            if self.token_pool.contains_key(&t) {
                return Err(BankError::TokenInUse(t));
            }
        }
        let pool = Pool::new(token_a, token_b, fee_rate_ppm)?;
        self.pools.insert(id, pool);
        self.token_pool.insert(token_a, id);
        self.token_pool.insert(token_b, id);
        self.custody.entry(token_a).or_default();
        self.custody.entry(token_b).or_default();
        Ok(id)
    }

    pub fn pool(&self, id: &PoolId) -> Result<&Pool> {
        self.pools.get(id).ok_or(BankError::UnknownPool)
    }

    pub fn pool_of(&self, token: TokenId) -> Result<PoolId> {
        self.token_pool.get(&token).copied().ok_or(BankError::UnknownToken(token))
    }

    /// Liquidity added directly on the mainchain, outside any epoch.
    pub fn seed_pool(
        &mut self,
        pool: &PoolId,
        owner: PublicKey,
        amount_a: TokenAmount,
        amount_b: TokenAmount,
        range: TickRange,
        tx_hash: &[u8; 32],
    ) -> Result<MintOutcome> {
        let p = self.pools.get_mut(pool).ok_or(BankError::UnknownPool)?;
        let m = p.mint(owner, amount_a, amount_b, range, None, tx_hash)?;
        let (ta, tb) = (p.token_a, p.token_b);
        self.record_inflow(ta, m.used_a)?;
        self.record_inflow(tb, m.used_b)?;
        Ok(m)
    }

    fn record_inflow(&mut self, token: TokenId, amount: TokenAmount) -> Result<()> {
        let c = self.custody.entry(token).or_default();
        c.inflow = ck(c.inflow.checked_add(amount))?;
        Ok(())
    }

    fn record_outflow(&mut self, token: TokenId, amount: TokenAmount) -> Result<()> {
        let c = self.custody.entry(token).or_default();
        c.outflow = ck(c.outflow.checked_add(amount))?;
        Ok(())
    }

    /// Deposit confirmed during `current_epoch`; spendable from the next epoch.
    pub fn deposit(
        &mut self,
        user: PublicKey,
        token: TokenId,
        amount: TokenAmount,
        current_epoch: u64,
    ) -> Result<DepositReceipt> {
        self.deposit_for_epoch(user, token, amount, current_epoch, current_epoch + 1)
    }

    /// Deposit aimed at `target_epoch`, or the next epoch if that has already begun.
    pub fn deposit_for_epoch(
        &mut self,
        user: PublicKey,
        token: TokenId,
        amount: TokenAmount,
        current_epoch: u64,
        target_epoch: u64,
    ) -> Result<DepositReceipt> {
        if amount == 0 {
            return Err(BankError::ZeroAmount);
        }
        self.pool_of(token)?;
        let activation_epoch = target_epoch.max(current_epoch + 1);
        self.record_inflow(token, amount)?;
        self.deposits.credit(activation_epoch, user, token, amount);
        Ok(DepositReceipt { user, token, amount, activation_epoch })
    }

    /// Pre-launch deposit credited straight to `epoch`, including epochs
    /// that have not yet been snapshotted at genesis.
    pub fn genesis_deposit(
        &mut self,
        user: PublicKey,
        token: TokenId,
        amount: TokenAmount,
        epoch: u64,
    ) -> Result<DepositReceipt> {
        if amount == 0 {
            return Err(BankError::ZeroAmount);
        }
        self.pool_of(token)?;
        self.record_inflow(token, amount)?;
        self.deposits.credit(epoch, user, token, amount);
        Ok(DepositReceipt { user, token, amount, activation_epoch: epoch })
    }

    /// Runs a flash loan. `callback` receives the loan and returns the
    /// repaid amounts; anything short of principal plus fee reverts the
    /// whole operation.
    pub fn flash<F>(&mut self, pool: &PoolId, amount_a: TokenAmount, amount_b: TokenAmount, callback: F) -> Result<bool>
    where
        F: FnOnce(Loan) -> (TokenAmount, TokenAmount),
    {
        let p = self.pools.get(pool).ok_or(BankError::UnknownPool)?;
        if amount_a == 0 && amount_b == 0 {
            return Err(BankError::ZeroAmount);
        }
        if amount_a > p.reserve_a || amount_b > p.reserve_b {
            return Err(BankError::InsufficientReserve);
        }
        let fee = |x: TokenAmount| ck(mul_div_ceil(x, p.fee_rate_ppm as TokenAmount, PPM as TokenAmount));
        let loan = Loan {
            amount_a,
            amount_b,
            due_a: ck(amount_a.checked_add(fee(amount_a)?))?,
            due_b: ck(amount_b.checked_add(fee(amount_b)?))?,
        };
        let (repaid_a, repaid_b) = callback(loan);
        if repaid_a < loan.due_a || repaid_b < loan.due_b {
            return Err(BankError::RepaymentFailed);
        }
        let (gain_a, gain_b) = (repaid_a - amount_a, repaid_b - amount_b);
        let mut next = p.clone();
        next.reserve_a = ck(next.reserve_a.checked_add(gain_a))?;
        next.reserve_b = ck(next.reserve_b.checked_add(gain_b))?;
        next.refresh()?;
        let (ta, tb) = (next.token_a, next.token_b);
        let mut custody = self.custody.clone();
        for (t, g) in [(ta, gain_a), (tb, gain_b)] {
            let c = custody.entry(t).or_default();
            c.inflow = ck(c.inflow.checked_add(g))?;
        }
        self.pools.insert(*pool, next);
        self.custody = custody;
        Ok(true)
    }

    /// Tokens held per custody category: reserves, deposits and owed fees.
    pub fn holdings(&self, token: TokenId) -> Result<TokenAmount> {
        let mut held = self.deposits.total(token);
        if let Some(id) = self.token_pool.get(&token) {
            let p = self.pool(id)?;
            let side = p.side_of(token)?;
            let (fa, fb) = p.fees_owed()?;
            let fees = if side == Side::A { fa } else { fb };
            held = ck(held.checked_add(p.reserve(side)))?;
            held = ck(held.checked_add(fees))?;
        }
        Ok(held)
    }

    /// Checks that every token held equals net custody inflow.
    pub fn check_custody(&self) -> Result<()> {
        for (&t, c) in &self.custody {
            let net = c.inflow.checked_sub(c.outflow).ok_or(BankError::CustodyViolation(t))?;
            if self.holdings(t)? != net {
                return Err(BankError::CustodyViolation(t));
            }
        }
        Ok(())
    }

    pub fn position(&self, id: &PositionId) -> Option<(&PoolId, &crate::LiquidityPosition)> {
        self.pools.iter().find_map(|(pid, p)| p.positions.get(id).map(|x| (pid, x)))
    }

    /// Canonical JSON: sorted keys and decimal-string amounts.
    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("bank state serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::user_key;

    const A: TokenId = TokenId(1);
    const B: TokenId = TokenId(2);

    pub(crate) fn bank_with_pool(ra: u128, rb: u128, fee: u32) -> (BankState, PoolId) {
        let mut bank = BankState::new(VerifyingKey::default(), false);
        let id = bank.create_pool(A, B, fee).unwrap();
        if ra > 0 {
            bank.seed_pool(&id, user_key(900), ra, rb, TickRange::FULL, &[7; 32]).unwrap();
        }
        (bank, id)
    }

    #[test]
    fn create_pool_examples() {
        let (mut bank, id) = bank_with_pool(0, 0, 3000);
        assert_eq!(bank.pool(&id).unwrap().reserve_a, 0);
        assert_eq!(bank.create_pool(A, A, 3000), Err(BankError::SameToken));
        assert_eq!(bank.create_pool(A, B, 3000), Err(BankError::PoolExists));
        assert_eq!(bank.create_pool(A, TokenId(3), 500), Err(BankError::TokenInUse(A)));
        assert_ne!(BankState::pool_id(A, B, 3000), BankState::pool_id(B, A, 3000));
    }

    #[test]
    fn deposits_activate_next_epoch() {
        let (mut bank, _) = bank_with_pool(1000, 1000, 3000);
        let u = user_key(1);
        let r = bank.deposit(u, A, 10, 4).unwrap();
        assert_eq!(r.activation_epoch, 5);
        bank.deposit(u, A, 5, 4).unwrap();
        assert_eq!(bank.deposits.spendable(5).get(&u, A), 15);
        assert_eq!(bank.deposits.spendable(4).get(&u, A), 0);
        assert_eq!(bank.deposit(u, A, 0, 4), Err(BankError::ZeroAmount));
        assert_eq!(bank.deposit_for_epoch(u, B, 3, 4, 9).unwrap().activation_epoch, 9);
        assert_eq!(bank.deposit_for_epoch(u, B, 3, 4, 2).unwrap().activation_epoch, 5);
        assert!(matches!(bank.deposit(u, TokenId(9), 1, 0), Err(BankError::UnknownToken(_))));
        bank.check_custody().unwrap();
    }

    #[test]
    fn flash_examples() {
        let (mut bank, id) = bank_with_pool(1000, 1000, 3000);
        assert_eq!(bank.flash(&id, 100, 0, |l| (l.due_a, 0)), Ok(true));
        assert_eq!(bank.pool(&id).unwrap().reserve_a, 1001);
        bank.check_custody().unwrap();

        let before = bank.clone();
        assert_eq!(bank.flash(&id, 100, 0, |l| (l.amount_a, 0)), Err(BankError::RepaymentFailed));
        assert_eq!(bank, before);
        assert_eq!(bank.flash(&id, 5000, 0, |_| (0, 0)), Err(BankError::InsufficientReserve));
        assert_eq!(bank, before);
    }

    #[test]
    fn flash_fee_rounds_up() {
        let (mut bank, id) = bank_with_pool(1000, 1000, 3000);
        let mut due = None;
        bank.flash(&id, 1, 334, |l| {
            due = Some((l.due_a, l.due_b));
            (l.due_a, l.due_b)
        })
        .unwrap();
        assert_eq!(due, Some((2, 336)));
    }

    #[test]
    fn canonical_json_round_trip() {
        let (mut bank, _) = bank_with_pool(1000, 4000, 3000);
        bank.deposit(user_key(1), A, 12_345_678_901_234_567_890, 0).unwrap();
        let s = bank.to_canonical_json();
        assert!(s.contains("\"12345678901234567890\""));
        let back = BankState::from_json(&s).unwrap();
        assert_eq!(back, bank);
        assert_eq!(back.to_canonical_json(), s);
        let keys = ["carry_over_deposits", "committee_vk", "custody", "deposits", "last_synced_epoch", "pools"];
        let pos: Vec<usize> = keys.iter().map(|k| s.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}

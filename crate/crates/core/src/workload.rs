//! Synthetic traffic: arrival rates, transaction mix, amounts and deposits.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::{TickRange, DEFAULT_FEE_PPM};
use crate::bank::{BankError, BankState};
use crate::ids::{hash_parts, user_key, PoolId, PositionId, PublicKey, TokenId};
use crate::ledger::{EpochState, SidechainTx, TxBody, TxEffect, TxKind};
use crate::num::{decimal, ByteSize};
use crate::TokenAmount;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("mix must be non-negative and sum to 1, got {0}")]
    BadMix(f64),
    #[error("trade fraction range {0}..{1} is not within (0, 1]")]
    BadFraction(f64, f64),
    #[error("no users")]
    NoUsers,
}

/// Transactions per round: `⌈V_D · b_t / 86400⌉`.
pub fn rho(daily_volume: u64, round_duration_s: f64) -> u64 {
    if round_duration_s.fract() == 0.0 {
        let b = round_duration_s as u128;
        return (daily_volume as u128 * b).div_ceil(86_400) as u64;
    }
    (daily_volume as f64 * round_duration_s / 86_400.0).ceil() as u64
}

/// Fractions of swap, mint, burn and collect traffic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxMix {
    pub swap: f64,
    pub mint: f64,
    pub burn: f64,
    pub collect: f64,
}

impl Default for TxMix {
    fn default() -> Self {
        // Measured shares sum to 0.9998; normalized.
        let [s, m, b, c] = [0.9319, 0.0214, 0.0238, 0.0227];
        let t = s + m + b + c;
        TxMix { swap: s / t, mint: m / t, burn: b / t, collect: c / t }
    }
}

impl TxMix {
    fn weights(&self) -> [f64; 4] {
        [self.swap, self.mint, self.burn, self.collect]
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let sum: f64 = self.weights().iter().sum();
        if self.weights().iter().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::BadMix(sum));
        }
        Ok(())
    }
}

/// Encoded size per transaction kind, in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxSizes {
    pub swap: f64,
    pub mint: f64,
    pub burn: f64,
    pub collect: f64,
}

impl Default for TxSizes {
    fn default() -> Self {
        let b = |k: TxKind| k.default_size().as_f64();
        TxSizes { swap: b(TxKind::SwapExactIn), mint: b(TxKind::Mint), burn: b(TxKind::Burn), collect: b(TxKind::Collect) }
    }
}

impl TxSizes {
    pub fn of(&self, kind: TxKind) -> ByteSize {
        ByteSize::from_f64(match kind {
            TxKind::SwapExactIn | TxKind::SwapExactOut => self.swap,
            TxKind::Mint => self.mint,
            TxKind::Burn => self.burn,
            TxKind::Collect => self.collect,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepositStrategy {
    /// One deposit of both pool tokens per user per epoch.
    #[default]
    OncePerEpoch,
    /// One single-token deposit per transaction, replenishing what it spends.
    PerTransaction,
    /// Even-numbered users deposit per transaction, the rest once per epoch.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficProfile {
    /// Transactions per day.
    pub daily_volume: u64,
    pub mix: TxMix,
    pub sizes: TxSizes,
    pub user_count: u32,
    pub deposit_strategy: DepositStrategy,
    /// Share of users that provide the pools' initial liquidity.
    pub lp_share: f64,
    /// Bounds on the share of a balance spent by one trade.
    pub trade_fraction: (f64, f64),
    /// Share of swaps issued as exact-output.
    pub exact_output_share: f64,
    /// Slippage tolerance on quoted swap amounts, in basis points.
    pub slippage_bps: u32,
    /// Per-token amount of a once-per-epoch deposit.
    pub deposit_per_token: u64,
    /// Extra fraction added to per-transaction deposits.
    pub deposit_margin: f64,
    /// Rounds after submission before a swap expires.
    pub deadline_rounds: u64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            daily_volume: 500_000,
            mix: TxMix::default(),
            sizes: TxSizes::default(),
            user_count: 100,
            deposit_strategy: DepositStrategy::OncePerEpoch,
            lp_share: 0.05,
            trade_fraction: (0.01, 0.10),
            exact_output_share: 0.2,
            slippage_bps: 100,
            deposit_per_token: 1_000_000_000_000,
            deposit_margin: 0.5,
            deadline_rounds: 60,
        }
    }
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        self.mix.validate()?;
        let (lo, hi) = self.trade_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(WorkloadError::BadFraction(lo, hi));
        }
        if self.user_count == 0 {
            return Err(WorkloadError::NoUsers);
        }
        Ok(())
    }

    /// Users that seed pool liquidity: the first `⌈lp_share · users⌉`.
    pub fn lp_count(&self) -> u32 {
        ((self.lp_share * self.user_count as f64).ceil() as u32).min(self.user_count)
    }
}

/// A deposit the harness should submit so it is spendable in `target_epoch`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositIntent {
    pub user: PublicKey,
    pub target_epoch: u64,
    pub amounts: Vec<(TokenId, TokenAmount)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Account {
    pub key: PublicKey,
    pub pool: PoolId,
    pub tokens: (TokenId, TokenId),
    pub per_transaction: bool,
}

/// Transactions and per-transaction deposits of one round.
#[derive(Clone, Debug, Default)]
pub struct RoundTraffic {
    pub txs: Vec<SidechainTx>,
    pub deposits: Vec<DepositIntent>,
}

impl RoundTraffic {
    pub fn bytes(&self) -> ByteSize {
        self.txs.iter().map(|t| t.size).sum()
    }
}

/// Initial market: `pools` pools over fresh token pairs, each seeded with
/// `reserve` of both tokens split across its liquidity providers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSpec {
    pub pools: u32,
    #[serde(with = "decimal")]
    pub reserve: TokenAmount,
    pub fee_rate_ppm: u32,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec { pools: 1, reserve: 1_000_000_000_000_000, fee_rate_ppm: DEFAULT_FEE_PPM }
    }
}

/// Creates the pools, seeds liquidity and returns the user accounts with the
/// seed positions. Users are assigned to pools round-robin; pool `i` trades
/// tokens `2i + 1` and `2i + 2`.
pub fn provision(
    profile: &TrafficProfile,
    market: &MarketSpec,
    bank: &mut BankState,
) -> Result<(Vec<Account>, BTreeSet<PositionId>), BankError> {
    let pools = market.pools.max(1);
    let mut ids = Vec::new();
    for i in 0..pools {
        let pair = (TokenId(2 * i + 1), TokenId(2 * i + 2));
        ids.push((bank.create_pool(pair.0, pair.1, market.fee_rate_ppm)?, pair));
    }
    let accounts: Vec<Account> = (0..profile.user_count)
        .map(|u| {
            let (pool, tokens) = ids[(u % pools) as usize];
            let per_transaction = match profile.deposit_strategy {
                DepositStrategy::OncePerEpoch => false,
                DepositStrategy::PerTransaction => true,
                DepositStrategy::Mixed => u % 2 == 0,
            };
            Account { key: user_key(u), pool, tokens, per_transaction }
        })
        .collect();
    let lps = profile.lp_count().max(1) as usize;
    let mut core = BTreeSet::new();
    for (pool, _) in &ids {
        let mut providers: Vec<&Account> = accounts[..lps].iter().filter(|a| a.pool == *pool).collect();
        if providers.is_empty() {
            providers.extend(accounts.iter().find(|a| a.pool == *pool));
        }
        let share = market.reserve / providers.len() as TokenAmount;
        for a in providers {
            let tx_hash = hash_parts("genesis-liquidity", &[a.key.as_bytes(), &pool.0]);
            let m = bank.seed_pool(pool, a.key, share, share, TickRange::FULL, &tx_hash)?;
            core.insert(m.position.id);
        }
    }
    Ok((accounts, core))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pick {
    Swap,
    Mint,
    Burn,
    Collect,
}

const PICKS: [Pick; 4] = [Pick::Swap, Pick::Mint, Pick::Burn, Pick::Collect];

/// Seeded traffic generator.
///
/// Each generated transaction is applied to a local copy of the epoch state,
/// so amounts are valid when the sidechain executes the same order.
pub struct Generator {
    pub profile: TrafficProfile,
    pub accounts: Vec<Account>,
    round_duration_s: f64,
    rng: ChaCha8Rng,
    mix: WeightedIndex<f64>,
    local: Option<EpochState>,
    /// Positions that back pool liquidity and are only trimmed slightly.
    core_positions: BTreeSet<PositionId>,
    deposit_lag: u64,
    next_id: u64,
}

impl Generator {
    /// `accounts` must be ordered by user number; `core_positions` are the
    /// seed liquidity positions.
    pub fn new(
        profile: TrafficProfile,
        accounts: Vec<Account>,
        core_positions: BTreeSet<PositionId>,
        round_duration_s: f64,
        deposit_lag: u64,
        seed: u64,
    ) -> Result<Self, WorkloadError> {
        profile.validate()?;
        if accounts.is_empty() {
            return Err(WorkloadError::NoUsers);
        }
        let mix = WeightedIndex::new(profile.mix.weights()).map_err(|_| WorkloadError::BadMix(0.0))?;
        Ok(Generator {
            profile,
            accounts,
            round_duration_s,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mix,
            local: None,
            core_positions,
            deposit_lag,
            next_id: 0,
        })
    }

    pub fn rho(&self) -> u64 {
        rho(self.profile.daily_volume, self.round_duration_s)
    }

    /// Starts an epoch from its snapshot.
    pub fn begin_epoch(&mut self, snapshot: EpochState) {
        self.local = Some(snapshot);
    }

    fn epoch(&self) -> u64 {
        self.local.as_ref().map_or(0, |s| s.epoch)
    }

    /// Once-per-epoch deposits that should be spendable in `target_epoch`.
    pub fn epoch_deposits(&self, target_epoch: u64) -> Vec<DepositIntent> {
        let amt = self.profile.deposit_per_token as TokenAmount;
        self.accounts
            .iter()
            .filter(|a| !a.per_transaction)
            .map(|a| DepositIntent { user: a.key, target_epoch, amounts: vec![(a.tokens.0, amt), (a.tokens.1, amt)] })
            .collect()
    }

    /// Funding for epochs before the first planned deposit can land.
    pub fn bootstrap_deposits(&self, target_epoch: u64) -> Vec<DepositIntent> {
        let amt = self.profile.deposit_per_token as TokenAmount;
        self.accounts
            .iter()
            .map(|a| DepositIntent { user: a.key, target_epoch, amounts: vec![(a.tokens.0, amt), (a.tokens.1, amt)] })
            .collect()
    }

    /// Generates `ρ` transactions submitted in global round `round`.
    pub fn generate_round(&mut self, round: u64) -> RoundTraffic {
        let n = self.rho();
        self.generate(n, round)
    }

    pub fn generate(&mut self, count: u64, round: u64) -> RoundTraffic {
        let mut out = RoundTraffic::default();
        for _ in 0..count {
            let pick = PICKS[self.mix.sample(&mut self.rng)];
            let tx = self.one(pick, round);
            let spent = self.apply_local(&tx);
            let acct = self.accounts.iter().find(|a| a.key == tx.issuer);
            if let (Some(acct), Some((token, amount))) = (acct, spent) {
                if acct.per_transaction && amount > 0 {
                    let amt = amount + (amount as f64 * self.profile.deposit_margin) as TokenAmount;
                    out.deposits.push(DepositIntent {
                        user: acct.key,
                        target_epoch: self.epoch() + self.deposit_lag,
                        amounts: vec![(token, amt)],
                    });
                }
            }
            out.txs.push(tx);
        }
        out
    }

    /// Applies `tx` locally; returns the largest single-token spend.
    fn apply_local(&mut self, tx: &SidechainTx) -> Option<(TokenId, TokenAmount)> {
        let local = self.local.as_mut()?;
        match local.try_apply(tx, tx.submit_round).ok()? {
            TxEffect::Swap { token_in, amount_in, .. } => Some((token_in, amount_in)),
            TxEffect::Mint { pool, used_a, used_b, .. } => {
                let p = &local.pools[&pool];
                Some(if used_a >= used_b { (p.token_a, used_a) } else { (p.token_b, used_b) })
            }
            _ => None,
        }
    }

    fn next_tx(&mut self, issuer: PublicKey, body: TxBody, round: u64) -> SidechainTx {
        let size = self.profile.sizes.of(body.kind());
        let id = self.next_id;
        self.next_id += 1;
        SidechainTx { id, issuer, body, size, submit_round: round }
    }

    fn fraction(&mut self) -> f64 {
        let (lo, hi) = self.profile.trade_fraction;
        if lo == hi {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }

    fn share(&mut self, amount: TokenAmount) -> TokenAmount {
        let f = self.fraction();
        ((amount as f64 * f) as TokenAmount).max(1).min(amount)
    }

    fn random_account(&mut self) -> Account {
        let i = self.rng.gen_range(0..self.accounts.len());
        self.accounts[i].clone()
    }

    fn balance(&self, user: &PublicKey, token: TokenId) -> TokenAmount {
        self.local.as_ref().map_or(0, |s| s.balance(user, token))
    }

    fn one(&mut self, pick: Pick, round: u64) -> SidechainTx {
        match pick {
            Pick::Swap => self.swap(round),
            Pick::Mint => self.mint(round),
            Pick::Burn => self.burn(round),
            Pick::Collect => self.collect(round),
        }
    }

    fn swap(&mut self, round: u64) -> SidechainTx {
        let acct = self.random_account();
        let (ta, tb) = acct.tokens;
        let (tin, tout) = if self.rng.gen_bool(0.5) { (ta, tb) } else { (tb, ta) };
        let bal = self.balance(&acct.key, tin);
        let amount_in = self.share(bal).max(1);
        let deadline = round + self.profile.deadline_rounds;
        let exact_out = self.rng.gen_bool(self.profile.exact_output_share);
        let slip = self.profile.slippage_bps as TokenAmount;
        let quote = self.local.as_ref().and_then(|s| {
            let pool = s.pools.get(&acct.pool)?;
            pool.quote_exact_input(pool.side_of(tin).ok()?, amount_in).ok()
        });
        let body = match quote {
            Some((_, _, out)) if exact_out && out > 0 => TxBody::SwapExactOut {
                pool: acct.pool,
                token_out: tout,
                amount_out: out,
                max_in: amount_in + amount_in * slip / 10_000,
                price_limit: None,
                deadline,
            },
            q => TxBody::SwapExactIn {
                pool: acct.pool,
                token_in: tin,
                amount_in,
                min_out: q.map_or(0, |(_, _, out)| out - out * slip / 10_000),
                price_limit: None,
                deadline,
            },
        };
        self.next_tx(acct.key, body, round)
    }

    fn mint(&mut self, round: u64) -> SidechainTx {
        let acct = self.random_account();
        let (ta, tb) = acct.tokens;
        let f = self.fraction();
        let part = |b: TokenAmount| ((b as f64 * f) as TokenAmount).max(1);
        let (da, db) = (part(self.balance(&acct.key, ta)), part(self.balance(&acct.key, tb)));
        let body = TxBody::Mint { pool: acct.pool, desired_a: da, desired_b: db, range: TickRange::FULL, existing: None };
        self.next_tx(acct.key, body, round)
    }

    /// A random position of `pool`, preferring user-minted ones.
    fn pick_position(&mut self, pool: &PoolId) -> Option<(PositionId, PublicKey, TokenAmount, TokenAmount, bool)> {
        let state = self.local.as_ref()?;
        let positions = &state.pools.get(pool)?.positions;
        let core = &self.core_positions;
        let minted = positions.values().filter(|p| !core.contains(&p.id)).choose(&mut self.rng);
        let p = match minted {
            Some(p) => p,
            None => positions.values().choose(&mut self.rng)?,
        };
        Some((p.id, p.owner, p.amount_a, p.amount_b, core.contains(&p.id)))
    }

    fn burn(&mut self, round: u64) -> SidechainTx {
        let acct = self.random_account();
        let body = match self.pick_position(&acct.pool) {
            Some((id, owner, a, b, core)) => {
                // Seed liquidity is only trimmed; minted positions are often closed.
                let f = if core {
                    0.001
                } else if self.rng.gen_bool(0.8) {
                    1.0
                } else {
                    self.rng.gen_range(0.1..0.9)
                };
                let cut = |x: TokenAmount| if f >= 1.0 { x } else { (x as f64 * f) as TokenAmount };
                let tx = TxBody::Burn { pool: acct.pool, position: id, amount_a: cut(a), amount_b: cut(b) };
                return self.next_tx(owner, tx, round);
            }
            None => TxBody::Burn { pool: acct.pool, position: PositionId::default(), amount_a: 0, amount_b: 0 },
        };
        self.next_tx(acct.key, body, round)
    }

    fn collect(&mut self, round: u64) -> SidechainTx {
        let acct = self.random_account();
        let (issuer, position) = match self.pick_any_position(&acct.pool) {
            Some((id, owner)) => (owner, id),
            None => (acct.key, PositionId::default()),
        };
        let body = TxBody::Collect { pool: acct.pool, position, amount_a: TokenAmount::MAX, amount_b: TokenAmount::MAX };
        self.next_tx(issuer, body, round)
    }

    fn pick_any_position(&mut self, pool: &PoolId) -> Option<(PositionId, PublicKey)> {
        let state = self.local.as_ref()?;
        let p = state.pools.get(pool)?.positions.values().choose(&mut self.rng)?;
        Some((p.id, p.owner))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_examples() {
        assert_eq!(rho(25_000_000, 7.0), 2026);
        assert_eq!(rho(500_000, 7.0), 41);
        assert_eq!(rho(0, 7.0), 0);
        assert_eq!(rho(86_400, 1.0), 1);
        assert_eq!(rho(86_401, 1.0), 2);
        assert_eq!(rho(1000, 0.5), 1);
        assert_eq!(rho(864_000, 0.5), 5);
    }

    #[test]
    fn mix_validation() {
        assert!(TxMix::default().validate().is_ok());
        assert!(TxMix { swap: 0.5, mint: 0.1, burn: 0.0, collect: 0.0 }.validate().is_err());
        assert!(TxMix { swap: 1.1, mint: -0.1, burn: 0.0, collect: 0.0 }.validate().is_err());
    }

    #[test]
    fn profile_defaults() {
        let p: TrafficProfile = serde_json::from_str(r#"{"daily_volume": 50000}"#).unwrap();
        assert_eq!(p.daily_volume, 50_000);
        assert_eq!(p.user_count, 100);
        assert_eq!(p.lp_count(), 5);
        assert_eq!(p.sizes.of(TxKind::SwapExactOut), ByteSize::from_centibytes(100_783));
    }
}

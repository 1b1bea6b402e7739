use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::amm::TickRange;
use crate::auth::{ThresholdSignature, VerifyingKey};
use crate::bank::gas::summary_side_size;
use crate::bank::{Balances, HandoffCert, PayoutEntry, PositionImage, SyncPayload};
use crate::ids::{Hash32, PoolId, PositionId, PublicKey, TokenId};
use crate::num::ByteSize;
use crate::{LiquidityPosition, TokenAmount};

use super::epoch::{EpochState, MetaBlock, MintDepositRule, TxEffect};
use super::LedgerError;

/// The permanent end-of-epoch record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryBlock {
    pub epoch: u64,
    pub payouts: Vec<PayoutEntry>,
    /// Images of positions that changed during the epoch, tombstones for
    /// deleted ones.
    pub positions: Vec<PositionImage>,
    pub meta_block_hashes: Vec<Hash32>,
}

impl SummaryBlock {
    pub fn size(&self) -> ByteSize {
        summary_side_size(self.payouts.len() as u64, self.positions.len() as u64)
    }
}

/// Groups balances into one payout entry per user.
pub fn payouts_from(balances: &Balances) -> Vec<PayoutEntry> {
    let mut by_user: BTreeMap<PublicKey, Vec<(TokenId, TokenAmount)>> = BTreeMap::new();
    for (u, t, a) in balances.iter() {
        if a > 0 {
            by_user.entry(*u).or_default().push((t, a));
        }
    }
    by_user.into_iter().map(|(user, amounts)| PayoutEntry { user, amounts }).collect()
}

fn balances_from(payouts: &[PayoutEntry]) -> Balances {
    let mut b = Balances::default();
    for p in payouts {
        for &(t, a) in &p.amounts {
            b.credit(p.user, t, a);
        }
    }
    b
}

type PositionMap = BTreeMap<(PoolId, PositionId), LiquidityPosition>;

fn position_map(pools: &BTreeMap<PoolId, crate::Pool>) -> PositionMap {
    pools.iter().flat_map(|(pid, p)| p.positions.values().map(move |x| ((*pid, x.id), x.clone()))).collect()
}

/// Changed, created and deleted positions between two maps.
fn position_diff(before: &PositionMap, after: &PositionMap) -> Vec<PositionImage> {
    let mut out = Vec::new();
    for (k, p) in after {
        if before.get(k) != Some(p) {
            out.push(PositionImage { pool: k.0, position: p.clone() });
        }
    }
    for (k, p) in before {
        if !after.contains_key(k) {
            out.push(PositionImage { pool: k.0, position: LiquidityPosition::tombstone(p.id, p.owner) });
        }
    }
    out.sort_by_key(|i| (i.pool, i.position.id));
    out
}

/// Fee split over the replay's own position records: floor-proportional
/// to liquidity among positions whose range holds `tick`, remainder to
/// the largest, ties to the smallest id.
fn split(
    positions: &PositionMap,
    pool: &PoolId,
    fee: TokenAmount,
    tick: i32,
) -> Result<Vec<(PositionId, TokenAmount)>, LedgerError> {
    let live: Vec<&LiquidityPosition> = positions
        .range((*pool, PositionId([0; 32]))..=(*pool, PositionId([0xff; 32])))
        .map(|(_, p)| p)
        .filter(|p| p.liquidity > 0 && p.range.lower <= tick && tick < p.range.upper)
        .collect();
    let total: TokenAmount = live.iter().map(|p| p.liquidity).sum();
    if total == 0 {
        return if fee == 0 { Ok(Vec::new()) } else { Err(LedgerError::InconsistentReplay("fee without liquidity".into())) };
    }
    let mut shares: Vec<(PositionId, TokenAmount)> = live
        .iter()
        .map(|p| {
            crate::num::mul_div(fee, p.liquidity, total)
                .map(|d| (p.id, d))
                .ok_or_else(|| LedgerError::InconsistentReplay("fee split overflow".into()))
        })
        .collect::<Result<_, _>>()?;
    let assigned: TokenAmount = shares.iter().map(|s| s.1).sum();
    let best = live
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| x.liquidity.cmp(&y.liquidity).then(y.id.cmp(&x.id)))
        .map(|(i, _)| i)
        .expect("nonempty");
    shares[best].1 += fee - assigned;
    Ok(shares)
}

fn missing(what: &str) -> LedgerError {
    LedgerError::InconsistentReplay(format!("replay references unknown {what}"))
}

/// Accumulates the epoch's effects over the snapshot, producing the final
/// deposits and positions without touching pool reserves.
pub fn replay_effects(
    snapshot_deposits: &Balances,
    snapshot_positions: &BTreeMap<PoolId, crate::Pool>,
    blocks: &[MetaBlock],
    mint_rule: MintDepositRule,
) -> Result<(Balances, PositionMap), LedgerError> {
    let mut dep = snapshot_deposits.clone();
    let mut pos = position_map(snapshot_positions);
    let tokens: BTreeMap<PoolId, (TokenId, TokenId)> =
        snapshot_positions.iter().map(|(id, p)| (*id, (p.token_a, p.token_b))).collect();
    let debit = |dep: &mut Balances, u: &PublicKey, t: TokenId, a: TokenAmount| {
        if dep.debit(u, t, a) {
            Ok(())
        } else {
            Err(LedgerError::InconsistentReplay(format!("negative deposit for {u} in {t}")))
        }
    };
    for block in blocks {
        for eff in &block.effects {
            match eff {
                TxEffect::Swap { pool, user, token_in, amount_in, token_out, amount_out, fee, tick } => {
                    debit(&mut dep, user, *token_in, *amount_in)?;
                    dep.credit(*user, *token_out, *amount_out);
                    let (ta, _) = *tokens.get(pool).ok_or_else(|| missing("pool"))?;
                    for (id, d) in split(&pos, pool, *fee, *tick)? {
                        let p = pos.get_mut(&(*pool, id)).expect("split over known positions");
                        if *token_in == ta {
                            p.fees_a += d;
                        } else {
                            p.fees_b += d;
                        }
                    }
                }
                TxEffect::Mint { pool, user, position, used_a, used_b, liquidity, range } => {
                    let (ta, tb) = *tokens.get(pool).ok_or_else(|| missing("pool"))?;
                    debit(&mut dep, user, ta, *used_a)?;
                    match mint_rule {
                        MintDepositRule::Deduct => debit(&mut dep, user, tb, *used_b)?,
                        MintDepositRule::AddAsPrinted => dep.credit(*user, tb, *used_b),
                    }
                    let p = pos.entry((*pool, *position)).or_insert_with(|| LiquidityPosition {
                        range: TickRange::FULL,
                        ..LiquidityPosition::tombstone(*position, *user)
                    });
                    p.amount_a += used_a;
                    p.amount_b += used_b;
                    p.liquidity += liquidity;
                    p.range = *range;
                }
                TxEffect::Burn { pool, user, position, withdrawn_a, withdrawn_b, fees_a, fees_b, liquidity_removed, deleted } => {
                    let (ta, tb) = *tokens.get(pool).ok_or_else(|| missing("pool"))?;
                    let p = pos.get_mut(&(*pool, *position)).ok_or_else(|| missing("position"))?;
                    let short = || LedgerError::InconsistentReplay("burn exceeds position".into());
                    p.amount_a = p.amount_a.checked_sub(*withdrawn_a).ok_or_else(short)?;
                    p.amount_b = p.amount_b.checked_sub(*withdrawn_b).ok_or_else(short)?;
                    p.liquidity = p.liquidity.checked_sub(*liquidity_removed).ok_or_else(short)?;
                    if *deleted {
                        if (p.fees_a, p.fees_b) != (*fees_a, *fees_b) || p.amount_a != 0 || p.amount_b != 0 {
                            return Err(LedgerError::InconsistentReplay("deleted position still holds value".into()));
                        }
                        pos.remove(&(*pool, *position));
                    }
                    dep.credit(*user, ta, withdrawn_a + fees_a);
                    dep.credit(*user, tb, withdrawn_b + fees_b);
                }
                TxEffect::Collect { pool, user, position, paid_a, paid_b } => {
                    let (ta, tb) = *tokens.get(pool).ok_or_else(|| missing("pool"))?;
                    let p = pos.get_mut(&(*pool, *position)).ok_or_else(|| missing("position"))?;
                    let short = || LedgerError::InconsistentReplay("collect exceeds fees".into());
                    p.fees_a = p.fees_a.checked_sub(*paid_a).ok_or_else(short)?;
                    p.fees_b = p.fees_b.checked_sub(*paid_b).ok_or_else(short)?;
                    dep.credit(*user, ta, *paid_a);
                    dep.credit(*user, tb, *paid_b);
                }
            }
        }
    }
    Ok((dep, pos))
}

/// Builds the summary from the snapshot and the epoch's meta-blocks, and
/// checks it against the directly executed working state.
pub fn summarize_epoch(state: &EpochState, blocks: &[MetaBlock]) -> Result<SummaryBlock, LedgerError> {
    for w in blocks.windows(2) {
        if w[1].parent_hash != w[0].hash() {
            return Err(LedgerError::BrokenChain { round: w[1].round });
        }
    }
    if let Some(b) = blocks.iter().find(|b| b.epoch != state.epoch) {
        return Err(LedgerError::InconsistentReplay(format!("block from epoch {} in epoch {}", b.epoch, state.epoch)));
    }
    let (deposits, positions) = replay_effects(&state.snapshot_deposits, &state.snapshot_pools, blocks, state.mint_rule)?;
    if deposits != state.working_deposits {
        return Err(LedgerError::InconsistentReplay("payouts differ from working deposits".into()));
    }
    if positions != position_map(&state.pools) {
        return Err(LedgerError::InconsistentReplay("positions differ from working pools".into()));
    }
    Ok(SummaryBlock {
        epoch: state.epoch,
        payouts: payouts_from(&deposits),
        positions: position_diff(&position_map(&state.snapshot_pools), &positions),
        meta_block_hashes: blocks.iter().map(MetaBlock::hash).collect(),
    })
}

/// Combines consecutive summaries into one payload body. Payouts add up
/// when each epoch is paid out, and only the last image counts when
/// balances carry over. Later position images replace earlier ones.
pub fn merge_summaries(summaries: &[&SummaryBlock], carry_over: bool) -> (Vec<PayoutEntry>, Vec<PositionImage>) {
    let payouts = if carry_over {
        summaries.last().map(|s| s.payouts.clone()).unwrap_or_default()
    } else {
        let mut all = Balances::default();
        for s in summaries {
            all.merge(&balances_from(&s.payouts));
        }
        payouts_from(&all)
    };
    let mut images: BTreeMap<(PoolId, PositionId), PositionImage> = BTreeMap::new();
    for s in summaries {
        for i in &s.positions {
            images.insert((i.pool, i.position.id), i.clone());
        }
    }
    (payouts, images.into_values().collect())
}

/// Unsigned sync payload over consecutive summaries, with the bytes the
/// committee signs.
pub fn build_sync_payload(
    summaries: &[&SummaryBlock],
    next_vk: VerifyingKey,
    handoffs: Vec<HandoffCert>,
    carry_over: bool,
) -> Result<(SyncPayload, Vec<u8>), LedgerError> {
    let first = summaries.first().ok_or(LedgerError::EmptySync)?.epoch;
    let last = summaries.last().expect("nonempty").epoch;
    if summaries.iter().enumerate().any(|(i, s)| s.epoch != first + i as u64) {
        return Err(LedgerError::EmptySync);
    }
    let (payouts, positions) = merge_summaries(summaries, carry_over);
    let payload = SyncPayload {
        first_epoch: first,
        last_epoch: last,
        payouts,
        positions,
        next_committee_vk: next_vk,
        handoffs,
        signature: ThresholdSignature::empty(),
    };
    let bytes = payload.signing_bytes();
    Ok((payload, bytes))
}

//! Direct-replay oracle: applies every executed transaction straight to a
//! copy of the genesis bank, skipping meta-blocks, summaries and syncs, and
//! checks that it lands on the same bank as the full system.

use l2amm_core::bank::BankState;
use l2amm_core::ledger::{snapshot_bank, MintDepositRule};

use crate::config::ExperimentConfig;
use crate::sim::{run_with, BankEvent, ExecutedBlocks, RunOutput};
use crate::SimError;

/// Runs `cfg` and replays it directly. Returns the run on agreement.
pub fn shadow_oracle(cfg: &ExperimentConfig) -> Result<RunOutput, SimError> {
    let out = run_with(cfg, true)?;
    let direct = replay(&out.genesis, &out.bank_events, &out.executed)?;
    compare(&direct, &out.bank)?;
    Ok(out)
}

/// Replays bank events in chain order; each sync executes its epochs'
/// transactions under the direct mint rule.
pub fn replay(genesis: &BankState, events: &[BankEvent], executed: &ExecutedBlocks) -> Result<BankState, SimError> {
    let mut bank = genesis.clone();
    for ev in events {
        match ev {
            BankEvent::Deposit(r) => {
                bank.deposits.credit(r.activation_epoch, r.user, r.token, r.amount);
                bank.custody.entry(r.token).or_default().inflow += r.amount;
            }
            BankEvent::Sync { first, last, next_vk } => {
                for e in *first..=*last {
                    let mut state = snapshot_bank(&bank, e);
                    state.mint_rule = MintDepositRule::Deduct;
                    for (round, txs) in executed.get(&e).into_iter().flatten() {
                        for tx in txs {
                            state
                                .try_apply(tx, *round)
                                .map_err(|r| SimError::Divergence(format!("tx {} in epoch {e} refused: {r}", tx.id)))?;
                        }
                    }
                    bank.deposits.take(e);
                    bank.pools = state.pools;
                    for (user, t, a) in state.working_deposits.iter() {
                        if a == 0 {
                            continue;
                        }
                        if bank.carry_over_deposits {
                            bank.deposits.credit(last + 1, *user, t, a);
                        } else {
                            bank.custody.entry(t).or_default().outflow += a;
                        }
                    }
                }
                bank.committee_vk = *next_vk;
                bank.last_synced_epoch = Some(*last);
            }
        }
    }
    Ok(bank)
}

/// Field-by-field comparison naming the first difference.
pub fn compare(direct: &BankState, system: &BankState) -> Result<(), SimError> {
    let diff = |what: &str| Err(SimError::Divergence(format!("{what} differ")));
    if direct.token_pool != system.token_pool {
        return diff("token maps");
    }
    for (id, p) in &direct.pools {
        match system.pools.get(id) {
            None => return diff("pool sets"),
            Some(q) if q.positions != p.positions => return diff("positions"),
            Some(q) if q != p => return diff("pool states"),
            _ => {}
        }
    }
    if direct.pools.len() != system.pools.len() {
        return diff("pool sets");
    }
    if direct.deposits != system.deposits {
        return diff("deposit books");
    }
    if direct.custody != system.custody {
        return diff("custody totals");
    }
    if direct.committee_vk != system.committee_vk || direct.last_synced_epoch != system.last_synced_epoch {
        return diff("sync heads");
    }
    if direct != system {
        return diff("bank states");
    }
    Ok(())
}

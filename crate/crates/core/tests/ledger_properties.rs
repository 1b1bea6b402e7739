use std::collections::VecDeque;

use proptest::prelude::*;

use l2amm_core::auth::{keygen, ThresholdKeySet};
use l2amm_core::bank::BankState;
use l2amm_core::ids::{user_key, Hash32};
use l2amm_core::ledger::{build_block, build_sync_payload, snapshot_bank, summarize_epoch, EpochState, MetaBlock};
use l2amm_core::num::ByteSize;
use l2amm_core::workload::{provision, Generator, MarketSpec, TrafficProfile};
use l2amm_core::{PublicKey, TokenId};

const CAP: ByteSize = ByteSize::from_bytes(64 * 1024);

struct World {
    bank: BankState,
    gen: Generator,
    keys: ThresholdKeySet,
    signers: Vec<PublicKey>,
}

fn world(users: u32, daily_volume: u64, seed: u64) -> World {
    let members: Vec<PublicKey> = (0..5).map(|i| user_key(1000 + i)).collect();
    let keys = keygen(&members, 1, [seed as u8; 32]).unwrap();
    let mut bank = BankState::new(keys.vk(), false);
    let profile = TrafficProfile { daily_volume, user_count: users, ..Default::default() };
    let market = MarketSpec { reserve: 1_000_000_000_000, ..Default::default() };
    let (accounts, core) = provision(&profile, &market, &mut bank).unwrap();
    let gen = Generator::new(profile, accounts, core, 7.0, 1, seed).unwrap();
    World { bank, gen, keys, signers: members[..4].to_vec() }
}

fn fund(w: &mut World, epoch: u64) {
    for d in w.gen.bootstrap_deposits(epoch) {
        for (t, a) in d.amounts {
            w.bank.genesis_deposit(d.user, t, a, epoch).unwrap();
        }
    }
}

/// Runs one epoch of `rounds` rounds; returns the final state and blocks.
fn run_epoch(w: &mut World, epoch: u64, rounds: u64) -> (EpochState, Vec<MetaBlock>) {
    let mut state = snapshot_bank(&w.bank, epoch);
    w.gen.begin_epoch(state.clone());
    let mut queue = VecDeque::new();
    let mut blocks: Vec<MetaBlock> = Vec::new();
    for r in 0..rounds {
        let round = epoch * rounds + r;
        queue.extend(w.gen.generate_round(round).txs);
        let parent = blocks.last().map_or(Hash32::default(), MetaBlock::hash);
        let built = build_block(&mut state, &mut queue, round, parent, CAP);
        assert!(built.rejected.is_empty(), "{:?}", built.rejected);
        blocks.push(built.block);
    }
    (state, blocks)
}

fn tokens() -> [TokenId; 2] {
    [TokenId(1), TokenId(2)]
}

fn total_held(s: &EpochState, t: TokenId) -> u128 {
    let pool = s.pools.values().next().unwrap();
    let side = pool.side_of(t).unwrap();
    let fees: u128 = pool.positions.values().map(|p| p.fees(side)).sum();
    s.working_deposits.total(t) + pool.reserve(side) + fees
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The summary replays to the executed state, and sidechain execution
    /// neither creates nor destroys tokens.
    #[test]
    fn epoch_summary_matches_execution(seed in 0u64..1_000_000, users in 2u32..30, volume in 0u64..3_000_000) {
        let mut w = world(users, volume, seed);
        fund(&mut w, 0);
        let before = snapshot_bank(&w.bank, 0);
        let (state, blocks) = run_epoch(&mut w, 0, 8);
        for t in tokens() {
            prop_assert_eq!(total_held(&before, t), total_held(&state, t));
        }
        let summary = summarize_epoch(&state, &blocks).unwrap();
        prop_assert_eq!(summary.meta_block_hashes.len(), 8);
        let (mut payload, bytes) = build_sync_payload(&[&summary], w.keys.vk(), vec![], false).unwrap();
        payload.signature = w.keys.sign(&bytes, &w.signers).unwrap();
        let disbursed = w.bank.process_sync(&payload).unwrap();
        for t in tokens() {
            let paid: u128 = disbursed.iter().filter(|d| d.token == t).map(|d| d.amount).sum();
            prop_assert_eq!(paid, state.working_deposits.total(t));
            let pid = w.bank.token_pool[&t];
            let side = w.bank.pools[&pid].side_of(t).unwrap();
            prop_assert_eq!(w.bank.pools[&pid].reserve(side), state.pools[&pid].reserve(side));
        }
        prop_assert_eq!(&w.bank.pools, &state.pools);
        w.bank.check_custody().unwrap();
    }

    /// Custody holds after every bank transition: deposits, flash loans
    /// (repaid or not) and syncs over several epochs.
    #[test]
    fn custody_is_conserved(seed in 0u64..1_000_000, flashes in prop::collection::vec((0u128..1_000_000, 0u128..2_000), 0..6)) {
        let mut w = world(8, 2_000_000, seed);
        fund(&mut w, 0);
        w.bank.check_custody().unwrap();
        let pid = *w.bank.pools.keys().next().unwrap();
        for epoch in 0..3u64 {
            for d in w.gen.epoch_deposits(epoch + 1) {
                for (t, a) in d.amounts {
                    w.bank.deposit(d.user, t, a, epoch).unwrap();
                    w.bank.check_custody().unwrap();
                }
            }
            for &(amt, extra) in &flashes {
                let before = w.bank.clone();
                let r = w.bank.flash(&pid, amt, amt / 2, |loan| (loan.due_a + extra, loan.due_b.saturating_sub(extra % 2)));
                if r.is_err() {
                    prop_assert_eq!(&w.bank, &before);
                }
                w.bank.check_custody().unwrap();
            }
            let (state, blocks) = run_epoch(&mut w, epoch, 4);
            let summary = summarize_epoch(&state, &blocks).unwrap();
            let (mut payload, bytes) = build_sync_payload(&[&summary], w.keys.vk(), vec![], false).unwrap();
            payload.signature = w.keys.sign(&bytes, &w.signers).unwrap();
            w.bank.process_sync(&payload).unwrap();
            w.bank.check_custody().unwrap();
        }
    }
}

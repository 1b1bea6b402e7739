//! The round and epoch event loop.
//!
//! Timing: epoch `e` spans `[e·ω·b_t, (e+1)·ω·b_t)`. Transactions arrive at
//! round starts. Round 0 of each epoch takes the deposit snapshot and
//! produces no meta-block, so its arrivals wait for round 1. Rounds 1..ω
//! each commit one capacity-bounded meta-block at the round's end, delayed
//! by 2Δ per failed view. At the epoch's end the committee summarizes,
//! agrees on and signs the sync, and submits it after the agreement delay.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use l2amm_core::auth::{keygen, ThresholdKeySet, VerifyingKey};
use l2amm_core::bank::{BankState, BaselineOp, DepositReceipt, HandoffCert, SyncPayload};
use l2amm_core::consensus::{
    elect, epoch_handoff, epoch_seed, registry, run_agreement, ByzantineProfile, Committee, LeaderConduct, Miner, MinerRegistry,
    Network, Outcome, ProposalKind,
};
use l2amm_core::ids::{hash_parts, Hash32, PublicKey};
use l2amm_core::ledger::{
    build_sync_payload, snapshot_bank, summarize_epoch, verify_block, EpochState, MetaBlock, Rejection, SideChain, SidechainTx,
    SummaryBlock, TxKind,
};
use l2amm_core::mainchain::{Category, MainTx, Mainchain};
use l2amm_core::workload::{provision, DepositIntent, Generator};
use l2amm_core::{ByteSize, TokenAmount, TokenId};

use crate::chain::{deposit_cost, plan_sync, BankChain, MainBody, MainOutput};
use crate::config::ExperimentConfig;
use crate::metrics::{Acc, EpochTrace, GasTotals, Growth, MetricsReport, PruneTrace, RoundTrace, SyncStats};
use crate::SimError;

/// A bank transition on the final mainchain, in chain order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BankEvent {
    Deposit(DepositReceipt),
    Sync { first: u64, last: u64, next_vk: VerifyingKey },
}

/// One mainchain block of the final chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainBlockTrace {
    pub height: u64,
    pub time_s: f64,
    pub tx_count: u64,
    pub gas: u64,
    pub bytes: f64,
}

/// Meta-block contents kept for direct replay: round and transactions.
pub type ExecutedBlocks = BTreeMap<u64, Vec<(u64, Vec<SidechainTx>)>>;

pub struct RunOutput {
    pub report: MetricsReport,
    pub rounds: Vec<RoundTrace>,
    pub epochs: Vec<EpochTrace>,
    pub prunes: Vec<PruneTrace>,
    pub main_blocks: Vec<MainBlockTrace>,
    /// Bank before the first epoch, after pool seeding and genesis deposits.
    pub genesis: BankState,
    /// Bank at the final mainchain tip.
    pub bank: BankState,
    pub bank_events: Vec<BankEvent>,
    /// Executed meta-blocks per epoch; empty unless requested.
    pub executed: ExecutedBlocks,
    pub side: SideChain,
}

/// Elected committee of `epoch` under `cfg`.
pub fn committee_for(cfg: &ExperimentConfig, epoch: u64) -> Result<Committee, SimError> {
    let miners = miners(cfg);
    Ok(elect(&miners, epoch_seed(cfg.seed, epoch), cfg.committee_size, epoch)?)
}

/// Miner number of the leader of `view` in `epoch`, for scripting faults.
pub fn leader_miner(cfg: &ExperimentConfig, epoch: u64, view: usize) -> Result<u32, SimError> {
    let leader = committee_for(cfg, epoch)?.leader(view);
    Ok(miners(cfg).iter().position(|m| m.id == leader).expect("leader is a registered miner") as u32)
}

fn miners(cfg: &ExperimentConfig) -> Vec<Miner> {
    (0..cfg.miners).map(|i| Miner::simulated(i, 1)).collect()
}

/// Runs the experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, SimError> {
    run_with(cfg, false)
}

/// Runs the experiment, optionally keeping every executed meta-block.
pub fn run_with(cfg: &ExperimentConfig, keep_blocks: bool) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg.clone(), keep_blocks)?;
    for e in 0..cfg.epochs {
        sim.run_epoch(e)?;
    }
    sim.drain()?;
    Ok(sim.finish())
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SyncStatus {
    Pending,
    Included { height: u64 },
    Confirmed,
    Reverted,
    Evicted,
}

struct SyncTrack {
    first: u64,
    last: u64,
    status: SyncStatus,
}

struct CommitteeKeys {
    committee: Committee,
    keys: ThresholdKeySet,
    profiles: BTreeMap<PublicKey, ByzantineProfile>,
}

impl CommitteeKeys {
    fn honest(&self) -> Vec<PublicKey> {
        self.committee.ids().into_iter().filter(|m| self.profiles.get(m).is_none_or(ByzantineProfile::is_honest)).collect()
    }
}

/// A leader's block proposal with the indices of queue entries it consumes.
struct Proposal {
    block: MetaBlock,
    post: EpochState,
    consumed: Vec<usize>,
    rejected: Vec<Rejection>,
}

/// Per-epoch sums for the payout latency.
#[derive(Clone, Copy, Default)]
struct EpochLatency {
    n: u64,
    arrival_sum: f64,
    last_block: f64,
}

struct Sim {
    cfg: ExperimentConfig,
    keep_blocks: bool,
    miners: Vec<Miner>,
    registry: MinerRegistry,
    chain: Mainchain<BankChain>,
    genesis: BankState,
    side: SideChain,
    gen: Generator,
    queue: VecDeque<SidechainTx>,
    net: Network,
    committees: BTreeMap<u64, CommitteeKeys>,
    handoffs: BTreeMap<u64, HandoffCert>,
    syncs: BTreeMap<u64, SyncTrack>,
    /// Mainchain transaction id → sync id.
    sync_txs: BTreeMap<u64, u64>,
    fired_rollbacks: BTreeSet<usize>,
    deposit_lag: u64,
    last_hash: Hash32,
    victims: BTreeSet<PublicKey>,
    // Accounting.
    rounds: Vec<RoundTrace>,
    epochs: Vec<EpochTrace>,
    prunes: Vec<PruneTrace>,
    executed: ExecutedBlocks,
    meta_bytes: BTreeMap<u64, ByteSize>,
    epoch_latency: BTreeMap<u64, EpochLatency>,
    sc_latency: Acc,
    censored: Acc,
    generated: u64,
    rejections: BTreeMap<String, u64>,
    view_changes: u64,
    baseline_gas: u64,
    baseline_bytes: ByteSize,
    genesis_gas: u64,
    genesis_bytes: ByteSize,
    genesis_deposits: u64,
    stats: SyncStats,
    breaches: Vec<String>,
}

fn rejection_key(r: &Rejection) -> String {
    match r {
        Rejection::InsufficientDeposit => "insufficient_deposit".into(),
        Rejection::NotOwner => "not_owner".into(),
        Rejection::Expired => "expired".into(),
        Rejection::Malformed(_) => "malformed".into(),
        Rejection::Engine(e) => format!("engine: {e}"),
    }
}

fn baseline_op(kind: TxKind) -> BaselineOp {
    match kind {
        TxKind::SwapExactIn | TxKind::SwapExactOut => BaselineOp::Swap,
        TxKind::Mint => BaselineOp::Mint,
        TxKind::Burn => BaselineOp::Burn,
        TxKind::Collect => BaselineOp::Collect,
    }
}

/// Tokens held per token: deposits, reserves and fees owed.
fn token_totals(s: &EpochState) -> BTreeMap<TokenId, TokenAmount> {
    let mut out: BTreeMap<TokenId, TokenAmount> = BTreeMap::new();
    for (_, t, a) in s.working_deposits.iter() {
        *out.entry(t).or_default() += a;
    }
    for p in s.pools.values() {
        let (fa, fb) = p.fees_owed().unwrap_or_default();
        *out.entry(p.token_a).or_default() += p.reserve_a + fa;
        *out.entry(p.token_b).or_default() += p.reserve_b + fb;
    }
    out
}

/// Packs queued transactions in arrival order until the next one does not
/// fit, skipping `skip`'s transactions. Invalid ones are consumed.
fn assemble(
    state: &EpochState,
    queue: &VecDeque<SidechainTx>,
    round: u64,
    parent: Hash32,
    capacity: ByteSize,
    skip: Option<&BTreeSet<PublicKey>>,
) -> Proposal {
    let mut post = state.clone();
    let mut used = ByteSize::ZERO;
    let (mut txs, mut effects, mut consumed, mut rejected) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, tx) in queue.iter().enumerate() {
        if skip.is_some_and(|s| s.contains(&tx.issuer)) {
            continue;
        }
        if used + tx.size > capacity {
            break;
        }
        consumed.push(i);
        match post.try_apply(tx, round) {
            Ok(eff) => {
                used += tx.size;
                effects.push(eff);
                txs.push(tx.clone());
            }
            Err(r) => rejected.push(r),
        }
    }
    let block =
        MetaBlock { epoch: state.epoch, round, parent_hash: parent, txs, effects, state_root: post.state_root(), votes: vec![] };
    Proposal { block, post, consumed, rejected }
}

/// Removes the entries at the ascending `indices`.
fn remove_indices(queue: &mut VecDeque<SidechainTx>, indices: &[usize]) {
    if indices.iter().enumerate().all(|(k, &i)| k == i) {
        queue.drain(..indices.len());
        return;
    }
    let drop: BTreeSet<usize> = indices.iter().copied().collect();
    let kept: VecDeque<SidechainTx> =
        std::mem::take(queue).into_iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, t)| t).collect();
    *queue = kept;
}

/// A payload that pays its first recipient one extra unit.
fn tamper(mut p: SyncPayload) -> SyncPayload {
    match p.payouts.first_mut().and_then(|e| e.amounts.first_mut()) {
        Some(a) => a.1 += 1,
        None => p.last_epoch += 1,
    }
    p
}

impl Sim {
    fn new(cfg: ExperimentConfig, keep_blocks: bool) -> Result<Self, SimError> {
        let miners = miners(&cfg);
        let registry = registry(&miners);
        let mut committees = BTreeMap::new();
        let c0 = Self::make_committee(&cfg, &miners, 0)?;
        let mut bank = BankState::new(c0.keys.vk(), cfg.carry_over);
        committees.insert(0, c0);
        let (accounts, core) = provision(&cfg.traffic, &cfg.market, &mut bank)?;
        let deposit_lag = cfg.deposit_lag();
        let gen = Generator::new(cfg.traffic.clone(), accounts, core, cfg.round_duration_s, deposit_lag + 1, cfg.seed)?;
        let (mut genesis_gas, mut genesis_bytes, mut genesis_deposits) = (0, ByteSize::ZERO, 0);
        for target in 0..=deposit_lag.min(cfg.epochs - 1) {
            for d in gen.bootstrap_deposits(target) {
                let (g, b) = deposit_cost(&d)?;
                genesis_gas += g;
                genesis_bytes += b;
                genesis_deposits += 1;
                for (t, a) in d.amounts {
                    bank.genesis_deposit(d.user, t, a, target)?;
                }
            }
        }
        bank.check_custody()?;
        let m = cfg.mainchain;
        let settle = (m.confirm_depth + 1) as f64 * m.block_interval_s;
        let chain = Mainchain::new(m, BankChain::new(bank.clone(), cfg.epoch_duration_s(), settle));
        let net_seed = u64::from_be_bytes(hash_parts("network", &[&cfg.seed.to_be_bytes()])[..8].try_into().expect("8 bytes"));
        let victims = cfg
            .scenario
            .0
            .iter()
            .filter_map(|i| match &i.profile {
                ByzantineProfile::TargetedCensor(v) => Some(v.iter().copied()),
                _ => None,
            })
            .flatten()
            .collect();
        Ok(Sim {
            net: Network::new(cfg.network_delta_s, false, ChaCha8Rng::seed_from_u64(net_seed)),
            keep_blocks,
            miners,
            registry,
            chain,
            genesis: bank,
            side: SideChain::default(),
            gen,
            queue: VecDeque::new(),
            committees,
            handoffs: BTreeMap::new(),
            syncs: BTreeMap::new(),
            sync_txs: BTreeMap::new(),
            fired_rollbacks: BTreeSet::new(),
            deposit_lag,
            last_hash: Hash32::default(),
            victims,
            rounds: Vec::new(),
            epochs: Vec::new(),
            prunes: Vec::new(),
            executed: BTreeMap::new(),
            meta_bytes: BTreeMap::new(),
            epoch_latency: BTreeMap::new(),
            sc_latency: Acc::default(),
            censored: Acc::default(),
            generated: 0,
            rejections: BTreeMap::new(),
            view_changes: 0,
            baseline_gas: 0,
            baseline_bytes: ByteSize::ZERO,
            genesis_gas,
            genesis_bytes,
            genesis_deposits,
            stats: SyncStats::default(),
            breaches: Vec::new(),
            cfg,
        })
    }

    fn make_committee(cfg: &ExperimentConfig, miners: &[Miner], e: u64) -> Result<CommitteeKeys, SimError> {
        let committee = elect(miners, epoch_seed(cfg.seed, e), cfg.committee_size, e)?;
        let keys =
            keygen(&committee.ids(), committee.f, hash_parts("committee-keys", &[&cfg.seed.to_be_bytes(), &e.to_be_bytes()]))?;
        let mut profiles = BTreeMap::new();
        for (i, p) in cfg.scenario.profiles_at(e) {
            let m = miners.get(i as usize).ok_or_else(|| SimError::ConfigInvalid(format!("scenario names miner {i}")))?;
            profiles.insert(m.id, p);
        }
        let faulty = committee.ids().iter().filter(|m| profiles.get(m).is_some_and(|p| !p.is_honest())).count();
        if faulty > committee.f {
            return Err(SimError::AssumptionViolated { epoch: e, faulty, f: committee.f });
        }
        Ok(CommitteeKeys { committee, keys, profiles })
    }

    fn ensure_committee(&mut self, e: u64) -> Result<(), SimError> {
        if !self.committees.contains_key(&e) {
            let c = Self::make_committee(&self.cfg, &self.miners, e)?;
            self.committees.insert(e, c);
        }
        Ok(())
    }

    fn epoch_start(&self, e: u64) -> f64 {
        e as f64 * self.cfg.epoch_duration_s()
    }

    fn breach(&mut self, msg: String) {
        self.breaches.push(msg);
    }

    /// Epoch state at the start of `e`: the confirmed bank with every
    /// summarized but not yet confirmed epoch projected onto it.
    fn snapshot(&mut self, e: u64) -> Result<EpochState, SimError> {
        let mut bank = self.chain.confirmed_state().bank.clone();
        if self.chain.state().bank.deposits.spendable(e) != bank.deposits.spendable(e) {
            self.breach(format!("deposits for epoch {e} were not settled at its start"));
        }
        let from = bank.next_sync_epoch();
        if from < e {
            let refs: Vec<&SummaryBlock> = (from..e).map(|x| &self.side.summaries[&x]).collect();
            let (payload, _) = build_sync_payload(&refs, bank.committee_vk, vec![], self.cfg.carry_over)?;
            bank.apply_payload(&payload)?;
        }
        let mut s = snapshot_bank(&bank, e);
        s.mint_rule = self.cfg.mint_rule;
        Ok(s)
    }

    fn run_epoch(&mut self, e: u64) -> Result<(), SimError> {
        let omega = self.cfg.rounds_per_epoch;
        let bt = self.cfg.round_duration_s;
        self.advance_chain(self.epoch_start(e))?;
        self.ensure_committee(e)?;
        let mut state = self.snapshot(e)?;
        self.gen.begin_epoch(state.clone());
        let totals = token_totals(&state);
        let mut view = 0usize;
        for j in 0..omega {
            let round = e * omega + j;
            let start = round as f64 * bt;
            self.advance_chain(start)?;
            let traffic = self.gen.generate_round(round);
            let arrived = traffic.txs.len() as u64;
            self.generated += arrived;
            self.queue.extend(traffic.txs);
            for d in traffic.deposits {
                self.submit_deposit(d, start)?;
            }
            let mut trace = RoundTrace {
                epoch: e,
                round,
                start_s: start,
                arrived,
                committed: 0,
                rejected: 0,
                block_bytes: 0.0,
                block_time_s: None,
                view_changes: 0,
                queue_len: 0,
            };
            if j > 0 {
                view = self.block_round(e, round, start + bt, &mut state, view, &mut trace)?;
                if token_totals(&state) != totals {
                    self.breach(format!("sidechain tokens not conserved in round {round}"));
                }
            }
            trace.queue_len = self.queue.len() as u64;
            self.rounds.push(trace);
        }
        self.end_epoch(e, state, view)
    }

    /// Runs agreement on the round's meta-block and commits it. Returns the
    /// view in force afterwards.
    fn block_round(
        &mut self,
        e: u64,
        round: u64,
        end: f64,
        state: &mut EpochState,
        view: usize,
        trace: &mut RoundTrace,
    ) -> Result<usize, SimError> {
        let cap = self.cfg.block_capacity();
        let parent = self.last_hash;
        let ck = &self.committees[&e];
        let queue = &self.queue;
        let st: &EpochState = state;
        let propose = |_: &PublicKey, c: &LeaderConduct| {
            let skip = match c {
                LeaderConduct::Censor(v) => Some(v),
                _ => None,
            };
            let mut p = assemble(st, queue, round, parent, cap, skip);
            if *c == LeaderConduct::Invalid {
                p.block.state_root = Hash32(hash_parts("forged-root", &[&p.block.state_root.0]));
            }
            Some(p)
        };
        let validate = |p: &Proposal| p.block.parent_hash == parent && verify_block(st, &p.block, cap).is_ok();
        let n = ck.committee.size();
        let agreement =
            run_agreement(&ck.committee, &ck.profiles, ProposalKind::Block, propose, validate, &mut self.net, view, n);
        let changes = agreement.view_changes() as u64;
        let (view, mut p, votes) = match agreement.outcome {
            Outcome::Agreed { view, proposal, votes, .. } => (view, proposal, votes),
            Outcome::Stalled => {
                return Err(SimError::Stuck(format!("no meta-block agreement in round {round}")));
            }
        };
        let block_time = end + changes as f64 * self.net.timeout();
        *state = p.post;
        remove_indices(&mut self.queue, &p.consumed);
        for r in &p.rejected {
            *self.rejections.entry(rejection_key(r)).or_default() += 1;
        }
        let bt = self.cfg.round_duration_s;
        let lat = self.epoch_latency.entry(e).or_default();
        for tx in &p.block.txs {
            let arrival = tx.submit_round as f64 * bt;
            self.sc_latency.add(block_time - arrival);
            if self.victims.contains(&tx.issuer) {
                self.censored.add(block_time - arrival);
            }
            lat.n += 1;
            lat.arrival_sum += arrival;
            let op = baseline_op(tx.kind());
            self.baseline_gas += op.gas();
            self.baseline_bytes += op.size();
        }
        lat.last_block = block_time;
        p.block.votes = votes;
        self.view_changes += changes;
        self.last_hash = p.block.hash();
        *self.meta_bytes.entry(e).or_default() += p.block.size();
        trace.committed = p.block.txs.len() as u64;
        trace.rejected = p.rejected.len() as u64;
        trace.block_bytes = p.block.size().as_f64();
        trace.block_time_s = Some(block_time);
        trace.view_changes = changes;
        if self.keep_blocks {
            self.executed.entry(e).or_default().push((round, p.block.txs.clone()));
        }
        self.side.push_meta(p.block);
        Ok(view)
    }

    fn end_epoch(&mut self, e: u64, state: EpochState, view: usize) -> Result<(), SimError> {
        let summary = summarize_epoch(&state, self.side.meta_blocks(e))?;
        let mut trace = EpochTrace {
            epoch: e,
            committed: self.epoch_latency.get(&e).map_or(0, |l| l.n),
            meta_bytes: self.meta_bytes.get(&e).copied().unwrap_or_default().as_f64(),
            summary_bytes: summary.size().as_f64(),
            payouts: summary.payouts.len() as u64,
            positions: summary.positions.len() as u64,
            sync_first: None,
            sync_gas: 0,
            sync_parts: 0,
            sync_submitted_s: None,
            payout_time_s: None,
            confirmed_time_s: None,
        };
        self.side.push_summary(summary);
        self.ensure_committee(e + 1)?;
        self.handoff(e)?;
        let at = self.epoch_start(e + 1) + self.cfg.consensus_delay();
        if let Some((first, gas, parts, time)) = self.issue_sync(e, at, view, 1)? {
            trace.sync_first = Some(first);
            trace.sync_gas = gas;
            trace.sync_parts = parts;
            trace.sync_submitted_s = Some(time);
        } else {
            self.stats.skipped += 1;
        }
        let target = e + 1 + self.deposit_lag;
        for d in self.gen.epoch_deposits(target) {
            self.submit_deposit(d, at)?;
        }
        self.epochs.push(trace);
        Ok(())
    }

    /// The outgoing committee certifies its successor's key.
    fn handoff(&mut self, e: u64) -> Result<(), SimError> {
        let cur = &self.committees[&e];
        let next = &self.committees[&(e + 1)];
        let signers: Vec<PublicKey> = cur.honest().into_iter().take(cur.committee.quorum()).collect();
        let record =
            epoch_handoff(&self.registry, &cur.committee, &cur.keys, &signers, &next.committee, next.keys.vk(), &next.honest())?;
        self.handoffs.insert(e, record.cert);
        Ok(())
    }

    /// First epoch not covered by the tip bank or a live pending sync.
    fn next_uncovered(&self) -> u64 {
        let mut next = self.chain.state().bank.next_sync_epoch();
        for t in self.syncs.values() {
            if t.status == SyncStatus::Pending && t.first == next {
                next = t.last + 1;
            }
        }
        next
    }

    /// Agrees on, signs and submits the sync covering every uncovered epoch
    /// up to `last`. Returns (first epoch, gas, parts, submit time), or none
    /// if there was nothing to sync or the leader's proposal failed.
    fn issue_sync(
        &mut self,
        last: u64,
        at: f64,
        first_view: usize,
        max_views: usize,
    ) -> Result<Option<(u64, u64, u64, f64)>, SimError> {
        let first = self.next_uncovered();
        if first > last {
            return Ok(None);
        }
        let refs: Vec<&SummaryBlock> = (first..=last).map(|x| &self.side.summaries[&x]).collect();
        let certs: Vec<HandoffCert> = (first..last).map(|x| self.handoffs[&x].clone()).collect();
        let next_vk = self.committees[&(last + 1)].keys.vk();
        let (payload, bytes) = build_sync_payload(&refs, next_vk, certs, self.cfg.carry_over)?;
        let ck = &self.committees[&last];
        let propose = |_: &PublicKey, c: &LeaderConduct| {
            Some(if *c == LeaderConduct::Invalid { tamper(payload.clone()) } else { payload.clone() })
        };
        let validate = |p: &SyncPayload| p.signing_bytes() == bytes;
        let agreement = run_agreement(
            &ck.committee,
            &ck.profiles,
            ProposalKind::Sync,
            propose,
            validate,
            &mut self.net,
            first_view,
            max_views,
        );
        let time = at + agreement.view_changes() as f64 * self.net.timeout();
        let Outcome::Agreed { proposal: mut p, votes, .. } = agreement.outcome else {
            return Ok(None);
        };
        p.signature = ck.keys.sign(&bytes, &votes[..ck.committee.quorum()])?;
        let plan = plan_sync(&p, self.cfg.mainchain.block_gas_limit)?;
        let gas = p.gas();
        let parts = plan.len() as u32 - 1;
        let id = self.syncs.len() as u64;
        for (i, &(g, b)) in plan[..parts as usize].iter().enumerate() {
            let (tx, _) = self.chain.submit(MainBody::SyncPart { sync: id, part: i as u32 }, g, b, Category::Sync, time)?;
            self.sync_txs.insert(tx, id);
        }
        let (g, b) = plan[parts as usize];
        let (tx, _) =
            self.chain.submit(MainBody::SyncFinal { sync: id, parts, payload: Box::new(p) }, g, b, Category::Sync, time)?;
        self.sync_txs.insert(tx, id);
        self.syncs.insert(id, SyncTrack { first, last, status: SyncStatus::Pending });
        self.stats.submitted += 1;
        self.stats.staged_parts += parts as u64;
        Ok(Some((first, gas, parts as u64 + 1, time)))
    }

    fn submit_deposit(&mut self, d: DepositIntent, at: f64) -> Result<(), SimError> {
        if d.target_epoch >= self.cfg.epochs {
            return Ok(());
        }
        let (gas, size) = deposit_cost(&d)?;
        self.chain.submit(MainBody::Deposit(d), gas, size, Category::Deposit, at)?;
        Ok(())
    }

    /// Produces mainchain blocks due by `t`, firing scripted rollbacks and
    /// confirming syncs as blocks arrive.
    fn advance_chain(&mut self, t: f64) -> Result<(), SimError> {
        while self.chain.next_block_time() <= t + 1e-9 {
            let now = self.chain.next_block_time();
            let receipts = self.chain.advance_to(now);
            let mut rollback = 0;
            for r in receipts {
                let result = &r.included.result;
                if let Err(msg) = result {
                    if msg.starts_with("custody") {
                        self.breach(format!("block {}: {msg}", r.height));
                    }
                }
                match &r.included.tx.body {
                    MainBody::SyncFinal { sync, .. } => {
                        let track = self.syncs.get_mut(sync).expect("tracked sync");
                        match result {
                            Ok(MainOutput::Synced { first, last, .. }) => {
                                if track.status != SyncStatus::Evicted {
                                    track.status = SyncStatus::Included { height: r.height };
                                }
                                for (i, spec) in self.cfg.rollbacks.iter().enumerate() {
                                    if (*first..=*last).contains(&spec.after_sync_of_epoch) && self.fired_rollbacks.insert(i) {
                                        rollback = rollback.max(spec.depth);
                                    }
                                }
                            }
                            _ => {
                                if track.status != SyncStatus::Evicted {
                                    track.status = SyncStatus::Reverted;
                                }
                            }
                        }
                    }
                    MainBody::Deposit(_) => {
                        if let Err(msg) = result {
                            self.breaches.push(format!("deposit reverted at block {}: {msg}", r.height));
                        }
                    }
                    MainBody::SyncPart { .. } => {}
                }
            }
            if rollback > 0 {
                let evicted = self.chain.rollback(rollback)?;
                self.handle_evicted(evicted, now)?;
            }
            self.confirm_syncs(now)?;
        }
        Ok(())
    }

    /// Evicted deposits are resubmitted; evicted syncs are abandoned and
    /// their epochs fall to the next committee's mass-sync.
    fn handle_evicted(&mut self, evicted: Vec<MainTx<MainBody>>, now: f64) -> Result<(), SimError> {
        for tx in evicted {
            match tx.body {
                MainBody::Deposit(d) => {
                    self.chain.submit(MainBody::Deposit(d), tx.gas, tx.size, Category::Deposit, now)?;
                }
                MainBody::SyncPart { sync, .. } | MainBody::SyncFinal { sync, .. } => {
                    if let Some(t) = self.syncs.get_mut(&sync) {
                        if t.status != SyncStatus::Evicted {
                            t.status = SyncStatus::Evicted;
                            self.stats.evicted += 1;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn confirm_syncs(&mut self, now: f64) -> Result<(), SimError> {
        let ready: Vec<(u64, u64)> = self
            .syncs
            .iter()
            .filter_map(|(id, t)| match t.status {
                SyncStatus::Included { height } if self.chain.is_confirmed(height) => Some((*id, t.last)),
                _ => None,
            })
            .collect();
        for (id, last) in ready {
            self.syncs.get_mut(&id).expect("tracked").status = SyncStatus::Confirmed;
            self.side.mark_confirmed(last);
            self.side.prune(last)?;
            let expected_pruned: ByteSize = self.meta_bytes.range(..=last).map(|(_, b)| *b).sum();
            let expected_retained = self.side.summary_bytes() + self.meta_bytes.range(last + 1..).map(|(_, b)| *b).sum();
            let t = PruneTrace {
                through_epoch: last,
                time_s: now,
                pruned_bytes: self.side.pruned_bytes.as_f64(),
                expected_pruned_bytes: expected_pruned.as_f64(),
                retained_bytes: self.side.retained_bytes().as_f64(),
                expected_retained_bytes: expected_retained.as_f64(),
            };
            if self.side.pruned_bytes != expected_pruned || self.side.retained_bytes() != expected_retained {
                self.breach(format!("pruning accounting off after epoch {last}"));
            }
            if self.side.meta.range(..=last).next().is_some() {
                self.breach(format!("meta-blocks of epoch {last} survived its confirmed sync"));
            }
            self.prunes.push(t);
        }
        Ok(())
    }

    /// Keeps producing mainchain blocks until every epoch's sync is
    /// confirmed, re-issuing a sync if the last ones were lost.
    fn drain(&mut self) -> Result<(), SimError> {
        let last = self.cfg.epochs - 1;
        let k = self.cfg.mainchain.confirm_depth;
        for _ in 0..(1000 + 10 * k) {
            if self.chain.confirmed_state().bank.last_synced_epoch.is_some_and(|x| x >= last) {
                return Ok(());
            }
            let pending = self.syncs.values().any(|t| matches!(t.status, SyncStatus::Pending | SyncStatus::Included { .. }));
            if !pending && self.next_uncovered() <= last {
                let at = self.chain.next_block_time() - self.cfg.mainchain.block_interval_s / 2.0;
                let n = self.committees[&last].committee.size();
                self.issue_sync(last, at, 0, n)?;
            }
            let t = self.chain.next_block_time();
            self.advance_chain(t)?;
        }
        Err(SimError::Stuck("syncs never confirmed".into()))
    }

    fn finish(mut self) -> RunOutput {
        let interval = self.cfg.mainchain.block_interval_s;
        let k = self.cfg.mainchain.confirm_depth as f64;
        let mut payout_time: BTreeMap<u64, f64> = BTreeMap::new();
        let mut events = Vec::new();
        let mut main_latency = Acc::default();
        let mut main_blocks = Vec::new();
        let mut included_syncs = 0;
        let mut mass = 0;
        let mut reverted = 0;
        for b in self.chain.blocks() {
            main_blocks.push(MainBlockTrace {
                height: b.height,
                time_s: b.time_s,
                tx_count: b.txs.len() as u64,
                gas: b.gas(),
                bytes: b.bytes().as_f64(),
            });
            for inc in &b.txs {
                main_latency.add(b.time_s - inc.tx.submitted_at);
                match (&inc.tx.body, &inc.result) {
                    (MainBody::Deposit(_), Ok(MainOutput::Deposited(rs))) => {
                        events.extend(rs.iter().map(|r| BankEvent::Deposit(*r)));
                    }
                    (MainBody::SyncFinal { payload, .. }, Ok(MainOutput::Synced { first, last, .. })) => {
                        for e in *first..=*last {
                            payout_time.insert(e, b.time_s);
                        }
                        included_syncs += 1;
                        mass += u64::from(last > first);
                        events.push(BankEvent::Sync { first: *first, last: *last, next_vk: payload.next_committee_vk });
                    }
                    (MainBody::SyncFinal { .. }, Err(_)) => reverted += 1,
                    _ => {}
                }
            }
        }
        let mut payout = Acc::default();
        let mut payout_n = 0u64;
        let mut payout_sum = 0.0;
        for tr in &mut self.epochs {
            let e = tr.epoch;
            tr.payout_time_s = payout_time.get(&e).copied();
            tr.confirmed_time_s = tr.payout_time_s.map(|t| t + k * interval);
            let lat = self.epoch_latency.get(&e).copied().unwrap_or_default();
            match payout_time.get(&e) {
                Some(&p) => {
                    payout_n += lat.n;
                    payout_sum += lat.n as f64 * p - lat.arrival_sum;
                    if lat.n > 0 && p < lat.last_block {
                        self.breaches.push(format!("epoch {e} paid out before its last meta-block"));
                    }
                }
                None if lat.n > 0 => self.breaches.push(format!("epoch {e} never paid out")),
                None => {}
            }
        }
        payout.n = payout_n;
        payout.sum = payout_sum;
        let growth = self.chain.growth_report();
        let deposits = growth.get(Category::Deposit);
        let syncs = growth.get(Category::Sync);
        self.stats.included = included_syncs;
        self.stats.mass_syncs = mass;
        self.stats.reverted = reverted;
        let committed = self.sc_latency.n;
        let report = MetricsReport {
            epochs: self.cfg.epochs,
            rounds_per_epoch: self.cfg.rounds_per_epoch,
            duration_s: self.cfg.duration_s(),
            generated_txs: self.generated,
            committed_txs: committed,
            rejected_txs: self.rejections.values().sum(),
            queued_txs: self.queue.len() as u64,
            rejections: self.rejections,
            throughput_tps: committed as f64 / self.cfg.duration_s(),
            avg_sidechain_latency_s: self.sc_latency.mean(),
            max_sidechain_latency_s: self.sc_latency.max,
            avg_mainchain_latency_s: main_latency.mean(),
            avg_payout_latency_s: payout.mean(),
            censored_max_latency_s: (self.censored.n > 0).then_some(self.censored.max),
            view_changes: self.view_changes,
            gas: GasTotals {
                system: deposits.gas + syncs.gas + self.genesis_gas,
                deposits: deposits.gas + self.genesis_gas,
                syncs: syncs.gas,
                baseline: self.baseline_gas,
            },
            growth: Growth {
                main_bytes: (deposits.bytes + syncs.bytes + self.genesis_bytes).as_f64(),
                baseline_main_bytes: self.baseline_bytes.as_f64(),
                side_bytes: self.side.retained_bytes().as_f64(),
                summary_bytes: self.side.summary_bytes().as_f64(),
                pruned_bytes: self.side.pruned_bytes.as_f64(),
            },
            syncs: self.stats,
            genesis_deposits: self.genesis_deposits,
            invariant_breaches: self.breaches,
        };
        RunOutput {
            report,
            rounds: self.rounds,
            epochs: self.epochs,
            prunes: self.prunes,
            main_blocks,
            genesis: self.genesis,
            bank: self.chain.state().bank.clone(),
            bank_events: events,
            executed: self.executed,
            side: self.side,
        }
    }
}

//! A minimal mainchain: fixed-cadence blocks, FIFO gas packing,
//! confirmation depth, byte-growth tracking and scripted rollbacks.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{Encoder, Hash32};
use crate::num::ByteSize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MainchainConfig {
    pub block_interval_s: f64,
    pub confirm_depth: u64,
    pub block_gas_limit: u64,
}

impl Default for MainchainConfig {
    fn default() -> Self {
        MainchainConfig { block_interval_s: 12.0, confirm_depth: 2, block_gas_limit: 30_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MainchainError {
    #[error("transaction needs {gas} gas, block limit is {limit}")]
    OversizedTx { gas: u64, limit: u64 },
    #[error("cannot roll back {depth} blocks, at most {max}")]
    TooDeep { depth: u64, max: u64 },
}

/// Growth accounting category.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Sync,
    Deposit,
    Baseline,
    Other,
}

/// State advanced by mainchain transactions.
pub trait ChainState: Clone {
    type Tx: Clone;
    type Output: Clone;
    /// Applies `tx`; an error reverts the transaction but it still occupies
    /// the block.
    fn apply(&mut self, tx: &Self::Tx, height: u64, time_s: f64) -> Result<Self::Output, String>;
}

#[derive(Clone, Debug)]
pub struct MainTx<T> {
    pub id: u64,
    pub gas: u64,
    pub size: ByteSize,
    pub category: Category,
    pub submitted_at: f64,
    pub body: T,
}

#[derive(Clone, Debug)]
pub struct Included<T, O> {
    pub tx: MainTx<T>,
    pub result: Result<O, String>,
}

#[derive(Clone, Debug)]
pub struct MainBlock<T, O> {
    pub height: u64,
    pub time_s: f64,
    pub parent: Hash32,
    pub txs: Vec<Included<T, O>>,
}

impl<T, O> MainBlock<T, O> {
    pub fn gas(&self) -> u64 {
        self.txs.iter().map(|t| t.tx.gas).sum()
    }

    pub fn bytes(&self) -> ByteSize {
        self.txs.iter().map(|t| t.tx.size).sum()
    }

    pub fn hash(&self) -> Hash32 {
        let mut e = Encoder::new();
        e.tag("main").u64(self.height).u64(self.time_s.to_bits()).fixed(&self.parent.0).u32(self.txs.len() as u32);
        for t in &self.txs {
            e.u64(t.tx.id).u64(t.tx.gas);
        }
        e.digest()
    }
}

/// Expected inclusion of a newly submitted transaction, assuming no rollback.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub height: u64,
    pub include_time: f64,
    pub confirm_time: f64,
}

/// Notification emitted when a block is produced.
#[derive(Clone, Debug)]
pub struct Receipt<T, O> {
    pub height: u64,
    pub time_s: f64,
    pub included: Included<T, O>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTotals {
    pub txs: u64,
    pub gas: u64,
    pub bytes: ByteSize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub by_category: BTreeMap<Category, CategoryTotals>,
}

impl GrowthReport {
    pub fn total_bytes(&self) -> ByteSize {
        self.by_category.values().map(|c| c.bytes).sum()
    }

    pub fn total_gas(&self) -> u64 {
        self.by_category.values().map(|c| c.gas).sum()
    }

    pub fn get(&self, c: Category) -> CategoryTotals {
        self.by_category.get(&c).copied().unwrap_or_default()
    }
}

pub struct Mainchain<S: ChainState> {
    pub config: MainchainConfig,
    blocks: Vec<MainBlock<S::Tx, S::Output>>,
    /// `states[h]` is the state after block `h`; `states[0]` is genesis.
    states: Vec<S>,
    mempool: VecDeque<MainTx<S::Tx>>,
    next_block_time: f64,
    next_id: u64,
}

impl<S: ChainState> Mainchain<S> {
    pub fn new(config: MainchainConfig, genesis: S) -> Self {
        let g = MainBlock { height: 0, time_s: 0.0, parent: Hash32::default(), txs: Vec::new() };
        Mainchain {
            config,
            blocks: vec![g],
            states: vec![genesis],
            mempool: VecDeque::new(),
            next_block_time: config.block_interval_s,
            next_id: 0,
        }
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn state(&self) -> &S {
        self.states.last().expect("genesis state")
    }

    /// State after the highest confirmed block, or genesis.
    pub fn confirmed_state(&self) -> &S {
        &self.states[self.confirmed_height().unwrap_or(0) as usize]
    }

    /// State after the last block produced strictly before `time_s`.
    pub fn state_before(&self, time_s: f64) -> &S {
        let h = self.blocks.iter().rposition(|b| b.time_s < time_s).unwrap_or(0);
        &self.states[h]
    }

    pub fn blocks(&self) -> &[MainBlock<S::Tx, S::Output>] {
        &self.blocks
    }

    pub fn next_block_time(&self) -> f64 {
        self.next_block_time
    }

    pub fn pending(&self) -> impl Iterator<Item = &MainTx<S::Tx>> {
        self.mempool.iter()
    }

    /// Highest block buried under at least `confirm_depth` blocks.
    pub fn confirmed_height(&self) -> Option<u64> {
        self.height().checked_sub(self.config.confirm_depth)
    }

    pub fn is_confirmed(&self, height: u64) -> bool {
        self.confirmed_height().is_some_and(|c| height <= c && height > 0)
    }

    /// Queues a transaction submitted at `at_time`; it is eligible for the
    /// first block produced strictly after that time.
    pub fn submit(
        &mut self,
        body: S::Tx,
        gas: u64,
        size: ByteSize,
        category: Category,
        at_time: f64,
    ) -> Result<(u64, Projection), MainchainError> {
        if gas > self.config.block_gas_limit {
            return Err(MainchainError::OversizedTx { gas, limit: self.config.block_gas_limit });
        }
        let id = self.next_id;
        self.next_id += 1;
        self.mempool.push_back(MainTx { id, gas, size, category, submitted_at: at_time, body });
        Ok((id, self.project(id)))
    }

    /// Replays FIFO packing over the mempool to predict when `id` lands.
    fn project(&self, id: u64) -> Projection {
        let mut height = self.height() + 1;
        let mut time = self.next_block_time;
        let mut used = 0u64;
        let mut queue: VecDeque<&MainTx<S::Tx>> = self.mempool.iter().collect();
        loop {
            let front = queue.front().expect("target is queued");
            if front.submitted_at < time && used + front.gas <= self.config.block_gas_limit {
                used += front.gas;
                if front.id == id {
                    let confirm = time + self.config.confirm_depth as f64 * self.config.block_interval_s;
                    return Projection { height, include_time: time, confirm_time: confirm };
                }
                queue.pop_front();
            } else {
                height += 1;
                time += self.config.block_interval_s;
                used = 0;
            }
        }
    }

    /// Produces every block due at or before `time_s`, returning receipts in
    /// inclusion order.
    pub fn advance_to(&mut self, time_s: f64) -> Vec<Receipt<S::Tx, S::Output>> {
        let mut receipts = Vec::new();
        while self.next_block_time <= time_s + 1e-9 {
            let t = self.next_block_time;
            self.produce_block(t, &mut receipts);
            self.next_block_time += self.config.block_interval_s;
        }
        receipts
    }

    fn produce_block(&mut self, time_s: f64, receipts: &mut Vec<Receipt<S::Tx, S::Output>>) {
        let height = self.height() + 1;
        let mut state = self.state().clone();
        let mut used = 0u64;
        let mut txs = Vec::new();
        while let Some(front) = self.mempool.front() {
            if front.submitted_at >= time_s || used + front.gas > self.config.block_gas_limit {
                break;
            }
            let tx = self.mempool.pop_front().expect("front exists");
            used += tx.gas;
            let mut trial = state.clone();
            let result = trial.apply(&tx.body, height, time_s);
            if result.is_ok() {
                state = trial;
            }
            let inc = Included { tx, result };
            receipts.push(Receipt { height, time_s, included: inc.clone() });
            txs.push(inc);
        }
        let parent = self.blocks.last().expect("genesis").hash();
        self.blocks.push(MainBlock { height, time_s, parent, txs });
        self.states.push(state);
    }

    /// Abandons the top `depth` unconfirmed blocks and returns their
    /// transactions, oldest first. They are not re-queued.
    pub fn rollback(&mut self, depth: u64) -> Result<Vec<MainTx<S::Tx>>, MainchainError> {
        let max = self.config.confirm_depth.min(self.height());
        if depth > max {
            return Err(MainchainError::TooDeep { depth, max });
        }
        Ok(self.pop_blocks(depth))
    }

    /// Rollback that may evict confirmed blocks, for assumption-violation
    /// scenarios.
    pub fn force_rollback(&mut self, depth: u64) -> Result<Vec<MainTx<S::Tx>>, MainchainError> {
        if depth > self.height() {
            return Err(MainchainError::TooDeep { depth, max: self.height() });
        }
        Ok(self.pop_blocks(depth))
    }

    fn pop_blocks(&mut self, depth: u64) -> Vec<MainTx<S::Tx>> {
        let keep = self.blocks.len() - depth as usize;
        let evicted: Vec<MainTx<S::Tx>> = self.blocks.drain(keep..).flat_map(|b| b.txs.into_iter().map(|i| i.tx)).collect();
        self.states.truncate(keep);
        evicted
    }

    pub fn growth_report(&self) -> GrowthReport {
        let mut r = GrowthReport::default();
        for inc in self.blocks.iter().flat_map(|b| &b.txs) {
            let c = r.by_category.entry(inc.tx.category).or_default();
            c.txs += 1;
            c.gas += inc.tx.gas;
            c.bytes += inc.tx.size;
        }
        r
    }

    /// Per-block trace: height, timestamp, tx count, gas, bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "height,timestamp_s,tx_count,gas,bytes")?;
        for b in &self.blocks {
            writeln!(w, "{},{:.3},{},{},{:.2}", b.height, b.time_s, b.txs.len(), b.gas(), b.bytes().as_f64())?;
        }
        Ok(())
    }
}

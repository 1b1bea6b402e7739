use serde::{Deserialize, Serialize};

use l2amm_core::consensus::{consensus_delay_s, fault_parameter, ByzantineScenario};
use l2amm_core::ledger::MintDepositRule;
use l2amm_core::mainchain::MainchainConfig;
use l2amm_core::workload::{MarketSpec, TrafficProfile};
use l2amm_core::ByteSize;

use crate::SimError;

/// Rolls back `depth` mainchain blocks right after the block that includes
/// the sync covering `after_sync_of_epoch`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollbackSpec {
    pub after_sync_of_epoch: u64,
    pub depth: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub epochs: u64,
    /// ω: rounds per epoch, including the snapshot round.
    pub rounds_per_epoch: u64,
    /// b_t: seconds per sidechain round.
    pub round_duration_s: f64,
    /// Meta-block capacity in bytes.
    pub block_size_limit: u64,
    pub committee_size: usize,
    /// Registered miners the committees are drawn from.
    pub miners: u32,
    /// Δ: bound on message delay; a failed view costs 2Δ.
    pub network_delta_s: f64,
    /// Agreement time charged before a sync is submitted. Derived from the
    /// committee size when unset.
    pub consensus_delay_s: Option<f64>,
    pub mainchain: MainchainConfig,
    pub traffic: TrafficProfile,
    pub market: MarketSpec,
    pub scenario: ByzantineScenario,
    pub rollbacks: Vec<RollbackSpec>,
    /// Unspent balances roll into the next epoch instead of being paid out.
    pub carry_over: bool,
    pub mint_rule: MintDepositRule,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            epochs: 11,
            rounds_per_epoch: 30,
            round_duration_s: 7.0,
            block_size_limit: 1 << 20,
            committee_size: 500,
            miners: 1000,
            network_delta_s: 1.0,
            consensus_delay_s: None,
            mainchain: MainchainConfig::default(),
            traffic: TrafficProfile::default(),
            market: MarketSpec::default(),
            scenario: ByzantineScenario::default(),
            rollbacks: Vec::new(),
            carry_over: false,
            mint_rule: MintDepositRule::Deduct,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Small committee for tests; agreement delay stays at the 500-member value.
    pub fn reduced(committee_size: usize) -> Self {
        ExperimentConfig {
            committee_size,
            miners: (committee_size as u32 * 4).max(40),
            consensus_delay_s: Some(consensus_delay_s(500)),
            ..Default::default()
        }
    }

    pub fn from_toml(s: &str) -> Result<Self, SimError> {
        toml::from_str(s).map_err(|e| SimError::ConfigInvalid(e.to_string()))
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::ConfigInvalid(m.into()));
        if self.epochs == 0 || self.rounds_per_epoch < 2 {
            return bad("need at least one epoch of two rounds");
        }
        if !(self.round_duration_s > 0.0) || !(self.network_delta_s >= 0.0) {
            return bad("durations must be positive");
        }
        if self.block_size_limit == 0 || self.mainchain.block_gas_limit == 0 || !(self.mainchain.block_interval_s > 0.0) {
            return bad("capacities must be positive");
        }
        if fault_parameter(self.committee_size).is_err() {
            return bad("committee size must be 3f + 2");
        }
        if (self.miners as usize) < self.committee_size {
            return bad("fewer miners than committee seats");
        }
        if self.consensus_delay_s.is_some_and(|d| !(d >= 0.0)) {
            return bad("consensus delay must be non-negative");
        }
        self.traffic.validate().map_err(|e| SimError::ConfigInvalid(e.to_string()))
    }

    pub fn consensus_delay(&self) -> f64 {
        self.consensus_delay_s.unwrap_or_else(|| consensus_delay_s(self.committee_size))
    }

    pub fn block_capacity(&self) -> ByteSize {
        ByteSize::from_bytes(self.block_size_limit)
    }

    pub fn epoch_duration_s(&self) -> f64 {
        self.rounds_per_epoch as f64 * self.round_duration_s
    }

    pub fn duration_s(&self) -> f64 {
        self.epochs as f64 * self.epoch_duration_s()
    }

    /// Mainchain time a deposit needs from submission until it is buried
    /// deep enough to survive one rollback: two blocks of queueing plus
    /// confirmation depth and one spare block.
    pub fn deposit_settle_s(&self) -> f64 {
        let m = &self.mainchain;
        (m.confirm_depth + 3) as f64 * m.block_interval_s
    }

    /// Epochs between a once-per-epoch deposit submitted at an epoch
    /// boundary and the epoch it funds.
    pub fn deposit_lag(&self) -> u64 {
        ((self.consensus_delay() + self.deposit_settle_s()) / self.epoch_duration_s()).floor() as u64 + 1
    }
}

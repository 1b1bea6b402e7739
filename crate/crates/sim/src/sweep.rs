//! Parameter sweeps, one run per value, run in parallel.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::metrics::MetricsReport;
use crate::sim::run;
use crate::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Meta-block capacity in MiB.
    BlockSizeMib,
    /// ω, with the epoch count scaled to keep the simulated duration.
    RoundsPerEpoch,
    DailyVolume,
}

impl std::str::FromStr for SweepParam {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "block_size" | "block_size_mib" => Ok(SweepParam::BlockSizeMib),
            "rounds_per_epoch" | "omega" => Ok(SweepParam::RoundsPerEpoch),
            "daily_volume" => Ok(SweepParam::DailyVolume),
            _ => Err(SimError::ConfigInvalid(format!("unknown sweep parameter {s}"))),
        }
    }
}

/// One sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub epochs: u64,
    pub committed_txs: u64,
    pub throughput_tps: f64,
    pub avg_sidechain_latency_s: f64,
    pub avg_payout_latency_s: f64,
    pub avg_mainchain_latency_s: f64,
    pub system_gas: u64,
    pub baseline_gas: u64,
    pub main_bytes: f64,
    pub side_bytes: f64,
    pub view_changes: u64,
    pub breaches: u64,
}

impl SweepRow {
    fn new(value: f64, r: &MetricsReport) -> Self {
        SweepRow {
            value,
            epochs: r.epochs,
            committed_txs: r.committed_txs,
            throughput_tps: r.throughput_tps,
            avg_sidechain_latency_s: r.avg_sidechain_latency_s,
            avg_payout_latency_s: r.avg_payout_latency_s,
            avg_mainchain_latency_s: r.avg_mainchain_latency_s,
            system_gas: r.gas.system,
            baseline_gas: r.gas.baseline,
            main_bytes: r.growth.main_bytes,
            side_bytes: r.growth.side_bytes,
            view_changes: r.view_changes,
            breaches: r.invariant_breaches.len() as u64,
        }
    }
}

/// `base` with `param` set to `value`. Sweeping ω keeps the simulated
/// duration of `base` by adjusting the epoch count.
pub fn apply(base: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig, SimError> {
    let mut c = base.clone();
    match param {
        SweepParam::BlockSizeMib => c.block_size_limit = (value * (1 << 20) as f64).round() as u64,
        SweepParam::RoundsPerEpoch => {
            c.rounds_per_epoch = value as u64;
            if c.rounds_per_epoch < 2 {
                return Err(SimError::ConfigInvalid("rounds per epoch must be at least 2".into()));
            }
            c.epochs = (base.duration_s() / c.epoch_duration_s()).round().max(1.0) as u64;
        }
        SweepParam::DailyVolume => c.traffic.daily_volume = value as u64,
    }
    c.validate()?;
    Ok(c)
}

/// Runs every point of the sweep; rows come back in `values` order.
pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, SimError> {
    let configs = values.iter().map(|&v| apply(base, param, v)).collect::<Result<Vec<_>, _>>()?;
    std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .zip(values)
            .map(|(h, &v)| {
                let out = h.join().expect("sweep worker panicked")?;
                Ok(SweepRow::new(v, &out.report))
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_sweep_keeps_duration() {
        let base = ExperimentConfig { epochs: 10, rounds_per_epoch: 30, ..Default::default() };
        let c = apply(&base, SweepParam::RoundsPerEpoch, 10.0).unwrap();
        assert_eq!(c.epochs, 30);
        assert_eq!(c.duration_s(), base.duration_s());
        assert!(apply(&base, SweepParam::RoundsPerEpoch, 1.0).is_err());
    }

    #[test]
    fn block_size_in_mib() {
        let c = apply(&ExperimentConfig::default(), SweepParam::BlockSizeMib, 0.5).unwrap();
        assert_eq!(c.block_size_limit, 1 << 19);
    }

    #[test]
    fn parses_names() {
        assert_eq!("omega".parse::<SweepParam>().unwrap(), SweepParam::RoundsPerEpoch);
        assert!("nope".parse::<SweepParam>().is_err());
    }
}

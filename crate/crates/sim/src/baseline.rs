//! Comparison against running the same traffic directly on the mainchain.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::metrics::MetricsReport;
use crate::sim::run;
use crate::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub system_gas: u64,
    pub baseline_gas: u64,
    pub gas_reduction_pct: f64,
    pub system_bytes: f64,
    pub baseline_bytes: f64,
    pub growth_reduction_pct: f64,
}

/// Percent saved by `system` relative to `baseline`.
pub fn reduction_pct(system: f64, baseline: f64) -> f64 {
    if baseline <= 0.0 {
        0.0
    } else {
        100.0 * (1.0 - system / baseline)
    }
}

impl Comparison {
    pub fn from_report(r: &MetricsReport) -> Self {
        Comparison {
            system_gas: r.gas.system,
            baseline_gas: r.gas.baseline,
            gas_reduction_pct: reduction_pct(r.gas.system as f64, r.gas.baseline as f64),
            system_bytes: r.growth.main_bytes,
            baseline_bytes: r.growth.baseline_main_bytes,
            growth_reduction_pct: reduction_pct(r.growth.main_bytes, r.growth.baseline_main_bytes),
        }
    }
}

/// Runs `cfg` and prices its committed transactions as direct mainchain calls.
pub fn compare_baseline(cfg: &ExperimentConfig) -> Result<Comparison, SimError> {
    Ok(Comparison::from_report(&run(cfg)?.report))
}

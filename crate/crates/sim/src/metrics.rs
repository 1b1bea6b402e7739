use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GasTotals {
    /// Everything the system puts on the mainchain: deposits and syncs.
    pub system: u64,
    pub deposits: u64,
    pub syncs: u64,
    /// The same executed traffic issued directly on the mainchain.
    pub baseline: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub main_bytes: f64,
    pub baseline_main_bytes: f64,
    /// Sidechain bytes still stored at the end.
    pub side_bytes: f64,
    pub summary_bytes: f64,
    pub pruned_bytes: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncStats {
    pub submitted: u64,
    pub included: u64,
    /// Syncs covering more than one epoch.
    pub mass_syncs: u64,
    /// Epoch ends whose sync agreement failed.
    pub skipped: u64,
    pub evicted: u64,
    pub reverted: u64,
    /// Mainchain transactions used by multi-block syncs.
    pub staged_parts: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epochs: u64,
    pub rounds_per_epoch: u64,
    pub duration_s: f64,
    pub generated_txs: u64,
    pub committed_txs: u64,
    pub rejected_txs: u64,
    /// Transactions still queued when the last epoch ended.
    pub queued_txs: u64,
    pub rejections: BTreeMap<String, u64>,
    pub throughput_tps: f64,
    pub avg_sidechain_latency_s: f64,
    pub max_sidechain_latency_s: f64,
    pub avg_mainchain_latency_s: f64,
    pub avg_payout_latency_s: f64,
    /// Largest sidechain latency among transactions of censored users.
    pub censored_max_latency_s: Option<f64>,
    pub view_changes: u64,
    pub gas: GasTotals,
    pub growth: Growth,
    pub syncs: SyncStats,
    pub genesis_deposits: u64,
    pub invariant_breaches: Vec<String>,
}

impl MetricsReport {
    pub fn is_clean(&self) -> bool {
        self.invariant_breaches.is_empty()
    }
}

/// One sidechain round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub epoch: u64,
    pub round: u64,
    pub start_s: f64,
    pub arrived: u64,
    pub committed: u64,
    pub rejected: u64,
    pub block_bytes: f64,
    /// Commit time of the round's meta-block; none in the snapshot round.
    pub block_time_s: Option<f64>,
    pub view_changes: u64,
    pub queue_len: u64,
}

/// One epoch and the sync that paid it out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: u64,
    pub committed: u64,
    pub meta_bytes: f64,
    pub summary_bytes: f64,
    pub payouts: u64,
    pub positions: u64,
    /// First epoch of the sync issued at this epoch's end, if any.
    pub sync_first: Option<u64>,
    pub sync_gas: u64,
    pub sync_parts: u64,
    pub sync_submitted_s: Option<f64>,
    /// Inclusion time of the sync that finally covered this epoch.
    pub payout_time_s: Option<f64>,
    pub confirmed_time_s: Option<f64>,
}

/// Sidechain storage right after a confirmed sync was pruned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub through_epoch: u64,
    pub time_s: f64,
    pub pruned_bytes: f64,
    pub expected_pruned_bytes: f64,
    pub retained_bytes: f64,
    pub expected_retained_bytes: f64,
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<(), SimError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(rows: &[T], path: &Path) -> Result<(), SimError> {
    write_csv(rows, std::fs::File::create(path)?)
}

/// Running sum and maximum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Acc {
    pub n: u64,
    pub sum: f64,
    pub max: f64,
}

impl Acc {
    pub fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.max = self.max.max(x);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let rows = vec![PruneTrace {
            through_epoch: 1,
            time_s: 2.0,
            pruned_bytes: 3.0,
            expected_pruned_bytes: 3.0,
            retained_bytes: 4.0,
            expected_retained_bytes: 4.0,
        }];
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("through_epoch,time_s,"));
        assert_eq!(s.lines().count(), 2);
    }

    #[test]
    fn acc_mean() {
        let mut a = Acc::default();
        assert_eq!(a.mean(), 0.0);
        a.add(1.0);
        a.add(3.0);
        assert_eq!((a.mean(), a.max), (2.0, 3.0));
    }
}

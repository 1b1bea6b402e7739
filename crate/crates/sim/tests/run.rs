use std::process::Command;

use l2amm_core::consensus::{ByzantineProfile, ByzantineScenario, Injection};
use l2amm_sim::sweep::{sweep, SweepParam};
use l2amm_sim::{compare_baseline, leader_miner, run, ExperimentConfig, SimError};

fn small(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::reduced(5);
    c.epochs = 4;
    c.rounds_per_epoch = 10;
    c.traffic.user_count = 20;
    c.seed = seed;
    c
}

#[test]
fn same_seed_same_run() {
    let a = run(&small(3)).unwrap();
    let b = run(&small(3)).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.rounds, b.rounds);
    assert_eq!(a.bank, b.bank);
    let c = run(&small(4)).unwrap();
    assert_ne!(a.bank, c.bank);
}

#[test]
fn zero_traffic_refunds_every_deposit() {
    let mut c = small(1);
    c.traffic.daily_volume = 0;
    let out = run(&c).unwrap();
    assert_eq!(out.report.committed_txs, 0);
    assert!(out.report.is_clean(), "{:?}", out.report.invariant_breaches);
    assert_eq!(out.bank.last_synced_epoch, Some(c.epochs - 1));
    assert_eq!(out.bank.pools, out.genesis.pools);
    // Nothing stays deposited for epochs that already ran.
    assert!(out.bank.deposits.epochs().all(|(e, b)| e >= c.epochs || b.is_empty()));
}

#[test]
fn payout_never_precedes_commit() {
    let out = run(&small(2)).unwrap();
    let r = &out.report;
    assert!(r.avg_payout_latency_s > r.avg_sidechain_latency_s);
    for e in &out.epochs {
        let last_block = out.rounds.iter().filter(|t| t.epoch == e.epoch).filter_map(|t| t.block_time_s).fold(0.0, f64::max);
        assert!(e.payout_time_s.unwrap() >= last_block);
        assert!(e.confirmed_time_s.unwrap() > e.payout_time_s.unwrap());
    }
}

#[test]
fn invalid_configs_are_refused() {
    let mut c = small(0);
    c.committee_size = 6;
    assert!(matches!(run(&c), Err(SimError::ConfigInvalid(_))));
    let mut c = small(0);
    c.epochs = 0;
    assert!(matches!(run(&c), Err(SimError::ConfigInvalid(_))));
    assert!(ExperimentConfig::from_toml("epochs = \"many\"").is_err());
}

#[test]
fn too_many_faulty_members_is_an_assumption_violation() {
    let mut c = small(0);
    let inj = |v| Injection { epoch: 1, miner: leader_miner(&c, 1, v).unwrap(), profile: ByzantineProfile::SilentLeader };
    let scenario = ByzantineScenario(vec![inj(0), inj(1)]);
    c.scenario = scenario;
    assert!(matches!(run(&c), Err(SimError::AssumptionViolated { epoch: 1, faulty: 2, f: 1 })));
}

#[test]
fn baseline_costs_more_than_the_system() {
    let cmp = compare_baseline(&small(5)).unwrap();
    assert!(cmp.baseline_gas > cmp.system_gas);
    assert!(cmp.gas_reduction_pct > 0.0 && cmp.gas_reduction_pct < 100.0);
}

#[test]
fn sweep_rows_follow_values() {
    let rows = sweep(&small(6), SweepParam::DailyVolume, &[10_000.0, 100_000.0]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].committed_txs < rows[1].committed_txs);
}

#[test]
fn cli_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, toml::to_string(&small(8)).unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_l2amm"))
        .args(["run", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["report.json", "rounds.csv", "epochs.csv", "prunes.csv", "mainchain.csv", "sidechain.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["committed_txs"].as_u64().unwrap() > 0);

    let bad = Command::new(env!("CARGO_BIN_EXE_l2amm")).args(["sweep", "--param", "nope=1"]).output().unwrap();
    assert!(!bad.status.success());
}

use std::collections::BTreeMap;

use l2amm_core::consensus::{elect, epoch_seed, registry, verify_committee, Miner};

#[test]
fn uniform_stake_selection_frequency() {
    let miners: Vec<Miner> = (0..100).map(|i| Miner::simulated(i, 1)).collect();
    let runs = 10_000u64;
    let mut wins: BTreeMap<_, u64> = BTreeMap::new();
    for s in 0..runs {
        for id in elect(&miners, epoch_seed(s, 0), 5, 0).unwrap().ids() {
            *wins.entry(id).or_default() += 1;
        }
    }
    let p = 0.05;
    let sigma = (runs as f64 * p * (1.0 - p)).sqrt();
    let mean = runs as f64 * p;
    let worst = miners.iter().map(|m| (wins.get(&m.id).copied().unwrap_or(0) as f64 - mean).abs()).fold(0.0, f64::max);
    assert!(worst <= 3.0 * sigma, "max deviation {worst:.1} exceeds 3σ = {:.1}", 3.0 * sigma);
}

#[test]
fn elected_committees_verify() {
    let miners: Vec<Miner> = (0..50).map(|i| Miner::simulated(i, 1 + i as u64 % 3)).collect();
    let reg = registry(&miners);
    for e in 0..20 {
        let c = elect(&miners, epoch_seed(7, e), 17, e).unwrap();
        assert_eq!(c.f, 5);
        verify_committee(&reg, &c).unwrap();
    }
}

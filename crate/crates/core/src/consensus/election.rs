use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ByzantineProfile, ConsensusError};
use crate::ids::{hash_parts, PublicKey};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Miner {
    pub id: PublicKey,
    pub stake: u64,
    /// Registered key of the keyed election hash.
    pub election_key: [u8; 32],
    pub profile: ByzantineProfile,
}

impl Miner {
    /// Deterministic honest miner number `i`.
    pub fn simulated(i: u32, stake: u64) -> Miner {
        Miner {
            id: PublicKey(hash_parts("miner", &[&i.to_be_bytes()])),
            stake,
            election_key: hash_parts("election-key", &[&i.to_be_bytes()]),
            profile: ByzantineProfile::Honest,
        }
    }

    pub fn prove(&self, seed: &[u8; 32]) -> ElectionProof {
        ElectionProof { miner: self.id, seed: *seed, output: vrf_eval(&self.election_key, seed) }
    }
}

/// Keyed hash of the seed under a miner's election key.
pub fn vrf_eval(key: &[u8; 32], seed: &[u8; 32]) -> [u8; 32] {
    hash_parts("vrf", &[key, seed])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionProof {
    pub miner: PublicKey,
    pub seed: [u8; 32],
    pub output: [u8; 32],
}

impl ElectionProof {
    /// Re-evaluates under the registered key.
    pub fn verify(&self, registry: &MinerRegistry, seed: &[u8; 32]) -> bool {
        self.seed == *seed && registry.get(&self.miner).is_some_and(|m| vrf_eval(&m.election_key, seed) == self.output)
    }
}

/// Stake-weighted score: an exponential draw with rate `stake`. Taking the
/// lowest scores samples without replacement proportionally to stake.
pub fn score(output: &[u8; 32], stake: u64) -> f64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&output[..8]);
    let u = (u64::from_be_bytes(b) as f64 + 0.5) / 18_446_744_073_709_551_616.0;
    -u.ln() / stake as f64
}

pub type MinerRegistry = BTreeMap<PublicKey, Miner>;

pub fn registry(miners: &[Miner]) -> MinerRegistry {
    miners.iter().map(|m| (m.id, m.clone())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Committee {
    pub epoch: u64,
    pub seed: [u8; 32],
    /// Members in ascending score order; the first is the leader of view 0.
    pub members: Vec<ElectionProof>,
    pub f: usize,
}

impl Committee {
    pub fn quorum(&self) -> usize {
        2 * self.f + 2
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Leader of `view`: the next-lowest score after each view change.
    pub fn leader(&self, view: usize) -> PublicKey {
        self.members[view % self.members.len()].miner
    }

    pub fn ids(&self) -> Vec<PublicKey> {
        self.members.iter().map(|p| p.miner).collect()
    }

    pub fn contains(&self, id: &PublicKey) -> bool {
        self.members.iter().any(|p| &p.miner == id)
    }
}

/// Fault parameter for a committee of `size = 3f + 2`.
pub fn fault_parameter(size: usize) -> Result<usize, ConsensusError> {
    if size < 2 || size % 3 != 2 {
        return Err(ConsensusError::BadSize(size));
    }
    Ok((size - 2) / 3)
}

fn ranked(miners: &[Miner], seed: &[u8; 32]) -> Vec<(f64, ElectionProof)> {
    let mut scored: Vec<(f64, ElectionProof)> = miners
        .iter()
        .filter(|m| m.stake > 0)
        .map(|m| {
            let p = m.prove(seed);
            (score(&p.output, m.stake), p)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.miner.cmp(&b.1.miner)));
    scored
}

pub fn elect(miners: &[Miner], seed: [u8; 32], committee_size: usize, epoch: u64) -> Result<Committee, ConsensusError> {
    let f = fault_parameter(committee_size)?;
    if miners.iter().filter(|m| m.stake > 0).count() < committee_size {
        return Err(ConsensusError::TooFewMiners { have: miners.len(), need: committee_size });
    }
    let members = ranked(miners, &seed).into_iter().take(committee_size).map(|(_, p)| p).collect();
    Ok(Committee { epoch, seed, members, f })
}

/// Checks every proof and that membership and order are exactly what the
/// registry and seed imply.
pub fn verify_committee(registry: &MinerRegistry, committee: &Committee) -> Result<(), ConsensusError> {
    for p in &committee.members {
        if !p.verify(registry, &committee.seed) {
            return Err(ConsensusError::BadElectionProof(p.miner));
        }
    }
    let miners: Vec<Miner> = registry.values().cloned().collect();
    let expected = elect(&miners, committee.seed, committee.size(), committee.epoch)?;
    if expected.members != committee.members {
        return Err(ConsensusError::WrongMembership);
    }
    Ok(())
}

/// Per-epoch election seed.
pub fn epoch_seed(run_seed: u64, epoch: u64) -> [u8; 32] {
    hash_parts("epoch-seed", &[&run_seed.to_be_bytes(), &epoch.to_be_bytes()])
}

//! Committee election, leader-based agreement and epoch handoff.

mod agreement;
mod election;
mod handoff;

pub use agreement::{
    consensus_delay_s, run_agreement, Agreement, LeaderConduct, Network, Outcome, ProposalKind, ViewRecord, ViewResult,
};
pub use election::{
    elect, epoch_seed, fault_parameter, registry, score, verify_committee, vrf_eval, Committee, ElectionProof, Miner,
    MinerRegistry,
};
pub use handoff::{epoch_handoff, HandoffRecord};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::AuthError;
use crate::ids::PublicKey;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "profile", content = "victims", rename_all = "snake_case")]
pub enum ByzantineProfile {
    #[default]
    Honest,
    SilentLeader,
    InvalidProposer,
    InvalidSyncProposer,
    TargetedCensor(BTreeSet<PublicKey>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("{have} miners cannot fill a committee of {need}")]
    TooFewMiners { have: usize, need: usize },
    #[error("committee size {0} is not 3f+2")]
    BadSize(usize),
    #[error("election proof of {0} does not verify")]
    BadElectionProof(PublicKey),
    #[error("committee membership does not follow from the seed")]
    WrongMembership,
    #[error("{got} endorsements of the new key, need {need}")]
    NoVkAgreement { got: usize, need: usize },
    #[error(transparent)]
    Auth(#[from] AuthError),
}

/// One fault injection: from `epoch` on, miner number `miner` follows `profile`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub epoch: u64,
    pub miner: u32,
    #[serde(flatten)]
    pub profile: ByzantineProfile,
}

/// Fault injections, applied at the start of their epoch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ByzantineScenario(pub Vec<Injection>);

impl ByzantineScenario {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Profiles in force during `epoch`, keyed by miner number. Later
    /// injections for the same miner override earlier ones.
    pub fn profiles_at(&self, epoch: u64) -> BTreeMap<u32, ByzantineProfile> {
        let mut out = BTreeMap::new();
        let mut inj: Vec<&Injection> = self.0.iter().filter(|i| i.epoch <= epoch).collect();
        inj.sort_by_key(|i| i.epoch);
        for i in inj {
            out.insert(i.miner, i.profile.clone());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_json() {
        let s = r#"[{"epoch": 1, "miner": 3, "profile": "silent_leader"},
                    {"epoch": 2, "miner": 3, "profile": "honest"},
                    {"epoch": 0, "miner": 4, "profile": "targeted_censor", "victims": []}]"#;
        let sc = ByzantineScenario::from_json(s).unwrap();
        assert_eq!(sc.profiles_at(0).get(&3), None);
        assert_eq!(sc.profiles_at(1)[&3], ByzantineProfile::SilentLeader);
        assert_eq!(sc.profiles_at(5)[&3], ByzantineProfile::Honest);
        assert_eq!(sc.profiles_at(0)[&4], ByzantineProfile::TargetedCensor(BTreeSet::new()));
        let back: ByzantineScenario = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
    }
}

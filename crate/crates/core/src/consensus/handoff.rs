use std::collections::BTreeSet;

use super::election::{verify_committee, Committee, MinerRegistry};
use super::ConsensusError;
use crate::auth::{ThresholdKeySet, VerifyingKey};
use crate::bank::{handoff_message, HandoffCert};
use crate::ids::PublicKey;

/// Outcome of an accepted handoff from epoch `epoch` to its successor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandoffRecord {
    pub epoch: u64,
    pub next_vk: VerifyingKey,
    pub next_members: Vec<PublicKey>,
    /// The outgoing committee's signature over the successor key.
    pub cert: HandoffCert,
}

/// The outgoing committee checks the successor's election proofs and its
/// agreement on `next_vk`, then certifies the key.
///
/// `endorsements` are successor members that voted for `next_vk`;
/// `signers` are outgoing members producing the certificate.
pub fn epoch_handoff(
    registry: &MinerRegistry,
    current: &Committee,
    current_keys: &ThresholdKeySet,
    signers: &[PublicKey],
    successor: &Committee,
    next_vk: VerifyingKey,
    endorsements: &[PublicKey],
) -> Result<HandoffRecord, ConsensusError> {
    verify_committee(registry, successor)?;
    let distinct: BTreeSet<&PublicKey> = endorsements.iter().filter(|m| successor.contains(m)).collect();
    if distinct.len() < successor.quorum() {
        return Err(ConsensusError::NoVkAgreement { got: distinct.len(), need: successor.quorum() });
    }
    let signature = current_keys.sign(&handoff_message(current.epoch, &next_vk), signers)?;
    Ok(HandoffRecord {
        epoch: current.epoch,
        next_vk,
        next_members: successor.ids(),
        cert: HandoffCert { epoch: current.epoch, next_vk, signature },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::{keygen, verify};
    use crate::consensus::election::{elect, registry, Miner};

    fn setup() -> (MinerRegistry, Committee, ThresholdKeySet, Committee, ThresholdKeySet) {
        let ms: Vec<Miner> = (0..30).map(|i| Miner::simulated(i, 1)).collect();
        let c0 = elect(&ms, [1; 32], 5, 0).unwrap();
        let c1 = elect(&ms, [2; 32], 5, 1).unwrap();
        let k0 = keygen(&c0.ids(), 1, [10; 32]).unwrap();
        let k1 = keygen(&c1.ids(), 1, [11; 32]).unwrap();
        (registry(&ms), c0, k0, c1, k1)
    }

    #[test]
    fn legitimate_successor() {
        let (reg, c0, k0, c1, k1) = setup();
        let r = epoch_handoff(&reg, &c0, &k0, &c0.ids()[..4], &c1, k1.vk(), &c1.ids()).unwrap();
        assert_eq!(r.next_vk, k1.vk());
        assert!(verify(&k0.vk(), &handoff_message(0, &k1.vk()), &r.cert.signature));
    }

    #[test]
    fn impostor_is_rejected() {
        let (reg, c0, k0, c1, k1) = setup();
        let outsiders: Vec<Miner> = (100..105).map(|i| Miner::simulated(i, 1)).collect();
        let mut fake = c1.clone();
        fake.members = outsiders.iter().map(|m| m.prove(&c1.seed)).collect();
        assert!(matches!(
            epoch_handoff(&reg, &c0, &k0, &c0.ids()[..4], &fake, k1.vk(), &fake.ids()),
            Err(ConsensusError::BadElectionProof(_))
        ));
    }

    #[test]
    fn too_few_endorsements() {
        let (reg, c0, k0, c1, k1) = setup();
        let mut votes = c1.ids()[..3].to_vec();
        votes.push(votes[0]);
        assert_eq!(
            epoch_handoff(&reg, &c0, &k0, &c0.ids()[..4], &c1, k1.vk(), &votes),
            Err(ConsensusError::NoVkAgreement { got: 3, need: 4 })
        );
    }
}

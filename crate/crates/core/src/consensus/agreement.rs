use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::election::Committee;
use super::ByzantineProfile;
use crate::ids::PublicKey;

/// What a leader is asked to propose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    Block,
    Sync,
    VerifyingKey,
}

/// How a leader acts in one view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LeaderConduct {
    Honest,
    Silent,
    Invalid,
    /// Valid proposal that leaves out the victims' transactions.
    Censor(BTreeSet<PublicKey>),
}

impl ByzantineProfile {
    pub fn conduct(&self, kind: ProposalKind) -> LeaderConduct {
        match (self, kind) {
            (ByzantineProfile::Honest, _) => LeaderConduct::Honest,
            (ByzantineProfile::SilentLeader, _) => LeaderConduct::Silent,
            (ByzantineProfile::InvalidProposer, _) => LeaderConduct::Invalid,
            (ByzantineProfile::InvalidSyncProposer, ProposalKind::Sync) => LeaderConduct::Invalid,
            (ByzantineProfile::InvalidSyncProposer, _) => LeaderConduct::Honest,
            (ByzantineProfile::TargetedCensor(v), ProposalKind::Block) => LeaderConduct::Censor(v.clone()),
            (ByzantineProfile::TargetedCensor(_), _) => LeaderConduct::Honest,
        }
    }

    pub fn is_honest(&self) -> bool {
        matches!(self, ByzantineProfile::Honest)
    }
}

/// Bounded-delay message delivery. Each message takes a delay in `[0, Δ]`;
/// an adversarial network always takes Δ.
#[derive(Clone, Debug)]
pub struct Network {
    pub delta_s: f64,
    pub adversarial: bool,
    rng: ChaCha8Rng,
}

impl Network {
    pub fn new(delta_s: f64, adversarial: bool, rng: ChaCha8Rng) -> Self {
        Network { delta_s, adversarial, rng }
    }

    pub fn delay(&mut self) -> f64 {
        if self.adversarial || self.delta_s == 0.0 {
            self.delta_s
        } else {
            self.rng.gen_range(0.0..=self.delta_s)
        }
    }

    /// Timeout before members abandon a view.
    pub fn timeout(&self) -> f64 {
        2.0 * self.delta_s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViewResult {
    /// Leader sent nothing before the timeout.
    Silent,
    /// Honest members refused the proposal.
    Rejected {
        votes: usize,
    },
    /// A valid proposal did not gather a quorum.
    NoQuorum {
        votes: usize,
    },
    Agreed {
        votes: Vec<PublicKey>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewRecord {
    pub view: usize,
    pub leader: PublicKey,
    pub result: ViewResult,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome<P> {
    Agreed {
        view: usize,
        leader: PublicKey,
        proposal: P,
        votes: Vec<PublicKey>,
    },
    /// No quorum in any view. Only reachable with more than f faulty members.
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agreement<P> {
    pub outcome: Outcome<P>,
    pub views: Vec<ViewRecord>,
    pub elapsed_s: f64,
    /// More than f members are faulty.
    pub assumption_violated: bool,
}

impl<P> Agreement<P> {
    pub fn is_agreed(&self) -> bool {
        matches!(self.outcome, Outcome::Agreed { .. })
    }

    pub fn view_changes(&self) -> usize {
        self.views.len().saturating_sub(1)
    }

    pub fn proposal(&self) -> Option<&P> {
        match &self.outcome {
            Outcome::Agreed { proposal, .. } => Some(proposal),
            Outcome::Stalled => None,
        }
    }
}

/// Leader-based agreement with view changes.
///
/// In each view the leader proposes according to its conduct. Honest members
/// vote iff `validate` accepts; faulty members vote only for proposals that
/// fail validation. A view whose leader is silent or whose proposal fails
/// ends after the timeout and passes leadership to the next-lowest score.
/// Starts at view `first_view` and gives up after `max_views` views.
#[allow(clippy::too_many_arguments)]
pub fn run_agreement<P, F, V>(
    committee: &Committee,
    profiles: &BTreeMap<PublicKey, ByzantineProfile>,
    kind: ProposalKind,
    mut propose: F,
    validate: V,
    net: &mut Network,
    first_view: usize,
    max_views: usize,
) -> Agreement<P>
where
    F: FnMut(&PublicKey, &LeaderConduct) -> Option<P>,
    V: Fn(&P) -> bool,
{
    let honest = ByzantineProfile::Honest;
    let profile = |m: &PublicKey| profiles.get(m).unwrap_or(&honest);
    let faulty = committee.ids().iter().filter(|m| !profile(m).is_honest()).count();
    let assumption_violated = faulty > committee.f;
    let mut views = Vec::new();
    let mut elapsed = 0.0;
    for view in first_view..first_view + max_views {
        let leader = committee.leader(view);
        let conduct = profile(&leader).conduct(kind);
        let proposal = if conduct == LeaderConduct::Silent { None } else { propose(&leader, &conduct) };
        let Some(proposal) = proposal else {
            elapsed += net.timeout();
            views.push(ViewRecord { view, leader, result: ViewResult::Silent });
            continue;
        };
        let valid = validate(&proposal);
        let send = net.delay();
        let mut arrivals: Vec<(f64, PublicKey)> =
            committee.ids().into_iter().filter(|m| profile(m).is_honest() == valid).map(|m| (net.delay(), m)).collect();
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if !valid {
            elapsed += net.timeout();
            views.push(ViewRecord { view, leader, result: ViewResult::Rejected { votes: arrivals.len() } });
            if arrivals.len() >= committee.quorum() {
                // Only possible when the honest-majority assumption fails.
                let votes = arrivals.into_iter().map(|a| a.1).collect();
                return Agreement {
                    outcome: Outcome::Agreed { view, leader, proposal, votes },
                    views,
                    elapsed_s: elapsed,
                    assumption_violated,
                };
            }
            continue;
        }
        if arrivals.len() < committee.quorum() {
            elapsed += net.timeout();
            views.push(ViewRecord { view, leader, result: ViewResult::NoQuorum { votes: arrivals.len() } });
            continue;
        }
        elapsed += send + arrivals[committee.quorum() - 1].0;
        let votes: Vec<PublicKey> = arrivals.into_iter().map(|a| a.1).collect();
        views.push(ViewRecord { view, leader, result: ViewResult::Agreed { votes: votes.clone() } });
        return Agreement {
            outcome: Outcome::Agreed { view, leader, proposal, votes },
            views,
            elapsed_s: elapsed,
            assumption_violated,
        };
    }
    Agreement { outcome: Outcome::Stalled, views, elapsed_s: elapsed, assumption_violated }
}

/// Per-round agreement delay in seconds for a committee of `size`,
/// interpolated from measured points and extrapolated linearly beyond them.
pub fn consensus_delay_s(size: usize) -> f64 {
    const POINTS: [(f64, f64); 6] = [(0.0, 0.0), (100.0, 0.99), (250.0, 2.95), (500.0, 6.51), (750.0, 14.32), (1000.0, 22.24)];
    let x = size as f64;
    let seg = POINTS.windows(2).find(|w| x <= w[1].0).unwrap_or(&POINTS[4..6]);
    let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
    y0 + (x - x0) * (y1 - y0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::election::{elect, Miner};
    use rand::SeedableRng;

    fn setup(size: usize) -> (Committee, Network) {
        let ms: Vec<Miner> = (0..40).map(|i| Miner::simulated(i, 1)).collect();
        (elect(&ms, [5; 32], size, 0).unwrap(), Network::new(1.0, false, ChaCha8Rng::seed_from_u64(1)))
    }

    fn propose(_: &PublicKey, c: &LeaderConduct) -> Option<u32> {
        Some(if *c == LeaderConduct::Invalid { 666 } else { 7 })
    }

    fn valid(p: &u32) -> bool {
        *p == 7
    }

    #[test]
    fn happy_path() {
        let (c, mut net) = setup(5);
        let a = run_agreement(&c, &BTreeMap::new(), ProposalKind::Block, propose, valid, &mut net, 0, 5);
        match a.outcome {
            Outcome::Agreed { view: 0, ref votes, proposal: 7, .. } => assert!(votes.len() >= 4),
            ref o => panic!("{o:?}"),
        }
        assert!(a.elapsed_s <= 2.0);
    }

    #[test]
    fn invalid_leader_is_replaced() {
        let (c, mut net) = setup(5);
        let profiles = BTreeMap::from([(c.leader(0), ByzantineProfile::InvalidProposer)]);
        let a = run_agreement(&c, &profiles, ProposalKind::Block, propose, valid, &mut net, 0, 5);
        assert_eq!(a.view_changes(), 1);
        assert!(matches!(a.outcome, Outcome::Agreed { view: 1, proposal: 7, .. }));
        assert_eq!(a.views[0].result, ViewResult::Rejected { votes: 1 });
        assert!(a.elapsed_s <= 2.0 * net.timeout());
    }

    #[test]
    fn invalid_sync_proposer_only_fails_syncs() {
        let (c, mut net) = setup(5);
        let profiles = BTreeMap::from([(c.leader(0), ByzantineProfile::InvalidSyncProposer)]);
        let a = run_agreement(&c, &profiles, ProposalKind::Block, propose, valid, &mut net, 0, 5);
        assert_eq!(a.view_changes(), 0);
        let a = run_agreement(&c, &profiles, ProposalKind::Sync, propose, valid, &mut net, 0, 5);
        assert_eq!(a.view_changes(), 1);
    }

    #[test]
    fn silent_leader_times_out() {
        let (c, mut net) = setup(5);
        let profiles = BTreeMap::from([(c.leader(0), ByzantineProfile::SilentLeader)]);
        let a = run_agreement(&c, &profiles, ProposalKind::Block, propose, valid, &mut net, 0, 5);
        assert_eq!(a.views[0].result, ViewResult::Silent);
        assert!(a.is_agreed());
        assert!(!a.assumption_violated);
    }

    #[test]
    fn too_many_faulty_stalls() {
        let (c, mut net) = setup(5);
        let profiles: BTreeMap<_, _> = c.ids()[3..].iter().map(|m| (*m, ByzantineProfile::SilentLeader)).collect();
        let a = run_agreement(&c, &profiles, ProposalKind::Block, propose, valid, &mut net, 0, 5);
        assert_eq!(a.outcome, Outcome::Stalled);
        assert!(a.assumption_violated);
    }

    #[test]
    fn starts_at_given_view() {
        let (c, mut net) = setup(5);
        let a = run_agreement(&c, &BTreeMap::new(), ProposalKind::Block, propose, valid, &mut net, 3, 1);
        assert!(matches!(a.outcome, Outcome::Agreed { view: 3, .. }));
        assert_eq!(a.views[0].leader, c.leader(3));
        let profiles = BTreeMap::from([(c.leader(3), ByzantineProfile::InvalidSyncProposer)]);
        let a = run_agreement(&c, &profiles, ProposalKind::Sync, propose, valid, &mut net, 3, 1);
        assert_eq!(a.outcome, Outcome::Stalled);
        assert!(!a.assumption_violated);
    }

    #[test]
    fn delay_table() {
        assert!((consensus_delay_s(500) - 6.51).abs() < 1e-9);
        assert!((consensus_delay_s(100) - 0.99).abs() < 1e-9);
        assert!((consensus_delay_s(5) - 0.0495).abs() < 1e-9);
        assert!((consensus_delay_s(1250) - 30.16).abs() < 1e-9);
    }
}

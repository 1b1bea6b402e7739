use l2amm_core::auth::{combine, keygen, verify, AuthError, SigningPackage, ThresholdKeySet};
use l2amm_core::ids::user_key;
use l2amm_core::PublicKey;

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn key_set(f: usize) -> (Vec<PublicKey>, ThresholdKeySet) {
    let members: Vec<PublicKey> = (0..(3 * f + 2) as u32).map(|i| user_key(100 + i)).collect();
    let ks = keygen(&members, f, [f as u8; 32]).unwrap();
    (members, ks)
}

/// Runs both signing phases without the combiner's threshold check.
fn sign_unchecked(ks: &ThresholdKeySet, msg: &[u8], signers: &[PublicKey]) -> bool {
    let shares: Vec<_> = signers.iter().map(|m| &ks.shares[m]).collect();
    let indices: Vec<u32> = shares.iter().map(|s| s.index).collect();
    let package = SigningPackage::new(msg.to_vec(), shares.iter().map(|s| s.commit(msg, &indices)).collect());
    let partials: Vec<_> = shares.iter().map(|s| s.sign_share(&package).unwrap()).collect();
    let mut group = ks.group.clone();
    group.threshold = signers.len();
    let sig = combine(&group, &package, &partials).unwrap();
    verify(&ks.vk(), msg, &sig)
}

#[test]
fn every_quorum_subset_verifies() {
    for f in 1..=3 {
        let (members, ks) = key_set(f);
        let msg = format!("payload f={f}");
        for s in subsets(members.len(), 2 * f + 2) {
            let signers: Vec<PublicKey> = s.iter().map(|&i| members[i]).collect();
            let sig = ks.sign(msg.as_bytes(), &signers).unwrap();
            assert!(verify(&ks.vk(), msg.as_bytes(), &sig), "f={f} {s:?}");
            assert!(!verify(&ks.vk(), b"other", &sig));
        }
    }
}

#[test]
fn every_sub_quorum_subset_fails() {
    for f in 1..=3 {
        let (members, ks) = key_set(f);
        let msg = format!("payload f={f}");
        for s in subsets(members.len(), 2 * f + 1) {
            let signers: Vec<PublicKey> = s.iter().map(|&i| members[i]).collect();
            assert_eq!(
                ks.sign(msg.as_bytes(), &signers).unwrap_err(),
                AuthError::InsufficientShares { got: 2 * f + 1, need: 2 * f + 2 }
            );
            // Interpolating too few shares yields the wrong secret.
            assert!(!sign_unchecked(&ks, msg.as_bytes(), &signers), "f={f} {s:?}");
        }
    }
}

#[test]
fn full_committee_also_verifies() {
    let (members, ks) = key_set(2);
    let sig = ks.sign(b"all", &members).unwrap();
    assert!(verify(&ks.vk(), b"all", &sig));
}

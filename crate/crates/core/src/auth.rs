//! Threshold Schnorr signatures over Ristretto255.
//!
//! A dealer Shamir-shares the group signing key among a `3f+2` committee
//! with threshold `t = 2f+2`. Signing is two-phase: every signer publishes a
//! nonce commitment, then a partial signature over the shared
//! [`SigningPackage`]; [`combine`] checks each partial against the signer's
//! public share and sums them into a 64-byte `(R, z)` signature.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha512};
use thiserror::Error;

use crate::ids::PublicKey;

/// Serialized verification key size, padded for storage accounting.
pub const VK_BYTES: usize = 128;
/// Serialized signature size.
pub const SIG_BYTES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("committee of {size} members does not match 3f+2 for f={f}")]
    BadCommitteeSize { size: usize, f: usize },
    #[error("{got} partial signatures, threshold is {need}")]
    InsufficientShares { got: usize, need: usize },
    #[error("member {0} contributed twice")]
    DuplicateShare(PublicKey),
    #[error("member {0} is not part of the key set")]
    UnknownMember(PublicKey),
    #[error("member {0} is not a signer in this package")]
    NotInPackage(PublicKey),
    #[error("partial signature from {0} does not verify")]
    InvalidShare(PublicKey),
    #[error("partial signatures do not match the package's signer set")]
    PackageMismatch,
    #[error("malformed group element")]
    Malformed,
}

pub type Result<T> = std::result::Result<T, AuthError>;

/// Group verification key: a compressed Ristretto point.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct VerifyingKey(pub [u8; 32]);

impl VerifyingKey {
    /// Fixed-width storage encoding.
    pub fn to_padded(&self) -> [u8; VK_BYTES] {
        let mut out = [0u8; VK_BYTES];
        out[..32].copy_from_slice(&self.0);
        out
    }

    fn point(&self) -> Option<RistrettoPoint> {
        CompressedRistretto(self.0).decompress()
    }
}

impl fmt::Debug for VerifyingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VerifyingKey({}…)", &hex::encode(self.0)[..12])
    }
}

impl Serialize for VerifyingKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for VerifyingKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(de::Error::custom)?;
        Ok(VerifyingKey(out))
    }
}

/// A combined threshold signature and the members that produced it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ThresholdSignature {
    pub bytes: [u8; SIG_BYTES],
    pub contributors: Vec<PublicKey>,
}

impl ThresholdSignature {
    /// Placeholder used before signing; never verifies.
    pub fn empty() -> Self {
        ThresholdSignature { bytes: [0; SIG_BYTES], contributors: Vec::new() }
    }
}

#[derive(Serialize, Deserialize)]
struct SigRepr {
    bytes: String,
    contributors: Vec<PublicKey>,
}

impl Serialize for ThresholdSignature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SigRepr { bytes: hex::encode(self.bytes), contributors: self.contributors.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ThresholdSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SigRepr::deserialize(d)?;
        let mut bytes = [0u8; SIG_BYTES];
        hex::decode_to_slice(&r.bytes, &mut bytes).map_err(de::Error::custom)?;
        Ok(ThresholdSignature { bytes, contributors: r.contributors })
    }
}

/// One member's secret share.
#[derive(Clone)]
pub struct SecretShare {
    pub member: PublicKey,
    /// Evaluation point of the sharing polynomial, starting at 1.
    pub index: u32,
    pub vk: VerifyingKey,
    secret: Scalar,
}

impl fmt::Debug for SecretShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretShare").field("member", &self.member).field("index", &self.index).finish_non_exhaustive()
    }
}

/// Public side of a key set: what a combiner needs to check partials.
#[derive(Clone, Debug)]
pub struct GroupKey {
    pub vk: VerifyingKey,
    pub threshold: usize,
    /// member → (index, public share).
    pub members: BTreeMap<PublicKey, (u32, RistrettoPoint)>,
}

#[derive(Clone, Debug)]
pub struct ThresholdKeySet {
    pub f: usize,
    pub group: GroupKey,
    pub shares: BTreeMap<PublicKey, SecretShare>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonceCommitment {
    pub member: PublicKey,
    pub index: u32,
    pub point: [u8; 32],
}

/// Message plus the signer set's nonce commitments.
#[derive(Clone, Debug)]
pub struct SigningPackage {
    pub message: Vec<u8>,
    commitments: Vec<NonceCommitment>,
    /// Sum of the commitments; none if one does not decode.
    group: OnceLock<Option<[u8; 32]>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialSignature {
    pub member: PublicKey,
    pub index: u32,
    z: [u8; 32],
}

fn scalar_from_hash(domain: &str, parts: &[&[u8]]) -> Scalar {
    let mut h = Sha512::new();
    h.update(domain.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    Scalar::from_hash(h)
}

fn challenge(r: &[u8; 32], vk: &VerifyingKey, msg: &[u8]) -> Scalar {
    scalar_from_hash("challenge", &[r, &vk.0, msg])
}

fn lagrange_at_zero(index: u32, set: &[u32]) -> Scalar {
    let xi = Scalar::from(index as u64);
    let mut num = Scalar::ONE;
    let mut den = Scalar::ONE;
    for &j in set {
        if j == index {
            continue;
        }
        let xj = Scalar::from(j as u64);
        num *= xj;
        den *= xj - xi;
    }
    num * den.invert()
}

fn signer_bytes(set: &[u32]) -> Vec<u8> {
    set.iter().flat_map(|i| i.to_be_bytes()).collect()
}

/// Threshold for fault parameter `f`.
pub fn threshold_for(f: usize) -> usize {
    2 * f + 2
}

/// Dealer key generation, deterministic in `seed`.
pub fn keygen(committee: &[PublicKey], f: usize, seed: [u8; 32]) -> Result<ThresholdKeySet> {
    let n = committee.len();
    if n != 3 * f + 2 || committee.iter().collect::<BTreeSet<_>>().len() != n {
        return Err(AuthError::BadCommitteeSize { size: n, f });
    }
    let t = threshold_for(f);
    let mut rng = ChaCha20Rng::from_seed(seed);
    let coeffs: Vec<Scalar> = (0..t)
        .map(|_| {
            let mut wide = [0u8; 64];
            rng.fill_bytes(&mut wide);
            Scalar::from_bytes_mod_order_wide(&wide)
        })
        .collect();
    let vk = VerifyingKey((&coeffs[0] * RISTRETTO_BASEPOINT_TABLE).compress().to_bytes());
    let mut shares = BTreeMap::new();
    let mut members = BTreeMap::new();
    for (i, m) in committee.iter().enumerate() {
        let index = i as u32 + 1;
        let x = Scalar::from(index as u64);
        let secret = coeffs.iter().rev().fold(Scalar::ZERO, |acc, c| acc * x + c);
        members.insert(*m, (index, &secret * RISTRETTO_BASEPOINT_TABLE));
        shares.insert(*m, SecretShare { member: *m, index, vk, secret });
    }
    Ok(ThresholdKeySet { f, group: GroupKey { vk, threshold: t, members }, shares })
}

impl SecretShare {
    fn nonce(&self, message: &[u8], set: &[u32]) -> Scalar {
        scalar_from_hash("nonce", &[self.secret.as_bytes(), message, &signer_bytes(set)])
    }

    /// First phase: commit to the nonce for `message` and the signer indices.
    pub fn commit(&self, message: &[u8], signers: &[u32]) -> NonceCommitment {
        let mut set = signers.to_vec();
        set.sort_unstable();
        let k = self.nonce(message, &set);
        NonceCommitment { member: self.member, index: self.index, point: (&k * RISTRETTO_BASEPOINT_TABLE).compress().to_bytes() }
    }

    /// Second phase: partial signature over the package.
    pub fn sign_share(&self, package: &SigningPackage) -> Result<PartialSignature> {
        let set = package.signer_indices();
        if !set.contains(&self.index) {
            return Err(AuthError::NotInPackage(self.member));
        }
        let r = package.group_commitment()?;
        let c = challenge(&r, &self.vk, &package.message);
        let k = self.nonce(&package.message, &set);
        let z = k + c * lagrange_at_zero(self.index, &set) * self.secret;
        Ok(PartialSignature { member: self.member, index: self.index, z: z.to_bytes() })
    }
}

impl SigningPackage {
    pub fn new(message: Vec<u8>, mut commitments: Vec<NonceCommitment>) -> Self {
        commitments.sort_by_key(|c| c.index);
        SigningPackage { message, commitments, group: OnceLock::new() }
    }

    pub fn signer_indices(&self) -> Vec<u32> {
        self.commitments.iter().map(|c| c.index).collect()
    }

    fn group_commitment(&self) -> Result<[u8; 32]> {
        let sum = || {
            let mut r = RistrettoPoint::default();
            for c in &self.commitments {
                r += CompressedRistretto(c.point).decompress()?;
            }
            Some(r.compress().to_bytes())
        };
        self.group.get_or_init(sum).ok_or(AuthError::Malformed)
    }
}

/// Combines partial signatures after checking each against its public share.
pub fn combine(group: &GroupKey, package: &SigningPackage, partials: &[PartialSignature]) -> Result<ThresholdSignature> {
    let mut seen = BTreeSet::new();
    for p in partials {
        if !seen.insert(p.member) {
            return Err(AuthError::DuplicateShare(p.member));
        }
        if !group.members.contains_key(&p.member) {
            return Err(AuthError::UnknownMember(p.member));
        }
    }
    if partials.len() < group.threshold {
        return Err(AuthError::InsufficientShares { got: partials.len(), need: group.threshold });
    }
    let set = package.signer_indices();
    let mut got: Vec<u32> = partials.iter().map(|p| p.index).collect();
    got.sort_unstable();
    if got != set {
        return Err(AuthError::PackageMismatch);
    }
    let r = package.group_commitment()?;
    let c = challenge(&r, &group.vk, &package.message);
    let mut z = Scalar::ZERO;
    for p in partials {
        let (index, y) = group.members[&p.member];
        let commitment = package.commitments.iter().find(|c| c.member == p.member).ok_or(AuthError::NotInPackage(p.member))?;
        let ri = CompressedRistretto(commitment.point).decompress().ok_or(AuthError::Malformed)?;
        let zi = Option::<Scalar>::from(Scalar::from_canonical_bytes(p.z)).ok_or(AuthError::InvalidShare(p.member))?;
        if index != p.index || &zi * RISTRETTO_BASEPOINT_TABLE != ri + c * lagrange_at_zero(index, &set) * y {
            return Err(AuthError::InvalidShare(p.member));
        }
        z += zi;
    }
    let mut bytes = [0u8; SIG_BYTES];
    bytes[..32].copy_from_slice(&r);
    bytes[32..].copy_from_slice(z.as_bytes());
    let mut contributors: Vec<PublicKey> = partials.iter().map(|p| p.member).collect();
    contributors.sort();
    Ok(ThresholdSignature { bytes, contributors })
}

/// Checks `z·G = R + c·vk`.
pub fn verify(vk: &VerifyingKey, message: &[u8], sig: &ThresholdSignature) -> bool {
    let (Some(y), Some(r)) = (vk.point(), CompressedRistretto::from_slice(&sig.bytes[..32]).ok().and_then(|c| c.decompress()))
    else {
        return false;
    };
    let mut zb = [0u8; 32];
    zb.copy_from_slice(&sig.bytes[32..]);
    let Some(z) = Option::<Scalar>::from(Scalar::from_canonical_bytes(zb)) else {
        return false;
    };
    let mut rb = [0u8; 32];
    rb.copy_from_slice(&sig.bytes[..32]);
    let c = challenge(&rb, vk, message);
    &z * RISTRETTO_BASEPOINT_TABLE == r + c * y
}

impl ThresholdKeySet {
    pub fn vk(&self) -> VerifyingKey {
        self.group.vk
    }

    pub fn threshold(&self) -> usize {
        self.group.threshold
    }

    /// Runs both signing phases among `signers` and combines the result.
    pub fn sign(&self, message: &[u8], signers: &[PublicKey]) -> Result<ThresholdSignature> {
        let shares =
            signers.iter().map(|m| self.shares.get(m).ok_or(AuthError::UnknownMember(*m))).collect::<Result<Vec<_>>>()?;
        let indices: Vec<u32> = shares.iter().map(|s| s.index).collect();
        let commitments = shares.iter().map(|s| s.commit(message, &indices)).collect();
        let package = SigningPackage::new(message.to_vec(), commitments);
        let partials = shares.iter().map(|s| s.sign_share(&package)).collect::<Result<Vec<_>>>()?;
        combine(&self.group, &package, &partials)
    }
}

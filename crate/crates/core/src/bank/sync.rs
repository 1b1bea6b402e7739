use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ck, BankError, BankState, Result};
use crate::auth::{self, ThresholdSignature, VerifyingKey};
use crate::ids::{Encoder, PoolId, PublicKey, TokenId};
use crate::num::{decimal, ByteSize};
use crate::{LiquidityPosition, TokenAmount};

/// One user's end-of-epoch balances.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoutEntry {
    pub user: PublicKey,
    #[serde(with = "amount_list")]
    pub amounts: Vec<(TokenId, TokenAmount)>,
}

/// Full replacement image of a position. An image with no balance and no
/// fees deletes the position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionImage {
    pub pool: PoolId,
    pub position: LiquidityPosition,
}

/// The outgoing committee's endorsement of its successor's key, letting a
/// later committee sync epochs the bank has not seen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffCert {
    pub epoch: u64,
    pub next_vk: VerifyingKey,
    pub signature: ThresholdSignature,
}

pub fn handoff_message(epoch: u64, next_vk: &VerifyingKey) -> Vec<u8> {
    let mut e = Encoder::new();
    e.tag("handoff").u64(epoch).bytes(&next_vk.to_padded());
    e.finish()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncPayload {
    pub first_epoch: u64,
    pub last_epoch: u64,
    pub payouts: Vec<PayoutEntry>,
    pub positions: Vec<PositionImage>,
    pub next_committee_vk: VerifyingKey,
    /// Certificates for epochs `first_epoch..last_epoch`, oldest first.
    pub handoffs: Vec<HandoffCert>,
    pub signature: ThresholdSignature,
}

/// Tokens sent from the bank to a user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disbursement {
    pub user: PublicKey,
    pub token: TokenId,
    #[serde(with = "decimal")]
    pub amount: TokenAmount,
}

pub(crate) fn encode_position(e: &mut Encoder, pool: &PoolId, p: &LiquidityPosition) {
    e.fixed(&pool.0)
        .fixed(&p.id.0)
        .fixed(&p.owner.0)
        .amount(p.amount_a)
        .amount(p.amount_b)
        .amount(p.liquidity)
        .i32(p.range.lower)
        .i32(p.range.upper)
        .amount(p.fees_a)
        .amount(p.fees_b);
}

impl SyncPayload {
    /// Bytes covered by the committee signature: every field except the
    /// handoff certificates (signed separately) and the signature itself.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.tag("sync").u64(self.first_epoch).u64(self.last_epoch);
        e.u32(self.payouts.len() as u32);
        for p in &self.payouts {
            e.fixed(&p.user.0).u32(p.amounts.len() as u32);
            for (t, a) in &p.amounts {
                e.u32(t.0).amount(*a);
            }
        }
        e.u32(self.positions.len() as u32);
        for img in &self.positions {
            encode_position(&mut e, &img.pool, &img.position);
        }
        e.bytes(&self.next_committee_vk.to_padded());
        e.finish()
    }

    pub fn gas_op(&self) -> super::GasOp {
        super::GasOp::sync(self.payouts.len() as u64, self.positions.len() as u64, self.handoffs.len() as u64)
    }

    pub fn gas(&self) -> u64 {
        super::gas_cost(self.gas_op()).expect("sync descriptors are always priced")
    }

    /// Mainchain bytes, including authentication material.
    pub fn main_size(&self) -> ByteSize {
        super::gas::sync_main_size(self.payouts.len() as u64, self.positions.len() as u64, self.handoffs.len() as u64)
    }

    pub fn epoch_count(&self) -> u64 {
        self.last_epoch - self.first_epoch + 1
    }
}

impl BankState {
    /// Checks the epoch range, the handoff chain and the committee signature.
    pub fn verify_sync(&self, payload: &SyncPayload) -> Result<()> {
        let expected = self.next_sync_epoch();
        if payload.first_epoch != expected || payload.last_epoch < payload.first_epoch {
            return Err(BankError::EpochGap { expected, first: payload.first_epoch, last: payload.last_epoch });
        }
        if payload.handoffs.len() as u64 != payload.last_epoch - payload.first_epoch {
            return Err(BankError::BadSignature);
        }
        let mut vk = self.committee_vk;
        for (i, cert) in payload.handoffs.iter().enumerate() {
            if cert.epoch != payload.first_epoch + i as u64
                || !auth::verify(&vk, &handoff_message(cert.epoch, &cert.next_vk), &cert.signature)
            {
                return Err(BankError::BadSignature);
            }
            vk = cert.next_vk;
        }
        if !auth::verify(&vk, &payload.signing_bytes(), &payload.signature) {
            return Err(BankError::BadSignature);
        }
        Ok(())
    }

    /// Verifies and applies a sync. On error the state is unchanged.
    pub fn process_sync(&mut self, payload: &SyncPayload) -> Result<Vec<Disbursement>> {
        self.verify_sync(payload)?;
        self.apply_payload(payload)
    }

    /// Applies a payload without authentication. Used after verification
    /// and to project unsynced summaries onto a snapshot.
    pub fn apply_payload(&mut self, payload: &SyncPayload) -> Result<Vec<Disbursement>> {
        let expected = self.next_sync_epoch();
        if payload.first_epoch != expected || payload.last_epoch < payload.first_epoch {
            return Err(BankError::EpochGap { expected, first: payload.first_epoch, last: payload.last_epoch });
        }
        let mut next = self.clone();
        let mut flows: BTreeMap<TokenId, (TokenAmount, TokenAmount)> = BTreeMap::new();

        for e in payload.first_epoch..=payload.last_epoch {
            for (_, t, a) in next.deposits.take(e).iter() {
                let f = flows.entry(t).or_default();
                f.0 = ck(f.0.checked_add(a))?;
            }
        }

        let fees_before = next.fees_by_token()?;
        for img in &payload.positions {
            let pool = next.pools.get_mut(&img.pool).ok_or(BankError::UnknownPool)?;
            if img.position.is_empty() {
                pool.positions.remove(&img.position.id);
            } else {
                pool.positions.insert(img.position.id, img.position.clone());
            }
        }
        let fees_after = next.fees_by_token()?;

        let mut disbursed = Vec::new();
        for entry in &payload.payouts {
            for &(t, a) in &entry.amounts {
                if a == 0 {
                    continue;
                }
                next.pool_of(t)?;
                let f = flows.entry(t).or_default();
                f.1 = ck(f.1.checked_add(a))?;
                if next.carry_over_deposits {
                    next.deposits.credit(payload.last_epoch + 1, entry.user, t, a);
                } else {
                    next.record_outflow(t, a)?;
                    disbursed.push(Disbursement { user: entry.user, token: t, amount: a });
                }
            }
        }

        // Tokens entering the pools equal consumed deposits less payouts,
        // net of the change in fees owed to positions.
        let tokens: Vec<TokenId> = next.token_pool.keys().copied().collect();
        for t in tokens {
            let (inflow, payout) = flows.get(&t).copied().unwrap_or_default();
            let fb = fees_before.get(&t).copied().unwrap_or(0);
            let fa = fees_after.get(&t).copied().unwrap_or(0);
            let pid = next.token_pool[&t];
            let pool = next.pools.get_mut(&pid).expect("token_pool points at a pool");
            let side = pool.side_of(t)?;
            let credit = ck(ck(pool.reserve(side).checked_add(inflow))?.checked_add(fb))?;
            let reserve = credit.checked_sub(payout).and_then(|x| x.checked_sub(fa)).ok_or(BankError::NegativeReserve(t))?;
            match side {
                crate::amm::Side::A => pool.reserve_a = reserve,
                crate::amm::Side::B => pool.reserve_b = reserve,
            }
        }
        for pool in next.pools.values_mut() {
            pool.refresh()?;
        }

        next.committee_vk = payload.next_committee_vk;
        next.last_synced_epoch = Some(payload.last_epoch);
        *self = next;
        Ok(disbursed)
    }

    fn fees_by_token(&self) -> Result<BTreeMap<TokenId, TokenAmount>> {
        let mut out = BTreeMap::new();
        for p in self.pools.values() {
            let (fa, fb) = p.fees_owed()?;
            out.insert(p.token_a, fa);
            out.insert(p.token_b, fb);
        }
        Ok(out)
    }
}

mod amount_list {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    use crate::ids::TokenId;
    use crate::TokenAmount;

    pub fn serialize<S: Serializer>(v: &[(TokenId, TokenAmount)], s: S) -> Result<S::Ok, S::Error> {
        let r: Vec<(u32, String)> = v.iter().map(|(t, a)| (t.0, a.to_string())).collect();
        r.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(TokenId, TokenAmount)>, D::Error> {
        let r = Vec::<(u32, String)>::deserialize(d)?;
        r.into_iter().map(|(t, a)| Ok((TokenId(t), a.parse().map_err(de::Error::custom)?))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amm::TickRange;
    use crate::auth::{keygen, ThresholdKeySet};
    use crate::ids::user_key;

    const A: TokenId = TokenId(1);
    const B: TokenId = TokenId(2);

    fn committee(seed: u8) -> ThresholdKeySet {
        let members: Vec<PublicKey> = (0..5).map(|i| user_key(1000 + i)).collect();
        keygen(&members, 1, [seed; 32]).unwrap()
    }

    fn sign(keys: &ThresholdKeySet, msg: &[u8]) -> ThresholdSignature {
        let signers: Vec<PublicKey> = keys.shares.keys().take(4).copied().collect();
        keys.sign(msg, &signers).unwrap()
    }

    fn setup() -> (BankState, PoolId, ThresholdKeySet, ThresholdKeySet) {
        let k0 = committee(1);
        let k1 = committee(2);
        let mut bank = BankState::new(k0.vk(), false);
        let id = bank.create_pool(A, B, 0).unwrap();
        bank.seed_pool(&id, user_key(900), 1000, 2000, TickRange::FULL, &[7; 32]).unwrap();
        (bank, id, k0, k1)
    }

    fn payload(first: u64, last: u64, payouts: Vec<PayoutEntry>, next: VerifyingKey) -> SyncPayload {
        SyncPayload {
            first_epoch: first,
            last_epoch: last,
            payouts,
            positions: vec![],
            next_committee_vk: next,
            handoffs: vec![],
            signature: ThresholdSignature::empty(),
        }
    }

    #[test]
    fn worked_example_sync() {
        let (mut bank, id, k0, k1) = setup();
        let u = user_key(1);
        bank.deposit(u, A, 10, 0).unwrap();
        bank.deposit(u, B, 15, 0).unwrap();
        // Epoch 0 is empty; the deposit is spendable in epoch 1.
        let mut p0 = payload(0, 0, vec![], k1.vk());
        p0.signature = sign(&k0, &p0.signing_bytes());
        assert!(bank.process_sync(&p0).unwrap().is_empty());

        let k2 = committee(3);
        let mut p1 = payload(1, 1, vec![PayoutEntry { user: u, amounts: vec![(A, 5), (B, 25)] }], k2.vk());
        p1.signature = sign(&k1, &p1.signing_bytes());
        let out = bank.process_sync(&p1).unwrap();
        assert_eq!(out, vec![Disbursement { user: u, token: A, amount: 5 }, Disbursement { user: u, token: B, amount: 25 }]);
        let pool = bank.pool(&id).unwrap();
        assert_eq!((pool.reserve_a, pool.reserve_b), (1005, 1990));
        assert_eq!(bank.committee_vk, k2.vk());
        assert_eq!(bank.last_synced_epoch, Some(1));
        assert!(bank.deposits.is_empty());
        bank.check_custody().unwrap();
    }

    #[test]
    fn forged_or_tampered_sync_leaves_state_unchanged() {
        let (mut bank, _, k0, k1) = setup();
        bank.deposit(user_key(1), A, 10, 0).unwrap();
        let before = bank.clone();

        let mut forged = payload(0, 0, vec![], k1.vk());
        forged.signature = sign(&k1, &forged.signing_bytes());
        assert_eq!(bank.process_sync(&forged), Err(BankError::BadSignature));
        assert_eq!(bank, before);

        let mut tampered = payload(0, 0, vec![], k1.vk());
        tampered.signature = sign(&k0, &tampered.signing_bytes());
        tampered.payouts.push(PayoutEntry { user: user_key(2), amounts: vec![(A, 1)] });
        assert_eq!(bank.process_sync(&tampered), Err(BankError::BadSignature));
        assert_eq!(bank, before);

        let mut gap = payload(1, 1, vec![], k1.vk());
        gap.signature = sign(&k0, &gap.signing_bytes());
        assert!(matches!(bank.process_sync(&gap), Err(BankError::EpochGap { expected: 0, .. })));
        assert_eq!(bank, before);
    }

    #[test]
    fn empty_epoch_sync_rotates_key_only() {
        let (mut bank, id, k0, k1) = setup();
        let u = user_key(1);
        bank.genesis_deposit(u, A, 10, 0).unwrap();
        let pool_before = bank.pool(&id).unwrap().clone();
        let mut p = payload(0, 0, vec![PayoutEntry { user: u, amounts: vec![(A, 10)] }], k1.vk());
        p.signature = sign(&k0, &p.signing_bytes());
        let out = bank.process_sync(&p).unwrap();
        assert_eq!(out, vec![Disbursement { user: u, token: A, amount: 10 }]);
        assert_eq!(bank.pool(&id).unwrap(), &pool_before);
        assert_eq!(bank.committee_vk, k1.vk());
    }

    #[test]
    fn negative_reserve_is_rejected() {
        let (mut bank, _, k0, k1) = setup();
        let mut p = payload(0, 0, vec![PayoutEntry { user: user_key(1), amounts: vec![(A, 5000)] }], k1.vk());
        p.signature = sign(&k0, &p.signing_bytes());
        let before = bank.clone();
        assert_eq!(bank.process_sync(&p), Err(BankError::NegativeReserve(A)));
        assert_eq!(bank, before);
    }

    #[test]
    fn mass_sync_follows_handoff_chain() {
        let (mut bank, _, k0, k1) = setup();
        let k2 = committee(3);
        let cert = HandoffCert { epoch: 0, next_vk: k1.vk(), signature: sign(&k0, &handoff_message(0, &k1.vk())) };
        let mut p = payload(0, 1, vec![], k2.vk());
        p.handoffs.push(cert.clone());
        p.signature = sign(&k1, &p.signing_bytes());
        let mut missing = p.clone();
        missing.handoffs.clear();
        assert_eq!(bank.clone().process_sync(&missing), Err(BankError::BadSignature));
        let mut bad_cert = p.clone();
        bad_cert.handoffs[0].signature = sign(&k2, &handoff_message(0, &k1.vk()));
        assert_eq!(bank.clone().process_sync(&bad_cert), Err(BankError::BadSignature));

        bank.process_sync(&p).unwrap();
        assert_eq!(bank.last_synced_epoch, Some(1));
        assert_eq!(bank.committee_vk, k2.vk());
        assert_eq!(p.gas(), 251_630 + 113_000 + 6_000 + 36 + 6 * 22_100);
    }

    #[test]
    fn position_images_replace_and_delete() {
        let (mut bank, id, k0, k1) = setup();
        let seeded = bank.pool(&id).unwrap().positions.values().next().unwrap().clone();
        let mut p = payload(0, 0, vec![], k1.vk());
        p.positions.push(PositionImage { pool: id, position: LiquidityPosition::tombstone(seeded.id, seeded.owner) });
        p.signature = sign(&k0, &p.signing_bytes());
        // Deleting the only position while reserves stay is a valid image.
        bank.process_sync(&p).unwrap();
        assert!(bank.pool(&id).unwrap().positions.is_empty());
        assert_eq!(bank.pool(&id).unwrap().total_liquidity, 0);
    }

    #[test]
    fn carry_over_credits_next_epoch() {
        let (mut bank, _, k0, k1) = setup();
        bank.carry_over_deposits = true;
        let u = user_key(1);
        bank.genesis_deposit(u, A, 10, 0).unwrap();
        let mut p = payload(0, 0, vec![PayoutEntry { user: u, amounts: vec![(A, 10)] }], k1.vk());
        p.signature = sign(&k0, &p.signing_bytes());
        assert!(bank.process_sync(&p).unwrap().is_empty());
        assert_eq!(bank.deposits.spendable(1).get(&u, A), 10);
        bank.check_custody().unwrap();
    }

    #[test]
    fn payload_json_round_trip() {
        let (_, id, k0, k1) = setup();
        let mut p = payload(3, 4, vec![PayoutEntry { user: user_key(1), amounts: vec![(A, u128::MAX)] }], k1.vk());
        p.positions.push(PositionImage { pool: id, position: LiquidityPosition::tombstone(Default::default(), user_key(2)) });
        p.signature = sign(&k0, &p.signing_bytes());
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<SyncPayload>(&s).unwrap(), p);
        assert_eq!(p.main_size(), ByteSize::from_bytes(352 + 416 + 192));
    }
}

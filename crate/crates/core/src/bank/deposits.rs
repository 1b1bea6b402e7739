use std::collections::BTreeMap;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::ids::{PublicKey, TokenId};
use crate::TokenAmount;

/// Per-user, per-token balances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Balances(pub BTreeMap<(PublicKey, TokenId), TokenAmount>);

impl Balances {
    pub fn get(&self, user: &PublicKey, token: TokenId) -> TokenAmount {
        self.0.get(&(*user, token)).copied().unwrap_or(0)
    }

    pub fn credit(&mut self, user: PublicKey, token: TokenId, amount: TokenAmount) {
        if amount == 0 {
            return;
        }
        *self.0.entry((user, token)).or_insert(0) += amount;
    }

    /// Removes `amount`, failing without change if the balance is short.
    pub fn debit(&mut self, user: &PublicKey, token: TokenId, amount: TokenAmount) -> bool {
        if amount == 0 {
            return true;
        }
        match self.0.get_mut(&(*user, token)) {
            Some(b) if *b >= amount => {
                *b -= amount;
                if *b == 0 {
                    self.0.remove(&(*user, token));
                }
                true
            }
            _ => false,
        }
    }

    pub fn merge(&mut self, other: &Balances) {
        for (&(u, t), &a) in &other.0 {
            self.credit(u, t, a);
        }
    }

    pub fn total(&self, token: TokenId) -> TokenAmount {
        self.0.iter().filter(|((_, t), _)| *t == token).map(|(_, a)| a).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PublicKey, TokenId, TokenAmount)> {
        self.0.iter().map(|((u, t), a)| (u, *t, *a))
    }

    pub fn users(&self) -> impl Iterator<Item = &PublicKey> {
        let mut last = None;
        self.0.keys().filter_map(move |(u, _)| {
            if last == Some(u) {
                None
            } else {
                last = Some(u);
                Some(u)
            }
        })
    }
}

impl Serialize for Balances {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, String> = self.0.iter().map(|((u, t), a)| (format!("{u}/{}", t.0), a.to_string())).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Balances {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = BTreeMap::<String, String>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in m {
            let (u, t) = k.split_once('/').ok_or_else(|| de::Error::custom("balance key must be user/token"))?;
            let user = PublicKey::from_hex(u).map_err(de::Error::custom)?;
            let token = TokenId(t.parse().map_err(de::Error::custom)?);
            out.insert((user, token), v.parse().map_err(de::Error::custom)?);
        }
        Ok(Balances(out))
    }
}

/// Deposits keyed by the epoch in which they become spendable.
///
/// A deposit confirmed during epoch `e` lands under `e + 1` (or a later
/// requested epoch). The sync covering epoch `e` consumes the `e` entry.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositBook {
    #[serde(with = "epoch_keys")]
    by_epoch: BTreeMap<u64, Balances>,
}

impl DepositBook {
    pub fn credit(&mut self, epoch: u64, user: PublicKey, token: TokenId, amount: TokenAmount) {
        self.by_epoch.entry(epoch).or_default().credit(user, token, amount);
    }

    /// Balances spendable in `epoch`.
    pub fn spendable(&self, epoch: u64) -> Balances {
        self.by_epoch.get(&epoch).cloned().unwrap_or_default()
    }

    /// Removes and returns the balances for `epoch`.
    pub fn take(&mut self, epoch: u64) -> Balances {
        self.by_epoch.remove(&epoch).unwrap_or_default()
    }

    /// Balances activating after `epoch`.
    pub fn pending_after(&self, epoch: u64) -> Balances {
        let mut out = Balances::default();
        for (_, b) in self.by_epoch.range(epoch + 1..) {
            out.merge(b);
        }
        out
    }

    pub fn total(&self, token: TokenId) -> TokenAmount {
        self.by_epoch.values().map(|b| b.total(token)).sum()
    }

    pub fn epochs(&self) -> impl Iterator<Item = (u64, &Balances)> {
        self.by_epoch.iter().map(|(e, b)| (*e, b))
    }

    pub fn is_empty(&self) -> bool {
        self.by_epoch.values().all(Balances::is_empty)
    }
}

mod epoch_keys {
    use super::*;

    pub fn serialize<S: Serializer>(m: &BTreeMap<u64, Balances>, s: S) -> Result<S::Ok, S::Error> {
        // Zero-padded so lexicographic key order matches numeric order.
        let m: BTreeMap<String, &Balances> = m.iter().map(|(e, b)| (format!("{e:020}"), b)).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u64, Balances>, D::Error> {
        let m = BTreeMap::<String, Balances>::deserialize(d)?;
        m.into_iter().map(|(k, v)| Ok((k.parse().map_err(de::Error::custom)?, v))).collect()
    }
}

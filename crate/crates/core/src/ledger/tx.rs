use serde::{Deserialize, Serialize};

use crate::amm::{PriceLimit, TickRange};
use crate::ids::{Encoder, Hash32, PoolId, PositionId, PublicKey, TokenId};
use crate::num::{decimal, ByteSize};
use crate::TokenAmount;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    SwapExactIn,
    SwapExactOut,
    Mint,
    Burn,
    Collect,
}

impl TxKind {
    pub const ALL: [TxKind; 5] = [TxKind::SwapExactIn, TxKind::SwapExactOut, TxKind::Mint, TxKind::Burn, TxKind::Collect];

    /// Average encoded size of the equivalent mainchain transaction.
    pub fn default_size(self) -> ByteSize {
        ByteSize::from_centibytes(match self {
            TxKind::SwapExactIn | TxKind::SwapExactOut => 100_783,
            TxKind::Mint => 81_449,
            TxKind::Burn => 90_707,
            TxKind::Collect => 92_180,
        })
    }

    pub fn is_swap(self) -> bool {
        matches!(self, TxKind::SwapExactIn | TxKind::SwapExactOut)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxBody {
    SwapExactIn {
        pool: PoolId,
        token_in: TokenId,
        #[serde(with = "decimal")]
        amount_in: TokenAmount,
        #[serde(with = "decimal")]
        min_out: TokenAmount,
        price_limit: Option<PriceLimit>,
        deadline: u64,
    },
    SwapExactOut {
        pool: PoolId,
        token_out: TokenId,
        #[serde(with = "decimal")]
        amount_out: TokenAmount,
        #[serde(with = "decimal")]
        max_in: TokenAmount,
        price_limit: Option<PriceLimit>,
        deadline: u64,
    },
    Mint {
        pool: PoolId,
        #[serde(with = "decimal")]
        desired_a: TokenAmount,
        #[serde(with = "decimal")]
        desired_b: TokenAmount,
        range: TickRange,
        existing: Option<PositionId>,
    },
    Burn {
        pool: PoolId,
        position: PositionId,
        #[serde(with = "decimal")]
        amount_a: TokenAmount,
        #[serde(with = "decimal")]
        amount_b: TokenAmount,
    },
    Collect {
        pool: PoolId,
        position: PositionId,
        #[serde(with = "decimal")]
        amount_a: TokenAmount,
        #[serde(with = "decimal")]
        amount_b: TokenAmount,
    },
}

impl TxBody {
    pub fn kind(&self) -> TxKind {
        match self {
            TxBody::SwapExactIn { .. } => TxKind::SwapExactIn,
            TxBody::SwapExactOut { .. } => TxKind::SwapExactOut,
            TxBody::Mint { .. } => TxKind::Mint,
            TxBody::Burn { .. } => TxKind::Burn,
            TxBody::Collect { .. } => TxKind::Collect,
        }
    }

    pub fn pool(&self) -> &PoolId {
        match self {
            TxBody::SwapExactIn { pool, .. }
            | TxBody::SwapExactOut { pool, .. }
            | TxBody::Mint { pool, .. }
            | TxBody::Burn { pool, .. }
            | TxBody::Collect { pool, .. } => pool,
        }
    }

    fn encode(&self, e: &mut Encoder) {
        let limit = |e: &mut Encoder, l: &Option<PriceLimit>| {
            e.option(l.as_ref(), |e, l| {
                e.amount(l.num).amount(l.den);
            });
        };
        match self {
            TxBody::SwapExactIn { pool, token_in, amount_in, min_out, price_limit, deadline } => {
                e.tag("swap_in").fixed(&pool.0).u32(token_in.0).amount(*amount_in).amount(*min_out);
                limit(e, price_limit);
                e.u64(*deadline);
            }
            TxBody::SwapExactOut { pool, token_out, amount_out, max_in, price_limit, deadline } => {
                e.tag("swap_out").fixed(&pool.0).u32(token_out.0).amount(*amount_out).amount(*max_in);
                limit(e, price_limit);
                e.u64(*deadline);
            }
            TxBody::Mint { pool, desired_a, desired_b, range, existing } => {
                e.tag("mint").fixed(&pool.0).amount(*desired_a).amount(*desired_b).i32(range.lower).i32(range.upper).option(
                    existing.as_ref(),
                    |e, id| {
                        e.fixed(&id.0);
                    },
                );
            }
            TxBody::Burn { pool, position, amount_a, amount_b } => {
                e.tag("burn").fixed(&pool.0).fixed(&position.0).amount(*amount_a).amount(*amount_b);
            }
            TxBody::Collect { pool, position, amount_a, amount_b } => {
                e.tag("collect").fixed(&pool.0).fixed(&position.0).amount(*amount_a).amount(*amount_b);
            }
        }
    }
}

/// A sidechain transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidechainTx {
    /// Sequence number, unique within a run.
    pub id: u64,
    pub issuer: PublicKey,
    pub body: TxBody,
    pub size: ByteSize,
    pub submit_round: u64,
}

impl SidechainTx {
    pub fn new(id: u64, issuer: PublicKey, body: TxBody, submit_round: u64) -> Self {
        let size = body.kind().default_size();
        SidechainTx { id, issuer, body, size, submit_round }
    }

    pub fn kind(&self) -> TxKind {
        self.body.kind()
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.tag("tx").u64(self.id).fixed(&self.issuer.0);
        self.body.encode(e);
        e.u64(self.size.centibytes()).u64(self.submit_round);
    }

    pub fn hash(&self) -> Hash32 {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::user_key;

    fn swap(amount_in: TokenAmount) -> SidechainTx {
        SidechainTx::new(
            1,
            user_key(1),
            TxBody::SwapExactIn {
                pool: PoolId([1; 32]),
                token_in: TokenId(1),
                amount_in,
                min_out: 0,
                price_limit: None,
                deadline: 9,
            },
            3,
        )
    }

    #[test]
    fn hash_binds_every_field() {
        let a = swap(5);
        assert_eq!(a.hash(), swap(5).hash());
        assert_ne!(a.hash(), swap(6).hash());
        let mut b = a.clone();
        b.submit_round = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn default_sizes() {
        assert_eq!(swap(1).size.to_string(), "1007.83 B");
        assert_eq!(TxKind::Collect.default_size().to_string(), "921.80 B");
    }

    #[test]
    fn json_round_trip() {
        let t = swap(u128::MAX);
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"kind\":\"swap_exact_in\""));
        assert_eq!(serde_json::from_str::<SidechainTx>(&s).unwrap(), t);
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tick::{tick_of, TickRange, MAX_TICK, MIN_TICK};
use super::{EngineError, Result, PPM};
use crate::ids::{hash_parts, PositionId, PublicKey, TokenId};
use crate::num::{decimal, mul_div, mul_div_ceil, Amount};

/// Which side of the pair a token sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// A liquidity position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Position<A: Amount = u128> {
    pub id: PositionId,
    pub owner: PublicKey,
    /// Amounts contributed per token.
    #[serde(with = "decimal")]
    pub amount_a: A,
    #[serde(with = "decimal")]
    pub amount_b: A,
    #[serde(with = "decimal")]
    pub liquidity: A,
    pub range: TickRange,
    /// Accrued, uncollected fees.
    #[serde(with = "decimal")]
    pub fees_a: A,
    #[serde(with = "decimal")]
    pub fees_b: A,
}

impl<A: Amount> Position<A> {
    pub fn id_for(tx_hash: &[u8; 32], owner: &PublicKey) -> PositionId {
        PositionId(hash_parts("position", &[tx_hash, owner.as_bytes()]))
    }

    /// An image with no balance and no fees stands for a deleted position.
    pub fn is_empty(&self) -> bool {
        self.amount_a.is_zero() && self.amount_b.is_zero() && self.fees_a.is_zero() && self.fees_b.is_zero()
    }

    pub fn tombstone(id: PositionId, owner: PublicKey) -> Self {
        Position {
            id,
            owner,
            amount_a: A::zero(),
            amount_b: A::zero(),
            liquidity: A::zero(),
            range: TickRange::FULL,
            fees_a: A::zero(),
            fees_b: A::zero(),
        }
    }

    pub fn fees(&self, side: Side) -> A {
        match side {
            Side::A => self.fees_a,
            Side::B => self.fees_b,
        }
    }
}

/// Lower bound on the post-trade price of the input token, in output
/// units per input unit: the trade must leave
/// `reserve_out · den ≥ num · reserve_in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PriceLimit<A: Amount = u128> {
    #[serde(with = "decimal")]
    pub num: A,
    #[serde(with = "decimal")]
    pub den: A,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapResult<A: Amount = u128> {
    pub token_in: TokenId,
    pub token_out: TokenId,
    pub amount_in_charged: A,
    pub amount_out: A,
    pub fee_paid: A,
    /// `(position, fee_a_delta, fee_b_delta)` for every in-range position.
    pub positions_credited: Vec<(PositionId, A, A)>,
    /// Tick at which the fee was distributed.
    pub tick_before: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MintOutcome<A: Amount = u128> {
    pub position: Position<A>,
    pub liquidity_added: A,
    pub used_a: A,
    pub used_b: A,
    pub created: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BurnOutcome<A: Amount = u128> {
    pub withdrawn_a: A,
    pub withdrawn_b: A,
    pub fees_a: A,
    pub fees_b: A,
    pub liquidity_removed: A,
    pub position_deleted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollectOutcome<A: Amount = u128> {
    pub paid_a: A,
    pub paid_b: A,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PoolState<A: Amount = u128> {
    pub token_a: TokenId,
    pub token_b: TokenId,
    #[serde(with = "decimal")]
    pub reserve_a: A,
    #[serde(with = "decimal")]
    pub reserve_b: A,
    #[serde(with = "decimal")]
    pub total_liquidity: A,
    pub fee_rate_ppm: u32,
    pub current_tick: i32,
    pub positions: BTreeMap<PositionId, Position<A>>,
}

fn ck<T>(v: Option<T>) -> Result<T> {
    v.ok_or(EngineError::Overflow)
}

impl<A: Amount> PoolState<A> {
    pub fn new(token_a: TokenId, token_b: TokenId, fee_rate_ppm: u32) -> Result<Self> {
        if fee_rate_ppm >= PPM {
            return Err(EngineError::BadFeeRate);
        }
        Ok(PoolState {
            token_a,
            token_b,
            reserve_a: A::zero(),
            reserve_b: A::zero(),
            total_liquidity: A::zero(),
            fee_rate_ppm,
            current_tick: 0,
            positions: BTreeMap::new(),
        })
    }

    pub fn side_of(&self, token: TokenId) -> Result<Side> {
        if token == self.token_a {
            Ok(Side::A)
        } else if token == self.token_b {
            Ok(Side::B)
        } else {
            Err(EngineError::UnknownToken)
        }
    }

    pub fn token(&self, side: Side) -> TokenId {
        match side {
            Side::A => self.token_a,
            Side::B => self.token_b,
        }
    }

    pub fn reserve(&self, side: Side) -> A {
        match side {
            Side::A => self.reserve_a,
            Side::B => self.reserve_b,
        }
    }

    /// Recomputes derived fields after external edits to reserves or positions.
    pub fn refresh(&mut self) -> Result<()> {
        let mut total = A::zero();
        for p in self.positions.values() {
            total = ck(total.checked_add(&p.liquidity))?;
        }
        self.total_liquidity = total;
        self.current_tick = tick_of(self.reserve_a, self.reserve_b);
        Ok(())
    }

    fn fee_rate(&self) -> A {
        A::from_u32(self.fee_rate_ppm).expect("fee rate fits every amount type")
    }

    fn ppm() -> A {
        A::from_u32(PPM).expect("ppm fits every amount type")
    }

    /// Splits the input-side fee of an input of `gross` into `(effective, fee)`.
    pub fn split_fee(&self, gross: A) -> Result<(A, A)> {
        let eff = ck(mul_div(gross, Self::ppm() - self.fee_rate(), Self::ppm()))?;
        Ok((eff, gross - eff))
    }

    fn out_for_effective(r_in: A, r_out: A, eff: A) -> Result<A> {
        let denom = ck(r_in.checked_add(&eff))?;
        ck(mul_div(r_out, eff, denom))
    }

    /// Output and fee for an exact input, without touching state.
    pub fn quote_exact_input(&self, side_in: Side, amount_in: A) -> Result<(A, A, A)> {
        let (r_in, r_out) = (self.reserve(side_in), self.reserve(side_in.other()));
        if r_in.is_zero() || r_out.is_zero() {
            return Err(EngineError::InsufficientReserve);
        }
        let (eff, fee) = self.split_fee(amount_in)?;
        let out = Self::out_for_effective(r_in, r_out, eff)?;
        Ok((eff, fee, out))
    }

    /// Smallest gross input whose exact-input quote yields at least `amount_out`.
    pub fn quote_exact_output(&self, side_out: Side, amount_out: A) -> Result<A> {
        let side_in = side_out.other();
        let (r_in, r_out) = (self.reserve(side_in), self.reserve(side_out));
        if r_in.is_zero() || amount_out >= r_out {
            return Err(EngineError::InsufficientReserve);
        }
        let yields = |gross: A| -> Result<bool> {
            let (eff, _) = self.split_fee(gross)?;
            Ok(Self::out_for_effective(r_in, r_out, eff)? >= amount_out)
        };
        // Closed-form starting bound, widened if flooring leaves it short.
        let eff_min = ck(mul_div_ceil(r_in, amount_out, r_out - amount_out))?;
        let mut hi = ck(mul_div_ceil(eff_min, Self::ppm(), Self::ppm() - self.fee_rate()))?.max(A::one());
        while !yields(hi)? {
            hi = ck(hi.checked_mul(&A::from_u8(2).unwrap()))?;
        }
        let mut lo = A::one();
        while lo < hi {
            let mid = lo + (hi - lo) / A::from_u8(2).unwrap();
            if yields(mid)? {
                hi = mid;
            } else {
                lo = mid + A::one();
            }
        }
        Ok(lo)
    }

    /// Tick interval within which swaps may move the price: bounded by the
    /// nearest position boundaries around `tick`.
    pub fn active_bounds(&self, tick: i32) -> (i32, i32) {
        let mut lo = MIN_TICK;
        let mut hi = MAX_TICK;
        for p in self.positions.values() {
            for b in [p.range.lower, p.range.upper] {
                if b <= tick {
                    lo = lo.max(b);
                } else {
                    hi = hi.min(b);
                }
            }
        }
        (lo, hi)
    }

    /// Proportional fee split over positions whose range contains `tick`.
    /// The flooring remainder goes to the largest in-range position, ties to
    /// the smallest id.
    pub fn distribute_fee(&self, fee: A, tick: i32) -> Result<Vec<(PositionId, A)>> {
        let in_range: Vec<&Position<A>> =
            self.positions.values().filter(|p| p.range.contains(tick) && !p.liquidity.is_zero()).collect();
        let mut active = A::zero();
        for p in &in_range {
            active = ck(active.checked_add(&p.liquidity))?;
        }
        if active.is_zero() {
            return if fee.is_zero() { Ok(Vec::new()) } else { Err(EngineError::NoActiveLiquidity) };
        }
        let mut out = Vec::with_capacity(in_range.len());
        let mut assigned = A::zero();
        let mut largest = 0usize;
        for (i, p) in in_range.iter().enumerate() {
            let d = ck(mul_div(fee, p.liquidity, active))?;
            assigned = assigned + d;
            if p.liquidity > in_range[largest].liquidity {
                largest = i;
            }
            out.push((p.id, d));
        }
        out[largest].1 = out[largest].1 + (fee - assigned);
        Ok(out)
    }

    fn check_live(deadline: u64, now: u64) -> Result<()> {
        if now > deadline {
            Err(EngineError::ExpiredDeadline)
        } else {
            Ok(())
        }
    }

    pub fn swap_exact_input(
        &mut self,
        token_in: TokenId,
        amount_in: A,
        min_out: A,
        price_limit: Option<PriceLimit<A>>,
        deadline: u64,
        now: u64,
    ) -> Result<SwapResult<A>> {
        Self::check_live(deadline, now)?;
        if amount_in.is_zero() {
            return Err(EngineError::ZeroAmount);
        }
        let side_in = self.side_of(token_in)?;
        let (eff, fee, out) = self.quote_exact_input(side_in, amount_in)?;
        if out < min_out {
            return Err(EngineError::SlippageExceeded);
        }
        self.commit_swap(side_in, amount_in, eff, fee, out, price_limit)
    }

    pub fn swap_exact_output(
        &mut self,
        token_out: TokenId,
        amount_out: A,
        max_in: A,
        price_limit: Option<PriceLimit<A>>,
        deadline: u64,
        now: u64,
    ) -> Result<SwapResult<A>> {
        Self::check_live(deadline, now)?;
        if amount_out.is_zero() {
            return Err(EngineError::ZeroAmount);
        }
        let side_out = self.side_of(token_out)?;
        let gross = self.quote_exact_output(side_out, amount_out)?;
        if gross > max_in {
            return Err(EngineError::SlippageExceeded);
        }
        let (eff, fee) = self.split_fee(gross)?;
        self.commit_swap(side_out.other(), gross, eff, fee, amount_out, price_limit)
    }

    fn commit_swap(
        &mut self,
        side_in: Side,
        gross: A,
        eff: A,
        fee: A,
        out: A,
        price_limit: Option<PriceLimit<A>>,
    ) -> Result<SwapResult<A>> {
        let side_out = side_in.other();
        let new_in = ck(self.reserve(side_in).checked_add(&eff))?;
        let new_out = self.reserve(side_out).checked_sub(&out).ok_or(EngineError::InsufficientReserve)?;
        if new_out.is_zero() {
            return Err(EngineError::InsufficientReserve);
        }
        if let Some(limit) = price_limit {
            let lhs = ck(new_out.checked_mul(&limit.den))?;
            let rhs = ck(limit.num.checked_mul(&new_in))?;
            if lhs < rhs {
                return Err(EngineError::PriceLimitHit);
            }
        }
        let (new_a, new_b) = match side_in {
            Side::A => (new_in, new_out),
            Side::B => (new_out, new_in),
        };
        let tick_before = self.current_tick;
        let new_tick = tick_of(new_a, new_b);
        let (lo, hi) = self.active_bounds(tick_before);
        if new_tick < lo || new_tick >= hi {
            return Err(EngineError::PriceLimitHit);
        }
        let shares = self.distribute_fee(fee, tick_before)?;
        // Shares come in id order, so both passes walk the positions once.
        let matched = |ps: &mut dyn Iterator<Item = (PositionId, A)>, shares: &[(PositionId, A)]| {
            let mut k = 0;
            let mut out = Vec::with_capacity(shares.len());
            for (id, f) in ps {
                if k < shares.len() && shares[k].0 == id {
                    out.push((f, shares[k].1));
                    k += 1;
                }
            }
            out
        };
        let current = matched(&mut self.positions.values().map(|p| (p.id, p.fees(side_in))), &shares);
        for (f, d) in current {
            ck(f.checked_add(&d))?;
        }
        let mut credited = Vec::with_capacity(shares.len());
        let mut k = 0;
        for p in self.positions.values_mut() {
            if k == shares.len() {
                break;
            }
            if shares[k].0 != p.id {
                continue;
            }
            let d = shares[k].1;
            k += 1;
            match side_in {
                Side::A => {
                    p.fees_a = p.fees_a + d;
                    credited.push((p.id, d, A::zero()));
                }
                Side::B => {
                    p.fees_b = p.fees_b + d;
                    credited.push((p.id, A::zero(), d));
                }
            }
        }
        self.reserve_a = new_a;
        self.reserve_b = new_b;
        self.current_tick = new_tick;
        Ok(SwapResult {
            token_in: self.token(side_in),
            token_out: self.token(side_out),
            amount_in_charged: gross,
            amount_out: out,
            fee_paid: fee,
            positions_credited: credited,
            tick_before,
        })
    }

    /// Adds liquidity, creating a position or topping up `existing`.
    pub fn mint(
        &mut self,
        owner: PublicKey,
        desired_a: A,
        desired_b: A,
        range: TickRange,
        existing: Option<PositionId>,
        tx_hash: &[u8; 32],
    ) -> Result<MintOutcome<A>> {
        if !range.is_valid() {
            return Err(EngineError::BadRange);
        }
        if let Some(id) = existing {
            let p = self.positions.get(&id).ok_or(EngineError::UnknownPosition)?;
            if p.owner != owner {
                return Err(EngineError::NotOwner);
            }
        }
        let (liquidity, used_a, used_b) = if self.total_liquidity.is_zero() {
            let product = ck(desired_a.checked_mul(&desired_b))?;
            (product.isqrt(), desired_a, desired_b)
        } else {
            let (ra, rb, lt) = (self.reserve_a, self.reserve_b, self.total_liquidity);
            if ra.is_zero() || rb.is_zero() {
                return Err(EngineError::InsufficientReserve);
            }
            let l = ck(mul_div(desired_a, lt, ra))?.min(ck(mul_div(desired_b, lt, rb))?);
            (l, ck(mul_div_ceil(l, ra, lt))?, ck(mul_div_ceil(l, rb, lt))?)
        };
        if liquidity.is_zero() {
            return Err(EngineError::ZeroLiquidity);
        }
        let new_ra = ck(self.reserve_a.checked_add(&used_a))?;
        let new_rb = ck(self.reserve_b.checked_add(&used_b))?;
        let new_total = ck(self.total_liquidity.checked_add(&liquidity))?;
        let (position, created) = match existing {
            Some(id) => {
                let mut p = self.positions[&id].clone();
                p.amount_a = ck(p.amount_a.checked_add(&used_a))?;
                p.amount_b = ck(p.amount_b.checked_add(&used_b))?;
                p.liquidity = ck(p.liquidity.checked_add(&liquidity))?;
                p.range = range;
                (p, false)
            }
            None => {
                let id = Position::<A>::id_for(tx_hash, &owner);
                if self.positions.contains_key(&id) {
                    return Err(EngineError::DuplicatePosition);
                }
                let p = Position {
                    id,
                    owner,
                    amount_a: used_a,
                    amount_b: used_b,
                    liquidity,
                    range,
                    fees_a: A::zero(),
                    fees_b: A::zero(),
                };
                (p, true)
            }
        };
        self.positions.insert(position.id, position.clone());
        self.reserve_a = new_ra;
        self.reserve_b = new_rb;
        self.total_liquidity = new_total;
        self.current_tick = tick_of(new_ra, new_rb);
        Ok(MintOutcome { position, liquidity_added: liquidity, used_a, used_b, created })
    }

    fn owned(&self, caller: &PublicKey, id: &PositionId) -> Result<&Position<A>> {
        let p = self.positions.get(id).ok_or(EngineError::UnknownPosition)?;
        if &p.owner != caller {
            return Err(EngineError::NotOwner);
        }
        Ok(p)
    }

    /// Withdraws up to the requested amounts. Emptying a position deletes it
    /// and pays out its accrued fees.
    pub fn burn(&mut self, caller: &PublicKey, id: &PositionId, requested_a: A, requested_b: A) -> Result<BurnOutcome<A>> {
        let p = self.owned(caller, id)?;
        let wa = requested_a.min(p.amount_a);
        let wb = requested_b.min(p.amount_b);
        let rem_a = p.amount_a - wa;
        let rem_b = p.amount_b - wb;
        let deleted = rem_a.is_zero() && rem_b.is_zero();
        let new_liquidity = if deleted {
            A::zero()
        } else {
            let mut l = p.liquidity;
            for (orig, rem) in [(p.amount_a, rem_a), (p.amount_b, rem_b)] {
                if !orig.is_zero() {
                    l = l.min(ck(mul_div(p.liquidity, rem, orig))?);
                }
            }
            l
        };
        let removed = p.liquidity - new_liquidity;
        let (fees_a, fees_b) = if deleted { (p.fees_a, p.fees_b) } else { (A::zero(), A::zero()) };
        let new_ra = self.reserve_a.checked_sub(&wa).ok_or(EngineError::InsufficientReserve)?;
        let new_rb = self.reserve_b.checked_sub(&wb).ok_or(EngineError::InsufficientReserve)?;
        let new_total = self.total_liquidity - removed;
        if !new_total.is_zero() && (new_ra.is_zero() || new_rb.is_zero()) {
            return Err(EngineError::InsufficientReserve);
        }
        if deleted {
            self.positions.remove(id);
        } else {
            let p = self.positions.get_mut(id).expect("checked above");
            p.amount_a = rem_a;
            p.amount_b = rem_b;
            p.liquidity = new_liquidity;
        }
        self.reserve_a = new_ra;
        self.reserve_b = new_rb;
        self.total_liquidity = new_total;
        self.current_tick = tick_of(new_ra, new_rb);
        Ok(BurnOutcome {
            withdrawn_a: wa,
            withdrawn_b: wb,
            fees_a,
            fees_b,
            liquidity_removed: removed,
            position_deleted: deleted,
        })
    }

    /// Pays out up to the requested accrued fees.
    pub fn collect(&mut self, caller: &PublicKey, id: &PositionId, want_a: A, want_b: A) -> Result<CollectOutcome<A>> {
        let p = self.owned(caller, id)?;
        let paid_a = want_a.min(p.fees_a);
        let paid_b = want_b.min(p.fees_b);
        let p = self.positions.get_mut(id).expect("checked above");
        p.fees_a = p.fees_a - paid_a;
        p.fees_b = p.fees_b - paid_b;
        Ok(CollectOutcome { paid_a, paid_b })
    }

    /// Sum of accrued fees across positions, per side.
    pub fn fees_owed(&self) -> Result<(A, A)> {
        let mut fa = A::zero();
        let mut fb = A::zero();
        for p in self.positions.values() {
            fa = ck(fa.checked_add(&p.fees_a))?;
            fb = ck(fb.checked_add(&p.fees_b))?;
        }
        Ok((fa, fb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: TokenId = TokenId(1);
    const B: TokenId = TokenId(2);

    fn key(i: u8) -> PublicKey {
        PublicKey([i; 32])
    }

    fn pool(ra: u128, rb: u128, fee: u32) -> PoolState {
        let mut p = PoolState::new(A, B, fee).unwrap();
        let l = (ra * rb).isqrt();
        let pos = Position {
            id: PositionId([0xee; 32]),
            owner: key(0xee),
            amount_a: ra,
            amount_b: rb,
            liquidity: l,
            range: TickRange::FULL,
            fees_a: 0,
            fees_b: 0,
        };
        p.positions.insert(pos.id, pos);
        p.reserve_a = ra;
        p.reserve_b = rb;
        p.refresh().unwrap();
        p
    }

    #[test]
    fn exact_input_fee_free() {
        let mut p = pool(1000, 1000, 0);
        let r = p.swap_exact_input(A, 100, 0, None, 10, 0).unwrap();
        assert_eq!(r.amount_out, 90);
        assert_eq!((p.reserve_a, p.reserve_b), (1100, 910));
    }

    #[test]
    fn exact_input_with_fee() {
        let mut p = pool(1000, 1000, 3000);
        let r = p.swap_exact_input(A, 100, 0, None, 10, 0).unwrap();
        assert_eq!(r.amount_out, 90);
        assert_eq!(r.fee_paid, 1);
        assert_eq!(p.reserve_a, 1099);
        assert_eq!(p.positions.values().next().unwrap().fees_a, 1);
    }

    #[test]
    fn exact_input_guards() {
        let mut p = pool(1000, 1000, 3000);
        let before = p.clone();
        assert_eq!(p.swap_exact_input(A, 0, 0, None, 10, 0), Err(EngineError::ZeroAmount));
        assert_eq!(p.swap_exact_input(A, 10, 0, None, 10, 11), Err(EngineError::ExpiredDeadline));
        assert_eq!(p.swap_exact_input(A, 100, 91, None, 10, 0), Err(EngineError::SlippageExceeded));
        assert_eq!(p.swap_exact_input(TokenId(9), 100, 0, None, 10, 0), Err(EngineError::UnknownToken));
        let limit = PriceLimit { num: 9, den: 10 };
        assert_eq!(p.swap_exact_input(A, 100, 0, Some(limit), 10, 0), Err(EngineError::PriceLimitHit));
        assert_eq!(p, before);
        let loose = PriceLimit { num: 8, den: 10 };
        assert!(p.swap_exact_input(A, 100, 0, Some(loose), 10, 0).is_ok());
    }

    #[test]
    fn exact_output_examples() {
        let mut p = pool(1000, 1000, 0);
        assert_eq!(p.quote_exact_output(Side::B, 90).unwrap(), 99);
        assert_eq!(p.swap_exact_output(B, 90, 50, None, 10, 0), Err(EngineError::SlippageExceeded));
        assert_eq!(p.swap_exact_output(B, 1000, 10_000, None, 10, 0), Err(EngineError::InsufficientReserve));
        let r = p.swap_exact_output(B, 90, 200, None, 10, 0).unwrap();
        assert_eq!((r.amount_in_charged, r.amount_out), (99, 90));
        assert_eq!((p.reserve_a, p.reserve_b), (1099, 910));
    }

    #[test]
    fn mint_examples() {
        let mut p = PoolState::<u128>::new(A, B, 3000).unwrap();
        let m = p.mint(key(1), 400, 100, TickRange::FULL, None, &[1; 32]).unwrap();
        assert_eq!((m.liquidity_added, m.used_a, m.used_b), (200, 400, 100));
        assert!(m.created);

        let mut p = pool(1000, 1000, 3000);
        let m = p.mint(key(1), 100, 100, TickRange::FULL, None, &[1; 32]).unwrap();
        assert_eq!((m.liquidity_added, m.used_a, m.used_b), (100, 100, 100));
        assert_eq!(p.total_liquidity, 1100);
        assert_eq!(p.mint(key(1), 0, 0, TickRange::FULL, None, &[2; 32]), Err(EngineError::ZeroLiquidity));
        assert_eq!(p.mint(key(1), 5, 5, TickRange::new(3, 3), None, &[2; 32]), Err(EngineError::BadRange));
        assert_eq!(p.mint(key(2), 5, 5, TickRange::FULL, Some(m.position.id), &[2; 32]), Err(EngineError::NotOwner));
        assert_eq!(p.mint(key(1), 100, 100, TickRange::FULL, None, &[1; 32]), Err(EngineError::DuplicatePosition));
    }

    #[test]
    fn mint_uses_no_more_than_desired() {
        let mut p = pool(1000, 3000, 3000);
        let m = p.mint(key(1), 10, 10, TickRange::FULL, None, &[1; 32]).unwrap();
        assert_eq!((m.liquidity_added, m.used_a, m.used_b), (5, 3, 9));
    }

    #[test]
    fn mint_into_existing_position() {
        let mut p = pool(1000, 1000, 3000);
        let m = p.mint(key(1), 100, 100, TickRange::FULL, None, &[1; 32]).unwrap();
        let m2 = p.mint(key(1), 50, 50, TickRange::new(-100, 100), Some(m.position.id), &[9; 32]).unwrap();
        assert!(!m2.created);
        assert_eq!(m2.position.id, m.position.id);
        assert_eq!((m2.position.amount_a, m2.position.liquidity), (150, 150));
        assert_eq!(m2.position.range, TickRange::new(-100, 100));
    }

    #[test]
    fn burn_examples() {
        let mut p = pool(1000, 1000, 3000);
        let id = p.mint(key(1), 100, 100, TickRange::FULL, None, &[1; 32]).unwrap().position.id;
        p.positions.get_mut(&id).unwrap().fees_a = 3;
        assert_eq!(p.burn(&key(2), &id, 100, 100), Err(EngineError::NotOwner));
        assert_eq!(p.burn(&key(1), &PositionId([7; 32]), 1, 1), Err(EngineError::UnknownPosition));
        let noop = p.burn(&key(1), &id, 0, 0).unwrap();
        assert_eq!((noop.withdrawn_a, noop.withdrawn_b, noop.fees_a, noop.position_deleted), (0, 0, 0, false));
        let b = p.burn(&key(1), &id, 100, 100).unwrap();
        assert_eq!((b.withdrawn_a, b.withdrawn_b, b.fees_a, b.fees_b), (100, 100, 3, 0));
        assert!(b.position_deleted);
        assert!(!p.positions.contains_key(&id));
        assert_eq!((p.reserve_a, p.reserve_b, p.total_liquidity), (1000, 1000, 1000));
    }

    #[test]
    fn partial_burn_scales_liquidity() {
        let mut p = pool(1000, 1000, 3000);
        let id = p.mint(key(1), 100, 100, TickRange::FULL, None, &[1; 32]).unwrap().position.id;
        let b = p.burn(&key(1), &id, 40, 1000).unwrap();
        assert_eq!((b.withdrawn_a, b.withdrawn_b), (40, 100));
        assert!(!b.position_deleted);
        let pos = &p.positions[&id];
        assert_eq!((pos.amount_a, pos.amount_b, pos.liquidity), (60, 0, 0));
        assert_eq!(b.liquidity_removed, 100);
        let b = p.burn(&key(1), &id, 30, 0).unwrap();
        assert_eq!((b.withdrawn_a, b.position_deleted), (30, false));
    }

    #[test]
    fn collect_examples() {
        let mut p = pool(1000, 1000, 3000);
        let id = p.mint(key(1), 100, 100, TickRange::FULL, None, &[1; 32]).unwrap().position.id;
        {
            let pos = p.positions.get_mut(&id).unwrap();
            pos.fees_a = 5;
            pos.fees_b = 2;
        }
        let mut q = p.clone();
        assert_eq!(p.collect(&key(1), &id, 9, 9).unwrap(), CollectOutcome { paid_a: 5, paid_b: 2 });
        assert_eq!(q.collect(&key(1), &id, 0, 0).unwrap(), CollectOutcome { paid_a: 0, paid_b: 0 });
        assert_eq!(q.collect(&key(1), &id, 5, 2).unwrap(), CollectOutcome { paid_a: 5, paid_b: 2 });
        assert_eq!((q.positions[&id].fees_a, q.positions[&id].fees_b), (0, 0));
        assert_eq!(q.collect(&key(3), &id, 1, 1), Err(EngineError::NotOwner));
    }

    fn with_positions(ls: &[(u8, u128)]) -> PoolState {
        let mut p = PoolState::new(A, B, 3000).unwrap();
        for &(b, l) in ls {
            let pos = Position {
                id: PositionId([b; 32]),
                owner: key(b),
                amount_a: l,
                amount_b: l,
                liquidity: l,
                range: TickRange::FULL,
                fees_a: 0,
                fees_b: 0,
            };
            p.positions.insert(pos.id, pos);
        }
        p.reserve_a = 10_000;
        p.reserve_b = 10_000;
        p.refresh().unwrap();
        p
    }

    #[test]
    fn fee_split_examples() {
        let p = with_positions(&[(1, 600), (2, 400)]);
        assert_eq!(p.distribute_fee(10, 0).unwrap(), vec![(PositionId([1; 32]), 6), (PositionId([2; 32]), 4)]);
        assert!(p.distribute_fee(0, 0).unwrap().iter().all(|(_, d)| *d == 0));
        let p = with_positions(&[(1, 500), (2, 500)]);
        assert_eq!(p.distribute_fee(7, 0).unwrap(), vec![(PositionId([1; 32]), 4), (PositionId([2; 32]), 3)]);
        let p = with_positions(&[(1, 100), (2, 500)]);
        assert_eq!(p.distribute_fee(7, 0).unwrap(), vec![(PositionId([1; 32]), 1), (PositionId([2; 32]), 6)]);
    }

    #[test]
    fn fee_split_skips_out_of_range() {
        let mut p = with_positions(&[(1, 600), (2, 400)]);
        p.positions.get_mut(&PositionId([2; 32])).unwrap().range = TickRange::new(100, 200);
        assert_eq!(p.distribute_fee(10, 0).unwrap(), vec![(PositionId([1; 32]), 10)]);
        p.positions.get_mut(&PositionId([1; 32])).unwrap().range = TickRange::new(-200, -100);
        assert_eq!(p.distribute_fee(10, 0), Err(EngineError::NoActiveLiquidity));
        assert_eq!(p.distribute_fee(0, 0), Ok(vec![]));
    }

    #[test]
    fn swap_cannot_cross_range_edge() {
        let mut p = pool(100_000, 100_000, 3000);
        let id = p.mint(key(1), 1000, 1000, TickRange::new(-50, 50), None, &[1; 32]).unwrap().position.id;
        assert_eq!(p.active_bounds(0), (-50, 50));
        let before = p.clone();
        assert_eq!(p.swap_exact_input(A, 5_000, 0, None, 1, 0), Err(EngineError::PriceLimitHit));
        assert_eq!(p, before);
        let r = p.swap_exact_input(A, 100, 0, None, 1, 0).unwrap();
        assert!(r.positions_credited.iter().any(|(pid, _, _)| *pid == id));
    }

    #[test]
    fn bad_fee_rate_rejected() {
        assert_eq!(PoolState::<u128>::new(A, B, PPM).unwrap_err(), EngineError::BadFeeRate);
    }

    #[test]
    fn generic_over_u64() {
        let mut p = PoolState::<u64>::new(A, B, 0).unwrap();
        p.mint(key(1), 1000, 1000, TickRange::FULL, None, &[1; 32]).unwrap();
        let r = p.swap_exact_input(A, 100, 0, None, 1, 0).unwrap();
        assert_eq!(r.amount_out, 90u64);
    }

    #[test]
    fn json_uses_decimal_strings() {
        let p = pool(1000, 1000, 3000);
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["reserve_a"], serde_json::json!("1000"));
        let back: PoolState = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}

use l2amm_core::amm::{EngineError, PoolState, Position, Side, TickRange};
use l2amm_core::{PositionId, PublicKey, TokenId};
use proptest::prelude::*;

const A: TokenId = TokenId(1);
const B: TokenId = TokenId(2);

fn lp() -> PublicKey {
    PublicKey([0xaa; 32])
}

fn seeded(ra: u128, rb: u128, fee: u32) -> PoolState {
    let mut p = PoolState::new(A, B, fee).unwrap();
    p.mint(lp(), ra, rb, TickRange::FULL, None, &[0; 32]).unwrap();
    p
}

/// Independent closed-form output for an exact input.
fn oracle_out(ra: u128, rb: u128, fee: u32, dx: u128) -> u128 {
    let eff = dx * (1_000_000 - fee as u128) / 1_000_000;
    rb * eff / (ra + eff)
}

/// Smallest input by linear scan.
fn oracle_min_input(ra: u128, rb: u128, fee: u32, want: u128) -> Option<u128> {
    (1..).find(|&dx| oracle_out(ra, rb, fee, dx) >= want)
}

#[test]
fn exact_output_matches_linear_scan_on_small_pools() {
    for (ra, rb) in [(10u128, 10u128), (100, 37), (1000, 1000), (57, 941)] {
        for fee in [0u32, 3000, 10_000, 500_000] {
            let p = seeded(ra, rb, fee);
            for want in 1..rb {
                let got = p.quote_exact_output(Side::B, want).unwrap();
                assert_eq!(Some(got), oracle_min_input(ra, rb, fee, want), "ra={ra} rb={rb} fee={fee} want={want}");
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    SwapIn(bool, u128),
    SwapOut(bool, u128),
    Mint(u8, u128, u128),
    Burn(u8, u128, u128),
    Collect(u8, u128, u128),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (any::<bool>(), 1u128..5_000).prop_map(|(d, x)| Op::SwapIn(d, x)),
        2 => (any::<bool>(), 1u128..3_000).prop_map(|(d, x)| Op::SwapOut(d, x)),
        1 => (0u8..4, 0u128..5_000, 0u128..5_000).prop_map(|(u, a, b)| Op::Mint(u, a, b)),
        1 => (0u8..4, 0u128..5_000, 0u128..5_000).prop_map(|(u, a, b)| Op::Burn(u, a, b)),
        1 => (0u8..4, 0u128..50, 0u128..50).prop_map(|(u, a, b)| Op::Collect(u, a, b)),
    ]
}

fn user(u: u8) -> PublicKey {
    PublicKey([u + 1; 32])
}

fn first_position(p: &PoolState, owner: &PublicKey) -> Option<PositionId> {
    p.positions.values().find(|x| &x.owner == owner).map(|x| x.id)
}

#[derive(Default, Debug)]
struct Flows {
    in_a: u128,
    in_b: u128,
    out_a: u128,
    out_b: u128,
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn product_never_decreases_without_fee(ra in 1_000u128..1_000_000, rb in 1_000u128..1_000_000,
                                           swaps in prop::collection::vec((any::<bool>(), 1u128..10_000), 1..40)) {
        let mut p = seeded(ra, rb, 0);
        for (a_in, x) in swaps {
            let (r_in, before) = (if a_in { p.reserve_a } else { p.reserve_b }, p.reserve_a * p.reserve_b);
            let token = if a_in { A } else { B };
            if p.swap_exact_input(token, x, 0, None, 0, 0).is_ok() {
                let after = p.reserve_a * p.reserve_b;
                prop_assert!(after >= before);
                // Flooring of the output is the only source of growth.
                prop_assert!(after - before < r_in + x);
            }
        }
    }

    #[test]
    fn exact_output_is_minimal(ra in 10u128..10_000, rb in 10u128..10_000, fee in prop::sample::select(vec![0u32, 3000, 10_000]),
                               frac in 1u128..1000) {
        let p = seeded(ra, rb, fee);
        let want = (rb * frac / 1000).clamp(1, rb - 1);
        let dx = p.quote_exact_output(Side::B, want).unwrap();
        prop_assert_eq!(oracle_out(ra, rb, fee, dx) >= want, true);
        prop_assert!(dx == 1 || oracle_out(ra, rb, fee, dx - 1) < want);

        let mut q = p.clone();
        let r = q.swap_exact_output(B, want, u128::MAX, None, 0, 0).unwrap();
        let mut s = p.clone();
        let fwd = s.swap_exact_input(A, r.amount_in_charged, 0, None, 0, 0).unwrap();
        prop_assert!(fwd.amount_out >= want);
    }

    #[test]
    fn fee_paid_equals_credits(ra in 10_000u128..1_000_000, extra in prop::collection::vec((1u128..50_000, 1u128..50_000), 0..6),
                               x in 1u128..100_000, fee in 1u32..50_000) {
        let mut p = seeded(ra, ra, fee);
        for (i, (a, b)) in extra.into_iter().enumerate() {
            let _ = p.mint(user(i as u8), a, b, TickRange::FULL, None, &[i as u8 + 1; 32]);
        }
        let r = p.swap_exact_input(A, x, 0, None, 0, 0).unwrap();
        let credited: u128 = r.positions_credited.iter().map(|c| c.1).sum();
        prop_assert_eq!(credited, r.fee_paid);
        prop_assert!(r.positions_credited.iter().all(|c| c.2 == 0));
    }

    #[test]
    fn no_token_creation(ops in prop::collection::vec(op(), 1..80)) {
        let mut p = seeded(100_000, 100_000, 3000);
        let mut f = Flows { in_a: 100_000, in_b: 100_000, ..Default::default() };
        for (i, op) in ops.into_iter().enumerate() {
            let before = p.clone();
            match op {
                Op::SwapIn(a_in, x) => {
                    if let Ok(r) = p.swap_exact_input(if a_in { A } else { B }, x, 0, None, 0, 0) {
                        if a_in { f.in_a += x; f.out_b += r.amount_out } else { f.in_b += x; f.out_a += r.amount_out }
                    }
                }
                Op::SwapOut(a_out, x) => {
                    if let Ok(r) = p.swap_exact_output(if a_out { A } else { B }, x, u128::MAX, None, 0, 0) {
                        if a_out { f.in_b += r.amount_in_charged; f.out_a += x } else { f.in_a += r.amount_in_charged; f.out_b += x }
                    }
                }
                Op::Mint(u, a, b) => {
                    let existing = first_position(&p, &user(u));
                    let mut tx = [0u8; 32];
                    tx[..8].copy_from_slice(&(i as u64).to_be_bytes());
                    if let Ok(m) = p.mint(user(u), a, b, TickRange::FULL, existing, &tx) {
                        prop_assert!(m.used_a <= a && m.used_b <= b);
                        f.in_a += m.used_a;
                        f.in_b += m.used_b;
                    }
                }
                Op::Burn(u, a, b) => {
                    if let Some(id) = first_position(&p, &user(u)) {
                        if let Ok(r) = p.burn(&user(u), &id, a, b) {
                            f.out_a += r.withdrawn_a + r.fees_a;
                            f.out_b += r.withdrawn_b + r.fees_b;
                        }
                    }
                }
                Op::Collect(u, a, b) => {
                    if let Some(id) = first_position(&p, &user(u)) {
                        let r = p.collect(&user(u), &id, a, b).unwrap();
                        f.out_a += r.paid_a;
                        f.out_b += r.paid_b;
                    }
                }
            }
            let (fa, fb) = p.fees_owed().unwrap();
            // Everything paid in is either still held (reserves plus owed fees) or was paid out.
            prop_assert_eq!(f.in_a, p.reserve_a + fa + f.out_a, "token A after {:?}", before.reserve_a);
            prop_assert_eq!(f.in_b, p.reserve_b + fb + f.out_b);
            prop_assert!(p.positions.values().all(|x| x.range.lower < x.range.upper && !x.is_empty()));
        }
    }

    #[test]
    fn mint_burn_round_trip(ra in 1_000u128..10_000_000, rb in 1_000u128..10_000_000, a in 1u128..1_000_000, b in 1u128..1_000_000) {
        let mut p = seeded(ra, rb, 3000);
        let before = p.clone();
        let m = match p.mint(user(1), a, b, TickRange::FULL, None, &[9; 32]) {
            Ok(m) => m,
            Err(e) => { prop_assert_eq!(e, EngineError::ZeroLiquidity); return Ok(()); }
        };
        let r = p.burn(&user(1), &m.position.id, u128::MAX, u128::MAX).unwrap();
        prop_assert_eq!((r.withdrawn_a, r.withdrawn_b), (m.used_a, m.used_b));
        prop_assert!(r.position_deleted);
        prop_assert_eq!(p, before);
    }

    #[test]
    fn failed_operations_leave_pool_untouched(x in 1u128..10_000_000, limit_num in 1u128..2_000, deadline in 0u64..3) {
        let mut p = seeded(50_000, 50_000, 3000);
        p.positions.insert(PositionId([3; 32]), Position {
            id: PositionId([3; 32]), owner: user(3), amount_a: 10, amount_b: 10, liquidity: 10,
            range: TickRange::new(-2_000, 2_000), fees_a: 0, fees_b: 0,
        });
        p.refresh().unwrap();
        let before = p.clone();
        let limit = l2amm_core::amm::PriceLimit { num: limit_num, den: 1_000 };
        if p.swap_exact_input(A, x, 0, Some(limit), deadline, 1).is_err() {
            prop_assert_eq!(&p, &before);
        }
    }
}

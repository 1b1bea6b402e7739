use serde::{Deserialize, Serialize};

use crate::num::Amount;

pub const MIN_TICK: i32 = -887_272;
pub const MAX_TICK: i32 = 887_272;

/// Half-open tick interval `[lower, upper)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TickRange {
    pub lower: i32,
    pub upper: i32,
}

impl TickRange {
    pub const FULL: TickRange = TickRange { lower: MIN_TICK, upper: MAX_TICK };

    pub fn new(lower: i32, upper: i32) -> Self {
        TickRange { lower, upper }
    }

    pub fn is_valid(&self) -> bool {
        self.lower < self.upper && self.lower >= MIN_TICK && self.upper <= MAX_TICK
    }

    pub fn contains(&self, tick: i32) -> bool {
        self.lower <= tick && tick < self.upper
    }
}

impl Default for TickRange {
    fn default() -> Self {
        TickRange::FULL
    }
}

/// Tick of the price `reserve_b / reserve_a`: `⌊log_1.0001(price)⌋`, clamped to
/// the representable range. An empty side maps to tick 0.
pub fn tick_of<A: Amount>(reserve_a: A, reserve_b: A) -> i32 {
    if reserve_a.is_zero() || reserve_b.is_zero() {
        return 0;
    }
    let ra = reserve_a.to_f64().unwrap_or(f64::MAX);
    let rb = reserve_b.to_f64().unwrap_or(f64::MAX);
    let t = ((rb.ln() - ra.ln()) / 1.0001f64.ln()).floor();
    t.clamp(MIN_TICK as f64, (MAX_TICK - 1) as f64) as i32
}

//! Integer amount abstraction and byte-size accounting.

use std::fmt;
use std::hash::Hash;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, FromPrimitive, PrimInt, ToPrimitive, Unsigned};
use serde::{Deserialize, Serialize};

/// Unsigned integer type usable as a token amount.
///
/// All engine arithmetic goes through the checked operations, so an
/// implementation never wraps.
pub trait Amount:
    PrimInt
    + Unsigned
    + CheckedAdd
    + CheckedSub
    + CheckedMul
    + CheckedDiv
    + FromPrimitive
    + ToPrimitive
    + Default
    + Hash
    + fmt::Debug
    + fmt::Display
    + FromStr<Err = std::num::ParseIntError>
    + Send
    + Sync
    + 'static
{
    /// Width of the big-endian encoding.
    const BYTES: usize;

    fn write_be(self, out: &mut Vec<u8>);

    /// Floor of the square root.
    fn isqrt(self) -> Self {
        if self < Self::from_u8(2).unwrap() {
            return self;
        }
        let two = Self::from_u8(2).unwrap();
        // Start above the root so Newton iteration decreases monotonically.
        let bits = Self::BYTES as u32 * 8 - self.leading_zeros();
        let mut x = Self::one() << (bits / 2 + 1) as usize;
        loop {
            let y = (x + self / x) / two;
            if y >= x {
                return x;
            }
            x = y;
        }
    }
}

impl Amount for u64 {
    const BYTES: usize = 8;
    fn write_be(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }
}

impl Amount for u128 {
    const BYTES: usize = 16;
    fn write_be(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }
}

/// `⌊a·b/c⌋` with overflow reported as `None`.
pub fn mul_div<A: Amount>(a: A, b: A, c: A) -> Option<A> {
    a.checked_mul(&b)?.checked_div(&c)
}

/// `⌈a·b/c⌉` with overflow reported as `None`.
pub fn mul_div_ceil<A: Amount>(a: A, b: A, c: A) -> Option<A> {
    let p = a.checked_mul(&b)?;
    let q = p.checked_div(&c)?;
    if q * c == p {
        Some(q)
    } else {
        q.checked_add(&A::one())
    }
}

/// Serde helpers writing integers as decimal strings.
pub mod decimal {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// A byte count kept in hundredths of a byte so fractional average sizes
/// (such as 1007.83 B) add up exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ByteSize(pub u64);

impl ByteSize {
    pub const ZERO: ByteSize = ByteSize(0);

    pub const fn from_bytes(b: u64) -> Self {
        ByteSize(b * 100)
    }

    pub const fn from_centibytes(c: u64) -> Self {
        ByteSize(c)
    }

    /// Parses sizes such as `1007.83`, rounding to the nearest centibyte.
    pub fn from_f64(bytes: f64) -> Self {
        ByteSize((bytes * 100.0).round().max(0.0) as u64)
    }

    pub fn centibytes(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Whole bytes, rounding up.
    pub fn ceil_bytes(self) -> u64 {
        self.0.div_ceil(100)
    }
}

impl Add for ByteSize {
    type Output = ByteSize;
    fn add(self, rhs: ByteSize) -> ByteSize {
        ByteSize(self.0 + rhs.0)
    }
}

impl AddAssign for ByteSize {
    fn add_assign(&mut self, rhs: ByteSize) {
        self.0 += rhs.0;
    }
}

impl Sub for ByteSize {
    type Output = ByteSize;
    fn sub(self, rhs: ByteSize) -> ByteSize {
        ByteSize(self.0 - rhs.0)
    }
}

impl Mul<u64> for ByteSize {
    type Output = ByteSize;
    fn mul(self, rhs: u64) -> ByteSize {
        ByteSize(self.0 * rhs)
    }
}

impl std::iter::Sum for ByteSize {
    fn sum<I: Iterator<Item = ByteSize>>(iter: I) -> ByteSize {
        ByteSize(iter.map(|b| b.0).sum())
    }
}

impl fmt::Display for ByteSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02} B", self.0 / 100, self.0 % 100)
    }
}

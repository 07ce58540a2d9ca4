//! Exact decimal fixed-point numbers.
//!
//! A [`ScaledValue`] is an integer count of `10^-q` units. Every model
//! parameter, influence sum and compiled-network activation is stored this
//! way so that comparisons, digit shifts and digit-wise modulo are exact.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest supported number of fractional digits.
pub const MAX_PRECISION: u32 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaledError {
    #[error("literal {0:?} needs more than {1} fractional digits")]
    MoreThanQDigits(String, u32),
    #[error("literal {0:?} is negative")]
    Negative(String),
    #[error("malformed decimal literal {0:?}")]
    Malformed(String),
    #[error("precision {0} is outside 0..={MAX_PRECISION}")]
    UnsupportedPrecision(u32),
    #[error("value does not fit in 64-bit units")]
    Overflow,
    #[error("precision mismatch: {0} vs {1}")]
    PrecisionMismatch(u32, u32),
}

/// Exact decimal with `precision` fractional digits.
///
/// Equality and ordering compare real values, so `0.100` at precision 3
/// equals `0.1` at precision 1.
#[derive(Debug, Clone, Copy)]
pub struct ScaledValue {
    units: i64,
    precision: u32,
}

/// `10^k` as an `i64`; panics past `10^18`.
pub fn pow10(k: u32) -> i64 {
    10i64.checked_pow(k).expect("power of ten exceeds i64")
}

impl ScaledValue {
    pub fn from_units(units: i64, precision: u32) -> Self {
        debug_assert!(precision <= MAX_PRECISION);
        ScaledValue { units, precision }
    }

    pub fn zero(precision: u32) -> Self {
        Self::from_units(0, precision)
    }

    pub fn one(precision: u32) -> Self {
        Self::from_units(pow10(precision), precision)
    }

    /// The smallest positive value, `10^-q`.
    pub fn ulp(precision: u32) -> Self {
        Self::from_units(1, precision)
    }

    /// Integer `n` at precision `q`.
    pub fn from_int(n: i64, precision: u32) -> Result<Self, ScaledError> {
        n.checked_mul(pow10(precision))
            .map(|u| Self::from_units(u, precision))
            .ok_or(ScaledError::Overflow)
    }

    pub fn units(self) -> i64 {
        self.units
    }

    pub fn precision(self) -> u32 {
        self.precision
    }

    pub fn is_zero(self) -> bool {
        self.units == 0
    }

    pub fn is_negative(self) -> bool {
        self.units < 0
    }

    /// Parses a decimal literal such as `"0.467"` or `"1"`.
    pub fn from_decimal_str(text: &str, precision: u32) -> Result<Self, ScaledError> {
        if precision > MAX_PRECISION {
            return Err(ScaledError::UnsupportedPrecision(precision));
        }
        let malformed = || ScaledError::Malformed(text.to_string());
        let trimmed = text.trim();
        let (negative, body) = match trimmed.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(malformed());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        // Trailing zeros beyond the precision are still exact.
        let frac_significant = frac_part.trim_end_matches('0');
        if frac_significant.len() > precision as usize {
            return Err(ScaledError::MoreThanQDigits(text.to_string(), precision));
        }
        let mut units: i64 = 0;
        for b in int_part.bytes() {
            units = units
                .checked_mul(10)
                .and_then(|u| u.checked_add(i64::from(b - b'0')))
                .ok_or(ScaledError::Overflow)?;
        }
        units = units.checked_mul(pow10(precision)).ok_or(ScaledError::Overflow)?;
        let mut frac_units: i64 = 0;
        for (k, b) in frac_significant.bytes().enumerate() {
            frac_units += i64::from(b - b'0') * pow10(precision - 1 - k as u32);
        }
        units = units.checked_add(frac_units).ok_or(ScaledError::Overflow)?;
        Ok(Self::from_units(if negative { -units } else { units }, precision))
    }

    /// Like [`from_decimal_str`](Self::from_decimal_str) but rejects negative
    /// literals, as required for weights and thresholds.
    pub fn parse_nonneg(text: &str, precision: u32) -> Result<Self, ScaledError> {
        let v = Self::from_decimal_str(text, precision)?;
        if v.is_negative() {
            return Err(ScaledError::Negative(text.to_string()));
        }
        Ok(v)
    }

    fn same_precision(self, other: Self) -> Result<(), ScaledError> {
        if self.precision == other.precision {
            Ok(())
        } else {
            Err(ScaledError::PrecisionMismatch(self.precision, other.precision))
        }
    }

    pub fn checked_add(self, other: Self) -> Result<Self, ScaledError> {
        self.same_precision(other)?;
        self.units
            .checked_add(other.units)
            .map(|u| Self::from_units(u, self.precision))
            .ok_or(ScaledError::Overflow)
    }

    pub fn checked_sub(self, other: Self) -> Result<Self, ScaledError> {
        self.same_precision(other)?;
        self.units
            .checked_sub(other.units)
            .map(|u| Self::from_units(u, self.precision))
            .ok_or(ScaledError::Overflow)
    }

    /// Multiplies the value by `10^k`.
    pub fn mul_pow10(self, k: u32) -> Result<Self, ScaledError> {
        10i64
            .checked_pow(k)
            .and_then(|p| self.units.checked_mul(p))
            .map(|u| Self::from_units(u, self.precision))
            .ok_or(ScaledError::Overflow)
    }

    /// `self mod 10^k` on the real value, with a non-negative result.
    pub fn rem_pow10(self, k: u32) -> Result<Self, ScaledError> {
        let modulus = 10i64.checked_pow(k + self.precision).ok_or(ScaledError::Overflow)?;
        Ok(Self::from_units(self.units.rem_euclid(modulus), self.precision))
    }

    /// Re-expresses the value at another precision; fails if digits would be lost.
    pub fn rescale(self, precision: u32) -> Result<Self, ScaledError> {
        match precision.cmp(&self.precision) {
            Ordering::Equal => Ok(self),
            Ordering::Greater => {
                let p = pow10(precision - self.precision);
                self.units
                    .checked_mul(p)
                    .map(|u| Self::from_units(u, precision))
                    .ok_or(ScaledError::Overflow)
            }
            Ordering::Less => {
                let p = pow10(self.precision - precision);
                if self.units % p != 0 {
                    Err(ScaledError::MoreThanQDigits(self.to_string(), precision))
                } else {
                    Ok(Self::from_units(self.units / p, precision))
                }
            }
        }
    }

    /// Lossy conversion, for reporting and for handing values to the LP solver.
    pub fn to_f64(self) -> f64 {
        self.units as f64 / pow10(self.precision) as f64
    }
}

impl PartialEq for ScaledValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ScaledValue {}

impl PartialOrd for ScaledValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScaledValue {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.precision == other.precision {
            return self.units.cmp(&other.units);
        }
        // Cross-precision comparison widens to i128 so it stays exact.
        let q = self.precision.max(other.precision);
        let a = i128::from(self.units) * i128::from(pow10(q - self.precision));
        let b = i128::from(other.units) * i128::from(pow10(q - other.precision));
        a.cmp(&b)
    }
}

impl fmt::Display for ScaledValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.units < 0 { "-" } else { "" };
        let abs = self.units.unsigned_abs();
        if self.precision == 0 {
            return write!(f, "{sign}{abs}");
        }
        let p = pow10(self.precision) as u64;
        write!(
            f,
            "{sign}{}.{:0width$}",
            abs / p,
            abs % p,
            width = self.precision as usize
        )
    }
}

/// Parses at the precision implied by the literal's fractional digits.
impl FromStr for ScaledValue {
    type Err = ScaledError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().split_once('.').map(|(_, f)| f.len() as u32).unwrap_or(0);
        Self::from_decimal_str(s, digits)
    }
}

impl std::ops::Add for ScaledValue {
    type Output = ScaledValue;

    fn add(self, rhs: Self) -> Self::Output {
        self.checked_add(rhs).expect("scaled addition")
    }
}

impl std::ops::Sub for ScaledValue {
    type Output = ScaledValue;

    fn sub(self, rhs: Self) -> Self::Output {
        self.checked_sub(rhs).expect("scaled subtraction")
    }
}

impl std::iter::Sum for ScaledValue {
    /// Panics on an empty iterator; use `fold` with an explicit zero instead.
    fn sum<I: Iterator<Item = Self>>(mut iter: I) -> Self {
        let first = iter.next().expect("sum of an empty ScaledValue iterator");
        iter.fold(first, |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigInt, BigRational, Zero};
    use proptest::prelude::*;

    #[test]
    fn parses_positional_literals() {
        assert_eq!(ScaledValue::from_decimal_str("0.467", 3).unwrap().units(), 467);
        assert_eq!(ScaledValue::from_decimal_str("1", 3).unwrap().units(), 1000);
        assert_eq!(ScaledValue::from_decimal_str("0.5", 3).unwrap().units(), 500);
        assert_eq!(ScaledValue::from_decimal_str("0.4670", 3).unwrap().units(), 467);
        assert_eq!(ScaledValue::from_decimal_str(".25", 3).unwrap().units(), 250);
    }

    #[test]
    fn rejects_excess_digits_and_junk() {
        assert!(matches!(
            ScaledValue::from_decimal_str("0.4675", 3),
            Err(ScaledError::MoreThanQDigits(..))
        ));
        assert!(matches!(
            ScaledValue::from_decimal_str("0.4a", 3),
            Err(ScaledError::Malformed(_))
        ));
        assert!(matches!(
            ScaledValue::from_decimal_str(".", 3),
            Err(ScaledError::Malformed(_))
        ));
        assert!(matches!(
            ScaledValue::parse_nonneg("-0.1", 3),
            Err(ScaledError::Negative(_))
        ));
    }

    #[test]
    fn display_is_zero_padded() {
        assert_eq!(ScaledValue::from_units(467, 3).to_string(), "0.467");
        assert_eq!(ScaledValue::from_units(1000, 3).to_string(), "1.000");
        assert_eq!(ScaledValue::from_units(5, 3).to_string(), "0.005");
        assert_eq!(ScaledValue::from_units(-5, 3).to_string(), "-0.005");
        assert_eq!(ScaledValue::from_units(12, 0).to_string(), "12");
    }

    #[test]
    fn modulo_and_shift() {
        let v = ScaledValue::from_decimal_str("123.004", 3).unwrap();
        assert_eq!(v.rem_pow10(1).unwrap().to_string(), "3.004");
        assert_eq!(v.mul_pow10(2).unwrap().to_string(), "12300.400");
        let neg = ScaledValue::from_decimal_str("-1", 3).unwrap();
        assert_eq!(neg.rem_pow10(1).unwrap().to_string(), "9.000");
    }

    #[test]
    fn rescale_is_exact_or_fails() {
        let v = ScaledValue::from_units(1500, 3);
        assert_eq!(v.rescale(1).unwrap().units(), 15);
        assert_eq!(v.rescale(5).unwrap().units(), 150000);
        assert!(ScaledValue::from_units(1501, 3).rescale(1).is_err());
        assert!(ScaledValue::from_units(1, 3) > ScaledValue::from_units(0, 1));
        assert!(ScaledValue::from_units(10, 3) == ScaledValue::from_units(10, 3));
        assert_eq!(
            ScaledValue::from_units(100, 3).cmp(&ScaledValue::from_units(1, 1)),
            Ordering::Equal
        );
    }

    fn rational(v: ScaledValue) -> BigRational {
        BigRational::new(BigInt::from(v.units()), BigInt::from(pow10(v.precision())))
    }

    fn big_pow10(k: u32) -> BigRational {
        BigRational::from_integer(BigInt::from(10).pow(k))
    }

    #[test]
    fn million_random_triples_match_rationals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1_000_000 {
            let q = rng.gen_range(0..=6u32);
            let x = ScaledValue::from_units(rng.gen_range(-1i64 << 40..1i64 << 40), q);
            let y = ScaledValue::from_units(rng.gen_range(-1i64 << 40..1i64 << 40), q);
            let k = rng.gen_range(0..=4u32);
            let (rx, ry) = (rational(x), rational(y));
            match rng.gen_range(0..5) {
                0 => assert_eq!(rational(x + y), rx + ry),
                1 => assert_eq!(rational(x - y), rx - ry),
                2 => assert_eq!(x <= y, rx <= ry),
                3 => assert_eq!(rational(x.mul_pow10(k).unwrap()), rx * big_pow10(k)),
                _ => {
                    let m = big_pow10(k);
                    let rem = &rx - (&rx / &m).floor() * &m;
                    assert_eq!(rational(x.rem_pow10(k).unwrap()), rem);
                }
            }
        }
    }

    // Agreement with arbitrary-precision rationals on random operand pairs.
    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]
        #[test]
        fn agrees_with_rationals(
            a in -1_000_000_000_000i64..1_000_000_000_000,
            b in -1_000_000_000_000i64..1_000_000_000_000,
            q in 0u32..=6,
            k in 0u32..=4,
        ) {
            let x = ScaledValue::from_units(a, q);
            let y = ScaledValue::from_units(b, q);
            let (rx, ry) = (rational(x), rational(y));
            prop_assert_eq!(rational(x + y), &rx + &ry);
            prop_assert_eq!(rational(x - y), &rx - &ry);
            prop_assert_eq!(x <= y, rx <= ry);
            prop_assert_eq!(rational(x.mul_pow10(k).unwrap()), &rx * big_pow10(k));
            // Euclidean remainder of the real value.
            let m = big_pow10(k);
            let quotient = (&rx / &m).floor();
            let mut rem = &rx - quotient * &m;
            if rem < BigRational::zero() { rem += &m; }
            prop_assert_eq!(rational(x.rem_pow10(k).unwrap()), rem);
        }

        #[test]
        fn string_round_trip(units in 0i64..10_000_000, q in 0u32..=6) {
            let v = ScaledValue::from_units(units, q);
            let back = ScaledValue::from_decimal_str(&v.to_string(), q).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}

//! Exact satoshi amounts and BTC decimal-string conversion.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SAT_PER_BTC: u64 = 100_000_000;
const MAX_DECIMALS: usize = 8;

/// A non-negative count of satoshis (1e-8 BTC).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Amount(u64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountError {
    #[error("empty amount string")]
    Empty,
    #[error("amount `{0}` has more than 8 decimal places")]
    PrecisionExceeded(String),
    #[error("amount `{0}` is not a non-negative decimal number")]
    Malformed(String),
    #[error("amount `{0}` overflows 64-bit satoshis")]
    Overflow(String),
}

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub const fn from_sat(sat: u64) -> Self {
        Amount(sat)
    }

    pub const fn to_sat(self) -> u64 {
        self.0
    }

    /// Parses a BTC-denominated decimal string such as `"0.10000000"`.
    ///
    /// Accepts at most 8 fractional digits; rejects signs, exponents and
    /// anything that is not plain ASCII digits around a single optional dot.
    pub fn from_btc_str(s: &str) -> Result<Self, AmountError> {
        if s.is_empty() {
            return Err(AmountError::Empty);
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if (int_part.is_empty() && frac_part.is_empty())
            || !all_digits(int_part)
            || !all_digits(frac_part)
            || (s.contains('.') && frac_part.is_empty())
        {
            return Err(AmountError::Malformed(s.to_owned()));
        }
        if frac_part.len() > MAX_DECIMALS {
            return Err(AmountError::PrecisionExceeded(s.to_owned()));
        }
        let overflow = || AmountError::Overflow(s.to_owned());
        let whole: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| overflow())?
        };
        let mut frac: u64 = 0;
        for (i, b) in frac_part.bytes().enumerate() {
            frac += u64::from(b - b'0') * 10u64.pow((MAX_DECIMALS - 1 - i) as u32);
        }
        whole
            .checked_mul(SAT_PER_BTC)
            .and_then(|w| w.checked_add(frac))
            .map(Amount)
            .ok_or_else(overflow)
    }

    /// Canonical BTC string with exactly 8 fractional digits.
    pub fn to_btc_string(self) -> String {
        format!("{}.{:08}", self.0 / SAT_PER_BTC, self.0 % SAT_PER_BTC)
    }

    /// Number of significant fractional digits of the BTC value
    /// (`0.10000000` has 1, `1.00000000` has 0, `0.00000001` has 8).
    pub fn decimal_places(self) -> u32 {
        let mut frac = self.0 % SAT_PER_BTC;
        if frac == 0 {
            return 0;
        }
        let mut places = MAX_DECIMALS as u32;
        while frac.is_multiple_of(10) {
            frac /= 10;
            places -= 1;
        }
        places
    }

    pub fn as_btc_f64(self) -> f64 {
        self.0 as f64 / SAT_PER_BTC as f64
    }

    pub fn abs_diff(self, other: Amount) -> Amount {
        Amount(self.0.abs_diff(other.0))
    }

    pub fn checked_sub(self, other: Amount) -> Option<Amount> {
        self.0.checked_sub(other.0).map(Amount)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sat", self.0)
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0 + rhs.0)
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        self.0 += rhs.0;
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        Amount(iter.map(|a| a.0).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_canonical_strings() {
        assert_eq!(Amount::from_btc_str("0.10000000").unwrap().to_sat(), 10_000_000);
        assert_eq!(Amount::from_btc_str("0.1").unwrap().to_sat(), 10_000_000);
        assert_eq!(Amount::from_btc_str("21").unwrap().to_sat(), 2_100_000_000);
        assert_eq!(Amount::from_btc_str(".5").unwrap().to_sat(), 50_000_000);
        assert_eq!(Amount::from_btc_str("0.00000001").unwrap().to_sat(), 1);
    }

    #[test]
    fn rejects_bad_strings() {
        assert!(matches!(
            Amount::from_btc_str("0.123456789"),
            Err(AmountError::PrecisionExceeded(_))
        ));
        for bad in ["-0.1", "1e-3", "0.1.2", "abc", ".", "1.", " 1", "+1"] {
            assert!(
                matches!(Amount::from_btc_str(bad), Err(AmountError::Malformed(_))),
                "{bad}"
            );
        }
        assert_eq!(Amount::from_btc_str(""), Err(AmountError::Empty));
        assert!(matches!(
            Amount::from_btc_str("999999999999999"),
            Err(AmountError::Overflow(_))
        ));
    }

    #[test]
    fn decimal_places_strip_trailing_zeros() {
        assert_eq!(Amount::from_sat(10_000_000).decimal_places(), 1);
        assert_eq!(Amount::from_sat(5_000_000).decimal_places(), 2);
        assert_eq!(Amount::from_sat(100_000_000).decimal_places(), 0);
        assert_eq!(Amount::from_sat(1).decimal_places(), 8);
        assert_eq!(Amount::from_sat(12_345_600).decimal_places(), 6);
    }

    proptest! {
        #[test]
        fn btc_string_round_trips(sat in 0u64..=2_100_000_000_000_000) {
            let a = Amount::from_sat(sat);
            let s = a.to_btc_string();
            prop_assert_eq!(Amount::from_btc_str(&s).unwrap(), a);
            prop_assert!(a.decimal_places() <= 8);
        }
    }
}

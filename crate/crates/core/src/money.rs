//! Fixed-point currency.
//!
//! All money in the ledger is carried as integer micro-USD so that sums over
//! any number of events are exact and independent of order. Decimal strings
//! and JSON numbers are converted at the edges with half-even rounding at the
//! sixth fractional digit.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of fractional decimal digits kept by [`Usd`].
pub const SCALE_DIGITS: u32 = 6;
/// `10^SCALE_DIGITS`.
pub const SCALE: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal amount {input:?}: {reason}")]
pub struct ParseAmountError {
    pub input: String,
    pub reason: &'static str,
}

/// Parse a plain decimal string (`"12"`, `"-0.5"`, `"3.0000005"`) into an
/// integer scaled by 10^6, rounding half-even past the sixth digit.
pub fn parse_fixed6(input: &str) -> Result<i64, ParseAmountError> {
    let err = |reason| ParseAmountError {
        input: input.to_string(),
        reason,
    };
    let s = input.trim();
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if digits.is_empty() {
        return Err(err("empty"));
    }
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err("not a plain decimal"));
    }

    let mut value: i128 = 0;
    for b in int_part.bytes() {
        value = value * 10 + i128::from(b - b'0');
        if value > i128::from(i64::MAX) {
            return Err(err("out of range"));
        }
    }
    let frac = frac_part.as_bytes();
    for i in 0..SCALE_DIGITS as usize {
        let d = frac.get(i).map_or(0, |b| i128::from(b - b'0'));
        value = value * 10 + d;
    }

    // Half-even on the discarded tail.
    let tail = frac.get(SCALE_DIGITS as usize..).unwrap_or(&[]);
    if let Some((&first, rest)) = tail.split_first() {
        let round_up = match first {
            b'6'..=b'9' => true,
            b'5' => rest.iter().any(|&b| b != b'0') || value % 2 == 1,
            _ => false,
        };
        if round_up {
            value += 1;
        }
    }

    let value = if negative { -value } else { value };
    i64::try_from(value).map_err(|_| err("out of range"))
}

/// Format a 10^6-scaled integer as a decimal string with all six digits.
pub fn format_fixed6(value: i64) -> String {
    let sign = if value < 0 { "-" } else { "" };
    let abs = value.unsigned_abs();
    format!("{sign}{}.{:06}", abs / SCALE as u64, abs % SCALE as u64)
}

/// An amount of US dollars, stored as integer micro-dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Usd(i64);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub const fn from_micros(micros: i64) -> Self {
        Usd(micros)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    /// Whole dollars and cents, e.g. `Usd::from_cents(2000)` is $20.00.
    pub const fn from_cents(cents: i64) -> Self {
        Usd(cents * 10_000)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// Convert a JSON-style float through its shortest round-trip decimal
    /// representation, so `0.1` becomes exactly 100_000 micros.
    pub fn from_f64(value: f64) -> Result<Self, ParseAmountError> {
        if !value.is_finite() {
            return Err(ParseAmountError {
                input: value.to_string(),
                reason: "not finite",
            });
        }
        parse_fixed6(&value.to_string()).map(Usd)
    }

    /// Human-facing rendering: at least two decimals, trailing zeros trimmed,
    /// and amounts of a dollar or more rounded to cents.
    pub fn display(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        if abs >= SCALE as u64 {
            let cents = round_half_even_u128(u128::from(abs), 10_000) as u64;
            return format!("{sign}${}.{:02}", cents / 100, cents % 100);
        }
        let mut frac = format!("{:06}", abs % SCALE as u64);
        while frac.len() > 2 && frac.ends_with('0') {
            frac.pop();
        }
        format!("{sign}${}.{frac}", abs / SCALE as u64)
    }

    pub fn checked_add(self, other: Usd) -> Option<Usd> {
        self.0.checked_add(other.0).map(Usd)
    }
}

/// `numerator / divisor` rounded half-even.
pub(crate) fn round_half_even_u128(numerator: u128, divisor: u128) -> u128 {
    let q = numerator / divisor;
    let r = numerator % divisor;
    let twice = r * 2;
    if twice > divisor || (twice == divisor && q % 2 == 1) {
        q + 1
    } else {
        q
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_fixed6(self.0))
    }
}

impl FromStr for Usd {
    type Err = ParseAmountError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed6(s.trim().trim_start_matches('$')).map(Usd)
    }
}

impl Add for Usd {
    type Output = Usd;

    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        iter.fold(Usd::ZERO, Add::add)
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct UsdVisitor;

        impl Visitor<'_> for UsdVisitor {
            type Value = Usd;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal USD amount as number or string")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Usd, E> {
                Usd::from_f64(v).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Usd, E> {
                v.checked_mul(SCALE)
                    .map(Usd)
                    .ok_or_else(|| E::custom("amount out of range"))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Usd, E> {
                i64::try_from(v)
                    .ok()
                    .and_then(|v| v.checked_mul(SCALE))
                    .map(Usd)
                    .ok_or_else(|| E::custom("amount out of range"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Usd, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(UsdVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_plain_decimals() {
        assert_eq!(parse_fixed6("20").unwrap(), 20_000_000);
        assert_eq!(parse_fixed6("0.075").unwrap(), 75_000);
        assert_eq!(parse_fixed6(".5").unwrap(), 500_000);
        assert_eq!(parse_fixed6("-5").unwrap(), -5_000_000);
        assert!(parse_fixed6("1e3").is_err());
        assert!(parse_fixed6("").is_err());
        assert!(parse_fixed6("abc").is_err());
    }

    #[test]
    fn rounds_half_even_past_six_digits() {
        assert_eq!(parse_fixed6("0.0000005").unwrap(), 0);
        assert_eq!(parse_fixed6("0.0000015").unwrap(), 2);
        assert_eq!(parse_fixed6("0.00000050001").unwrap(), 1);
        assert_eq!(parse_fixed6("0.0000025").unwrap(), 2);
        assert_eq!(parse_fixed6("0.0000026").unwrap(), 3);
    }

    #[test]
    fn floats_go_through_shortest_repr() {
        assert_eq!(Usd::from_f64(0.1).unwrap().micros(), 100_000);
        assert_eq!(Usd::from_f64(34.8).unwrap().micros(), 34_800_000);
        assert_eq!(Usd::from_f64(0.041023).unwrap().micros(), 41_023);
    }

    #[test]
    fn display_forms() {
        assert_eq!(Usd::from_cents(3480).display(), "$34.80");
        assert_eq!(Usd::from_micros(360_000).display(), "$0.36");
        assert_eq!(Usd::from_micros(41_023).display(), "$0.041023");
        assert_eq!(Usd::ZERO.display(), "$0.00");
        assert_eq!(Usd::from_micros(14_440_001).display(), "$14.44");
        assert_eq!(Usd::from_micros(8_850).to_string(), "0.008850");
    }

    #[test]
    fn json_accepts_numbers_and_strings() {
        let a: Usd = serde_json::from_str("20").unwrap();
        let b: Usd = serde_json::from_str("\"20.00\"").unwrap();
        let c: Usd = serde_json::from_str("20.0").unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(serde_json::to_string(&Usd::from_cents(3480)).unwrap(), "34.8");
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(micros in -10_000_000_000_000i64..10_000_000_000_000) {
            prop_assert_eq!(parse_fixed6(&format_fixed6(micros)).unwrap(), micros);
        }

        #[test]
        fn json_round_trip(micros in 0i64..1_000_000_000_000) {
            let usd = Usd::from_micros(micros);
            let back: Usd = serde_json::from_str(&serde_json::to_string(&usd).unwrap()).unwrap();
            prop_assert_eq!(back, usd);
        }
    }
}

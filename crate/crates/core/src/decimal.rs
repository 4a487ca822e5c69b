//! Exact, non-negative decimal quantities used for every environmental cost.
//!
//! Values are stored as arbitrary-precision rationals so that sums and averages
//! never pick up binary floating-point error. Input is decimal text (plain or
//! scientific notation); output is the shortest exact decimal when the value
//! terminates, and `numerator/denominator` otherwise.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecimalError {
    #[error("malformed decimal literal `{0}`")]
    Malformed(String),
    #[error("negative value `{0}` where a non-negative quantity is required")]
    Negative(String),
}

/// How a rational is cut down to a fixed number of decimal places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    /// Round half to even.
    HalfEven,
    /// Drop the excess digits (round toward zero).
    #[default]
    TowardZero,
}

impl FromStr for Rounding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "half-even" => Ok(Rounding::HalfEven),
            "toward-zero" | "truncate" => Ok(Rounding::TowardZero),
            other => Err(format!("unknown rounding mode `{other}`")),
        }
    }
}

/// A non-negative exact rational built from decimal text.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactDecimal(BigRational);

impl ExactDecimal {
    pub fn zero() -> Self {
        ExactDecimal(BigRational::zero())
    }

    pub fn one() -> Self {
        ExactDecimal(BigRational::one())
    }

    pub fn from_integer(n: u64) -> Self {
        ExactDecimal(BigRational::from_integer(BigInt::from(n)))
    }

    /// Wraps a rational, rejecting negative values.
    pub fn from_rational(value: BigRational) -> Result<Self, DecimalError> {
        if value.is_negative() {
            return Err(DecimalError::Negative(value.to_string()));
        }
        Ok(ExactDecimal(value))
    }

    /// `mantissa * 10^exponent`.
    pub fn from_scaled(mantissa: u64, exponent: i32) -> Self {
        let m = BigRational::from_integer(BigInt::from(mantissa));
        ExactDecimal(m * pow10(exponent))
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn into_rational(self) -> BigRational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Exact division by a positive count. Returns `None` for zero.
    pub fn div_count(&self, count: u64) -> Option<ExactDecimal> {
        if count == 0 {
            return None;
        }
        Some(ExactDecimal(&self.0 / BigRational::from_integer(BigInt::from(count))))
    }

    /// Exact quotient `self / other`, `None` when `other` is zero.
    pub fn ratio(&self, other: &ExactDecimal) -> Option<BigRational> {
        if other.is_zero() {
            None
        } else {
            Some(&self.0 / &other.0)
        }
    }

    pub fn mul_count(&self, count: u64) -> ExactDecimal {
        ExactDecimal(&self.0 * BigRational::from_integer(BigInt::from(count)))
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// True when the value has a finite decimal expansion.
    pub fn is_terminating(&self) -> bool {
        let mut d = self.0.denom().magnitude().clone();
        let two = BigUint::from(2u8);
        let five = BigUint::from(5u8);
        while d.is_even() {
            d /= &two;
        }
        while (&d % &five).is_zero() {
            d /= &five;
        }
        d.is_one()
    }

    /// Scientific rendering with `significant` digits, e.g. `7.00e-4`.
    pub fn to_scientific(&self, significant: usize, rounding: Rounding) -> String {
        format_scientific(&self.0, significant.max(1), rounding)
    }

    /// Fixed-point rendering with exactly `decimals` fractional digits.
    pub fn to_fixed(&self, decimals: u32, rounding: Rounding) -> String {
        format_fixed(&self.0, decimals, rounding)
    }
}

impl Default for ExactDecimal {
    fn default() -> Self {
        ExactDecimal::zero()
    }
}

/// Parses decimal text: `123`, `0.0000391`, `3.91e-5`, `.5`, or `n/d`.
pub fn parse_exact_decimal(text: &str) -> Result<ExactDecimal, DecimalError> {
    let value = parse_rational(text)?;
    ExactDecimal::from_rational(value).map_err(|_| DecimalError::Negative(text.trim().to_string()))
}

/// Signed variant of the decimal grammar; used for relative differences.
pub fn parse_rational(text: &str) -> Result<BigRational, DecimalError> {
    let s = text.trim();
    let malformed = || DecimalError::Malformed(text.to_string());
    if s.is_empty() {
        return Err(malformed());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| malformed())?;
        let d: BigInt = d.trim().parse().map_err(|_| malformed())?;
        if d.is_zero() {
            return Err(malformed());
        }
        return Ok(BigRational::new(n, d));
    }

    let (negative, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => {
            let exp_text = &body[pos + 1..];
            let exp_digits = exp_text.strip_prefix(['+', '-']).unwrap_or(exp_text);
            if exp_digits.is_empty() || !exp_digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
            let exp: i64 = exp_text.parse().map_err(|_| malformed())?;
            (&body[..pos], exp)
        }
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(malformed());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(malformed());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| malformed())?
    };
    if negative {
        value = -value;
    }
    let scale = exponent - frac_part.len() as i64;
    let scale = i32::try_from(scale).map_err(|_| malformed())?;
    Ok(BigRational::from_integer(value) * pow10(scale))
}

impl FromStr for ExactDecimal {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_exact_decimal(s)
    }
}

impl fmt::Display for ExactDecimal {
    /// Canonical form: the exact decimal expansion without trailing zeros,
    /// or `n/d` when the expansion does not terminate.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.is_terminating() {
            return write!(f, "{}/{}", self.0.numer(), self.0.denom());
        }
        let mut scale = 0u32;
        let mut scaled = self.0.clone();
        while !scaled.is_integer() {
            scaled *= BigRational::from_integer(BigInt::from(10));
            scale += 1;
        }
        let digits = scaled.to_integer().magnitude().to_string();
        if scale == 0 {
            return f.write_str(&digits);
        }
        let scale = scale as usize;
        let padded = if digits.len() <= scale {
            format!("{}{}", "0".repeat(scale - digits.len() + 1), digits)
        } else {
            digits
        };
        let (int_part, frac_part) = padded.split_at(padded.len() - scale);
        write!(f, "{int_part}.{frac_part}")
    }
}

impl fmt::Debug for ExactDecimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExactDecimal({self})")
    }
}

impl Add for ExactDecimal {
    type Output = ExactDecimal;

    fn add(self, rhs: ExactDecimal) -> ExactDecimal {
        ExactDecimal(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a ExactDecimal> for ExactDecimal {
    type Output = ExactDecimal;

    fn add(self, rhs: &'a ExactDecimal) -> ExactDecimal {
        ExactDecimal(self.0 + &rhs.0)
    }
}

impl<'a> AddAssign<&'a ExactDecimal> for ExactDecimal {
    fn add_assign(&mut self, rhs: &'a ExactDecimal) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for ExactDecimal {
    fn add_assign(&mut self, rhs: ExactDecimal) {
        self.0 += rhs.0;
    }
}

impl<'a> Mul<&'a ExactDecimal> for &ExactDecimal {
    type Output = ExactDecimal;

    fn mul(self, rhs: &'a ExactDecimal) -> ExactDecimal {
        ExactDecimal(&self.0 * &rhs.0)
    }
}

impl Sum for ExactDecimal {
    fn sum<I: Iterator<Item = ExactDecimal>>(iter: I) -> Self {
        iter.fold(ExactDecimal::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a ExactDecimal> for ExactDecimal {
    fn sum<I: Iterator<Item = &'a ExactDecimal>>(iter: I) -> Self {
        iter.fold(ExactDecimal::zero(), |acc, x| acc + x)
    }
}

impl Serialize for ExactDecimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExactDecimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_exact_decimal(&text).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn pow10(exp: i32) -> BigRational {
    let ten = BigInt::from(10);
    let p = num_traits::pow(ten, exp.unsigned_abs() as usize);
    if exp >= 0 {
        BigRational::from_integer(p)
    } else {
        BigRational::new(BigInt::one(), p)
    }
}

/// Rounds `value` to an integer with the given mode.
pub(crate) fn round_to_integer(value: &BigRational, rounding: Rounding) -> BigInt {
    let truncated = value.trunc().to_integer();
    match rounding {
        Rounding::TowardZero => truncated,
        Rounding::HalfEven => {
            let frac = (value - BigRational::from_integer(truncated.clone())).abs();
            let half = BigRational::new(BigInt::one(), BigInt::from(2));
            let away = if value.is_negative() {
                &truncated - 1
            } else {
                &truncated + 1
            };
            match frac.cmp(&half) {
                std::cmp::Ordering::Less => truncated,
                std::cmp::Ordering::Greater => away,
                std::cmp::Ordering::Equal => {
                    if truncated.is_even() {
                        truncated
                    } else {
                        away
                    }
                }
            }
        }
    }
}

/// Signed fixed-point rendering of a rational.
pub(crate) fn format_fixed(value: &BigRational, decimals: u32, rounding: Rounding) -> String {
    let scaled = value * pow10(decimals as i32);
    let n = round_to_integer(&scaled, rounding);
    let negative = n.sign() == Sign::Minus;
    let digits = n.magnitude().to_string();
    let body = if decimals == 0 {
        digits
    } else {
        let d = decimals as usize;
        let padded = if digits.len() <= d {
            format!("{}{}", "0".repeat(d - digits.len() + 1), digits)
        } else {
            digits
        };
        let (i, f) = padded.split_at(padded.len() - d);
        format!("{i}.{f}")
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

fn format_scientific(value: &BigRational, significant: usize, rounding: Rounding) -> String {
    if value.is_zero() {
        let zeros = "0".repeat(significant - 1);
        return if zeros.is_empty() {
            "0e0".to_string()
        } else {
            format!("0.{zeros}e0")
        };
    }
    let negative = value.is_negative();
    let magnitude = value.abs();
    let mut exponent = decimal_exponent(&magnitude);
    let digits_after = significant as i32 - 1;
    let mut mantissa_digits =
        round_to_integer(&(&magnitude * pow10(digits_after - exponent)), rounding);
    // Rounding can carry into an extra digit (9.995 -> 10.00).
    if mantissa_digits.magnitude().to_string().len() > significant {
        exponent += 1;
        mantissa_digits =
            round_to_integer(&(&magnitude * pow10(digits_after - exponent)), rounding);
    }
    let digits = mantissa_digits.magnitude().to_string();
    let (head, tail) = digits.split_at(1);
    let sign = if negative { "-" } else { "" };
    if tail.is_empty() {
        format!("{sign}{head}e{exponent}")
    } else {
        format!("{sign}{head}.{tail}e{exponent}")
    }
}

/// floor(log10(x)) for positive x, computed exactly.
fn decimal_exponent(x: &BigRational) -> i32 {
    let approx = x.to_f64().map(|f| f.log10().floor() as i32).unwrap_or(0);
    let mut e = approx;
    while pow10(e) > *x {
        e -= 1;
    }
    while pow10(e + 1) <= *x {
        e += 1;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> ExactDecimal {
        s.parse().unwrap()
    }

    #[test]
    fn parses_listing_cost_exactly() {
        let v = d("0.0000391");
        assert_eq!(
            v.as_rational(),
            &BigRational::new(BigInt::from(391), BigInt::from(10_000_000))
        );
        assert_eq!(v, d("3.91e-5"));
        assert_eq!(v, d("3.91E-05"));
        assert_eq!(v, d("391/10000000"));
    }

    #[test]
    fn zero_and_forms() {
        assert!(d("0").is_zero());
        assert!(d("0.000").is_zero());
        assert_eq!(d(".5"), d("0.5"));
        assert_eq!(d("5."), d("5"));
        assert_eq!(d("1e3"), ExactDecimal::from_integer(1000));
        assert_eq!(d("+2.5"), d("2.5"));
    }

    #[test]
    fn sum_of_scientific_literals_is_exact() {
        assert_eq!(d("5.85e-5") + d("1.34e-5"), d("7.19e-5"));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["", "abc", "1..2", "e5", "1e", "1e+", "0x10", "1/0", "--1", "1.2.3", "."] {
            assert!(
                matches!(parse_exact_decimal(bad), Err(DecimalError::Malformed(_))),
                "{bad}"
            );
        }
        assert!(matches!(
            parse_exact_decimal("-0.1"),
            Err(DecimalError::Negative(_))
        ));
        assert!(parse_exact_decimal("-0").is_ok());
    }

    #[test]
    fn canonical_display() {
        assert_eq!(d("0.0000391").to_string(), "0.0000391");
        assert_eq!(d("3.50e-5").to_string(), "0.000035");
        assert_eq!(d("120.500").to_string(), "120.5");
        assert_eq!(d("0").to_string(), "0");
        assert_eq!(d("1").div_count(3).unwrap().to_string(), "1/3");
        assert_eq!(d("1/3").div_count(1).unwrap(), d("1").div_count(3).unwrap());
    }

    #[test]
    fn scientific_rendering() {
        assert_eq!(d("0.0007").to_scientific(3, Rounding::HalfEven), "7.00e-4");
        assert_eq!(d("3.5e-5").to_scientific(3, Rounding::HalfEven), "3.50e-5");
        assert_eq!(d("4.22e-6").to_scientific(3, Rounding::HalfEven), "4.22e-6");
        assert_eq!(d("9.996e-5").to_scientific(3, Rounding::HalfEven), "1.00e-4");
        assert_eq!(d("0.0001235").to_scientific(3, Rounding::HalfEven), "1.24e-4");
        assert_eq!(d("0.0001225").to_scientific(3, Rounding::HalfEven), "1.22e-4");
        assert_eq!(d("12345").to_scientific(2, Rounding::TowardZero), "1.2e4");
        assert_eq!(d("0").to_scientific(3, Rounding::HalfEven), "0.00e0");
        assert_eq!(d("1").to_scientific(1, Rounding::HalfEven), "1e0");
    }

    #[test]
    fn fixed_rendering_modes() {
        let r = parse_rational("-23.228346").unwrap();
        assert_eq!(format_fixed(&r, 2, Rounding::TowardZero), "-23.22");
        assert_eq!(format_fixed(&r, 2, Rounding::HalfEven), "-23.23");
        let half = parse_rational("0.125").unwrap();
        assert_eq!(format_fixed(&half, 2, Rounding::HalfEven), "0.12");
        let half = parse_rational("-0.135").unwrap();
        assert_eq!(format_fixed(&half, 2, Rounding::HalfEven), "-0.14");
        assert_eq!(format_fixed(&parse_rational("0.001").unwrap(), 1, Rounding::HalfEven), "0.0");
    }

    #[test]
    fn terminating_detection() {
        assert!(d("0.0000391").is_terminating());
        assert!(d("1/8").is_terminating());
        assert!(!d("1/3").is_terminating());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn decimal() -> impl Strategy<Value = ExactDecimal> {
            (0u64..10_000_000, -12i32..6).prop_map(|(m, e)| ExactDecimal::from_scaled(m, e))
        }

        proptest! {
            #[test]
            fn display_round_trips(x in decimal(), k in 1u64..50) {
                prop_assert_eq!(x.to_string().parse::<ExactDecimal>().unwrap(), x.clone());
                let q = x.div_count(k).unwrap();
                prop_assert_eq!(q.to_string().parse::<ExactDecimal>().unwrap(), q);
            }

            #[test]
            fn addition_is_order_independent(mut xs in prop::collection::vec(decimal(), 0..20), seed in any::<u64>()) {
                let forward: ExactDecimal = xs.iter().sum();
                let n = xs.len();
                if n > 1 {
                    let mut s = seed;
                    for i in (1..n).rev() {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        xs.swap(i, (s >> 33) as usize % (i + 1));
                    }
                }
                let shuffled: ExactDecimal = xs.iter().rev().sum();
                prop_assert_eq!(forward, shuffled);
            }
        }
    }
}

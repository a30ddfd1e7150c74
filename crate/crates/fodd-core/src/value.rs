//! Exact rational leaf values.
//!
//! Diagram leaves are kept as arbitrary-precision rationals so that quantities
//! like `0.9 * 10` or `5*g + 20*g^2` stay exact across arbitrarily many solver
//! iterations. Conversion to `f64` happens only at the boundary to the ground
//! oracle, which works in floating point with an explicit tolerance.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// An exact rational number used for leaf values, probabilities and discounts.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(BigRational);

impl Value {
    pub fn zero() -> Self {
        Value(BigRational::zero())
    }

    pub fn one() -> Self {
        Value(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Value(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Value(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Value {
        Value(self.0.abs())
    }

    pub fn max(self, other: Value) -> Value {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Value) -> Value {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0
            .numer()
            .to_f64()
            .and_then(|n| self.0.denom().to_f64().map(|d| n / d))
            .unwrap_or(f64::NAN)
    }

    /// `numer/denom` as a canonical string, e.g. `207/10` or `9`.
    pub fn to_ratio_string(&self) -> String {
        if self.0.is_integer() {
            self.0.numer().to_string()
        } else {
            format!("{}/{}", self.0.numer(), self.0.denom())
        }
    }

    /// Exact decimal rendering when the denominator is of the form 2^a * 5^b,
    /// otherwise the `numer/denom` form. Both parse back to the same value.
    pub fn to_decimal_string(&self) -> String {
        let numer = self.0.numer().clone();
        let denom = self.0.denom().clone();
        if denom.is_one() {
            return numer.to_string();
        }
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let mut d = denom.clone();
        let mut twos = 0u32;
        let mut fives = 0u32;
        while (&d % &two).is_zero() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if !d.is_one() {
            return format!("{}/{}", numer, denom);
        }
        // Scale numerator so the denominator becomes 10^digits.
        let digits = twos.max(fives);
        let mut scaled = numer.abs();
        for _ in twos..digits {
            scaled *= &two;
        }
        for _ in fives..digits {
            scaled *= &five;
        }
        let mut s = scaled.to_string();
        let digits = digits as usize;
        if s.len() <= digits {
            s = format!("{}{}", "0".repeat(digits + 1 - s.len()), s);
        }
        let point = s.len() - digits;
        let mut out = String::new();
        if self.0.is_negative() {
            out.push('-');
        }
        out.push_str(&s[..point]);
        out.push('.');
        out.push_str(&s[point..]);
        // Trim trailing zeros but keep at least one fractional digit.
        while out.ends_with('0') && !out.ends_with(".0") {
            out.pop();
        }
        out
    }

    pub(crate) fn as_rational(&self) -> &BigRational {
        &self.0
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_string())
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal_string())
    }
}

/// Parse error for numeric literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueParseError(pub String);

impl fmt::Display for ValueParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid number `{}`", self.0)
    }
}

impl std::error::Error for ValueParseError {}

impl FromStr for Value {
    type Err = ValueParseError;

    /// Accepts integers (`10`, `-3`), decimals (`0.9`, `20.7`) and explicit
    /// ratios (`207/10`). Decimals are exact: `0.9` parses to `9/10`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ValueParseError(s.to_string()));
        }
        if let Some((n, d)) = s.split_once('/') {
            let numer =
                BigInt::from_str(n.trim()).map_err(|_| ValueParseError(s.to_string()))?;
            let denom =
                BigInt::from_str(d.trim()).map_err(|_| ValueParseError(s.to_string()))?;
            if denom.is_zero() {
                return Err(ValueParseError(s.to_string()));
            }
            return Ok(Value(BigRational::new(numer, denom)));
        }
        let (sign, rest) = match s.strip_prefix('-') {
            Some(rest) => (-1, rest),
            None => (1, s),
        };
        let (int_part, frac_part) = match rest.split_once('.') {
            Some((i, f)) => (i, f),
            None => (rest, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(ValueParseError(s.to_string()));
        }
        let digits_ok = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits_ok(if int_part.is_empty() { "0" } else { int_part })
            || (!frac_part.is_empty() && !digits_ok(frac_part))
        {
            return Err(ValueParseError(s.to_string()));
        }
        let mut numer = BigInt::from_str(if int_part.is_empty() { "0" } else { int_part })
            .map_err(|_| ValueParseError(s.to_string()))?;
        let mut denom = BigInt::one();
        for c in frac_part.bytes() {
            numer = numer * 10 + (c - b'0');
            denom *= 10;
        }
        Ok(Value(BigRational::new(numer * sign, denom)))
    }
}

impl Add for Value {
    type Output = Value;
    fn add(self, rhs: Value) -> Value {
        Value(self.0 + rhs.0)
    }
}

impl Sub for Value {
    type Output = Value;
    fn sub(self, rhs: Value) -> Value {
        Value(self.0 - rhs.0)
    }
}

impl Mul for Value {
    type Output = Value;
    fn mul(self, rhs: Value) -> Value {
        Value(self.0 * rhs.0)
    }
}

impl Neg for Value {
    type Output = Value;
    fn neg(self) -> Value {
        Value(-self.0)
    }
}

impl<'a> Add<&'a Value> for &Value {
    type Output = Value;
    fn add(self, rhs: &'a Value) -> Value {
        Value(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Value> for &Value {
    type Output = Value;
    fn sub(self, rhs: &'a Value) -> Value {
        Value(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a Value> for &Value {
    type Output = Value;
    fn mul(self, rhs: &'a Value) -> Value {
        Value(&self.0 * &rhs.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        let v: Value = "0.9".parse().unwrap();
        assert_eq!(v, Value::ratio(9, 10));
        let v: Value = "20.7".parse().unwrap();
        assert_eq!(v, Value::ratio(207, 10));
        let v: Value = "-5".parse().unwrap();
        assert_eq!(v, Value::from_int(-5));
        let v: Value = "207/10".parse().unwrap();
        assert_eq!(v, Value::ratio(207, 10));
    }

    #[test]
    fn decimal_rendering_round_trips() {
        for s in ["10", "0.9", "20.7", "8.1", "-4.5", "0"] {
            let v: Value = s.parse().unwrap();
            let back: Value = v.to_decimal_string().parse().unwrap();
            assert_eq!(v, back, "{s}");
        }
        // Non-terminating decimals fall back to the ratio form.
        let third = Value::ratio(1, 3);
        assert_eq!(third.to_decimal_string(), "1/3");
        let back: Value = "1/3".parse().unwrap();
        assert_eq!(third, back);
    }

    #[test]
    fn arithmetic_stays_exact() {
        let g: Value = "0.9".parse().unwrap();
        let twenty: Value = Value::from_int(20);
        let five = Value::from_int(5);
        // 5*g + 20*g^2 = 20.7
        let v = five * g.clone() + twenty * g.clone() * g;
        assert_eq!(v, Value::ratio(207, 10));
        assert_eq!(v.to_decimal_string(), "20.7");
    }

    #[test]
    fn bad_numbers_rejected() {
        assert!("".parse::<Value>().is_err());
        assert!("1.2.3".parse::<Value>().is_err());
        assert!("a".parse::<Value>().is_err());
        assert!("1/0".parse::<Value>().is_err());
    }
}

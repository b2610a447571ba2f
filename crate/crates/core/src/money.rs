//! Exact rational amounts of abstract currency.
//!
//! Every value, price, and welfare figure in the library is a [`Money`],
//! a reduced arbitrary-precision rational. Equilibrium computations hinge
//! on exact threshold comparisons, so no solver path ever touches
//! floating point.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// An exact rational amount, totally ordered, kept in reduced form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(BigRational);

impl Money {
    pub fn zero() -> Self {
        Money(BigRational::zero())
    }

    pub fn from_int(n: i64) -> Self {
        Money(BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact ratio `num/den`; panics on a zero denominator.
    pub fn ratio(num: i64, den: i64) -> Self {
        Money(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Clamp negative amounts to zero.
    pub fn clamp_nonneg(self) -> Self {
        if self.is_negative() {
            Money::zero()
        } else {
            self
        }
    }

    pub fn abs(&self) -> Self {
        Money(self.0.abs())
    }

    /// Lossy conversion for reporting only; never used in solver logic.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }
}

impl From<BigRational> for Money {
    fn from(r: BigRational) -> Self {
        Money(r)
    }
}

impl From<i64> for Money {
    fn from(n: i64) -> Self {
        Money::from_int(n)
    }
}

/// Failure to read a rational out of a string.
#[derive(Debug, thiserror::Error)]
#[error("invalid rational {input:?}: expected an integer or \"p/q\"")]
pub struct ParseMoneyError {
    pub input: String,
}

impl FromStr for Money {
    type Err = ParseMoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseMoneyError {
            input: s.to_string(),
        };
        let s = s.trim();
        match s.split_once('/') {
            Some((num, den)) => {
                let num: BigInt = num.trim().parse().map_err(|_| bad())?;
                let den: BigInt = den.trim().parse().map_err(|_| bad())?;
                if den.is_zero() {
                    return Err(bad());
                }
                Ok(Money(BigRational::new(num, den)))
            }
            None => {
                let n: BigInt = s.parse().map_err(|_| bad())?;
                Ok(Money(BigRational::from_integer(n)))
            }
        }
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Money;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer or a \"p/q\" rational string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Money, E> {
                v.parse().map_err(de::Error::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Money, E> {
                Ok(Money::from_int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Money, E> {
                Ok(Money(BigRational::from_integer(BigInt::from(v))))
            }
        }
        deserializer.deserialize_any(V)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Money {
            type Output = Money;
            fn $method(self, rhs: Money) -> Money {
                Money((self.0).$method(rhs.0))
            }
        }
        impl $trait<&Money> for &Money {
            type Output = Money;
            fn $method(self, rhs: &Money) -> Money {
                Money((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<&Money> for Money {
            type Output = Money;
            fn $method(self, rhs: &Money) -> Money {
                Money((self.0).$method(&rhs.0))
            }
        }
        impl $trait<Money> for &Money {
            type Output = Money;
            fn $method(self, rhs: Money) -> Money {
                Money((&self.0).$method(rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign<&Money> for Money {
    fn add_assign(&mut self, rhs: &Money) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign<&Money> for Money {
    fn sub_assign(&mut self, rhs: &Money) {
        self.0 -= &rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |a, b| a + b)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.fold(Money::zero(), |a, b| a + b)
    }
}

/// Shorthand for tests and fixtures: `money!(3)` or `money!(1, 2)` for 1/2.
#[macro_export]
macro_rules! money {
    ($n:expr) => {
        $crate::money::Money::from_int($n)
    };
    ($n:expr, $d:expr) => {
        $crate::money::Money::ratio($n, $d)
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["0", "5", "-3", "1/2", "-7/3", "299/201"] {
            let m: Money = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
    }

    #[test]
    fn parse_reduces() {
        let m: Money = "4/8".parse().unwrap();
        assert_eq!(m, Money::ratio(1, 2));
        assert_eq!(m.to_string(), "1/2");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("".parse::<Money>().is_err());
        assert!("1/0".parse::<Money>().is_err());
        assert!("a/b".parse::<Money>().is_err());
        assert!("1.5".parse::<Money>().is_err());
    }

    #[test]
    fn exact_arithmetic() {
        let third = Money::ratio(1, 3);
        let sum: Money = (0..3).map(|_| third.clone()).sum();
        assert_eq!(sum, Money::from_int(1));
        assert_eq!(Money::ratio(1, 2) + Money::ratio(1, 3), Money::ratio(5, 6));
    }

    #[test]
    fn ordering_is_total() {
        let mut v = vec![money!(1), money!(-1), money!(1, 2), money!(0)];
        v.sort();
        assert_eq!(v, vec![money!(-1), money!(0), money!(1, 2), money!(1)]);
    }

    #[test]
    fn serde_as_string() {
        let m = Money::ratio(3, 4);
        assert_eq!(serde_json::to_string(&m).unwrap(), "\"3/4\"");
        let back: Money = serde_json::from_str("\"3/4\"").unwrap();
        assert_eq!(back, m);
        let from_int: Money = serde_json::from_str("7").unwrap();
        assert_eq!(from_int, money!(7));
    }
}

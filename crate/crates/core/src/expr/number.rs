use std::fmt;

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedMul, One, Signed, ToPrimitive, Zero};

/// A numeric literal: exact rational when it came from integer arithmetic,
/// IEEE double otherwise. Rational arithmetic falls back to doubles on overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Number {
    Rational(Rational64),
    Real(f64),
}

impl Number {
    pub const ZERO: Number = Number::Rational(Rational64::new_raw(0, 1));
    pub const ONE: Number = Number::Rational(Rational64::new_raw(1, 1));

    pub fn int(value: i64) -> Self {
        Number::Rational(Rational64::from_integer(value))
    }

    /// Exact `num/den`. Panics on a zero denominator.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator in rational literal");
        Number::Rational(Rational64::new(num, den))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Number::Rational(r) => *r.numer() as f64 / *r.denom() as f64,
            Number::Real(x) => x,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Real(x) => x == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Number::Rational(r) => r.is_one(),
            Number::Real(x) => x == 1.0,
        }
    }

    pub fn is_negative(self) -> bool {
        match self {
            Number::Rational(r) => r.is_negative(),
            Number::Real(x) => x < 0.0,
        }
    }

    /// The value as an integer, if it is an exact integer.
    pub fn as_integer(self) -> Option<i64> {
        match self {
            Number::Rational(r) if r.is_integer() => Some(*r.numer()),
            _ => None,
        }
    }

    pub fn add(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_add(&b) {
                Some(c) => Number::Rational(c),
                None => Number::Real(self.to_f64() + other.to_f64()),
            },
            _ => Number::Real(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_mul(&b) {
                Some(c) => Number::Rational(c),
                None => Number::Real(self.to_f64() * other.to_f64()),
            },
            _ => Number::Real(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(self) -> Number {
        match self {
            Number::Rational(r) => match r.numer().checked_neg() {
                Some(n) => Number::Rational(Rational64::new_raw(n, *r.denom())),
                None => Number::Real(-self.to_f64()),
            },
            Number::Real(x) => Number::Real(-x),
        }
    }

    pub fn sub(self, other: Number) -> Number {
        self.add(other.neg())
    }

    /// Reciprocal; `None` for zero.
    pub fn recip(self) -> Option<Number> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Number::Rational(r) => {
                let (n, d) = (*r.numer(), *r.denom());
                match n.checked_abs() {
                    Some(_) => Number::Rational(Rational64::new(d, n)),
                    None => Number::Real(1.0 / self.to_f64()),
                }
            }
            Number::Real(x) => Number::Real(1.0 / x),
        })
    }

    pub fn abs(self) -> Number {
        if self.is_negative() {
            self.neg()
        } else {
            self
        }
    }

    /// Constant power, exact when both operands allow it. `None` when the
    /// result is undefined (zero to a negative power, negative base with a
    /// fractional exponent) or not finite.
    pub fn pow(self, exponent: Number) -> Option<Number> {
        if let (Number::Rational(base), Some(k)) = (self, exponent.as_integer()) {
            if base.is_zero() && k < 0 {
                return None;
            }
            if k.abs() <= 64 {
                let mut acc = Rational64::one();
                let mut exact = true;
                for _ in 0..k.abs() {
                    match acc.checked_mul(&base) {
                        Some(v) => acc = v,
                        None => {
                            exact = false;
                            break;
                        }
                    }
                }
                if exact {
                    let value = Number::Rational(acc);
                    return if k < 0 { value.recip() } else { Some(value) };
                }
            }
        }
        let value = super::eval::pow_value(self.to_f64(), exponent).ok()?;
        value.is_finite().then_some(Number::Real(value))
    }

    pub(crate) fn to_i32(self) -> Option<i32> {
        self.as_integer().and_then(|k| k.to_i32())
    }
}

impl From<i64> for Number {
    fn from(value: i64) -> Self {
        Number::int(value)
    }
}

impl From<i32> for Number {
    fn from(value: i32) -> Self {
        Number::int(value as i64)
    }
}

impl From<f64> for Number {
    fn from(value: f64) -> Self {
        Number::Real(value)
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Number::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Number::Real(x) => write!(f, "{x:?}"),
        }
    }
}

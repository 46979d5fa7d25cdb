//! Arithmetic modulo the prime 999983.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use rand::Rng;

use crate::portable::{DecodeError, Portable, Value};

pub const PRIME: u64 = 999_983;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);

    /// Reduces any integer into the field.
    pub fn new(x: i64) -> Self {
        FieldElement(x.rem_euclid(PRIME as i64) as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn field_add(a: FieldElement, b: FieldElement) -> FieldElement {
    FieldElement((a.0 + b.0) % PRIME)
}

pub fn field_sub(a: FieldElement, b: FieldElement) -> FieldElement {
    FieldElement((a.0 + PRIME - b.0) % PRIME)
}

pub fn field_rand(rng: &mut impl Rng) -> FieldElement {
    FieldElement(rng.random_range(0..PRIME))
}

pub fn field_sum<'a>(xs: impl IntoIterator<Item = &'a FieldElement>) -> FieldElement {
    xs.into_iter().fold(FieldElement::ZERO, |a, b| a + *b)
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: Self) -> Self {
        field_add(self, rhs)
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: Self) -> Self {
        field_sub(self, rhs)
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> Self {
        FieldElement::ZERO - self
    }
}

impl Portable for FieldElement {
    fn to_value(&self) -> Value {
        Value::Int(self.0 as i64)
    }

    fn from_value(v: &Value) -> Result<Self, DecodeError> {
        let x = v.as_int()?;
        if !(0..PRIME as i64).contains(&x) {
            return Err(DecodeError::Shape {
                expected: "field element",
                found: x.to_string(),
            });
        }
        Ok(FieldElement(x as u64))
    }
}

/// Splits `secret` into `n` additive shares: `n - 1` random ones followed by the
/// share that makes the sum come out right.
pub fn field_shares(n: usize, secret: FieldElement, rng: &mut impl Rng) -> Vec<FieldElement> {
    assert!(n >= 1, "at least one share");
    let mut shares: Vec<FieldElement> = (0..n - 1).map(|_| field_rand(rng)).collect();
    let last = secret - field_sum(&shares);
    shares.push(last);
    shares
}

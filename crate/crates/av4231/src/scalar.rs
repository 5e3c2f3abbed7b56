//! Scalar types the transfer matrix can act on: floats for eigenvalue
//! iteration, big integers for exact word counts, rationals for exact
//! certificate checks.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Float, Zero};

/// Default floating-point scalar.
pub type Real = f64;
/// Exact non-negative word count.
pub type Count = BigUint;
/// Exact rational, used for certified bounds.
pub type Rational = BigRational;

/// A scalar that supports the fused update `acc += value * multiplicity`
/// with a small integer multiplicity (a transition-matrix entry).
pub trait TransferScalar: Zero + Clone + Send + Sync {
    fn add_mul(&mut self, value: &Self, multiplicity: u8);
}

impl TransferScalar for f32 {
    fn add_mul(&mut self, value: &Self, multiplicity: u8) {
        *self += value * f32::from(multiplicity);
    }
}

impl TransferScalar for f64 {
    fn add_mul(&mut self, value: &Self, multiplicity: u8) {
        *self += value * f64::from(multiplicity);
    }
}

impl TransferScalar for BigUint {
    fn add_mul(&mut self, value: &Self, multiplicity: u8) {
        *self += value * multiplicity;
    }
}

impl TransferScalar for BigInt {
    fn add_mul(&mut self, value: &Self, multiplicity: u8) {
        *self += value * multiplicity;
    }
}

impl TransferScalar for BigRational {
    fn add_mul(&mut self, value: &Self, multiplicity: u8) {
        *self += value * BigInt::from(multiplicity);
    }
}

/// Floating-point scalars usable by the power iteration.
pub trait FloatScalar: TransferScalar + Float {}
impl<T: TransferScalar + Float> FloatScalar for T {}

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};

/// Scalar ring for jet coefficients.
///
/// Implemented for `f64` (fast path), [`BigRational`] (exact golden tests)
/// and [`Complex64`] (loxodromic blocks in complexified coordinates).
pub trait Coeff: Num + Clone + Neg<Output = Self> + Debug + Send + Sync + 'static {
    /// Magnitude used for tolerance checks and reporting.
    fn magnitude(&self) -> f64;

    /// Embeds a float. Rationals take the exact binary value.
    fn from_f64(v: f64) -> Self;

    fn from_i64(v: i64) -> Self;
}

impl Coeff for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

impl Coeff for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }

    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }

    fn from_i64(v: i64) -> Self {
        Complex64::new(v as f64, 0.0)
    }
}

impl Coeff for BigRational {
    fn magnitude(&self) -> f64 {
        self.to_f64().map(f64::abs).unwrap_or(f64::INFINITY)
    }

    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite coefficient")
    }

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
}

/// Rational `num/den` as a [`BigRational`].
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_embedding_is_exact() {
        let third = ratio(1, 3);
        assert_eq!(third.clone() * BigRational::from_i64(3), BigRational::from_i64(1));
        assert_eq!(BigRational::from_f64(0.5), ratio(1, 2));
        assert!((third.magnitude() - 1.0 / 3.0).abs() < 1e-16);
    }
}

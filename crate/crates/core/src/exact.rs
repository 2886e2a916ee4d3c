//! Exact-arithmetic helpers shared by the decision procedures.
//!
//! Parameters arrive as `f64`, but every strict inequality in the toolkit is
//! decided on rationals. A float is read back as the shortest decimal string
//! that round-trips to it, so `0.7` means `7/10` rather than the nearest
//! binary fraction.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// The rational whose shortest decimal expansion prints as `x`.
///
/// Returns `None` for NaN and infinities.
pub fn decimal_rational(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some(BigRational::zero());
    }
    // `{:e}` prints the shortest round-trip digits, e.g. "7e-1", "-1.2345e3".
    let s = format!("{:e}", x);
    let (mantissa, exponent) = s.split_once('e')?;
    let exponent: i64 = exponent.parse().ok()?;
    let negative = mantissa.starts_with('-');
    let mantissa = mantissa.trim_start_matches('-');
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let mut r = if scale >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        r = -r;
    }
    Some(r)
}

/// Like [`decimal_rational`] but panics on non-finite input. Use only on
/// values that were validated upstream.
pub(crate) fn rat(x: f64) -> BigRational {
    decimal_rational(x).expect("finite value")
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Huge numerator/denominator: fall back on logarithms.
        let sign = if r.is_negative() { -1.0 } else { 1.0 };
        sign * (ln_bigint(r.numer()) - ln_bigint(r.denom())).exp()
    })
}

fn ln_bigint(n: &BigInt) -> f64 {
    ln_biguint(&n.magnitude().clone())
}

/// Natural logarithm of a big unsigned integer; `-inf` for zero.
pub fn ln_biguint(n: &BigUint) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().expect("64-bit prefix");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural logarithm of a positive rational.
pub fn ln_rational(r: &BigRational) -> f64 {
    if !r.is_positive() {
        return f64::NEG_INFINITY;
    }
    ln_biguint(r.numer().magnitude()) - ln_biguint(r.denom().magnitude())
}

/// `floor(r) + 1` as an unsigned integer: the least integer strictly above `r`
/// for non-negative `r`.
pub(crate) fn least_integer_above(r: &BigRational) -> u64 {
    let fl = r.floor().to_integer();
    (fl + BigInt::one()).to_u64().unwrap_or(u64::MAX)
}

pub(crate) fn floor_u64(r: &BigRational) -> u64 {
    r.floor().to_integer().to_u64().unwrap_or(0)
}

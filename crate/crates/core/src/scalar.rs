use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

use crate::Rational;

/// Field-like scalar the geometric code is written against.
///
/// Implemented for `f32`, `f64` and [`Rational`]. Integer coordinates are
/// promoted to [`Rational`] before group operations because the group law
/// produces half-integers.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// True when arithmetic is exact.
    const EXACT: bool;

    fn from_rational(r: &Rational) -> Self;

    fn from_int(v: i64) -> Self {
        <Self as FromPrimitive>::from_i64(v).expect("i64 is representable")
    }

    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `self^k` for a non-negative integer exponent.
    fn powi(&self, k: u32) -> Self {
        num_traits::pow(self.clone(), k as usize)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(r: &Rational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_rational(r: &Rational) -> Self {
        r.to_f32().unwrap_or(f32::NAN)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
}

/// Shorthand for `p/q` as an exact rational.
pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(p.into(), q.into())
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(v.into())
}

/// Parse `"3"`, `"-1/2"` or a terminating decimal such as `"0.25"` exactly.
pub fn parse_rational(s: &str) -> Option<Rational> {
    use num_bigint::BigInt;
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q == BigInt::from(0) {
            return None;
        }
        return Some(Rational::new(p, q));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
    if ip.is_empty() && fp.is_empty() {
        return None;
    }
    if !ip.chars().chain(fp.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{}{}", if ip.is_empty() { "0" } else { ip }, fp);
    let num: BigInt = digits.parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), fp.len());
    let r = Rational::new(num, den);
    Some(if neg { -r } else { r })
}

/// Exact `base^(p/q)` when it is rational, `None` otherwise.
pub fn exact_rational_power(base: &Rational, p: i64, q: u32) -> Option<Rational> {
    if base.is_negative() || q == 0 {
        return None;
    }
    let root = |v: &num_bigint::BigInt| -> Option<num_bigint::BigInt> {
        let r = v.nth_root(q);
        (num_traits::pow(r.clone(), q as usize) == *v).then_some(r)
    };
    let num = root(base.numer())?;
    let den = root(base.denom())?;
    let r = Rational::new(num, den);
    if p >= 0 {
        Some(num_traits::pow(r, p as usize))
    } else if r.is_zero() {
        None
    } else {
        Some(num_traits::pow(r.recip(), (-p) as usize))
    }
}

/// Best rational approximation of `x` with a power-of-two denominator.
pub fn dyadic_approx(x: f64, bits: u32) -> Rational {
    let scale = 2f64.powi(bits as i32);
    let num = (x * scale).round();
    Rational::new(num_bigint::BigInt::from_f64(num).unwrap_or_default(), num_bigint::BigInt::from(1u64) << bits)
}

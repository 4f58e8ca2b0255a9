//! Group law, dilations and gauge norms on the Heisenberg group `ℍⁿ = ℝ²ⁿ × ℝ`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{CheckedAdd, CheckedMul, FromPrimitive, One, Signed, ToPrimitive};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::{int, Scalar};
use crate::{IntPoint, RatPoint, Rational};

/// Dimension and gauge exponent: `‖x‖_α = (|x̲|^α + C_α|x̄|^{α/2})^{1/α}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GaugeParams {
    n: usize,
    alpha: u32,
    c_alpha: Rational,
}

impl GaugeParams {
    pub const DEFAULT_C: i64 = 16;

    pub fn new(n: usize, alpha: u32, c_alpha: Rational) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        if alpha < 2 || !alpha.is_multiple_of(2) {
            return Err(invalid(format!("alpha must be an even integer >= 2, got {alpha}")));
        }
        if !c_alpha.is_positive() {
            return Err(invalid(format!("C_alpha must be positive, got {c_alpha}")));
        }
        Ok(Self { n, alpha, c_alpha })
    }

    /// `C_α = 16`.
    pub fn with_default_c(n: usize, alpha: u32) -> Result<Self> {
        Self::new(n, alpha, int(Self::DEFAULT_C))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    /// `α/2`, the exponent of the vertical term.
    pub fn half_alpha(&self) -> u32 {
        self.alpha / 2
    }

    pub fn c_alpha(&self) -> &Rational {
        &self.c_alpha
    }

    /// Euclidean dimension `D = 2n + 1`.
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Homogeneous dimension `2n + 2`.
    pub fn homogeneous_dim(&self) -> usize {
        2 * self.n + 2
    }

    /// `C_α · 2^{α/2}` as an integer, the constant of the doubled vertical term.
    pub fn scaled_constant(&self) -> Result<BigInt> {
        let k = &self.c_alpha * Rational::from_integer(BigInt::one() << self.half_alpha());
        if k.is_integer() {
            Ok(k.to_integer())
        } else {
            Err(Error::NonIntegralScaledConstant(k.to_string()))
        }
    }

    pub(crate) fn check_point<T>(&self, x: &HPoint<T>) -> Result<()> {
        if x.horiz.len() != 2 * self.n {
            return Err(Error::DimensionMismatch { left: x.horiz.len(), right: 2 * self.n });
        }
        Ok(())
    }
}

/// A point `(x̲, x̄)` of `ℍⁿ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct HPoint<T> {
    pub horiz: Vec<T>,
    pub vert: T,
}

impl<T> HPoint<T> {
    pub fn new(horiz: Vec<T>, vert: T) -> Result<Self> {
        if horiz.is_empty() || !horiz.len().is_multiple_of(2) {
            return Err(invalid(format!("horizontal part must have positive even length, got {}", horiz.len())));
        }
        Ok(Self { horiz, vert })
    }

    /// `n` for a point of `ℍⁿ`.
    pub fn n(&self) -> usize {
        self.horiz.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.horiz.len() + 1
    }

    /// Coordinates as a flat vector `(x₁, …, x_{2n}, x̄)`.
    pub fn coords(&self) -> Vec<T>
    where
        T: Clone,
    {
        let mut v = self.horiz.clone();
        v.push(self.vert.clone());
        v
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> HPoint<U> {
        HPoint { horiz: self.horiz.iter().map(&f).collect(), vert: f(&self.vert) }
    }
}

impl<T: Clone> HPoint<T> {
    /// Last coordinate is the vertical one.
    pub fn from_coords(coords: &[T]) -> Result<Self> {
        match coords.split_last() {
            Some((vert, horiz)) => Self::new(horiz.to_vec(), vert.clone()),
            None => Err(invalid("empty coordinate list")),
        }
    }
}

impl IntPoint {
    pub fn to_rational(&self) -> RatPoint {
        self.map(|&v| int(v))
    }

    pub fn to_f64(&self) -> HPoint<f64> {
        self.map(|&v| v as f64)
    }
}

impl RatPoint {
    pub fn to_f64(&self) -> HPoint<f64> {
        self.map(|v| v.to_f64_lossy())
    }
}

fn same_n<T, U>(x: &HPoint<T>, y: &HPoint<U>) -> Result<()> {
    if x.horiz.len() != y.horiz.len() {
        return Err(Error::DimensionMismatch { left: x.horiz.len(), right: y.horiz.len() });
    }
    Ok(())
}

/// `u̲ᵀJv̲ = Σ_{i≤n} (u_i v_{n+i} − u_{n+i} v_i)` for the standard symplectic `J`.
pub fn symplectic<T>(u: &[T], v: &[T]) -> T
where
    T: Clone + num_traits::Num,
{
    let n = u.len() / 2;
    let mut acc = T::zero();
    for i in 0..n {
        acc = acc + u[i].clone() * v[n + i].clone() - u[n + i].clone() * v[i].clone();
    }
    acc
}

/// `J v̲`.
pub fn apply_j<T: Scalar>(v: &[T]) -> Vec<T> {
    let n = v.len() / 2;
    (0..2 * n).map(|i| if i < n { v[n + i].clone() } else { -v[i - n].clone() }).collect()
}

fn sq_norm<T: Clone + num_traits::Num>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, a| acc + a.clone() * a.clone())
}

impl<T: Scalar> HPoint<T> {
    pub fn origin(n: usize) -> Self {
        Self { horiz: vec![T::zero(); 2 * n], vert: T::zero() }
    }

    /// `x * y = (x̲ + y̲, x̄ + ȳ + ½ x̲ᵀJy̲)`.
    pub fn group_mul(&self, other: &Self) -> Result<Self> {
        same_n(self, other)?;
        let horiz = self.horiz.iter().zip(&other.horiz).map(|(a, b)| a.clone() + b.clone()).collect();
        let twist = symplectic(&self.horiz, &other.horiz) * T::half();
        Ok(Self { horiz, vert: self.vert.clone() + other.vert.clone() + twist })
    }

    pub fn inverse(&self) -> Self {
        self.map(|v| -v.clone())
    }

    /// Parabolic dilation `δ_t(x̲, x̄) = (t x̲, t² x̄)`.
    pub fn dilate(&self, t: &T) -> Result<Self> {
        if !t.is_positive() {
            return Err(invalid(format!("dilation factor must be positive, got {t:?}")));
        }
        let t2 = t.clone() * t.clone();
        Ok(Self { horiz: self.horiz.iter().map(|v| v.clone() * t.clone()).collect(), vert: self.vert.clone() * t2 })
    }

    /// `|x̲|²`.
    pub fn horiz_sq_norm(&self) -> T {
        sq_norm(&self.horiz)
    }
}

/// `Ψ(x) = ‖x‖_α^α = |x̲|^α + C_α|x̄|^{α/2}`, exact in the scalar type.
pub fn gauge_power<T: Scalar>(x: &HPoint<T>, g: &GaugeParams) -> T {
    let k = g.half_alpha();
    let horiz = x.horiz_sq_norm().powi(k);
    let vert = x.vert.abs().powi(k);
    horiz + T::from_rational(g.c_alpha()) * vert
}

/// `‖x‖_α`.
pub fn norm_alpha<T: Scalar>(x: &HPoint<T>, g: &GaugeParams) -> f64 {
    if T::EXACT {
        gauge_power(x, g).to_f64_lossy().powf(1.0 / g.alpha() as f64)
    } else {
        // evaluate in f64 so that f32 inputs do not lose the homogeneity check
        let xf = x.map(|v| v.to_f64_lossy());
        gauge_power(&xf, g).powf(1.0 / g.alpha() as f64)
    }
}

/// `x * y⁻¹ = (x̲ − y̲, x̄ − ȳ + ½ y̲ᵀJx̲)`.
pub fn translate<T: Scalar>(x: &HPoint<T>, y: &HPoint<T>) -> Result<HPoint<T>> {
    x.group_mul(&y.inverse())
}

/// `Φ(x, y) = φ_α(x, y)^α`, exact in the scalar type.
pub fn phi_power<T: Scalar>(x: &HPoint<T>, y: &HPoint<T>, g: &GaugeParams) -> Result<T> {
    g.check_point(x)?;
    Ok(gauge_power(&translate(x, y)?, g))
}

/// `φ_α(x, y) = ‖x * y⁻¹‖_α`.
pub fn phi_alpha<T: Scalar>(x: &HPoint<T>, y: &HPoint<T>, g: &GaugeParams) -> Result<f64> {
    g.check_point(x)?;
    Ok(norm_alpha(&translate(x, y)?, g))
}

/// Integer types usable for exact scaled comparisons.
pub trait ExactInt:
    Clone + Integer + Signed + CheckedMul + CheckedAdd + FromPrimitive + ToPrimitive + Send + Sync
{
    fn from_bigint(v: &BigInt) -> Option<Self>;
    fn to_bigint(&self) -> BigInt;
}

impl ExactInt for i64 {
    fn from_bigint(v: &BigInt) -> Option<Self> {
        v.to_i64()
    }
    fn to_bigint(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl ExactInt for i128 {
    fn from_bigint(v: &BigInt) -> Option<Self> {
        v.to_i128()
    }
    fn to_bigint(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl ExactInt for BigInt {
    fn from_bigint(v: &BigInt) -> Option<Self> {
        Some(v.clone())
    }
    fn to_bigint(&self) -> BigInt {
        self.clone()
    }
}

/// `base^k` with overflow detection.
pub fn checked_pow<I: ExactInt>(base: &I, k: u32) -> Option<I> {
    let mut acc = I::one();
    for _ in 0..k {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// `2^α Φ(x, y)` for lattice points in the integer type `I`.
///
/// `scaled_c` is `C_α 2^{α/2}` (see [`GaugeParams::scaled_constant`]).
/// Returns `None` on overflow of `I`.
pub fn phi_power_scaled_in<I: ExactInt>(x: &IntPoint, y: &IntPoint, half_alpha: u32, scaled_c: &I) -> Option<I> {
    let mut r2 = I::zero();
    for (a, b) in x.horiz.iter().zip(&y.horiz) {
        let d = I::from_i64(a.checked_sub(*b)?)?;
        r2 = r2.checked_add(&d.checked_mul(&d)?)?;
    }
    // 2^α |x̲−y̲|^α = (4 |x̲−y̲|²)^{α/2}
    let four = I::from_i64(4)?;
    let horiz = checked_pow(&four.checked_mul(&r2)?, half_alpha)?;
    // twice the vertical coordinate of x * y⁻¹
    let m = 2i128 * (x.vert as i128 - y.vert as i128) + symplectic_i128(&y.horiz, &x.horiz);
    let m = I::from_i128(m.abs())?;
    let vert = scaled_c.checked_mul(&checked_pow(&m, half_alpha)?)?;
    horiz.checked_add(&vert)
}

pub(crate) fn symplectic_i128(u: &[i64], v: &[i64]) -> i128 {
    let n = u.len() / 2;
    (0..n).map(|i| u[i] as i128 * v[n + i] as i128 - u[n + i] as i128 * v[i] as i128).sum()
}

/// `2^α Φ(x, y) = 2^α|x̲−y̲|^α + C_α 2^{α/2} |2(x̄−ȳ) + y̲ᵀJx̲|^{α/2}`, exact.
pub fn phi_power_scaled(x: &IntPoint, y: &IntPoint, g: &GaugeParams) -> Result<BigUint> {
    g.check_point(x)?;
    same_n(x, y)?;
    let k = g.scaled_constant()?;
    let v = phi_power_scaled_in::<BigInt>(x, y, g.half_alpha(), &k).expect("BigInt arithmetic does not overflow");
    Ok(v.to_biguint().expect("sum of non-negative terms"))
}

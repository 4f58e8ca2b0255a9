//! Counting lattice points `v` with `|φ_α(u, v) − Q| ≤ δ`.
//!
//! Membership is decided on the integer `V = 2^α Φ(u, v)`: the shell is the
//! integer interval `[⌈(2(Q−δ))^α⌉, ⌊(2(Q+δ))^α⌋]`. Both counters work in
//! `i128` when an a-priori bound on every intermediate value fits, and in
//! `BigInt` otherwise.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::heisenberg::{checked_pow, symplectic_i128, ExactInt, GaugeParams};
use crate::rng::keyed_rng;
use crate::scalar::{dyadic_approx, exact_rational_power, int, Scalar};
use crate::{IntPoint, Rational};

/// Brute-force limit on `|L_{D,Q}|` for [`naive_shell_count`].
pub const NAIVE_GUARD: u128 = 100_000_000;

/// Minimum number of random centers.
pub const MIN_SAMPLES: usize = 30;

/// The truncated lattice `L_{D,Q}`: `|b_i| ≤ ⌈cQ⌉`, `|b_D| ≤ ⌈cQ²⌉`
/// (signed) or `0 ≤ b_i ≤ ⌈cQ⌉`, `0 ≤ b_D ≤ ⌈cQ²⌉` (unsigned).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSpec {
    n: usize,
    c: Rational,
    extent: Rational,
    signed: bool,
    horiz: (i64, i64),
    vert: (i64, i64),
}

fn ceil_i64(r: &Rational) -> Result<i64> {
    r.ceil().to_integer().to_i64().ok_or_else(|| invalid(format!("lattice bound {r} is too large")))
}

impl LatticeSpec {
    pub fn new(n: usize, c: Rational, extent: Rational, signed: bool) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        if !c.is_positive() || !extent.is_positive() {
            return Err(invalid("truncation constant and Q must be positive"));
        }
        let hb = ceil_i64(&(&c * &extent))?;
        let vb = ceil_i64(&(&c * &extent * &extent))?;
        let (horiz, vert) = if signed { ((-hb, hb), (-vb, vb)) } else { ((0, hb), (0, vb)) };
        let spec = Self { n, c, extent, signed, horiz, vert };
        let len = (horiz.1 - horiz.0 + 1) as u128;
        let total = (0..2 * n)
            .try_fold((vert.1 - vert.0 + 1) as u128, |acc, _| acc.checked_mul(len))
            .filter(|&t| t <= u64::MAX as u128);
        total.ok_or_else(|| invalid("lattice has more than 2^64 points"))?;
        Ok(spec)
    }

    /// Signed lattice with `c = 1`.
    pub fn standard(n: usize, extent: Rational) -> Result<Self> {
        Self::new(n, int(1), extent, true)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> &Rational {
        &self.c
    }

    pub fn extent(&self) -> &Rational {
        &self.extent
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    /// Inclusive range of each horizontal coordinate.
    pub fn horiz_range(&self) -> (i64, i64) {
        self.horiz
    }

    /// Inclusive range of the vertical coordinate.
    pub fn vert_range(&self) -> (i64, i64) {
        self.vert
    }

    fn horiz_len(&self) -> u64 {
        (self.horiz.1 - self.horiz.0 + 1) as u64
    }

    fn vert_len(&self) -> u64 {
        (self.vert.1 - self.vert.0 + 1) as u64
    }

    pub fn len(&self) -> u64 {
        self.horiz_len().pow(2 * self.n as u32) * self.vert_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Point number `index` in mixed-radix order, vertical coordinate fastest.
    pub fn point(&self, index: u64) -> IntPoint {
        let mut rest = index;
        let vert = self.vert.0 + (rest % self.vert_len()) as i64;
        rest /= self.vert_len();
        let mut horiz = vec![0; 2 * self.n];
        for h in horiz.iter_mut().rev() {
            *h = self.horiz.0 + (rest % self.horiz_len()) as i64;
            rest /= self.horiz_len();
        }
        IntPoint { horiz, vert }
    }

    pub fn contains(&self, p: &IntPoint) -> bool {
        p.horiz.len() == 2 * self.n
            && p.horiz.iter().all(|&h| self.horiz.0 <= h && h <= self.horiz.1)
            && self.vert.0 <= p.vert
            && p.vert <= self.vert.1
    }

    pub fn points(&self) -> impl Iterator<Item = IntPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    fn horiz_abs_max(&self) -> i64 {
        self.horiz.0.abs().max(self.horiz.1.abs())
    }

    fn vert_abs_max(&self) -> i64 {
        self.vert.0.abs().max(self.vert.1.abs())
    }
}

/// `(q, τ)` parameters of the counting lemma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaParams {
    pub q: Rational,
    pub tau: Rational,
    /// False when `q^a` or `q^{a−τ}` is irrational and was replaced by a
    /// 40-bit dyadic approximation.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellQuery {
    pub gauge: GaugeParams,
    pub lattice: LatticeSpec,
    pub radius: Rational,
    pub delta: Rational,
    pub lemma: Option<LemmaParams>,
}

impl ShellQuery {
    /// Shell of radius `Q` and thickness `δ` on the signed lattice `L_{D,Q}`, `c = 1`.
    pub fn new(gauge: GaugeParams, radius: Rational, delta: Rational) -> Result<Self> {
        let lattice = LatticeSpec::standard(gauge.n(), radius.clone())?;
        Self::with_lattice(gauge, lattice, radius, delta)
    }

    pub fn with_lattice(gauge: GaugeParams, lattice: LatticeSpec, radius: Rational, delta: Rational) -> Result<Self> {
        if lattice.n() != gauge.n() {
            return Err(Error::DimensionMismatch { left: 2 * lattice.n(), right: 2 * gauge.n() });
        }
        if !radius.is_positive() || !delta.is_positive() {
            return Err(invalid("Q and delta must be positive"));
        }
        if delta >= radius {
            return Err(invalid(format!("delta = {delta} must be smaller than Q = {radius}")));
        }
        gauge.scaled_constant()?;
        Ok(Self { gauge, lattice, radius, delta, lemma: None })
    }

    /// Counting-lemma parameterisation `Q = q^a`, `δ = q^{a−τ}`, `a = D/(D+1)`.
    pub fn counting_lemma(gauge: GaugeParams, q: Rational, tau: Rational, c: Rational, signed: bool) -> Result<Self> {
        let d = gauge.dim() as i64;
        if q <= int(1) {
            return Err(invalid("q must exceed 1"));
        }
        let a = Rational::new(d.into(), (d + 1).into());
        if tau <= a {
            return Err(invalid(format!("tau = {tau} must exceed a = {a}")));
        }
        let (qa, qa_exact) = rational_power(&q, &a);
        let (delta, d_exact) = rational_power(&q, &(&a - &tau));
        let lattice = LatticeSpec::new(gauge.n(), c, qa.clone(), signed)?;
        let mut query = Self::with_lattice(gauge, lattice, qa, delta)?;
        query.lemma = Some(LemmaParams { q, tau, exact: qa_exact && d_exact });
        Ok(query)
    }

    pub fn with_delta(&self, delta: Rational) -> Result<Self> {
        Self::with_lattice(self.gauge.clone(), self.lattice.clone(), self.radius.clone(), delta)
    }

    fn endpoints(&self) -> (Rational, Rational) {
        let lo = &self.radius - &self.delta;
        let lo = if lo.is_negative() { Rational::zero() } else { lo };
        (lo, &self.radius + &self.delta)
    }
}

/// `base^e` for rational `e`, exact when possible.
fn rational_power(base: &Rational, e: &Rational) -> (Rational, bool) {
    let (p, q) = (e.numer().to_i64(), e.denom().to_u32());
    if let (Some(p), Some(q)) = (p, q) {
        if let Some(v) = exact_rational_power(base, p, q) {
            return (v, true);
        }
    }
    let v = base.to_f64_lossy().powf(e.to_f64_lossy());
    (dyadic_approx(v, 40), false)
}

/// `V = 2^α Φ` ranges over `[vmin, vmax]` in the shell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ShellBounds {
    pub vmin: BigInt,
    pub vmax: BigInt,
}

impl ShellBounds {
    pub fn new(lo: &Rational, hi: &Rational, alpha: u32) -> Self {
        let two = int(2);
        let lo = num_traits::pow(&two * lo, alpha as usize);
        let hi = num_traits::pow(&two * hi, alpha as usize);
        Self { vmin: lo.ceil().to_integer(), vmax: hi.floor().to_integer() }
    }
}

/// Everything the inner loops need, in the integer type `I`.
struct Kernel<I> {
    k: u32,
    kc: I,
    vmin: I,
    vmax: I,
    horiz: (i64, i64),
    vert: (i64, i64),
    /// Largest `r²` with `(4r²)^k ≤ vmax`.
    r2cap: i128,
}

/// Bound on `|m| = |2(ū − v̄) + v̲ᵀJu̲|` over the lattice.
fn m_bound(u: &IntPoint, lat: &LatticeSpec) -> i128 {
    let hb = lat.horiz_abs_max() as i128;
    let su: i128 = u.horiz.iter().map(|&x| (x as i128).abs()).sum();
    2 * (u.vert as i128).abs() + 2 * lat.vert_abs_max() as i128 + hb * su
}

/// Bound on `|u̲ − v̲|²` over the lattice.
fn r2_bound(u: &IntPoint, lat: &LatticeSpec) -> i128 {
    let hb = lat.horiz_abs_max() as i128;
    u.horiz.iter().map(|&x| ((x as i128).abs() + hb).pow(2)).sum()
}

fn fits_i128(u: &IntPoint, lat: &LatticeSpec, k: u32, kc: &BigInt, b: &ShellBounds) -> bool {
    let limit = BigInt::one() << 120;
    let h = num_traits::pow(BigInt::from(4 * r2_bound(u, lat)), k as usize);
    let v = h + kc * num_traits::pow(BigInt::from(m_bound(u, lat) + 2), k as usize);
    v < limit && b.vmax.abs() < limit && b.vmin.abs() < limit
}

impl<I: ExactInt> Kernel<I> {
    fn new(query: &ShellQuery, lo: &Rational, hi: &Rational) -> Result<Self> {
        let g = &query.gauge;
        let k = g.half_alpha();
        let kc = g.scaled_constant()?;
        let b = ShellBounds::new(lo, hi, g.alpha());
        let conv = |v: &BigInt| I::from_bigint(v).ok_or_else(|| invalid("value exceeds the integer kernel"));
        // r2cap = max r² with (4r²)^k ≤ vmax
        let r2cap = if b.vmax.is_negative() {
            -1
        } else {
            let root: BigInt = num_integer::Roots::nth_root(&b.vmax, k) / 4;
            root.to_i128().unwrap_or(i128::MAX)
        };
        Ok(Self {
            k,
            kc: conv(&kc)?,
            vmin: conv(&b.vmin)?,
            vmax: conv(&b.vmax)?,
            horiz: query.lattice.horiz_range(),
            vert: query.lattice.vert_range(),
            r2cap,
        })
    }

    fn pow(&self, base: &I) -> I {
        checked_pow(base, self.k).expect("bounded by the kernel choice")
    }

    fn int(v: i128) -> I {
        I::from_i128(v).expect("bounded by the kernel choice")
    }

    /// Brute force: every `v` of the lattice, membership decided point by point.
    fn naive(&self, u: &IntPoint) -> u64 {
        let n2 = u.horiz.len();
        let mut v = vec![self.horiz.0; n2];
        let mut count = 0u64;
        loop {
            let r2: i128 = u.horiz.iter().zip(&v).map(|(&a, &b)| (a as i128 - b as i128).pow(2)).sum();
            let h = self.pow(&Self::int(4 * r2));
            let base = 2 * u.vert as i128 + symplectic_i128(&v, &u.horiz);
            for vd in self.vert.0..=self.vert.1 {
                let m = (base - 2 * vd as i128).abs();
                let val = h.clone() + self.kc.clone() * self.pow(&Self::int(m));
                if val >= self.vmin && val <= self.vmax {
                    count += 1;
                }
            }
            if !advance(&mut v, self.horiz) {
                return count;
            }
        }
    }

    fn vert_term(&self, m: i128) -> I {
        self.kc.clone() * self.pow(&Self::int(m))
    }

    /// Largest `m ∈ [0, mmax]` with `K m^k ≤ r`, `None` if `r < 0`.
    fn m_upper(&self, r: &I, mmax: i128) -> Option<i128> {
        if r.is_negative() {
            return None;
        }
        let est = (r.to_f64()? / self.kc.to_f64()?).powf(1.0 / self.k as f64);
        let mut m = (est.floor() as i128 - 2).clamp(0, mmax);
        while m < mmax && self.vert_term(m + 1) <= *r {
            m += 1;
        }
        while m > 0 && self.vert_term(m) > *r {
            m -= 1;
        }
        Some(m)
    }

    /// Smallest `m ∈ [0, mmax]` with `K m^k ≥ r`, `None` if there is none.
    fn m_lower(&self, r: &I, mmax: i128) -> Option<i128> {
        if !r.is_positive() {
            return Some(0);
        }
        if self.vert_term(mmax) < *r {
            return None;
        }
        let est = (r.to_f64()? / self.kc.to_f64()?).powf(1.0 / self.k as f64);
        let mut m = (est.ceil() as i128 + 2).clamp(0, mmax);
        while m > 0 && self.vert_term(m - 1) >= *r {
            m -= 1;
        }
        while self.vert_term(m) < *r {
            m += 1;
        }
        Some(m)
    }

    /// Slice counter: prune horizontally, then count the vertical
    /// coordinates in at most two intervals.
    fn fast(&self, u: &IntPoint) -> u64 {
        if self.r2cap < 0 {
            return 0;
        }
        let reach = self.r2cap.min(i64::MAX as i128 / 4).isqrt() as i64;
        let ranges: Vec<(i64, i64)> = u
            .horiz
            .iter()
            .map(|&c| (self.horiz.0.max(c.saturating_sub(reach)), self.horiz.1.min(c.saturating_add(reach))))
            .collect();
        if ranges.iter().any(|r| r.0 > r.1) {
            return 0;
        }
        let mmax = {
            let su: i128 = u.horiz.iter().map(|&x| (x as i128).abs()).sum();
            let hb = self.horiz.0.abs().max(self.horiz.1.abs()) as i128;
            let vb = self.vert.0.abs().max(self.vert.1.abs()) as i128;
            2 * (u.vert as i128).abs() + 2 * vb + hb * su
        };
        let mut v: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut count = 0u64;
        loop {
            let r2: i128 = u.horiz.iter().zip(&v).map(|(&a, &b)| (a as i128 - b as i128).pow(2)).sum();
            if r2 <= self.r2cap {
                let h = self.pow(&Self::int(4 * r2));
                let hi = self.m_upper(&(self.vmax.clone() - h.clone()), mmax);
                let lo = self.m_lower(&(self.vmin.clone() - h), mmax);
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    if lo <= hi {
                        let base = 2 * u.vert as i128 + symplectic_i128(&v, &u.horiz);
                        count += self.vd_count(base, lo, hi);
                        if hi >= 1 {
                            count += self.vd_count(base, -hi, -lo.max(1));
                        }
                    }
                }
            }
            if !advance_ranges(&mut v, &ranges) {
                return count;
            }
        }
    }

    /// Number of `v_D` in the lattice range with `base − 2 v_D ∈ [a, b]`.
    fn vd_count(&self, base: i128, a: i128, b: i128) -> u64 {
        let lo = (base - b + 1).div_euclid(2).max(self.vert.0 as i128);
        let hi = (base - a).div_euclid(2).min(self.vert.1 as i128);
        if hi >= lo {
            (hi - lo + 1) as u64
        } else {
            0
        }
    }
}

fn advance(v: &mut [i64], range: (i64, i64)) -> bool {
    for x in v.iter_mut().rev() {
        if *x < range.1 {
            *x += 1;
            return true;
        }
        *x = range.0;
    }
    false
}

fn advance_ranges(v: &mut [i64], ranges: &[(i64, i64)]) -> bool {
    for (x, r) in v.iter_mut().zip(ranges).rev() {
        if *x < r.1 {
            *x += 1;
            return true;
        }
        *x = r.0;
    }
    false
}

impl Kernel<i128> {
    /// Every value of the naive loop stays below `2^62`.
    fn fits_i64(&self, u: &IntPoint) -> bool {
        let hb = self.horiz.0.abs().max(self.horiz.1.abs()) as i128;
        let vb = self.vert.0.abs().max(self.vert.1.abs()) as i128;
        let r2: i128 = u.horiz.iter().map(|&x| ((x as i128).abs() + hb).pow(2)).sum();
        let m = 2 * (u.vert as i128).abs() + 2 * vb + hb * u.horiz.iter().map(|&x| (x as i128).abs()).sum::<i128>();
        let limit = 1i128 << 62;
        let h = (4 * r2).checked_pow(self.k);
        let vert = m.checked_pow(self.k).and_then(|p| p.checked_mul(self.kc));
        matches!((h, vert), (Some(h), Some(v)) if h < limit && v < limit)
            && self.vmax.abs() < limit
            && self.vmin.abs() < limit
    }

    fn naive_i64(&self, u: &IntPoint) -> u64 {
        let n2 = u.horiz.len();
        let (kc, vmin, vmax) = (self.kc as i64, self.vmin as i64, self.vmax as i64);
        let mut v = vec![self.horiz.0; n2];
        let mut count = 0u64;
        loop {
            let r2: i64 = u.horiz.iter().zip(&v).map(|(&a, &b)| (a - b).pow(2)).sum();
            let h = (4 * r2).pow(self.k);
            let base = 2 * u.vert + symplectic_i128(&v, &u.horiz) as i64;
            for vd in self.vert.0..=self.vert.1 {
                let val = h + kc * (base - 2 * vd).abs().pow(self.k);
                count += (val >= vmin && val <= vmax) as u64;
            }
            if !advance(&mut v, self.horiz) {
                return count;
            }
        }
    }

    /// [`Kernel::naive`] in plain machine arithmetic.
    fn naive_i128(&self, u: &IntPoint) -> u64 {
        if self.fits_i64(u) {
            return self.naive_i64(u);
        }
        let n2 = u.horiz.len();
        let mut v = vec![self.horiz.0; n2];
        let mut count = 0u64;
        loop {
            let r2: i128 = u.horiz.iter().zip(&v).map(|(&a, &b)| (a as i128 - b as i128).pow(2)).sum();
            let h = (4 * r2).pow(self.k);
            let base = 2 * u.vert as i128 + symplectic_i128(&v, &u.horiz);
            for vd in self.vert.0..=self.vert.1 {
                let val = h + self.kc * (base - 2 * vd as i128).abs().pow(self.k);
                count += (val >= self.vmin && val <= self.vmax) as u64;
            }
            if !advance(&mut v, self.horiz) {
                return count;
            }
        }
    }
}

enum AnyKernel {
    Small(Kernel<i128>),
    Big(Kernel<BigInt>),
}

impl AnyKernel {
    fn for_center(query: &ShellQuery, u: &IntPoint, lo: &Rational, hi: &Rational) -> Result<Self> {
        let g = &query.gauge;
        let b = ShellBounds::new(lo, hi, g.alpha());
        if fits_i128(u, &query.lattice, g.half_alpha(), &g.scaled_constant()?, &b) {
            Ok(Self::Small(Kernel::new(query, lo, hi)?))
        } else {
            Ok(Self::Big(Kernel::new(query, lo, hi)?))
        }
    }

    fn naive(&self, u: &IntPoint) -> u64 {
        match self {
            Self::Small(k) => k.naive_i128(u),
            Self::Big(k) => k.naive(u),
        }
    }

    fn fast(&self, u: &IntPoint) -> u64 {
        match self {
            Self::Small(k) => k.fast(u),
            Self::Big(k) => k.fast(u),
        }
    }
}

fn check_center(query: &ShellQuery, u: &IntPoint) -> Result<()> {
    query.gauge.check_point(u)?;
    if u.horiz.iter().chain(std::iter::once(&u.vert)).any(|c| c.unsigned_abs() > 1 << 40) {
        return Err(invalid("center coordinates must stay below 2^40 in absolute value"));
    }
    Ok(())
}

/// Prepared counter for one query, reusable across centers.
pub struct ShellCounter {
    query: ShellQuery,
    lattice_kernel: AnyKernel,
    lo: Rational,
    hi: Rational,
}

impl ShellCounter {
    pub fn new(query: &ShellQuery) -> Result<Self> {
        let (lo, hi) = query.endpoints();
        Self::with_endpoints(query, lo, hi)
    }

    /// Counter for the closed shell `lo ≤ φ_α ≤ hi`.
    fn with_endpoints(query: &ShellQuery, lo: Rational, hi: Rational) -> Result<Self> {
        let lat = &query.lattice;
        // the corner of the box bounds every lattice center
        let corner = IntPoint { horiz: vec![lat.horiz_abs_max(); 2 * lat.n()], vert: lat.vert_abs_max() };
        let lattice_kernel = AnyKernel::for_center(query, &corner, &lo, &hi)?;
        Ok(Self { query: query.clone(), lattice_kernel, lo, hi })
    }

    pub fn query(&self) -> &ShellQuery {
        &self.query
    }

    fn kernel_for(&self, u: &IntPoint) -> Result<Option<AnyKernel>> {
        check_center(&self.query, u)?;
        if self.query.lattice.contains(u) {
            Ok(None)
        } else {
            AnyKernel::for_center(&self.query, u, &self.lo, &self.hi).map(Some)
        }
    }

    pub fn fast(&self, u: &IntPoint) -> Result<u64> {
        Ok(match self.kernel_for(u)? {
            None => self.lattice_kernel.fast(u),
            Some(k) => k.fast(u),
        })
    }

    pub fn naive(&self, u: &IntPoint) -> Result<u64> {
        let size = self.query.lattice.len() as u128;
        if size > NAIVE_GUARD {
            return Err(Error::GuardExceeded { size, limit: NAIVE_GUARD });
        }
        Ok(match self.kernel_for(u)? {
            None => self.lattice_kernel.naive(u),
            Some(k) => k.naive(u),
        })
    }

    /// Fast count for a center of the lattice, by index.
    fn fast_at(&self, index: u64) -> u64 {
        self.lattice_kernel.fast(&self.query.lattice.point(index))
    }
}

/// `#{v ∈ L_{D,Q} : |φ_α(u, v) − Q| ≤ δ}` by enumerating every `v`.
pub fn naive_shell_count(u: &IntPoint, query: &ShellQuery) -> Result<u64> {
    ShellCounter::new(query)?.naive(u)
}

/// Same count as [`naive_shell_count`], by slices over the horizontal part.
pub fn fast_shell_count(u: &IntPoint, query: &ShellQuery) -> Result<u64> {
    ShellCounter::new(query)?.fast(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    Exhaustive,
    Random { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellCount {
    /// Sum of the per-center counts over the centers used.
    #[serde(serialize_with = "as_decimal")]
    pub raw_count: BigUint,
    /// `Q^{−(2n+2)} Σ_u count(u)`, estimated from the sample in random mode.
    pub normalized: f64,
    pub centers_used: u64,
    pub lattice_size: u64,
    pub sampling: Sampling,
    pub stderr: f64,
}

fn as_decimal<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// Averaged count over all centers of `L_{D,Q}`, or over `N` centers drawn
/// uniformly with replacement. Sampling a population of at most `N` points
/// falls back to the exhaustive sum.
pub fn averaged_shell_count(query: &ShellQuery, sampling: Sampling) -> Result<ShellCount> {
    let counter = ShellCounter::new(query)?;
    let size = query.lattice.len();
    let scale = num_traits::pow(query.radius.clone(), query.gauge.homogeneous_dim());
    match sampling {
        Sampling::Random { samples, .. } if samples < MIN_SAMPLES => {
            Err(invalid(format!("random sampling needs at least {MIN_SAMPLES} centers, got {samples}")))
        }
        Sampling::Random { samples, seed } if (samples as u64) < size => {
            let counts: Vec<u64> = (0..samples as u64)
                .into_par_iter()
                .map(|i| {
                    let idx = rand::Rng::random_range(&mut keyed_rng(seed, i), 0..size);
                    counter.fast_at(idx)
                })
                .collect();
            let sum: u128 = counts.iter().map(|&c| c as u128).sum();
            let sum_sq: BigInt = counts.iter().map(|&c| BigInt::from(c) * c).sum();
            let n = BigInt::from(samples);
            let normalized = Rational::new(BigInt::from(sum) * size, n.clone()) / &scale;
            // unbiased sample variance (N Σc² − (Σc)²) / (N (N − 1))
            let var = Rational::new(&n * sum_sq - BigInt::from(sum).pow(2), &n * (&n - 1));
            let std = var.to_f64_lossy().max(0.0).sqrt();
            let stderr = size as f64 * std / (samples as f64).sqrt() / scale.to_f64_lossy();
            Ok(ShellCount {
                raw_count: BigUint::from(sum),
                normalized: normalized.to_f64_lossy(),
                centers_used: samples as u64,
                lattice_size: size,
                sampling,
                stderr,
            })
        }
        _ => {
            let sum: u128 = (0..size).into_par_iter().map(|i| counter.fast_at(i) as u128).sum();
            Ok(ShellCount {
                raw_count: BigUint::from(sum),
                normalized: (Rational::from_integer(sum.into()) / scale).to_f64_lossy(),
                centers_used: size,
                lattice_size: size,
                sampling: Sampling::Exhaustive,
                stderr: 0.0,
            })
        }
    }
}

/// Right-hand side of the averaged bound: `max{Q^{2n}, Q^{2n+1}δ}` for
/// `α ∈ {2, 4}`, `max{Q^{2n+2/D}, Q^{2n+1}δ}` for `α ≥ 6`, and `q^{D−τ}`
/// for a counting-lemma query.
pub fn theorem_bound(query: &ShellQuery) -> Result<f64> {
    let g = &query.gauge;
    if !g.alpha().is_multiple_of(2) {
        return Err(invalid("theorem bound needs even alpha"));
    }
    if let Some(l) = &query.lemma {
        return Ok(l.q.to_f64_lossy().powf(g.dim() as f64 - l.tau.to_f64_lossy()));
    }
    Ok(bound_value(g, query.radius.to_f64_lossy(), query.delta.to_f64_lossy()))
}

/// [`theorem_bound`] for floating `Q`, `δ`.
pub fn bound_value(g: &GaugeParams, q: f64, delta: f64) -> f64 {
    let two_n = 2.0 * g.n() as f64;
    let first = if g.alpha() <= 4 { q.powf(two_n) } else { q.powf(two_n + 2.0 / g.dim() as f64) };
    first.max(q.powf(two_n + 1.0) * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

/// Least-squares line through `(log Q, log count)`.
pub fn fit_scaling_exponent(series: &[(f64, f64)]) -> Result<ScalingFit> {
    if series.len() < 3 {
        return Err(invalid(format!("need at least 3 points, got {}", series.len())));
    }
    if let Some(&(q, v)) = series.iter().find(|(q, v)| !(*q > 0.0 && *v > 0.0)) {
        return Err(invalid(format!("log-log fit needs positive entries, got ({q}, {v})")));
    }
    let pts: Vec<(f64, f64)> = series.iter().map(|&(q, v)| (q.ln(), v.ln())).collect();
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("all Q values coincide"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(ScalingFit { slope, intercept, residual: (ss / len).sqrt() })
}

/// `|B_1|` for `‖·‖_α`, by radial quadrature of
/// `|S^{2n−1}| ∫_0^1 2((1 − r^α)/C_α)^{2/α} r^{2n−1} dr`.
pub fn unit_ball_volume(g: &GaugeParams) -> Result<f64> {
    let n = g.n() as i32;
    let alpha = g.alpha() as f64;
    let c = g.c_alpha().to_f64_lossy();
    let sphere = 2.0 * std::f64::consts::PI.powi(n) / (1..n).map(f64::from).product::<f64>();
    let f = |r: f64| 2.0 * ((1.0 - r.powf(alpha)).max(0.0) / c).powf(2.0 / alpha) * r.powi(2 * n - 1);
    let tol = 1e-9;
    let out = quadrature::double_exponential::integrate(f, 0.0, 1.0, 1e-12);
    if !out.integral.is_finite() || out.error_estimate > tol * out.integral.abs() {
        return Err(Error::Quadrature(format!("estimate {} with error {}", out.integral, out.error_estimate)));
    }
    Ok(sphere * out.integral)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorTerm {
    pub count: u64,
    pub volume: f64,
    pub error: f64,
}

/// `||B_Q(0)| − #{m ∈ ℤ^D : ‖m‖_α ≤ Q}|`.
pub fn fixed_center_error_term(g: &GaugeParams, radius: &Rational) -> Result<ErrorTerm> {
    if !radius.is_positive() {
        return Err(invalid("Q must be positive"));
    }
    // vertical reach of the ball is Q² C^{−2/α}
    let c_inv = (1.0 / g.c_alpha().to_f64_lossy()).powf(2.0 / g.alpha() as f64);
    let c = int(c_inv.max(1.0).ceil() as i64);
    let lattice = LatticeSpec::new(g.n(), c, radius.clone(), true)?;
    // shell [0, Q] is the ball
    let query = ShellQuery { gauge: g.clone(), lattice, radius: radius.clone(), delta: radius.clone(), lemma: None };
    g.scaled_constant()?;
    let counter = ShellCounter::with_endpoints(&query, Rational::zero(), radius.clone())?;
    let count = counter.fast(&IntPoint::origin_int(g.n()))?;
    let volume = radius.to_f64_lossy().powi(g.homogeneous_dim() as i32) * unit_ball_volume(g)?;
    Ok(ErrorTerm { count, volume, error: (volume - count as f64).abs() })
}

impl IntPoint {
    pub fn origin_int(n: usize) -> Self {
        IntPoint { horiz: vec![0; 2 * n], vert: 0 }
    }
}

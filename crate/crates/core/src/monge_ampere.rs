//! The bordered mixed Hessian `M(Φ)` of `Φ = φ_α^α` and its reduction to
//! the one-point matrix `N(Ψ)` through the translation `Θ(x, y) = x * y⁻¹`.
//!
//! With `z = Θ(x, y)`, `m = z̄` and `Ψ(z) = |z̲|^α + A|z̄|^{α/2}`:
//!
//! ```text
//! M(Φ)(x, y) = L(y) · N(Ψ)(z) · R(x),
//! L = [[1, 0, 0], [0, I, −½Jy̲], [0, 0, 1]],   det L = 1
//! R = [[1, 0, 0], [0, −I, 0], [0, ½(Jx̲)ᵀ, −1]], det R = −1
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::heisenberg::{apply_j, gauge_power, translate, GaugeParams};
use crate::linalg::{det_exact, rank_exact, rank_tolerant, sign, Matrix, Provenance, DEFAULT_RANK_EPS};
use crate::rng::keyed_rng_in;
use crate::scalar::{exact_rational_power, int, ratio, Scalar};
use crate::{HPoint, RatMatrix, RatPoint, Rational};

/// `Θ(x, y) = x * y⁻¹ = (x̲ − y̲, x̄ − ȳ + ½ y̲ᵀJx̲)`.
pub fn theta<T: Scalar>(x: &HPoint<T>, y: &HPoint<T>) -> Result<HPoint<T>> {
    translate(x, y)
}

/// Derivatives of `Ψ` at one point. The horizontal and vertical parts
/// separate, so the mixed block `∇_{2n}Ψ'_D` vanishes.
#[derive(Debug, Clone)]
pub struct PsiDerivs<T> {
    /// `∇_{2n}Ψ = α|z̲|^{α−2} z̲`
    pub grad_h: Vec<T>,
    /// `D²_{2n}Ψ = α|z̲|^{α−2} I + α(α−2)|z̲|^{α−4} z̲z̲ᵀ`
    pub hess_h: Matrix<T>,
    /// `Ψ'_D = (Aα/2) sign(z̄)|z̄|^{α/2−1}`
    pub d1: T,
    /// `Ψ''_DD = A(α/2)(α/2−1)|z̄|^{α/2−2}`
    pub d2: T,
}

/// True where `|z̄|^{α/2}` is not a polynomial and `z̄ = 0`.
pub fn on_seam<T: Scalar>(z: &HPoint<T>, g: &GaugeParams) -> bool {
    g.half_alpha() % 2 == 1 && z.vert.is_zero()
}

/// Derivatives of `Ψ`; at `z̄ = 0` with `α = 2` the vertical derivative does not exist.
pub fn psi_derivs<T: Scalar>(z: &HPoint<T>, g: &GaugeParams) -> Result<PsiDerivs<T>> {
    g.check_point(z)?;
    let alpha = g.alpha();
    let k = g.half_alpha();
    if alpha == 2 && z.vert.is_zero() {
        return Err(Error::Seam("alpha = 2 has no vertical derivative at z_vert = 0".into()));
    }
    let a = T::from_rational(g.c_alpha());
    let al = T::from_int(alpha as i64);
    let r2 = z.horiz_sq_norm();
    let sigma = al.clone() * r2.powi(k - 1);
    let grad_h = z.horiz.iter().map(|v| sigma.clone() * v.clone()).collect();
    let lambda = if alpha >= 4 { al.clone() * T::from_int(alpha as i64 - 2) * r2.powi(k - 2) } else { T::zero() };
    let mut hess_h = Matrix::outer(&z.horiz, &z.horiz).scale(&lambda);
    for i in 0..z.horiz.len() {
        hess_h[(i, i)] = hess_h[(i, i)].clone() + sigma.clone();
    }
    let m = z.vert.clone();
    let kk = T::from_int(k as i64);
    let d1 = a.clone() * kk.clone() * m.signum() * m.abs().powi(k - 1);
    let d2 = if k >= 2 { a * kk.clone() * (kk - T::one()) * m.abs().powi(k - 2) } else { T::zero() };
    Ok(PsiDerivs { grad_h, hess_h, d1, d2 })
}

/// `(∇ₓΦ, ∇_yΦ)` at `(x, y)`, in closed form.
pub fn grad_phi<T: Scalar>(x: &HPoint<T>, y: &HPoint<T>, g: &GaugeParams) -> Result<(Vec<T>, Vec<T>)> {
    let z = theta(x, y)?;
    let p = psi_derivs(&z, g)?;
    // ∂z̄/∂x̲ = −½Jy̲, ∂z̄/∂y̲ = ½Jx̲
    let v = half_j(&y.horiz, true);
    let w = half_j(&x.horiz, false);
    let mut gx: Vec<T> = p.grad_h.iter().zip(&v).map(|(f, vi)| f.clone() + p.d1.clone() * vi.clone()).collect();
    gx.push(p.d1.clone());
    let mut gy: Vec<T> = p.grad_h.iter().zip(&w).map(|(f, wi)| p.d1.clone() * wi.clone() - f.clone()).collect();
    gy.push(-p.d1);
    Ok((gx, gy))
}

/// `±½ J u`.
fn half_j<T: Scalar>(u: &[T], negate: bool) -> Vec<T> {
    apply_j(u).into_iter().map(|v| if negate { -(v * T::half()) } else { v * T::half() }).collect()
}

/// `N(Ψ)(z)`, order `D + 1`. At the seam of `α ≥ 6` the entries are the
/// continuous extension, with vanishing last row and column.
pub fn n_psi_matrix<T: Scalar>(z: &HPoint<T>, g: &GaugeParams) -> Result<Matrix<T>> {
    let p = psi_derivs(z, g)?;
    let n2 = z.horiz.len();
    let d = n2 + 1;
    let j = Matrix::<T>::symplectic(n2 / 2).scale(&(p.d1.clone() * T::half()));
    let mid = p.hess_h.add(&j);
    Ok(Matrix::from_fn(d + 1, d + 1, |r, c| match (r, c) {
        (0, 0) => T::zero(),
        (0, c) if c <= n2 => p.grad_h[c - 1].clone(),
        (r, 0) if r <= n2 => p.grad_h[r - 1].clone(),
        (0, _) | (_, 0) => p.d1.clone(),
        (r, c) if r <= n2 && c <= n2 => mid[(r - 1, c - 1)].clone(),
        (r, c) if r == d && c == d => p.d2.clone(),
        _ => T::zero(),
    })
    .with_provenance(Provenance::Factorized))
}

/// `Ñ(Ψ)(z)`: the leading `D × D` block of `N(Ψ)(z)`.
pub fn n_tilde<T: Scalar>(z: &HPoint<T>, g: &GaugeParams) -> Result<Matrix<T>> {
    let n = n_psi_matrix(z, g)?;
    let idx: Vec<usize> = (0..n.rows() - 1).collect();
    Ok(n.submatrix(&idx, &idx))
}

/// Left factor `L(y)`.
pub fn factor_left<T: Scalar>(y: &HPoint<T>) -> Matrix<T> {
    let n2 = y.horiz.len();
    let col = half_j(&y.horiz, true);
    let mut l = Matrix::identity(n2 + 2);
    for i in 0..n2 {
        l[(i + 1, n2 + 1)] = col[i].clone();
    }
    l
}

/// Right factor `R(x)`.
pub fn factor_right<T: Scalar>(x: &HPoint<T>) -> Matrix<T> {
    let n2 = x.horiz.len();
    let row = half_j(&x.horiz, false);
    let mut r = Matrix::<T>::identity(n2 + 2).scale(&-T::one());
    r[(0, 0)] = T::one();
    for i in 0..n2 {
        r[(n2 + 1, i + 1)] = row[i].clone();
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaMode {
    Direct,
    Factorized,
}

/// `M(Φ)(x, y) = [[0, ∇_yΦᵀ], [∇ₓΦ, Φ''_{xy}]]`, order `D + 1`.
///
/// Direct mode assembles the closed-form second derivatives of `Φ`;
/// factorized mode multiplies `L(y) N(Ψ)(Θ(x, y)) R(x)`.
pub fn monge_ampere_matrix<T: Scalar>(
    x: &HPoint<T>,
    y: &HPoint<T>,
    g: &GaugeParams,
    mode: MaMode,
) -> Result<Matrix<T>> {
    let z = theta(x, y)?;
    if on_seam(&z, g) {
        return Err(Error::Seam(format!("|z_vert|^{} is not twice polynomial at z_vert = 0", g.half_alpha())));
    }
    if mode == MaMode::Factorized {
        let m = factor_left(y).mul(&n_psi_matrix(&z, g)?).mul(&factor_right(x));
        return Ok(m.with_provenance(Provenance::Factorized));
    }
    let p = psi_derivs(&z, g)?;
    let (gx, gy) = grad_phi(x, y, g)?;
    let n2 = z.horiz.len();
    let v = half_j(&y.horiz, true);
    let w = half_j(&x.horiz, false);
    let jm = Matrix::<T>::symplectic(n2 / 2);
    let (g1, g2) = (p.d1, p.d2);
    // ∂²Φ/∂x̲∂y̲ = −D²Ψ + Ψ''_DD v wᵀ − ½Ψ'_D J
    let hxy = Matrix::from_fn(n2, n2, |r, c| {
        g2.clone() * v[r].clone() * w[c].clone()
            - p.hess_h[(r, c)].clone()
            - g1.clone() * T::half() * jm[(r, c)].clone()
    });
    let d = n2 + 1;
    let m = Matrix::from_fn(d + 1, d + 1, |r, c| match (r, c) {
        (0, 0) => T::zero(),
        (0, c) => gy[c - 1].clone(),
        (r, 0) => gx[r - 1].clone(),
        (r, c) if r <= n2 && c <= n2 => hxy[(r - 1, c - 1)].clone(),
        (r, c) if r <= n2 && c == d => -(g2.clone() * v[r - 1].clone()),
        (r, c) if r == d && c <= n2 => g2.clone() * w[c - 1].clone(),
        _ => -g2.clone(),
    });
    Ok(m.with_provenance(Provenance::Direct))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankMode {
    Exact,
    Tolerant(f64),
}

impl Default for RankMode {
    fn default() -> Self {
        RankMode::Tolerant(DEFAULT_RANK_EPS)
    }
}

pub fn matrix_rank(m: &RatMatrix, mode: RankMode) -> usize {
    match mode {
        RankMode::Exact => rank_exact(m),
        RankMode::Tolerant(eps) => rank_tolerant(&m.to_f64(), eps),
    }
}

/// Parameters of `σI + λwwᵀ + κJ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrixParams<T> {
    pub sigma: T,
    pub lambda: T,
    pub kappa: T,
    pub w: Vec<T>,
}

impl<T: Scalar> StructuredMatrixParams<T> {
    pub fn new(sigma: T, lambda: T, kappa: T, w: Vec<T>) -> Result<Self> {
        if w.is_empty() || !w.len().is_multiple_of(2) {
            return Err(invalid("w must have positive even length"));
        }
        Ok(Self { sigma, lambda, kappa, w })
    }

    /// `σI + λwwᵀ + κJ`.
    pub fn matrix(&self) -> Matrix<T> {
        let n2 = self.w.len();
        Matrix::<T>::identity(n2)
            .scale(&self.sigma)
            .add(&Matrix::outer(&self.w, &self.w).scale(&self.lambda))
            .add(&Matrix::symplectic(n2 / 2).scale(&self.kappa))
    }

    /// `(σ² + κ², σ² + κ² + σλ|w|²)`, both required nonzero.
    fn denominators(&self) -> Result<(T, T)> {
        let (s, l, k) = (&self.sigma, &self.lambda, &self.kappa);
        let base = s.clone() * s.clone() + k.clone() * k.clone();
        let w2 = self.w.iter().fold(T::zero(), |acc, v| acc + v.clone() * v.clone());
        let full = base.clone() + s.clone() * l.clone() * w2;
        if base.is_zero() || full.is_zero() {
            return Err(Error::SingularParameters(format!("sigma = {s:?}, lambda = {l:?}, kappa = {k:?}")));
        }
        Ok((base, full))
    }
}

/// Closed-form inverse of `σI + λwwᵀ + κJ`:
///
/// ```text
/// (σ²+κ²)⁻¹ [ σI − κJ − (σλ/Δ)(σwwᵀ − κ(Jw)wᵀ) + (λκ/Δ)(κ(Jw)(Jw)ᵀ − σw(Jw)ᵀ) ]
/// ```
/// with `Δ = σ² + κ² + σλ|w|²`.
pub fn structured_inverse<T: Scalar>(p: &StructuredMatrixParams<T>) -> Result<Matrix<T>> {
    let (base, delta) = p.denominators()?;
    let (s, l, k) = (p.sigma.clone(), p.lambda.clone(), p.kappa.clone());
    let n2 = p.w.len();
    let jw = apply_j(&p.w);
    let ww = Matrix::outer(&p.w, &p.w);
    let jw_w = Matrix::outer(&jw, &p.w);
    let w_jw = Matrix::outer(&p.w, &jw);
    let jw_jw = Matrix::outer(&jw, &jw);
    let first = Matrix::<T>::identity(n2).scale(&s).add(&Matrix::symplectic(n2 / 2).scale(&-k.clone()));
    let second = ww.scale(&s).add(&jw_w.scale(&-k.clone())).scale(&(-(s.clone() * l.clone()) / delta.clone()));
    let third = w_jw.scale(&-s).add(&jw_jw.scale(&k)).scale(&(l * k / delta));
    Ok(first.add(&second).add(&third).scale(&(T::one() / base)))
}

/// `(σI − κJ)w / (σ² + σλ|w|² + κ²)`, the inverse applied to `w`.
pub fn structured_inverse_apply_w<T: Scalar>(p: &StructuredMatrixParams<T>) -> Result<Vec<T>> {
    let (_, delta) = p.denominators()?;
    let jw = apply_j(&p.w);
    Ok(p.w.iter().zip(jw).map(|(w, jw)| (p.sigma.clone() * w.clone() - p.kappa.clone() * jw) / delta.clone()).collect())
}

/// `(σ, λ, κ)` at `z`, so that `D²Ψ + ½Ψ'_D J = σI + λz̲z̲ᵀ + κJ`.
pub fn structured_params<T: Scalar>(z: &HPoint<T>, g: &GaugeParams) -> Result<StructuredMatrixParams<T>> {
    let p = psi_derivs(z, g)?;
    let k = g.half_alpha();
    let al = T::from_int(g.alpha() as i64);
    let r2 = z.horiz_sq_norm();
    let sigma = al.clone() * r2.powi(k - 1);
    let lambda = if k >= 2 { al * T::from_int(g.alpha() as i64 - 2) * r2.powi(k - 2) } else { T::zero() };
    StructuredMatrixParams::new(sigma, lambda, p.d1 * T::half(), z.horiz.clone())
}

/// `𝔛(z) = α³|z̲|^{3α−4}/(σ² + σλ|z̲|² + κ²) + Aα/(α−2)·|z̄|^{α/2}`;
/// at `z̄ = 0` this is the equator functional `𝔷(z̲)` (`κ = 0`).
///
/// Equals `∇ᵀ P⁻¹ ∇ + (Ψ'_D)²/Ψ''_DD`, so `det N(Ψ) = −𝔛 · det P · Ψ''_DD`.
pub fn x_functional<T: Scalar>(z: &HPoint<T>, g: &GaugeParams) -> Result<T> {
    if g.alpha() < 4 {
        return Err(invalid("the functional is defined for alpha >= 4"));
    }
    if gauge_power(z, g).is_zero() {
        return Err(invalid("the functional needs a point of positive norm"));
    }
    let s = structured_params(z, g)?;
    let alpha = g.alpha();
    let al = T::from_int(alpha as i64);
    let r2 = z.horiz_sq_norm();
    let den = s.sigma.clone() * s.sigma.clone()
        + s.sigma.clone() * s.lambda.clone() * r2.clone()
        + s.kappa.clone() * s.kappa.clone();
    // |z̲|^{3α−4} = (|z̲|²)^{(3α−4)/2}
    let horiz = if r2.is_zero() { T::zero() } else { al.clone().powi(3) * r2.powi((3 * alpha - 4) / 2) / den };
    let a = T::from_rational(g.c_alpha());
    let vert = a * al / T::from_int(alpha as i64 - 2) * z.vert.abs().powi(g.half_alpha());
    Ok(horiz + vert)
}

/// `D_s` with `N(Ψ)(δ_s z) = D_s N(Ψ)(z) D_s`.
pub fn dilation_conjugator<T: Scalar>(s: &T, n: usize, g: &GaugeParams) -> Result<Matrix<T>> {
    if g.alpha() < 4 {
        return Err(invalid("the conjugator has integral exponents only for alpha >= 4"));
    }
    let k = g.half_alpha();
    Ok(Matrix::from_fn(2 * n + 2, 2 * n + 2, |r, c| {
        if r != c {
            T::zero()
        } else if r == 0 {
            s.powi(k)
        } else if r <= 2 * n {
            s.powi(k - 1)
        } else {
            s.powi(k - 2)
        }
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct OffEquatorSummary {
    pub count: usize,
    /// Every determinant was nonzero in exact arithmetic.
    pub all_det_nonzero: bool,
    pub min_abs_det: f64,
    /// Every sample lies exactly on the level set (otherwise a rational
    /// representative was dilated; see `max_level_error`).
    pub exact_level_set: bool,
    /// The functional `𝔛` was positive at every sample (α ≥ 4).
    pub functional_positive: bool,
    /// `|det M(Φ)| = |det N(Ψ)(Θ)|` and direct = factorized at every sample.
    pub factorization_consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquatorSummary {
    pub count: usize,
    /// Distinct exact ranks of `M(Φ)` seen, in increasing order.
    pub ranks: Vec<usize>,
    pub all_rank_full_minus_one: bool,
    pub all_det_tilde_nonzero: bool,
    pub functional_positive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub alpha: u32,
    pub n: usize,
    pub c_alpha: String,
    pub t: String,
    pub samples: usize,
    pub seed: u64,
    pub off_equator: OffEquatorSummary,
    pub equator: Option<EquatorSummary>,
    pub gradient_nonzero: bool,
    /// Largest relative deviation `|φ_α(x, y) − t|/t` in `f64` over all samples.
    pub max_level_error: f64,
    pub passed: bool,
}

fn random_rational(rng: &mut ChaCha8Rng, bound: i64, den: i64) -> Rational {
    ratio(rng.random_range(-bound * den..=bound * den), den)
}

/// Rational point of the unit sphere `S^k ⊂ ℝ^{k+1}` by inverse stereographic projection.
fn sphere_point(rng: &mut ChaCha8Rng, k: usize) -> Vec<Rational> {
    let p: Vec<Rational> = (0..k).map(|_| random_rational(rng, 2, 97)).collect();
    let p2 = p.iter().fold(int(0), |acc, v| acc + v * v);
    let den = &p2 + int(1);
    let mut out: Vec<Rational> = p.iter().map(|v| int(2) * v / &den).collect();
    out.push((p2 - int(1)) / den);
    out
}

/// How a level-set sample was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Construction {
    Exact,
    Dilated,
}

/// A point `z` with `‖z‖_α = t` (or a rational representative of its ray).
fn level_point(rng: &mut ChaCha8Rng, g: &GaugeParams, t: &Rational, equator: bool) -> Result<(RatPoint, Construction)> {
    let n2 = 2 * g.n();
    let a = g.c_alpha();
    if equator {
        // z̲ = t·(rational unit vector), z̄ = 0
        let u = sphere_point(rng, n2 - 1);
        return Ok((HPoint::new(u.into_iter().map(|v| v * t).collect(), int(0))?, Construction::Exact));
    }
    for _ in 0..1000 {
        match g.alpha() {
            2 => {
                // |z̲|² + A|z̄| = t²
                let zh: Vec<Rational> = (0..n2).map(|_| random_rational(rng, 1, 89) * t).collect();
                let r2 = zh.iter().fold(int(0), |acc, v| acc + v * v);
                let rest = t * t - r2;
                if rest <= int(0) {
                    continue;
                }
                let sgn = if rng.random::<bool>() { int(1) } else { int(-1) };
                return Ok((HPoint::new(zh, sgn * rest / a)?, Construction::Exact));
            }
            4 => {
                if let Some(s) = exact_rational_power(a, 1, 2) {
                    // (m, c) ∈ S^{2n}: |z̲|² = t²(1−m²)/(1+m²), A z̄² = t⁴ − |z̲|⁴
                    let sp = sphere_point(rng, n2);
                    let (m, c) = (sp[n2].clone(), &sp[..n2]);
                    if m == int(0) {
                        continue;
                    }
                    let q = int(1) + &m * &m;
                    let jc = apply_j(c);
                    let zh: Vec<Rational> = c.iter().zip(&jc).map(|(ci, ji)| (ci + &m * ji) * t / &q).collect();
                    let zv = int(2) * t * t * &m / (s * &q);
                    return Ok((HPoint::new(zh, zv)?, Construction::Exact));
                }
            }
            _ => {}
        }
        // generic ray representative with z̄ ≠ 0
        let zh: Vec<Rational> = (0..n2).map(|_| random_rational(rng, 1, 61)).collect();
        let zv = random_rational(rng, 1, 61);
        if zv == int(0) {
            continue;
        }
        return Ok((HPoint::new(zh, zv)?, Construction::Dilated));
    }
    Err(Error::SamplingFailed(1000))
}

struct SampleResult {
    construction: Construction,
    equator: bool,
    grad_ok: bool,
    det_abs: f64,
    det_nonzero: bool,
    consistent: bool,
    functional_ok: bool,
    rank: usize,
    det_tilde_nonzero: bool,
    level_error: f64,
}

fn check_sample(g: &GaugeParams, t: &Rational, seed: u64, index: u64, equator: bool) -> Result<SampleResult> {
    let mut rng = keyed_rng_in(seed, equator as u64 + 1, index);
    let (z, construction) = level_point(&mut rng, g, t, equator)?;
    let y: RatPoint = HPoint::new(
        (0..2 * g.n()).map(|_| random_rational(&mut rng, 1, 128) / int(2)).collect(),
        random_rational(&mut rng, 1, 128) / int(2),
    )?;
    let x = z.group_mul(&y)?;
    debug_assert_eq!(theta(&x, &y)?, z);
    let d = g.dim();
    let tf = t.to_f64_lossy();
    let level_error = match construction {
        Construction::Exact => {
            let exact = gauge_power(&z, g) == num_traits::pow(t.clone(), g.alpha() as usize);
            if exact {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Construction::Dilated => {
            // the level-t point δ_{t/‖z‖} z, in floating arithmetic
            let zf = z.to_f64();
            let s = tf / crate::heisenberg::norm_alpha(&zf, g);
            let yf = y.to_f64();
            let xf = zf.dilate(&s)?.group_mul(&yf)?;
            (crate::heisenberg::phi_alpha(&xf, &yf, g)? - tf).abs() / tf
        }
    };
    let grad_ok = if on_seam(&z, g) && g.alpha() == 2 {
        false
    } else {
        let (gx, gy) = grad_phi(&x, &y, g)?;
        gx.iter().any(|v| *v != int(0)) && gy.iter().any(|v| *v != int(0))
    };
    let functional_ok = g.alpha() < 4 || x_functional(&z, g)? > int(0);
    if on_seam(&z, g) {
        let nt = n_tilde(&z, g)?;
        let rank = rank_exact(&n_psi_matrix(&z, g)?);
        return Ok(SampleResult {
            construction,
            equator,
            grad_ok,
            det_abs: 0.0,
            det_nonzero: false,
            consistent: true,
            functional_ok,
            rank,
            det_tilde_nonzero: sign(&det_exact(&nt)) != 0,
            level_error,
        });
    }
    let direct = monge_ampere_matrix(&x, &y, g, MaMode::Direct)?;
    let factored = monge_ampere_matrix(&x, &y, g, MaMode::Factorized)?;
    let det = det_exact(&direct);
    let det_n = det_exact(&n_psi_matrix(&z, g)?);
    let consistent = direct.entries() == factored.entries() && det == -det_n.clone();
    let rank = if det == int(0) { rank_exact(&direct) } else { d + 1 };
    let det_tilde_nonzero = sign(&det_exact(&n_tilde(&z, g)?)) != 0;
    Ok(SampleResult {
        construction,
        equator,
        grad_ok,
        det_abs: det.to_f64_lossy().abs(),
        det_nonzero: det != int(0),
        consistent,
        functional_ok,
        rank,
        det_tilde_nonzero,
        level_error,
    })
}

/// Sample the level set `φ_α(x, y) = t` and check the rank statements:
/// nonzero gradients, `det M(Φ) ≠ 0` off the equator and, for `α ≥ 6`,
/// rank `D` with `det Ñ(Ψ) ≠ 0` on the equator `z̄ = 0`.
///
/// For `α ≥ 6` off the equator (and `α = 4` with `A` not a rational square)
/// the rational sample is a point `w` on the ray of the level-`t` point; the
/// rank is the same there because `N(Ψ)(δ_s w) = D_s N(Ψ)(w) D_s`.
pub fn verify_rank_proposition(g: &GaugeParams, t: &Rational, samples: usize, seed: u64) -> Result<RankReport> {
    if *t <= int(0) {
        return Err(invalid("t must be positive"));
    }
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    let with_equator = g.alpha() >= 6;
    let mut jobs: Vec<(u64, bool)> = (0..samples as u64).map(|i| (i, false)).collect();
    if with_equator {
        jobs.extend((0..samples as u64).map(|i| (i, true)));
    }
    let results: Vec<SampleResult> =
        jobs.par_iter().map(|&(i, eq)| check_sample(g, t, seed, i, eq)).collect::<Result<_>>()?;
    let (eq, off): (Vec<_>, Vec<_>) = results.iter().partition(|r| r.equator);
    let off_equator = OffEquatorSummary {
        count: off.len(),
        all_det_nonzero: off.iter().all(|r| r.det_nonzero),
        min_abs_det: off.iter().map(|r| r.det_abs).fold(f64::INFINITY, f64::min),
        exact_level_set: off.iter().all(|r| r.construction == Construction::Exact),
        functional_positive: off.iter().all(|r| r.functional_ok),
        factorization_consistent: off.iter().all(|r| r.consistent),
    };
    let d = g.dim();
    let equator = with_equator.then(|| {
        let mut ranks: Vec<usize> = eq.iter().map(|r| r.rank).collect();
        ranks.sort_unstable();
        ranks.dedup();
        EquatorSummary {
            count: eq.len(),
            all_rank_full_minus_one: eq.iter().all(|r| r.rank == d),
            ranks,
            all_det_tilde_nonzero: eq.iter().all(|r| r.det_tilde_nonzero),
            functional_positive: eq.iter().all(|r| r.functional_ok),
        }
    });
    let gradient_nonzero = results.iter().all(|r| r.grad_ok);
    let max_level_error = results.iter().map(|r| r.level_error).fold(0.0, f64::max);
    let passed = gradient_nonzero
        && off_equator.all_det_nonzero
        && off_equator.functional_positive
        && off_equator.factorization_consistent
        && max_level_error < 1e-10
        && equator
            .as_ref()
            .is_none_or(|e| e.all_rank_full_minus_one && e.all_det_tilde_nonzero && e.functional_positive);
    Ok(RankReport {
        alpha: g.alpha(),
        n: g.n(),
        c_alpha: g.c_alpha().to_string(),
        t: t.to_string(),
        samples,
        seed,
        off_equator,
        equator,
        gradient_nonzero,
        max_level_error,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rp(c: &[Rational]) -> RatPoint {
        RatPoint::from_coords(c).unwrap()
    }

    #[test]
    fn theta_examples() {
        let x = rp(&[int(1), int(0), int(0)]);
        let y = rp(&[int(0), int(1), int(0)]);
        assert_eq!(theta(&x, &y).unwrap(), rp(&[int(1), int(-1), ratio(-1, 2)]));
        assert_eq!(theta(&x, &x).unwrap(), RatPoint::origin(1));
    }

    #[test]
    fn gradient_at_unit_horizontal_point() {
        let g = GaugeParams::with_default_c(1, 4).unwrap();
        let (gx, _) = grad_phi(&rp(&[int(1), int(0), int(0)]), &RatPoint::origin(1), &g).unwrap();
        assert_eq!(gx, vec![int(4), int(0), int(0)]);
    }

    #[test]
    fn factor_determinants() {
        let p = rp(&[ratio(1, 3), int(2), ratio(-5, 7)]);
        assert_eq!(det_exact(&factor_left(&p)), int(1));
        assert_eq!(det_exact(&factor_right(&p)), int(-1));
    }

    #[test]
    fn seam_is_rejected() {
        let g = GaugeParams::with_default_c(1, 6).unwrap();
        let x = rp(&[int(1), int(0), int(0)]);
        let y = RatPoint::origin(1);
        assert!(matches!(monge_ampere_matrix(&x, &y, &g, MaMode::Direct), Err(Error::Seam(_))));
        let g2 = GaugeParams::with_default_c(1, 2).unwrap();
        assert!(matches!(grad_phi(&x, &y, &g2), Err(Error::Seam(_))));
        // Koranyi has no seam
        let g4 = GaugeParams::with_default_c(1, 4).unwrap();
        assert!(monge_ampere_matrix(&x, &y, &g4, MaMode::Direct).is_ok());
    }

    #[test]
    fn equator_rank_drops_by_one() {
        let g = GaugeParams::with_default_c(1, 6).unwrap();
        let z = rp(&[int(1), int(0), int(0)]);
        assert_eq!(rank_exact(&n_tilde(&z, &g).unwrap()), 3);
        assert_eq!(rank_exact(&n_psi_matrix(&z, &g).unwrap()), 3);
    }

    #[test]
    fn structured_inverse_small_cases() {
        let id =
            structured_inverse(&StructuredMatrixParams::new(int(1), int(0), int(0), vec![int(2), int(3)]).unwrap())
                .unwrap();
        assert_eq!(id, Matrix::identity(2));
        let p = StructuredMatrixParams::new(int(1), int(0), int(1), vec![int(2), int(3)]).unwrap();
        let inv = structured_inverse(&p).unwrap();
        let j = Matrix::<Rational>::symplectic(1);
        assert_eq!(inv, Matrix::identity(2).add(&j.scale(&int(-1))).scale(&ratio(1, 2)));
        assert_eq!(inv.mul(&p.matrix()), Matrix::identity(2));
        let singular = StructuredMatrixParams::new(int(0), int(1), int(0), vec![int(1), int(0)]).unwrap();
        assert!(matches!(structured_inverse(&singular), Err(Error::SingularParameters(_))));
    }

    #[test]
    fn x_functional_at_pole() {
        let g = GaugeParams::with_default_c(1, 4).unwrap();
        let z = rp(&[int(0), int(0), int(3)]);
        assert_eq!(x_functional(&z, &g).unwrap(), int(2 * 16 * 9));
        assert!(x_functional(&RatPoint::origin(1), &g).is_err());
    }
}

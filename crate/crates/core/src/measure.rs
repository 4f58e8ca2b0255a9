//! The thickened, rescaled lattice `E_q`, the smoothed probability measure
//! `μ_{q,τ}` on it, and estimates of the Riesz energies `∬|x − y|^{−t} dμ dμ`.
//!
//! `μ` is a mixture `Σ_b p_b ν_b` where every `ν_b` is the same product bump
//! translated to the cell center `c_b`. For a pair of cells the difference
//! `x − y = (c_b − c_{b'}) + W` with `W` distributed by the autocorrelation
//! of the bump, so the energy is `Σ p_b p_{b'} F(c_b − c_{b'})` with
//! `F(Δ) = E|Δ + W|^{−t}`. The estimator splits off the same-cell term
//! (probability `Σ p_b²`, computed exactly) and integrates the singular
//! part in polar coordinates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::keyed_rng_in;

/// The mollifier `ψ₀(s) = exp(−1/(1 − s²))` on `|s| < 1`.
pub fn psi0(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `∫ψ₀` over `[−1, 1]`.
pub fn psi0_integral() -> f64 {
    quadrature::double_exponential::integrate(psi0, -1.0, 1.0, 1e-14).integral
}

/// Cells of `E_q`: centers `(b_i/q^a, b_D/q^{2a})` for `b` in the unsigned
/// lattice `L_{D,q^a}`, half-widths `q^{−τ}` (horizontal) and `q^{−a−τ}` (vertical).
#[derive(Debug, Clone)]
pub struct ThickLattice {
    pub q: f64,
    pub tau: f64,
    pub n: usize,
    pub a: f64,
    /// Largest index per coordinate: `⌈q^a⌉` horizontally, `⌈q^{2a}⌉` vertically.
    pub bounds: Vec<i64>,
    /// Lattice spacing per coordinate: `q^{−a}`, `q^{−2a}`.
    pub spacing: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl ThickLattice {
    pub fn new(q: f64, tau: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        if !(q >= 2.0 && q.is_finite()) {
            return Err(invalid(format!("q must be at least 2, got {q}")));
        }
        let d = 2 * n + 1;
        let a = d as f64 / (d + 1) as f64;
        if tau.is_nan() || tau <= a {
            return Err(invalid(format!("tau = {tau} must exceed a = {a}")));
        }
        let qa = q.powf(a);
        let (hb, vb) = (ceil_tol(qa), ceil_tol(qa * qa));
        let mut bounds = vec![hb; 2 * n];
        bounds.push(vb);
        let mut spacing = vec![1.0 / qa; 2 * n];
        spacing.push(1.0 / (qa * qa));
        let mut half_widths = vec![q.powf(-tau); 2 * n];
        half_widths.push(q.powf(-a - tau));
        Ok(Self { q, tau, n, a, bounds, spacing, half_widths })
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// `|L_{D,q^a}|`.
    pub fn cell_count(&self) -> u64 {
        self.bounds.iter().map(|&b| (b + 1) as u64).product()
    }

    /// `V_R = q^{−Dτ−a}`, the volume of the box with the cell side lengths.
    pub fn cell_volume(&self) -> f64 {
        self.q.powf(-(self.dim() as f64) * self.tau - self.a)
    }

    /// Integer index of cell number `i`, last coordinate fastest.
    pub fn cell_index(&self, mut i: u64) -> Vec<i64> {
        let mut b = vec![0; self.dim()];
        for (k, bound) in self.bounds.iter().enumerate().rev() {
            let len = (*bound + 1) as u64;
            b[k] = (i % len) as i64;
            i /= len;
        }
        b
    }

    pub fn center(&self, b: &[i64]) -> Vec<f64> {
        b.iter().zip(&self.spacing).map(|(&bi, s)| bi as f64 * s).collect()
    }
}

/// `⌈x⌉`, treating values within `1e-9` of an integer as that integer.
fn ceil_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.max(1.0) {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// Density of the difference of two independent variables with density
/// `ψ₀/∫ψ₀`, tabulated on `[0, 2]`.
#[derive(Debug, Clone)]
struct Autocorrelation {
    step: f64,
    values: Vec<f64>,
}

impl Autocorrelation {
    const POINTS: usize = 4096;
    const INNER: usize = 4000;

    fn new(norm: f64) -> Self {
        let step = 2.0 / Self::POINTS as f64;
        let values = (0..=Self::POINTS)
            .into_par_iter()
            .map(|i| {
                let s = i as f64 * step;
                // ∫ φ(v) φ(v − s) dv over [s − 1, 1], Simpson
                let (lo, hi) = (s - 1.0, 1.0);
                if hi <= lo {
                    return 0.0;
                }
                let m = Self::INNER;
                let h = (hi - lo) / m as f64;
                let f = |v: f64| psi0(v) * psi0(v - s);
                let mut acc = f(lo) + f(hi);
                for j in 1..m {
                    acc += f(lo + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
                }
                acc * h / 3.0 / (norm * norm)
            })
            .collect();
        Self { step, values }
    }

    fn eval(&self, s: f64) -> f64 {
        let s = s.abs();
        if s >= 2.0 {
            return 0.0;
        }
        let x = s / self.step;
        let i = x.floor() as usize;
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[(i + 1).min(Self::POINTS)] * f
    }
}

/// `μ_{q,τ}`: cell weights `Π ψ₀(b_i/q^a) ψ₀(b_D/q^{2a})`, a product bump of
/// the cell half-widths around each center, normalized to total mass one.
#[derive(Debug, Clone)]
pub struct SmoothedMeasure {
    pub lattice: ThickLattice,
    /// Cells of positive weight: integer index and probability `p_b`.
    cells: Vec<(Vec<i64>, f64)>,
    cumulative: Vec<f64>,
    /// `Σ_b w_b Π_k h_k ∫ψ₀`, so that the density is `Σ w_b Π ψ₀(…) / norm`.
    pub normalization: f64,
    pub same_cell_probability: f64,
    bump_integral: f64,
    autocorr: Autocorrelation,
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

impl SmoothedMeasure {
    pub fn new(lattice: ThickLattice) -> Self {
        let i0 = psi0_integral();
        let weighted: Vec<(Vec<i64>, f64)> = (0..lattice.cell_count())
            .map(|i| lattice.cell_index(i))
            .map(|b| {
                let c = lattice.center(&b);
                let w = c.iter().map(|&v| psi0(v)).product::<f64>();
                (b, w)
            })
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let weights: Vec<f64> = weighted.iter().map(|c| c.1).collect();
        let total = pairwise_sum(&weights);
        let cell_mass: f64 = lattice.half_widths.iter().map(|h| h * i0).product();
        let cells: Vec<(Vec<i64>, f64)> = weighted.into_iter().map(|(b, w)| (b, w / total)).collect();
        let mut acc = 0.0;
        let cumulative = cells
            .iter()
            .map(|c| {
                acc += c.1;
                acc
            })
            .collect();
        let squares: Vec<f64> = cells.iter().map(|c| c.1 * c.1).collect();
        Self {
            normalization: total * cell_mass,
            same_cell_probability: pairwise_sum(&squares),
            cells,
            cumulative,
            lattice,
            bump_integral: i0,
            autocorr: Autocorrelation::new(i0),
        }
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Number of cells carrying positive mass.
    pub fn support_cells(&self) -> usize {
        self.cells.len()
    }

    /// Bounding box of the support, per coordinate.
    pub fn support_box(&self) -> Vec<(f64, f64)> {
        let l = &self.lattice;
        (0..self.dim()).map(|k| (-l.half_widths[k], l.bounds[k] as f64 * l.spacing[k] + l.half_widths[k])).collect()
    }

    fn sample_cell(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        self.cumulative.partition_point(|&c| c <= u).min(self.cells.len() - 1)
    }

    /// Offset with density `Π ψ₀(x_k/h_k)` (unnormalized), by rejection.
    fn sample_offset(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let top = psi0(0.0);
        self.lattice
            .half_widths
            .iter()
            .map(|h| loop {
                let u: f64 = rng.random_range(-1.0..1.0);
                if rng.random::<f64>() * top < psi0(u) {
                    break u * h;
                }
            })
            .collect()
    }

    /// Density of `W = ξ − η` for two independent bump offsets.
    fn diff_density(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.lattice.half_widths).map(|(wk, h)| self.autocorr.eval(wk / h) / h).product()
    }
}

/// Density of `μ_{q,τ}` at `x`.
pub fn mu_density(x: &[f64], m: &SmoothedMeasure) -> Result<f64> {
    let l = &m.lattice;
    if x.len() != l.dim() {
        return Err(Error::DimensionMismatch { left: x.len(), right: l.dim() });
    }
    // candidate indices per coordinate: |x_k − b_k s_k| < h_k
    let ranges: Vec<(i64, i64)> = (0..l.dim())
        .map(|k| {
            let (s, h) = (l.spacing[k], l.half_widths[k]);
            let lo = (((x[k] - h) / s).floor() as i64).max(0);
            let hi = (((x[k] + h) / s).ceil() as i64).min(l.bounds[k]);
            (lo, hi)
        })
        .collect();
    if ranges.iter().any(|r| r.0 > r.1) {
        return Ok(0.0);
    }
    let mut b: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut total = 0.0;
    loop {
        let mut term = 1.0;
        for k in 0..l.dim() {
            let c = b[k] as f64 * l.spacing[k];
            term *= psi0(c) * psi0((x[k] - c) / l.half_widths[k]);
            if term == 0.0 {
                break;
            }
        }
        total += term;
        let mut k = l.dim();
        loop {
            if k == 0 {
                return Ok(total / m.normalization);
            }
            k -= 1;
            if b[k] < ranges[k].1 {
                b[k] += 1;
                break;
            }
            b[k] = ranges[k].0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyEstimate {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Samples per keyed batch; fixed so that results do not depend on threads.
const BATCH: usize = 4096;

/// `|S^{D−1}|`.
fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (d - 2) as f64 * sphere_area(d - 2),
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

impl SmoothedMeasure {
    /// One polar-coordinate sample of `∫|u|^{−t} p(u − Δ) du`, where `p` is the
    /// density of `W`, supported in the box `Δ ± 2h`.
    fn polar_sample(&self, rng: &mut ChaCha8Rng, delta: &[f64], t: f64) -> f64 {
        let d = self.dim();
        let s = d as f64 - t;
        let theta = unit_direction(rng, d);
        let (mut r0, mut r1) = (0.0f64, f64::INFINITY);
        for k in 0..d {
            let w = 2.0 * self.lattice.half_widths[k];
            let (lo, hi) = (delta[k] - w, delta[k] + w);
            if theta[k].abs() < 1e-300 {
                if lo >= 0.0 || hi <= 0.0 {
                    return 0.0;
                }
                continue;
            }
            let (a, b) = (lo / theta[k], hi / theta[k]);
            r0 = r0.max(a.min(b));
            r1 = r1.min(a.max(b));
        }
        if r1 <= r0 {
            return 0.0;
        }
        let (p0, p1) = (r0.powf(s), r1.powf(s));
        let r = (p0 + rng.random::<f64>() * (p1 - p0)).powf(1.0 / s);
        let u: Vec<f64> = theta.iter().zip(delta).map(|(th, dl)| r * th - dl).collect();
        sphere_area(d) * (p1 - p0) / s * self.diff_density(&u)
    }

    /// One sample of `F(Δ)`: polar when the support of `Δ + W` contains the
    /// origin, a direct draw otherwise.
    fn pair_sample(&self, rng: &mut ChaCha8Rng, delta: &[f64], t: f64) -> f64 {
        let near = delta.iter().zip(&self.lattice.half_widths).all(|(dl, h)| dl.abs() < 2.0 * h);
        if near {
            return self.polar_sample(rng, delta, t);
        }
        let (xi, eta) = (self.sample_offset(rng), self.sample_offset(rng));
        let r2: f64 = (0..self.dim()).map(|k| (delta[k] + xi[k] - eta[k]).powi(2)).sum();
        r2.powf(-t / 2.0)
    }

    fn delta(&self, b: usize, c: usize) -> Vec<f64> {
        let l = &self.lattice;
        (0..self.dim()).map(|k| (self.cells[b].0[k] - self.cells[c].0[k]) as f64 * l.spacing[k]).collect()
    }

    /// Sums `(Σ f, Σ f²)` of `count` samples drawn by `draw`, in keyed batches.
    fn batched(
        &self,
        seed: u64,
        domain: u64,
        count: usize,
        draw: impl Fn(&mut ChaCha8Rng) -> f64 + Sync,
    ) -> (f64, f64) {
        let batches = count.div_ceil(BATCH);
        let parts: Vec<(f64, f64)> = (0..batches)
            .into_par_iter()
            .map(|i| {
                let mut rng = keyed_rng_in(seed, domain, i as u64);
                let len = BATCH.min(count - i * BATCH);
                let vals: Vec<f64> = (0..len).map(|_| draw(&mut rng)).collect();
                let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
                (pairwise_sum(&vals), pairwise_sum(&sq))
            })
            .collect();
        let s: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let s2: Vec<f64> = parts.iter().map(|p| p.1).collect();
        (pairwise_sum(&s), pairwise_sum(&s2))
    }
}

fn mean_var(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - sum * mean) / (nf - 1.0)).max(0.0);
    (mean, var)
}

/// Estimate `∬|x − y|^{−t} dμ(x) dμ(y)` from `samples` pairs: half of them
/// for the same-cell term, half for pairs of distinct cells.
pub fn energy_integral_mc(m: &SmoothedMeasure, t: f64, samples: usize, seed: u64) -> Result<EnergyEstimate> {
    let d = m.dim() as f64;
    if !(0.0..d).contains(&t) {
        return Err(invalid(format!("t must lie in [0, D) = [0, {d}), got {t}")));
    }
    if samples < 1000 {
        return Err(invalid(format!("need at least 1000 samples, got {samples}")));
    }
    if t == 0.0 {
        return Ok(EnergyEstimate { t, value: 1.0, stderr: 0.0, samples, seed });
    }
    let p_same = m.same_cell_probability;
    let zero = vec![0.0; m.dim()];
    let n_same = samples / 2;
    let (s, s2) = m.batched(seed, 1, n_same, |rng| m.polar_sample(rng, &zero, t));
    let (mean_s, var_s) = mean_var(s, s2, n_same);
    let (mean_d, var_d, n_diff) = if m.support_cells() > 1 && p_same < 1.0 {
        let n_diff = samples - n_same;
        let (s, s2) = m.batched(seed, 2, n_diff, |rng| {
            let (b, c) = loop {
                let (b, c) = (m.sample_cell(rng), m.sample_cell(rng));
                if b != c {
                    break (b, c);
                }
            };
            m.pair_sample(rng, &m.delta(b, c), t)
        });
        let (mean, var) = mean_var(s, s2, n_diff);
        (mean, var, n_diff)
    } else {
        (0.0, 0.0, 1)
    };
    let value = p_same * mean_s + (1.0 - p_same) * mean_d;
    let stderr = (p_same.powi(2) * var_s / n_same as f64 + (1.0 - p_same).powi(2) * var_d / n_diff as f64).sqrt();
    Ok(EnergyEstimate { t, value, stderr, samples, seed })
}

/// Plain Monte-Carlo mass of `μ` over its support box: `(estimate, stderr)`.
pub fn total_mass_mc(m: &SmoothedMeasure, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(invalid("need at least 2 samples"));
    }
    let bx = m.support_box();
    let vol: f64 = bx.iter().map(|(a, b)| b - a).product();
    let (s, s2) = m.batched(seed, 3, samples, |rng| {
        let x: Vec<f64> = bx.iter().map(|&(a, b)| rng.random_range(a..b)).collect();
        vol * mu_density(&x, m).expect("dimension matches")
    });
    let (mean, var) = mean_var(s, s2, samples);
    Ok((mean, (var / samples as f64).sqrt()))
}

/// Cell-pair limit for [`energy_all_pairs`].
pub const ALL_PAIRS_GUARD: usize = 20_000;

/// Deterministic energy by summing `p_b p_{b'} F(c_b − c_{b'})` over all cell
/// pairs, with `|z|^{−t} = Γ(t/2)^{−1} ∫ λ^{t/2−1} e^{−λ|z|²} dλ` so that `F`
/// factorizes over coordinates.
pub fn energy_all_pairs(m: &SmoothedMeasure, t: f64) -> Result<f64> {
    let d = m.dim();
    if !(t > 0.0 && t < d as f64) {
        return Err(invalid(format!("t must lie in (0, {d}), got {t}")));
    }
    if m.support_cells() > ALL_PAIRS_GUARD {
        return Err(Error::GuardExceeded { size: m.support_cells() as u128, limit: ALL_PAIRS_GUARD as u128 });
    }
    let l = &m.lattice;
    // aggregate pair weights by index difference
    let span: Vec<i64> = l.bounds.iter().map(|b| 2 * b + 1).collect();
    let key = |diff: &[i64]| -> usize {
        diff.iter().zip(&span).zip(&l.bounds).fold(0usize, |acc, ((dv, s), b)| acc * *s as usize + (dv + b) as usize)
    };
    let total: usize = span.iter().map(|&s| s as usize).product();
    let mut weight = vec![0.0; total];
    for (bi, pi) in &m.cells {
        for (ci, pc) in &m.cells {
            let diff: Vec<i64> = bi.iter().zip(ci).map(|(a, b)| a - b).collect();
            weight[key(&diff)] += pi * pc;
        }
    }
    // λ = e^u, trapezoid in u
    let (u0, u1, nodes) = (-30.0, 60.0, 1800usize);
    let du = (u1 - u0) / nodes as f64;
    let half_t = t / 2.0;
    let gamma: f64 = (0..=nodes)
        .map(|i| {
            let u = u0 + i as f64 * du;
            let w = if i == 0 || i == nodes { 0.5 } else { 1.0 };
            w * (half_t * u - u.exp()).exp()
        })
        .sum::<f64>()
        * du;
    let per_node: Vec<f64> = (0..=nodes)
        .into_par_iter()
        .map(|i| {
            let u = u0 + i as f64 * du;
            let lambda = u.exp();
            // E_k(Δb) = ∫ e^{−λ(Δb s_k + w)²} g(w/h_k)/h_k dw
            let tables: Vec<Vec<f64>> = (0..d)
                .map(|k| {
                    (-l.bounds[k]..=l.bounds[k])
                        .map(|db| gauss_moment(m, k, db as f64 * l.spacing[k], lambda))
                        .collect()
                })
                .collect();
            let mut acc = 0.0;
            for (idx, w) in weight.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let mut rest = idx;
                let mut prod = 1.0;
                for k in (0..d).rev() {
                    let s = span[k] as usize;
                    prod *= tables[k][rest % s];
                    rest /= s;
                }
                acc += w * prod;
            }
            let wt = if i == 0 || i == nodes { 0.5 } else { 1.0 };
            wt * acc * (half_t * u).exp()
        })
        .collect();
    Ok(pairwise_sum(&per_node) * du / gamma)
}

/// `∫ e^{−λ(Δ + w)²} g(w/h)/h dw` by Simpson's rule over the part of the
/// support where the Gaussian is not negligible.
fn gauss_moment(m: &SmoothedMeasure, k: usize, delta: f64, lambda: f64) -> f64 {
    let h = m.lattice.half_widths[k];
    // substitute s = Δ + w, s ∈ [Δ − 2h, Δ + 2h] ∩ [−L, L]
    let reach = 9.0 / lambda.sqrt();
    let lo = (delta - 2.0 * h).max(-reach);
    let hi = (delta + 2.0 * h).min(reach);
    if hi <= lo {
        return 0.0;
    }
    let pts = 600;
    let step = (hi - lo) / pts as f64;
    let f = |s: f64| (-lambda * s * s).exp() * m.autocorr.eval((s - delta) / h) / h;
    let mut acc = f(lo) + f(hi);
    for j in 1..pts {
        acc += f(lo + j as f64 * step) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * step / 3.0
}

impl SmoothedMeasure {
    /// `∫ψ₀` used in the normalization.
    pub fn bump_integral(&self) -> f64 {
        self.bump_integral
    }
}

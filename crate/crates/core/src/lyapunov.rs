//! Lyapunov transforms `P_k` and the decay certificate.
//!
//! `P_k` is the identity except for a Hermitian 4×4 leading block with
//! off-diagonal entries `∓ i c_j / k`, `c = (α, √2 α, √3 α)`. For admissible
//! `α` the twisted dissipation satisfies
//! `C_k* P_k + P_k C_k ≥ 2μ P_k` for every `k ≠ 0` and every
//! `σ ∈ [σ_min, σ_max]`, which yields the global rate `λ = min(μ, σ_min)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::spectral::{assemble_generator, build_operators, MIN_TRUNCATION};
use crate::{Error, Result, C64};

/// Grid size used for every minimization over `σ`.
pub const SIGMA_GRID_POINTS: usize = 10_000;
/// Absolute tolerance of the golden-section refinement.
pub const REFINE_TOL: f64 = 1e-10;
/// `λ_min` is shrunk by this factor so refinement error stays on the safe side.
pub const LAMBDA_MIN_SAFETY: f64 = 1.0 - 1e-6;

/// `√(3 + √6)`: the largest eigenvalue deviation of `P_k` per unit `α/|k|`.
pub fn p_spread() -> f64 {
    (3.0 + 6f64.sqrt()).sqrt()
}

/// Upper cap on `α` keeping `1 − α√(3+√6)` bounded away from zero.
pub fn alpha_cap() -> f64 {
    0.99 / p_spread()
}

fn coupling(alpha: f64) -> [f64; 3] {
    [alpha, 2f64.sqrt() * alpha, 3f64.sqrt() * alpha]
}

/// A dense `P_k` together with the parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformMatrix {
    pub k: i64,
    pub alpha: f64,
    pub matrix: DMatrix<C64>,
}

impl TransformMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `{1 (M−4 times), 1 ± α√(3±√6)/|k|}`, sorted ascending.
    pub fn closed_form_eigenvalues(&self) -> Vec<f64> {
        let kk = self.k.unsigned_abs() as f64;
        let a = (3.0 + 6f64.sqrt()).sqrt() * self.alpha / kk;
        let b = (3.0 - 6f64.sqrt()).sqrt() * self.alpha / kk;
        let mut ev = vec![1.0 - a, 1.0 - b, 1.0 + b, 1.0 + a];
        ev.extend(std::iter::repeat_n(1.0, self.dim() - 4));
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn check_alpha_range(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0 && alpha * p_spread() < 1.0) {
        return Err(Error::Certificate(format!(
            "alpha = {alpha} outside [0, 1/sqrt(3+sqrt 6)); P_k would not be positive definite"
        )));
    }
    Ok(())
}

/// Builds `P_k` for `k ≠ 0`. `α = 0` yields the identity.
///
/// Negative `k` use the same formula, which equals `conj(P_{|k|})`.
pub fn build_p(k: i64, alpha: f64, truncation: usize) -> Result<TransformMatrix> {
    if k == 0 {
        return Err(Error::Domain("P_k is only defined for k != 0 (P_0 is the identity)".into()));
    }
    if truncation < MIN_TRUNCATION {
        return Err(Error::Domain(format!("truncation {truncation} below {MIN_TRUNCATION}")));
    }
    check_alpha_range(alpha)?;
    let mut m = DMatrix::<C64>::identity(truncation, truncation);
    for (j, c) in coupling(alpha).into_iter().enumerate() {
        let e = c / k as f64;
        m[(j, j + 1)] = C64::new(0.0, -e);
        m[(j + 1, j)] = C64::new(0.0, e);
    }
    Ok(TransformMatrix { k, alpha, matrix: m })
}

/// `⟨x, P_k x⟩` without forming `P_k`. For `k = 0` this is `‖x‖²`.
pub fn p_quadratic_form(k: i64, alpha: f64, x: &[C64]) -> f64 {
    let norm2: f64 = x.iter().map(|c| c.norm_sqr()).sum();
    if k == 0 || alpha == 0.0 {
        return norm2;
    }
    let kf = k as f64;
    let twist: f64 = coupling(alpha)
        .iter()
        .enumerate()
        .take_while(|(j, _)| j + 1 < x.len())
        .map(|(j, &c)| {
            // 2 Re[conj(x_j) (−i c/k) x_{j+1}]
            let z = x[j].conj() * x[j + 1] * C64::new(0.0, -c / kf);
            2.0 * z.re
        })
        .sum();
    norm2 + twist
}

/// `α(l, σ)`: the largest `α` for which the reduced block stays positive
/// definite at `k = 1`.
///
/// Evaluated as `8lσ / (3(8l² + σ² + σ√(16l² + σ²)))`, algebraically equal
/// to `(8l²σ + σ³ − √(16l²σ⁴ + σ⁶)) / (24 l³)` but free of cancellation.
pub fn alpha_of(l: f64, sigma: f64) -> f64 {
    8.0 * l * sigma / (3.0 * (8.0 * l * l + sigma * sigma + sigma * (16.0 * l * l + sigma * sigma).sqrt()))
}

/// Grid-then-golden minimization of `f` over `[a, b]`. Returns `(x, f(x))`.
pub(crate) fn minimize_on_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize) -> (f64, f64) {
    if b <= a || points < 2 {
        return (a, f(a));
    }
    let h = (b - a) / (points - 1) as f64;
    let at = |i: usize| if i == points - 1 { b } else { a + h * i as f64 };
    let (mut best_i, mut best) = (0, f(a));
    for i in 1..points {
        let v = f(at(i));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = at(best_i.saturating_sub(1));
    let hi = at((best_i + 1).min(points - 1));
    let (x, v) = golden_min(&f, lo, hi, REFINE_TOL);
    if v < best {
        (x, v)
    } else {
        (at(best_i), best)
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn check_interval(sigma_min: f64, sigma_max: f64) -> Result<()> {
    if !(sigma_min > 0.0 && sigma_min.is_finite() && sigma_max.is_finite()) {
        return Err(Error::InvalidModel(format!("sigma_min must be positive, got {sigma_min}")));
    }
    if sigma_max < sigma_min {
        return Err(Error::InvalidModel(format!("sigma_max {sigma_max} < sigma_min {sigma_min}")));
    }
    Ok(())
}

/// `α_max = min_{σ ∈ [σ_min, σ_max]} α(l, σ)`, capped at `0.99/√(3+√6)`.
pub fn alpha_max(l: f64, sigma_min: f64, sigma_max: f64, grid_points: usize) -> f64 {
    let (_, m) = minimize_on_interval(|s| alpha_of(l, s), sigma_min, sigma_max, grid_points);
    m.min(alpha_cap())
}

/// `δ₃(k, α, σ)` of the reduced block.
pub fn delta3(k: i64, alpha: f64, sigma: f64, l: f64) -> f64 {
    let k2 = (k as f64).powi(2);
    alpha * (72.0 * l.powi(3) * alpha * alpha - (48.0 * l * l * sigma + 6.0 * sigma.powi(3) / k2) * alpha + 8.0 * l * sigma * sigma)
}

/// `[δ₁, …, δ₅]`: determinants of the trailing `j×j` submatrices of the
/// reduced block, in closed form.
pub fn deltas(k: i64, alpha: f64, sigma: f64, l: f64) -> [f64; 5] {
    let d3 = delta3(k, alpha, sigma, l);
    [
        2.0 * sigma,
        4.0 * sigma * (sigma - 3.0 * l * alpha),
        d3,
        2.0 * alpha * l * d3,
        4.0 * alpha * alpha * l * l * d3,
    ]
}

fn rate_block_unchecked(l: f64, alpha: f64, sigma: f64) -> f64 {
    delta3(1, alpha, sigma, l) / (4.0 * (sigma - alpha * l).powi(2))
}

/// `λ(l, α, σ) = δ₃(1, α, σ) / (4(σ − αl)²)`, a lower bound for the smallest
/// eigenvalue of `C_k* P_k + P_k C_k` at this `σ`, uniform in `k`.
pub fn rate_block(l: f64, alpha: f64, sigma: f64) -> Result<f64> {
    let bound = alpha_of(l, sigma);
    if !(alpha > 0.0 && alpha < bound) {
        return Err(Error::Certificate(format!(
            "alpha = {alpha} not in the admissible range (0, {bound}) for l = {l}, sigma = {sigma}"
        )));
    }
    Ok(rate_block_unchecked(l, alpha, sigma))
}

/// How the Lyapunov parameter `α` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaStrategy {
    /// Use exactly this `α` (must lie in `(0, α_max)`).
    Fixed { value: f64 },
    /// `α = fraction · α_max`, `0 < fraction < 1`.
    Fraction { fraction: f64 },
    /// Maximize the certified rate `μ(α)` over `(0, α_max)`.
    #[default]
    Optimize,
}

/// Certified decay constants for `(L, σ_min, σ_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub length: f64,
    pub wavenumber: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub alpha: f64,
    pub alpha_max: f64,
    pub lambda_min: f64,
    pub mu: f64,
    pub lambda: f64,
    pub ctilde: f64,
    pub sigma_grid_resolution: usize,
}

impl Certificate {
    /// `c̃ = |c₁| C̃`, the coupling constant for affine `σ(z) = σ₀ + c₁ z`.
    pub fn ctilde_affine(&self, c1: f64) -> f64 {
        c1.abs() * self.ctilde
    }

    /// `Ĉ = C̃ C` for a Taylor bound `C`.
    pub fn chat(&self, taylor_bound: f64) -> f64 {
        self.ctilde * taylor_bound
    }
}

/// `λ_min(l, α) = min_σ λ(l, α, σ)`, including the safety factor.
pub fn lambda_min(l: f64, alpha: f64, sigma_min: f64, sigma_max: f64, grid_points: usize) -> Result<f64> {
    check_interval(sigma_min, sigma_max)?;
    let amax = alpha_max(l, sigma_min, sigma_max, grid_points);
    if !(alpha > 0.0 && alpha < amax) {
        return Err(Error::Certificate(format!("alpha = {alpha} not in (0, alpha_max = {amax})")));
    }
    let (_, m) = minimize_on_interval(|s| rate_block_unchecked(l, alpha, s), sigma_min, sigma_max, grid_points);
    Ok(m * LAMBDA_MIN_SAFETY)
}

/// `μ = λ_min / (2 (1 + α√(3+√6)))`.
pub fn mu_from(lambda_min: f64, alpha: f64) -> f64 {
    0.5 * lambda_min / (1.0 + alpha * p_spread())
}

/// `C̃ = √((1 + α√(3+√6)) / (1 − α√(3+√6)))`.
pub fn ctilde_of(alpha: f64) -> f64 {
    let a = alpha * p_spread();
    ((1.0 + a) / (1.0 - a)).sqrt()
}

/// Computes the full certificate for a domain of length `L` and collision
/// frequencies in `[σ_min, σ_max]`.
pub fn certify(length: f64, sigma_min: f64, sigma_max: f64, strategy: AlphaStrategy) -> Result<Certificate> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::Domain(format!("domain length must be positive, got {length}")));
    }
    check_interval(sigma_min, sigma_max)?;
    let l = 2.0 * PI / length;
    let n = SIGMA_GRID_POINTS;
    let amax = alpha_max(l, sigma_min, sigma_max, n);
    if !(amax > 0.0) {
        return Err(Error::Internal(format!("empty admissible alpha interval (alpha_max = {amax})")));
    }
    let mu_at = |a: f64| {
        let (_, m) = minimize_on_interval(|s| rate_block_unchecked(l, a, s), sigma_min, sigma_max, n);
        mu_from(m * LAMBDA_MIN_SAFETY, a)
    };
    let alpha = match strategy {
        AlphaStrategy::Fixed { value } => value,
        AlphaStrategy::Fraction { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Certificate(format!("alpha fraction must lie in (0,1), got {fraction}")));
            }
            fraction * amax
        }
        AlphaStrategy::Optimize => {
            // μ(α) need not be unimodal after the σ-minimization, so bracket
            // the maximum with a coarse scan before the golden refinement.
            const COARSE: usize = 64;
            let step = amax / COARSE as f64;
            let best = (1..COARSE)
                .map(|j| (j, mu_at(step * j as f64)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, _)| j)
                .unwrap_or(COARSE / 2);
            let (lo, hi) = (step * (best - 1) as f64, step * (best + 1) as f64);
            let (x, _) = golden_min(&|a: f64| if a <= 0.0 || a >= amax { 0.0 } else { -mu_at(a) }, lo, hi, REFINE_TOL * amax);
            if mu_at(x) >= mu_at(step * best as f64) { x } else { step * best as f64 }
        }
    };
    if !(alpha > 0.0 && alpha < amax) {
        return Err(Error::Certificate(format!("alpha = {alpha} not in (0, alpha_max = {amax})")));
    }
    let lambda_min = lambda_min(l, alpha, sigma_min, sigma_max, n)?;
    let mu = mu_from(lambda_min, alpha);
    if !(mu > 0.0) {
        return Err(Error::Internal(format!("certified rate mu = {mu} is not positive")));
    }
    Ok(Certificate {
        length,
        wavenumber: l,
        sigma_min,
        sigma_max,
        alpha,
        alpha_max: amax,
        lambda_min,
        mu,
        lambda: mu.min(sigma_min),
        ctilde: ctilde_of(alpha),
        sigma_grid_resolution: n,
    })
}

/// The leading 5×5 block `D_{k,α,σ}` of `C_k* P_k + P_k C_k`.
pub fn build_reduced_block(k: i64, alpha: f64, sigma: f64, l: f64) -> Result<DMatrix<C64>> {
    if k == 0 {
        return Err(Error::Domain("reduced block requires k != 0".into()));
    }
    Ok(reduced_block(Some(k), alpha, sigma, l))
}

/// The `|k| → ∞` limit of [`build_reduced_block`].
pub fn reduced_block_limit(alpha: f64, sigma: f64, l: f64) -> DMatrix<C64> {
    reduced_block(None, alpha, sigma, l)
}

fn reduced_block(k: Option<i64>, alpha: f64, sigma: f64, l: f64) -> DMatrix<C64> {
    let s3 = 3f64.sqrt();
    let r = |x: f64| C64::new(x, 0.0);
    let mut d = DMatrix::<C64>::zeros(5, 5);
    d[(0, 0)] = r(2.0 * l * alpha);
    d[(1, 1)] = r(2.0 * l * alpha);
    d[(2, 2)] = r(2.0 * l * alpha);
    d[(3, 3)] = r(2.0 * sigma - 6.0 * l * alpha);
    d[(4, 4)] = r(2.0 * sigma);
    d[(2, 4)] = r(2.0 * s3 * l * alpha);
    d[(4, 2)] = r(2.0 * s3 * l * alpha);
    if let Some(k) = k {
        let e = s3 * alpha * sigma / k as f64;
        d[(2, 3)] = C64::new(0.0, -e);
        d[(3, 2)] = C64::new(0.0, e);
    }
    d
}

/// Smallest eigenvalue of a Hermitian matrix (only the lower triangle is read).
pub fn min_hermitian_eigenvalue(m: &DMatrix<C64>) -> Result<f64> {
    let ev = m.symmetric_eigenvalues();
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::numeric(None, "Hermitian eigensolver returned non-finite values"));
    }
    Ok(min)
}

/// `C_k* P_k + P_k C_k − 2μ P_k` on the `M`-truncated space.
pub fn inequality_matrix(k: i64, sigma: f64, cert: &Certificate, truncation: usize) -> Result<DMatrix<C64>> {
    let ops = build_operators(truncation)?;
    let c = assemble_generator(k, cert.wavenumber, sigma, &ops)?;
    let p = build_p(k, cert.alpha, truncation)?.matrix;
    let cp = c.adjoint() * &p;
    let sym = &cp + cp.adjoint();
    Ok(sym - p * C64::new(2.0 * cert.mu, 0.0))
}

/// Outcome of one matrix-inequality check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityCheck {
    pub k: i64,
    pub sigma: f64,
    pub min_eigenvalue: f64,
    /// `1e-10 · max|entry|` of the checked matrix.
    pub tolerance: f64,
}

impl InequalityCheck {
    pub fn passed(&self) -> bool {
        self.min_eigenvalue >= -self.tolerance
    }
}

/// Relative tolerance applied to the matrix max-norm in [`verify_inequality`].
pub const INEQUALITY_REL_TOL: f64 = 1e-10;

/// Numerically checks `C_k* P_k + P_k C_k ≥ 2μ P_k` at one `(k, σ)` using the
/// certificate's `α`, `μ` and `l`.
pub fn verify_inequality(k: i64, sigma: f64, cert: &Certificate, truncation: usize) -> Result<InequalityCheck> {
    let m = inequality_matrix(k, sigma, cert, truncation)?;
    let tolerance = INEQUALITY_REL_TOL * m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min_eigenvalue = min_hermitian_eigenvalue(&m).map_err(|e| match e {
        Error::Numeric { msg, .. } => Error::Numeric { k: Some(k), msg },
        other => other,
    })?;
    Ok(InequalityCheck { k, sigma, min_eigenvalue, tolerance })
}

/// `n` equispaced points on `[a, b]` (just `a` when `n == 1`).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Runs [`verify_inequality`] over every `(k, σ)` pair, `k` outermost.
pub fn verify_sweep(
    cert: &Certificate,
    ks: &[i64],
    sigmas: &[f64],
    truncation: usize,
    exec: Execution,
) -> Result<Vec<InequalityCheck>> {
    let pairs: Vec<(i64, f64)> = ks.iter().flat_map(|&k| sigmas.iter().map(move |&s| (k, s))).collect();
    exec::try_map(exec, &pairs, |&(k, s)| verify_inequality(k, s, cert, truncation))
}

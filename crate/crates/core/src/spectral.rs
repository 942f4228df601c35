//! Truncated Fourier–Hermite representation.
//!
//! A spatial mode `h_k(v)` is stored through its coefficients in the
//! orthonormal basis `g_m(v) = (2π m!)^{-1/2} He_m(v) e^{-v²/2}` of
//! `L²(𝕄₁⁻¹)`, where `He_m` are the probabilists' Hermite polynomials and
//! `𝕄₁` the standard Maxwellian. In that basis multiplication by `v` is the
//! symmetric tridiagonal [`OperatorSet::stream`] and the BGK relaxation is the
//! diagonal projector [`OperatorSet::relax`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, C64};

/// Smallest Hermite truncation that holds the 5×5 block of the decay analysis.
pub const MIN_TRUNCATION: usize = 5;

/// Hermite coefficients `ĥ_{k,0..M-1}` of one spatial mode.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteVec {
    pub k: i64,
    pub coeffs: DVector<C64>,
}

impl HermiteVec {
    pub fn new(k: i64, coeffs: DVector<C64>) -> Result<Self> {
        if coeffs.len() < MIN_TRUNCATION {
            return Err(Error::Usage(format!(
                "Hermite vector needs at least {MIN_TRUNCATION} coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Data(format!("non-finite Hermite coefficient in mode k={k}")));
        }
        Ok(Self { k, coeffs })
    }

    pub fn from_real(k: i64, coeffs: &[f64]) -> Result<Self> {
        Self::new(k, DVector::from_iterator(coeffs.len(), coeffs.iter().map(|&c| C64::new(c, 0.0))))
    }

    pub fn zeros(k: i64, truncation: usize) -> Result<Self> {
        Self::new(k, DVector::zeros(truncation))
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }
}

/// The stored Fourier modes `k = 0..=K` on a torus of length `L`.
///
/// Negative modes are implicit: real data satisfy `ĥ_{-k} = conj(ĥ_k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeLattice {
    pub k_max: usize,
    pub length: f64,
    /// `l = 2π / L`.
    pub wavenumber: f64,
    pub truncation: usize,
}

impl ModeLattice {
    pub fn new(length: f64, k_max: usize, truncation: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Domain(format!("domain length must be positive, got {length}")));
        }
        if k_max < 1 {
            return Err(Error::Domain("at least one nonzero mode is required (K >= 1)".into()));
        }
        if truncation < MIN_TRUNCATION {
            return Err(Error::Domain(format!(
                "Hermite truncation must be at least {MIN_TRUNCATION}, got {truncation}"
            )));
        }
        Ok(Self { k_max, length, wavenumber: 2.0 * PI / length, truncation })
    }

    pub fn num_modes(&self) -> usize {
        self.k_max + 1
    }
}

/// Truncated streaming (`𝕃₁`) and relaxation (`𝕃₂`) operators.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSet {
    pub stream: DMatrix<f64>,
    pub relax: DMatrix<f64>,
}

impl OperatorSet {
    pub fn truncation(&self) -> usize {
        self.stream.nrows()
    }
}

/// Symmetric tridiagonal matrix with off-diagonal `√(m+1)`.
///
/// This is also the Jacobi matrix of the probabilists' Hermite recurrence.
pub(crate) fn stream_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        let s = ((i + 1) as f64).sqrt();
        m[(i, i + 1)] = s;
        m[(i + 1, i)] = s;
    }
    m
}

pub(crate) fn relax_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j && i >= 3 { 1.0 } else { 0.0 })
}

/// Builds `𝕃₁` and `𝕃₂` truncated to `M × M` (plain Galerkin truncation).
pub fn build_operators(truncation: usize) -> Result<OperatorSet> {
    if truncation < MIN_TRUNCATION {
        return Err(Error::Domain(format!(
            "Hermite truncation must be at least {MIN_TRUNCATION}, got {truncation}"
        )));
    }
    Ok(OperatorSet { stream: stream_matrix(truncation), relax: relax_matrix(truncation) })
}

/// `C_k = i k l 𝕃₁ + σ 𝕃₂`; the mode ODE is `∂ₜ ĥ_k = −C_k ĥ_k`.
pub fn assemble_generator(k: i64, wavenumber: f64, sigma: f64, ops: &OperatorSet) -> Result<DMatrix<C64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidModel(format!("collision frequency must be positive, got {sigma}")));
    }
    if !(wavenumber > 0.0 && wavenumber.is_finite()) {
        return Err(Error::Domain(format!("wavenumber unit must be positive, got {wavenumber}")));
    }
    let kl = k as f64 * wavenumber;
    Ok(DMatrix::from_fn(ops.truncation(), ops.truncation(), |i, j| {
        C64::new(sigma * ops.relax[(i, j)], kl * ops.stream[(i, j)])
    }))
}

/// Spatial modes of the mass, momentum and energy perturbations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentTriple {
    pub omega: C64,
    pub mu: C64,
    pub tau: C64,
}

pub(crate) fn moments_of_slice(c: &[C64]) -> MomentTriple {
    MomentTriple { omega: c[0], mu: c[1], tau: c[0] + c[2] * 2f64.sqrt() }
}

/// Moments from the first three Hermite coefficients:
/// `ω = ĥ₀`, `μ = ĥ₁`, `τ = ĥ₀ + √2 ĥ₂`.
pub fn moments_of(v: &HermiteVec) -> MomentTriple {
    moments_of_slice(v.coeffs.as_slice())
}

/// Standard Maxwellian `𝕄₁(v) = (2π)^{-1/2} e^{-v²/2}`.
pub fn maxwellian(v: f64) -> f64 {
    (-0.5 * v * v).exp() / (2.0 * PI).sqrt()
}

/// `He_m(v)/√(m!)` for `m < count`, by the normalized three-term recurrence
/// `√(m+1) ψ_{m+1} = v ψ_m − √m ψ_{m−1}`.
pub fn normalized_hermite(v: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(1.0);
    if count == 1 {
        return out;
    }
    out.push(v);
    for m in 1..count - 1 {
        let next = (v * out[m] - (m as f64).sqrt() * out[m - 1]) / ((m + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

/// A few Newton steps on `ψ_n(v) = 0`, using `ψ_n' = √n ψ_{n−1}`.
fn newton_polish(mut v: f64, n: usize) -> f64 {
    for _ in 0..3 {
        let psi = normalized_hermite(v, n + 1);
        let d = (n as f64).sqrt() * psi[n - 1];
        if d == 0.0 {
            break;
        }
        let step = psi[n] / d;
        if !step.is_finite() {
            break;
        }
        v -= step;
    }
    v
}

/// Values `g_m(v)` for `m < count`.
pub fn hermite_functions(v: f64, count: usize) -> Vec<f64> {
    let w = maxwellian(v);
    normalized_hermite(v, count).into_iter().map(|p| p * w).collect()
}

/// Evaluates `h_k(v) = Σ_m ĥ_{k,m} g_m(v)` on a velocity grid.
pub fn synthesize(v: &HermiteVec, vgrid: &[f64]) -> Vec<C64> {
    let m = v.truncation();
    vgrid
        .iter()
        .map(|&x| {
            hermite_functions(x, m)
                .iter()
                .zip(v.coeffs.iter())
                .fold(C64::new(0.0, 0.0), |acc, (g, c)| acc + c * *g)
        })
        .collect()
}

/// Gauss–Hermite rule for the weight `𝕄₁`: `∫ f 𝕄₁ dv ≈ Σ wᵢ f(vᵢ)`.
///
/// Exact for polynomials of degree `≤ 2n − 1`. Nodes start from the
/// Golub–Welsch eigenvalues and are polished by Newton steps on `ψ_n`;
/// weights use the Christoffel form `1 / Σ_{m<n} ψ_m(vᵢ)²`, which keeps
/// full relative accuracy at the outer nodes.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("quadrature needs at least one node".into()));
        }
        let eig = SymmetricEigen::try_new(stream_matrix(n), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::numeric(None, "Gauss-Hermite eigenproblem did not converge"))?;
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().map(|&x| newton_polish(x, n)).collect();
        nodes.sort_by(f64::total_cmp);
        let weights: Vec<f64> = nodes
            .iter()
            .map(|&v| 1.0 / normalized_hermite(v, n).iter().map(|p| p * p).sum::<f64>())
            .collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::numeric(None, "non-finite Gauss-Hermite weight"));
        }
        Ok(Self { nodes, weights })
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&v, &w)| w * f(v)).sum()
    }
}

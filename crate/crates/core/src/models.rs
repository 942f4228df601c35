//! Collision-frequency models `σ(z)` and initial-data projection.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::lyapunov::linspace;
use crate::propagator::StateStack;
use crate::spectral::{moments_of_slice, normalized_hermite, GaussHermite, ModeLattice};
use crate::{Error, Result, C64};

/// Relative margin that makes the Taylor bound strict.
pub const TAYLOR_MARGIN: f64 = 1e-9;

/// Functional form of `σ(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaVariant {
    Constant { sigma0: f64 },
    /// `σ₀ + c₁ z`
    Affine { sigma0: f64, c1: f64 },
    /// `σ₀ + ε sin(ω z)`
    Trigonometric { sigma0: f64, eps: f64, omega: f64 },
    /// `Σ_j a_j z^j`
    Polynomial { coeffs: Vec<f64> },
}

impl SigmaVariant {
    pub fn name(&self) -> &'static str {
        match self {
            SigmaVariant::Constant { .. } => "constant",
            SigmaVariant::Affine { .. } => "affine",
            SigmaVariant::Trigonometric { .. } => "trigonometric",
            SigmaVariant::Polynomial { .. } => "polynomial",
        }
    }

    /// Returns a copy with one named parameter replaced.
    ///
    /// Names: `sigma0`, `c1`, `eps`, `omega`, or `a<j>` for polynomial coefficients.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        let ok = match (&mut out, name) {
            (SigmaVariant::Constant { sigma0 }, "sigma0")
            | (SigmaVariant::Affine { sigma0, .. }, "sigma0")
            | (SigmaVariant::Trigonometric { sigma0, .. }, "sigma0") => {
                *sigma0 = value;
                true
            }
            (SigmaVariant::Affine { c1, .. }, "c1") => {
                *c1 = value;
                true
            }
            (SigmaVariant::Trigonometric { eps, .. }, "eps") => {
                *eps = value;
                true
            }
            (SigmaVariant::Trigonometric { omega, .. }, "omega") => {
                *omega = value;
                true
            }
            (SigmaVariant::Polynomial { coeffs }, p) if p.starts_with('a') => match p[1..].parse::<usize>() {
                Ok(j) => {
                    if coeffs.len() <= j {
                        coeffs.resize(j + 1, 0.0);
                    }
                    coeffs[j] = value;
                    true
                }
                Err(_) => false,
            },
            _ => false,
        };
        if ok {
            Ok(out)
        } else {
            Err(Error::Usage(format!("model '{}' has no parameter '{name}'", self.name())))
        }
    }
}

/// `σ(z)` on a closed parameter interval, with its range.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionFrequencyModel {
    pub variant: SigmaVariant,
    pub z_domain: (f64, f64),
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl CollisionFrequencyModel {
    /// Validates the model and computes `(σ_min, σ_max)` on the domain.
    pub fn new(variant: SigmaVariant, z_domain: (f64, f64)) -> Result<Self> {
        let (a, b) = z_domain;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::Domain(format!("invalid z domain [{a}, {b}]")));
        }
        let finite = match &variant {
            SigmaVariant::Constant { sigma0 } => sigma0.is_finite(),
            SigmaVariant::Affine { sigma0, c1 } => sigma0.is_finite() && c1.is_finite(),
            SigmaVariant::Trigonometric { sigma0, eps, omega } => {
                sigma0.is_finite() && eps.is_finite() && omega.is_finite()
            }
            SigmaVariant::Polynomial { coeffs } => !coeffs.is_empty() && coeffs.iter().all(|c| c.is_finite()),
        };
        if !finite {
            return Err(Error::InvalidModel(format!("{} model has missing or non-finite parameters", variant.name())));
        }
        let (lo, hi) = range_of(&variant, a, b);
        if !(lo > 0.0) {
            return Err(Error::InvalidModel(format!(
                "{} model reaches sigma = {lo} <= 0 on z in [{a}, {b}]",
                variant.name()
            )));
        }
        Ok(Self { variant, z_domain, sigma_min: lo, sigma_max: hi })
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.z_domain.0 && z <= self.z_domain.1
    }

    /// Exact `σ⁽ⁿ⁾(z)`.
    pub fn sigma_eval(&self, z: f64, n: usize) -> Result<f64> {
        if !self.contains(z) {
            return Err(Error::Domain(format!(
                "z = {z} outside [{}, {}]",
                self.z_domain.0, self.z_domain.1
            )));
        }
        Ok(eval(&self.variant, z, n))
    }

    /// `[σ(z), σ'(z), …, σ⁽ⁿ⁾(z)]`.
    pub fn derivatives(&self, z: f64, n: usize) -> Result<Vec<f64>> {
        (0..=n).map(|i| self.sigma_eval(z, i)).collect()
    }

    pub fn sigma_bounds(&self) -> (f64, f64) {
        (self.sigma_min, self.sigma_max)
    }

    /// `C` with `|σ⁽ⁿ⁾(z)/n!| < C` for every `n ≥ 0` and every `z` in the domain.
    pub fn taylor_bound(&self) -> Result<f64> {
        let raw = match &self.variant {
            SigmaVariant::Constant { .. } => self.sigma_max,
            SigmaVariant::Affine { c1, .. } => self.sigma_max.max(c1.abs()),
            SigmaVariant::Trigonometric { eps, omega, .. } => {
                if omega.abs() > 1.0 {
                    return Err(Error::NotCertifiable(format!(
                        "trigonometric model with |omega| = {} > 1 has no Taylor bound computed here",
                        omega.abs()
                    )));
                }
                // n ≥ 1: |ε ωⁿ / n!| ≤ |ε|
                self.sigma_max.max(eps.abs())
            }
            SigmaVariant::Polynomial { coeffs } => {
                let r = self.z_domain.0.abs().max(self.z_domain.1.abs());
                (0..coeffs.len())
                    .map(|n| {
                        coeffs
                            .iter()
                            .enumerate()
                            .skip(n)
                            .map(|(j, a)| a.abs() * binomial(j, n) * r.powi((j - n) as i32))
                            .sum::<f64>()
                    })
                    .fold(self.sigma_max, f64::max)
            }
        };
        Ok(raw * (1.0 + TAYLOR_MARGIN))
    }

    /// `c₁` for models linear in `z` (constant counts with `c₁ = 0`).
    pub fn affine_slope(&self) -> Option<f64> {
        match self.variant {
            SigmaVariant::Constant { .. } => Some(0.0),
            SigmaVariant::Affine { c1, .. } => Some(c1),
            _ => None,
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn falling(j: usize, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, i| acc * (j - i) as f64)
}

fn eval(v: &SigmaVariant, z: f64, n: usize) -> f64 {
    match v {
        SigmaVariant::Constant { sigma0 } => {
            if n == 0 {
                *sigma0
            } else {
                0.0
            }
        }
        SigmaVariant::Affine { sigma0, c1 } => match n {
            0 => sigma0 + c1 * z,
            1 => *c1,
            _ => 0.0,
        },
        SigmaVariant::Trigonometric { sigma0, eps, omega } => {
            let x = omega * z;
            if n == 0 {
                return sigma0 + eps * x.sin();
            }
            // derivatives cycle through cos, −sin, −cos, sin
            let phase = match n % 4 {
                1 => x.cos(),
                2 => -x.sin(),
                3 => -x.cos(),
                _ => x.sin(),
            };
            eps * omega.powi(n as i32) * phase
        }
        SigmaVariant::Polynomial { coeffs } => coeffs
            .iter()
            .enumerate()
            .skip(n)
            .map(|(j, a)| a * falling(j, n) * z.powi((j - n) as i32))
            .sum(),
    }
}

fn range_of(v: &SigmaVariant, a: f64, b: f64) -> (f64, f64) {
    match v {
        SigmaVariant::Constant { sigma0 } => (*sigma0, *sigma0),
        SigmaVariant::Affine { .. } => {
            let (fa, fb) = (eval(v, a, 0), eval(v, b, 0));
            (fa.min(fb), fa.max(fb))
        }
        SigmaVariant::Trigonometric { sigma0, eps, omega } => {
            let (smin, smax) = sine_range(omega * a, omega * b);
            let (x, y) = (sigma0 + eps * smin, sigma0 + eps * smax);
            (x.min(y), x.max(y))
        }
        SigmaVariant::Polynomial { .. } => {
            const GRID: usize = 10_000;
            let f = |z: f64| eval(v, z, 0);
            let (_, lo) = crate::lyapunov::minimize_on_interval(f, a, b, GRID);
            let (_, neg_hi) = crate::lyapunov::minimize_on_interval(|z| -f(z), a, b, GRID);
            let lo = lo.min(f(a)).min(f(b));
            let hi = (-neg_hi).max(f(a)).max(f(b));
            (lo, hi)
        }
    }
}

/// Range of `sin` over `[x, y]` (in either order).
fn sine_range(x: f64, y: f64) -> (f64, f64) {
    let (x, y) = (x.min(y), x.max(y));
    let (mut lo, mut hi) = (x.sin().min(y.sin()), x.sin().max(y.sin()));
    // interior critical points π/2 + jπ
    let first = ((x - FRAC_PI_2) / PI).ceil() as i64;
    let last = ((y - FRAC_PI_2) / PI).floor() as i64;
    for j in first..=last.min(first + 1) {
        if j.rem_euclid(2) == 0 {
            hi = 1.0;
        } else {
            lo = -1.0;
        }
    }
    (lo, hi)
}

/// Sample points in the parameter domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZGrid {
    /// `points` equispaced samples over the model's z domain.
    Uniform { points: usize },
    Explicit { values: Vec<f64> },
}

impl ZGrid {
    pub fn points(&self, model: &CollisionFrequencyModel) -> Result<Vec<f64>> {
        let pts = match self {
            ZGrid::Uniform { points } => {
                if *points == 0 {
                    return Err(Error::Usage("z grid needs at least one point".into()));
                }
                linspace(model.z_domain.0, model.z_domain.1, *points)
            }
            ZGrid::Explicit { values } => values.clone(),
        };
        if let Some(z) = pts.iter().find(|z| !model.contains(**z)) {
            return Err(Error::Domain(format!("z sample {z} outside the model domain")));
        }
        Ok(pts)
    }
}

/// What to do when projected data violate `ω₀ = μ₀ = τ₀ = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Zero the first three coefficients of the `k = 0` mode.
    #[default]
    Enforce,
    /// Fail with a data error naming the offending moment.
    Reject,
}

/// Tolerance for the normalization check in reject mode.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// One explicitly given coefficient `ĥ^{(level)}_{k,m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientEntry {
    #[serde(default)]
    pub level: usize,
    pub k: usize,
    pub m: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// `a cos(k l x) + b sin(k l x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: usize,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Source of the initial perturbation `h^I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSource {
    /// Hermite–Fourier coefficients given directly (optionally per derivative level).
    Coefficients { entries: Vec<CoefficientEntry> },
    /// `h^I(x, v) = X(x) · p(v) 𝕄₁(v)` with `X` a finite Fourier sum and
    /// `p(v) = Σ_j poly[j] v^j`.
    Separable { fourier: Vec<FourierTerm>, poly: Vec<f64> },
    /// Seeded Gaussian coefficients with amplitude `scale · decay^m` on modes
    /// `k ≤ k_max`; levels `n ≥ 1` are filled when `all_levels` is set.
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(default)]
        k_max: Option<usize>,
        #[serde(default)]
        all_levels: bool,
    },
}

fn one() -> f64 {
    1.0
}
fn default_decay() -> f64 {
    0.9
}

/// Initial data plus the normalization policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSpec {
    pub source: InitialSource,
    #[serde(default)]
    pub normalization: NormalizationMode,
}

impl InitialDataSpec {
    pub fn seed(&self) -> Option<u64> {
        match self.source {
            InitialSource::Random { seed, .. } => seed,
            _ => None,
        }
    }

    pub fn with_seed(mut self, s: u64) -> Self {
        if let InitialSource::Random { seed, .. } = &mut self.source {
            *seed = Some(s);
        }
        self
    }
}

/// Projects initial data onto the lattice, producing a stack with `levels`
/// derivative levels at `t = 0`. Levels without data start at zero.
pub fn project_initial(spec: &InitialDataSpec, lattice: &ModeLattice, levels: usize, z: f64) -> Result<StateStack> {
    let mut stack = StateStack::zeros(*lattice, levels, z)?;
    let m_trunc = lattice.truncation;
    match &spec.source {
        InitialSource::Coefficients { entries } => {
            for e in entries {
                if e.k > lattice.k_max || e.m >= m_trunc || e.level >= levels {
                    return Err(Error::Data(format!(
                        "coefficient (level {}, k {}, m {}) outside lattice K={}, M={}, levels={}",
                        e.level, e.k, e.m, lattice.k_max, m_trunc, levels
                    )));
                }
                if !(e.re.is_finite() && e.im.is_finite()) {
                    return Err(Error::Data("non-finite initial coefficient".into()));
                }
                *stack.coeff_mut(e.k, e.level, e.m) += C64::new(e.re, e.im);
            }
        }
        InitialSource::Separable { fourier, poly } => {
            // ĥ_m = ∫ p(v) 𝕄₁ g_m 𝕄₁⁻¹ dv = E[p(V) He_m(V)] / √m!, V ~ N(0,1)
            let nodes = (2 * m_trunc).max(poly.len() / 2 + m_trunc + 1);
            let q = GaussHermite::new(nodes)?;
            let mut vel = vec![0.0; m_trunc];
            for (&v, &w) in q.nodes.iter().zip(&q.weights) {
                let p: f64 = poly.iter().rev().fold(0.0, |acc, c| acc * v + c);
                for (m, psi) in normalized_hermite(v, m_trunc).into_iter().enumerate() {
                    vel[m] += w * p * psi;
                }
            }
            for term in fourier {
                if term.k > lattice.k_max {
                    return Err(Error::Data(format!("Fourier mode {} exceeds K = {}", term.k, lattice.k_max)));
                }
                let amp = if term.k == 0 {
                    C64::new(term.cos, 0.0)
                } else {
                    C64::new(term.cos, -term.sin) * 0.5
                };
                for (m, &c) in vel.iter().enumerate() {
                    *stack.coeff_mut(term.k, 0, m) += amp * c;
                }
            }
        }
        InitialSource::Random { seed, scale, decay, k_max, all_levels } => {
            let seed = seed.ok_or_else(|| Error::Usage("random initial data need a seed".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kmax = k_max.unwrap_or(lattice.k_max).min(lattice.k_max);
            let nlev = if *all_levels { levels } else { 1 };
            for n in 0..nlev {
                for k in 0..=kmax {
                    for m in 0..m_trunc {
                        let a = scale * decay.powi(m as i32);
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = if k == 0 { 0.0 } else { StandardNormal.sample(&mut rng) };
                        *stack.coeff_mut(k, n, m) = C64::new(a * re, a * im);
                    }
                }
            }
        }
    }
    // real data: the k = 0 mode is real
    for n in 0..levels {
        for m in 0..m_trunc {
            let c = stack.coeff_mut(0, n, m);
            if c.im.abs() > NORMALIZATION_TOL && spec.normalization == NormalizationMode::Reject {
                return Err(Error::Data(format!("k = 0 coefficient m = {m} at level {n} is not real")));
            }
            c.im = 0.0;
        }
    }
    enforce_normalization(&mut stack, spec.normalization)?;
    Ok(stack)
}

fn enforce_normalization(stack: &mut StateStack, mode: NormalizationMode) -> Result<()> {
    for n in 0..stack.levels() {
        let low: Vec<C64> = (0..3).map(|m| *stack.coeff_mut(0, n, m)).collect();
        let mom = moments_of_slice(&low);
        if mode == NormalizationMode::Reject {
            for (name, val) in [("omega_0", mom.omega), ("mu_0", mom.mu), ("tau_0", mom.tau)] {
                if val.norm() > NORMALIZATION_TOL {
                    return Err(Error::Data(format!(
                        "initial data violate normalization: {name} = {} at level {n} (must vanish)",
                        val.re
                    )));
                }
            }
        }
        for m in 0..3 {
            *stack.coeff_mut(0, n, m) = C64::new(0.0, 0.0);
        }
    }
    Ok(())
}

//! Entropy functional, decay envelopes and Gronwall-type bounds.
//!
//! Envelopes for derivative levels bound the square root of the entropy.
//! Reports compare squared envelopes against the entropy itself so that every
//! ratio column has the same meaning.

use serde::Serialize;

use crate::lyapunov::{build_p, p_quadratic_form, Certificate, TransformMatrix};
use crate::models::binomial;
use crate::propagator::StateStack;
use crate::{Error, Result, C64};

/// Relative slack allowed when comparing observations with envelopes.
pub const ENVELOPE_TOL: f64 = 1e-8;
/// Upward rounding applied to the data constant `H`.
pub const H_ROUNDING: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyValue {
    pub value: f64,
    pub level: usize,
    pub t: f64,
    pub z: f64,
}

fn check_level(stack: &StateStack, level: usize) -> Result<()> {
    if level >= stack.levels() {
        return Err(Error::Usage(format!("level {level} not present (stack has {})", stack.levels())));
    }
    Ok(())
}

/// `⟨x, P_k x⟩` for a single stored mode; `P_0 = I`.
pub fn mode_entropy(k: usize, alpha: f64, x: &[C64]) -> f64 {
    p_quadratic_form(k as i64, alpha, x)
}

/// `𝓔 = ‖ĥ₀‖² + 2 Σ_{k≥1} ⟨ĥ_k, P_k ĥ_k⟩` with `P_k` built from `α`.
pub fn entropy_with_alpha(stack: &StateStack, level: usize, alpha: f64) -> Result<EntropyValue> {
    check_level(stack, level)?;
    let mut value = 0.0;
    for k in 0..stack.lattice.num_modes() {
        let w = if k == 0 { 1.0 } else { 2.0 };
        value += w * mode_entropy(k, alpha, stack.level(k, level));
    }
    Ok(EntropyValue { value, level, t: stack.t, z: stack.z })
}

pub fn entropy(stack: &StateStack, level: usize, cert: &Certificate) -> Result<EntropyValue> {
    entropy_with_alpha(stack, level, cert.alpha)
}

/// Same functional through explicit dense `P_k`; `transforms[k−1]` acts on mode `k`.
pub fn entropy_with_transforms(
    stack: &StateStack,
    level: usize,
    transforms: &[TransformMatrix],
) -> Result<EntropyValue> {
    check_level(stack, level)?;
    let kmax = stack.lattice.num_modes() - 1;
    if transforms.len() < kmax {
        return Err(Error::Usage(format!("need {kmax} transforms, got {}", transforms.len())));
    }
    let m = stack.truncation();
    let x0 = stack.level(0, level);
    let mut value: f64 = x0.iter().map(|c| c.norm_sqr()).sum();
    for k in 1..=kmax {
        let p = &transforms[k - 1];
        if p.dim() != m || p.k != k as i64 {
            return Err(Error::Usage(format!(
                "transform for mode {k} has k = {} and size {}, expected size {m}",
                p.k,
                p.dim()
            )));
        }
        let x = nalgebra::DVector::from_column_slice(stack.level(k, level));
        value += 2.0 * x.dotc(&(&p.matrix * &x)).re;
    }
    Ok(EntropyValue { value, level, t: stack.t, z: stack.z })
}

/// Dense transforms `P_1..P_K` for a lattice truncation.
pub fn transforms_for(alpha: f64, k_max: usize, truncation: usize) -> Result<Vec<TransformMatrix>> {
    (1..=k_max as i64).map(|k| build_p(k, alpha, truncation)).collect()
}

/// `‖ĥ^{(n)}‖_𝓕 = √𝓔`, clamped at zero against round-off.
pub fn f_norm(stack: &StateStack, level: usize, alpha: f64) -> Result<f64> {
    Ok(entropy_with_alpha(stack, level, alpha)?.value.max(0.0).sqrt())
}

/// `e^{−2λt} E₀`: decay of the level-0 entropy.
pub fn entropy_envelope(e0: f64, lambda: f64, t: f64) -> f64 {
    (-2.0 * lambda * t).exp() * e0
}

/// `e^{−λt} Σ_i C(n,i) (c̃t)^i √𝓔_{n−i}(0)`: bound on `√𝓔_n(t)` for affine `σ`.
pub fn affine_envelope(n: usize, t: f64, lambda: f64, ctilde: f64, sqrt_e_init: &[f64]) -> Result<f64> {
    gronwall_linear(n, t, lambda, ctilde, sqrt_e_init)
}

/// `e^{−λt} (H + c̃t)^n`: the affine bound under `𝓔_j(0) ≤ H^{2j}` for all `j`.
pub fn affine_envelope_uniform(n: usize, t: f64, lambda: f64, ctilde: f64, h: f64) -> f64 {
    (-lambda * t).exp() * (h + ctilde * t).powi(n as i32)
}

/// `e^{−λt} Hⁿ + n!(1+H)^{n+1} min{e^{−λt}(1+Ĉt)ⁿ, e^{(Ĉ−λ)t} 2^{n−1}}`.
///
/// For `n = 0` only the first term remains, the level-0 hypothesis being `𝓔₀(0) ≤ 1`.
pub fn taylor_envelope(n: usize, t: f64, lambda: f64, chat: f64, h: f64) -> f64 {
    let head = (-lambda * t).exp() * h.powi(n as i32);
    if n == 0 {
        return head;
    }
    let poly = (-lambda * t).exp() * (1.0 + chat * t).powi(n as i32);
    let expo = ((chat - lambda) * t).exp() * 2f64.powi(n as i32 - 1);
    head + factorial(n) * (1.0 + h).powi(n as i32 + 1) * poly.min(expo)
}

/// Bound for `f_n' ≤ −λ f_n + C n f_{n−1}`:
/// `f_n(t) ≤ e^{−λt} Σ_i C(n,i) (Ct)^i f_{n−i}(0)`.
pub fn gronwall_linear(n: usize, t: f64, lambda: f64, c: f64, f_init: &[f64]) -> Result<f64> {
    if f_init.len() <= n {
        return Err(Error::Usage(format!("need {} initial values, got {}", n + 1, f_init.len())));
    }
    let sum: f64 = (0..=n).map(|i| binomial(n, i) * (c * t).powi(i as i32) * f_init[n - i]).sum();
    Ok((-lambda * t).exp() * sum)
}

/// Bounds for `g_n' ≤ C Σ_{j<n} g_j`, `g_j(0) ≤ H^j/j!`, as `(exact_sum, relaxed)`.
///
/// `n = 0` gives `(1, 1)`.
pub fn gronwall_cumulative(n: usize, t: f64, c: f64, h: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 1.0);
    }
    let head = h.powi(n as i32) / factorial(n);
    let scale = (1.0 + h).powi(n as i32 + 1);
    let ct = c * t;
    // (Ct)^k / (k!(k−1)!) · (n−1)!/(n−k)!, built incrementally
    let mut term = ct; // k = 1
    let mut sum = term;
    for k in 2..=n {
        term *= ct / (k as f64 * (k - 1) as f64) * (n - k + 1) as f64;
        sum += term;
    }
    let relaxed = (1.0 + ct).powi(n as i32).min(ct.exp() * 2f64.powi(n as i32 - 1));
    (head + scale * sum, head + scale * relaxed)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|j| j as f64).product()
}

/// Smallest admissible `H` with `𝓔_n(0) ≤ H^{2n}` for `n ≥ 1`, rounded up.
pub fn data_constant(initial_entropies: &[f64]) -> f64 {
    let h = initial_entropies
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &e)| e.max(0.0).powf(1.0 / (2.0 * n as f64)))
        .fold(0.0, f64::max);
    h + H_ROUNDING * h.max(1.0)
}

/// Which envelope a level report was checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// `e^{−2λt} 𝓔(0)`.
    Entropy,
    /// Binomial sum over initial levels, affine `σ`.
    Affine,
    /// `(H + c̃t)^n` form, affine `σ`.
    AffineUniform,
    /// Taylor-bounded `σ`.
    Taylor,
}

impl EnvelopeKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Entropy => "entropy",
            Self::Affine => "affine",
            Self::AffineUniform => "affine_uniform",
            Self::Taylor => "taylor",
        }
    }
}

/// Observed entropies against envelope values on a common time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub kind: EnvelopeKind,
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub envelope: Vec<f64>,
    pub ratio: Vec<f64>,
    pub max_ratio: f64,
    pub tol: f64,
}

impl LevelReport {
    pub fn passed(&self) -> bool {
        self.max_ratio <= 1.0 + self.tol
    }

    /// Index of the first sample whose ratio exceeds `1 + tol`.
    pub fn first_violation(&self) -> Option<usize> {
        self.ratio.iter().position(|&r| !(r <= 1.0 + self.tol))
    }
}

/// `observed/envelope`; a zero envelope only admits a zero observation.
pub fn ratio(observed: f64, envelope: f64) -> f64 {
    if envelope > 0.0 {
        observed / envelope
    } else if observed <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn check_envelope(
    level: usize,
    kind: EnvelopeKind,
    times: &[f64],
    entropy: &[f64],
    envelope: &[f64],
    tol: f64,
) -> Result<LevelReport> {
    if times.len() != entropy.len() || times.len() != envelope.len() {
        return Err(Error::Usage(format!(
            "time grid has {} samples but {} entropies and {} envelope values",
            times.len(),
            entropy.len(),
            envelope.len()
        )));
    }
    let ratios: Vec<f64> = entropy.iter().zip(envelope).map(|(&o, &e)| ratio(o, e)).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(LevelReport {
        level,
        kind,
        times: times.to_vec(),
        entropy: entropy.to_vec(),
        envelope: envelope.to_vec(),
        ratio: ratios,
        max_ratio,
        tol,
    })
}

/// All level reports of one run at one `z`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub z: f64,
    pub levels: Vec<LevelReport>,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.levels.iter().all(LevelReport::passed)
    }

    pub fn max_ratio(&self) -> f64 {
        self.levels.iter().map(|l| l.max_ratio).fold(0.0, f64::max)
    }
}

/// Least-squares rate `r` in `y ≈ A e^{−rt}`; every `y` must be positive.
pub fn fitted_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Usage("rate fit needs at least two matching samples".into()));
    }
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Usage("rate fit needs positive finite values".into()));
    }
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let lm = logs.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Usage("rate fit needs distinct times".into()));
    }
    let sxy: f64 = times.iter().zip(&logs).map(|(t, l)| (t - tm) * (l - lm)).sum();
    Ok(-sxy / sxx)
}

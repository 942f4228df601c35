//! Exact time propagation of the mode coefficients and their `z`-derivatives.
//!
//! Differentiating `∂ₜ ĥ_k = −C_k ĥ_k` `n` times in `z` gives
//! `∂ₜ ĥ_k⁽ⁿ⁾ = −C_k ĥ_k⁽ⁿ⁾ − Σ_{i=1}^{n} C(n,i) σ⁽ⁱ⁾(z) 𝕃₂ ĥ_k⁽ⁿ⁻ⁱ⁾`.
//! Stacking the levels `0..=N` yields one block lower-triangular, time
//! independent system per mode, solved exactly by a matrix exponential.

use nalgebra::{DMatrix, DVector};

use crate::exec::{self, Execution};
use crate::models::{binomial, CollisionFrequencyModel};
use crate::spectral::{assemble_generator, build_operators, HermiteVec, ModeLattice, OperatorSet};
use crate::{Error, Result, C64};

/// Mode coefficients `ĥ_k⁽ⁿ⁾` for `k = 0..=K`, `n = 0..levels`, at one `(t, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateStack {
    pub lattice: ModeLattice,
    levels: usize,
    /// One stacked vector per mode; level `n` occupies `[n·M, (n+1)·M)`.
    modes: Vec<DVector<C64>>,
    pub t: f64,
    pub z: f64,
}

impl StateStack {
    pub fn zeros(lattice: ModeLattice, levels: usize, z: f64) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Usage("a state stack needs at least one level".into()));
        }
        let len = levels * lattice.truncation;
        Ok(Self { lattice, levels, modes: vec![DVector::zeros(len); lattice.num_modes()], t: 0.0, z })
    }

    /// Number of derivative levels `N + 1`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn truncation(&self) -> usize {
        self.lattice.truncation
    }

    pub fn level(&self, k: usize, n: usize) -> &[C64] {
        let m = self.truncation();
        &self.modes[k].as_slice()[n * m..(n + 1) * m]
    }

    pub fn level_mut(&mut self, k: usize, n: usize) -> &mut [C64] {
        let m = self.truncation();
        &mut self.modes[k].as_mut_slice()[n * m..(n + 1) * m]
    }

    pub fn coeff_mut(&mut self, k: usize, n: usize, m: usize) -> &mut C64 {
        &mut self.level_mut(k, n)[m]
    }

    pub fn hermite_vec(&self, k: usize, n: usize) -> HermiteVec {
        HermiteVec { k: k as i64, coeffs: DVector::from_column_slice(self.level(k, n)) }
    }

    /// The full stacked vector of mode `k`.
    pub fn mode(&self, k: usize) -> &DVector<C64> {
        &self.modes[k]
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.modes {
            *v *= C64::new(factor, 0.0);
        }
    }

    /// Keeps only the first `levels` derivative levels.
    pub fn truncate_levels(&self, levels: usize) -> Result<Self> {
        if levels == 0 || levels > self.levels {
            return Err(Error::Usage(format!("cannot keep {levels} of {} levels", self.levels)));
        }
        let m = self.truncation();
        Ok(Self {
            lattice: self.lattice,
            levels,
            modes: self.modes.iter().map(|v| v.rows(0, levels * m).into_owned()).collect(),
            t: self.t,
            z: self.z,
        })
    }

    /// Largest absolute entry across all modes and levels.
    pub fn max_abs(&self) -> f64 {
        self.modes.iter().flat_map(|v| v.iter()).map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Block lower-triangular generator acting on the stacked levels of one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedGenerator {
    pub k: i64,
    pub levels: usize,
    pub matrix: DMatrix<C64>,
}

impl AugmentedGenerator {
    /// `sigma_derivs[i] = σ⁽ⁱ⁾(z)`; at least `levels` entries are required.
    pub fn build(k: i64, wavenumber: f64, ops: &OperatorSet, sigma_derivs: &[f64], levels: usize) -> Result<Self> {
        if sigma_derivs.len() < levels {
            return Err(Error::Usage(format!(
                "{levels} levels need {levels} sigma derivatives, got {}",
                sigma_derivs.len()
            )));
        }
        let m = ops.truncation();
        let ck = assemble_generator(k, wavenumber, sigma_derivs[0], ops)?;
        let mut g = DMatrix::<C64>::zeros(levels * m, levels * m);
        for n in 0..levels {
            g.view_mut((n * m, n * m), (m, m)).copy_from(&ck);
            for (i, &ds) in sigma_derivs.iter().enumerate().take(n + 1).skip(1) {
                let c = binomial(n, i) * ds;
                if c == 0.0 {
                    continue;
                }
                let mut blk = g.view_mut((n * m, (n - i) * m), (m, m));
                for d in 3..m {
                    blk[(d, d)] = C64::new(c, 0.0);
                }
            }
        }
        Ok(Self { k, levels, matrix: g })
    }

    /// Block `(row, col)` of size `M × M`.
    pub fn block(&self, row: usize, col: usize) -> DMatrix<C64> {
        let m = self.matrix.nrows() / self.levels;
        self.matrix.view((row * m, col * m), (m, m)).into_owned()
    }
}

fn generators(state: &StateStack, model: &CollisionFrequencyModel) -> Result<(OperatorSet, Vec<f64>)> {
    let ops = build_operators(state.truncation())?;
    let derivs = model.derivatives(state.z, state.levels() - 1)?;
    if derivs[0] <= 0.0 {
        return Err(Error::InvalidModel(format!("sigma({}) = {} is not positive", state.z, derivs[0])));
    }
    Ok((ops, derivs))
}

/// Per-mode propagators `exp(−dt G_k)` for a fixed `(z, dt)`.
#[derive(Clone, Debug)]
pub struct ModePropagators {
    pub dt: f64,
    pub matrices: Vec<DMatrix<C64>>,
}

impl ModePropagators {
    pub fn new(state: &StateStack, dt: f64, model: &CollisionFrequencyModel, exec: Execution) -> Result<Self> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::Usage(format!("time step must be finite and nonnegative, got {dt}")));
        }
        let (ops, derivs) = generators(state, model)?;
        let ks: Vec<usize> = (0..state.lattice.num_modes()).collect();
        let matrices = exec::try_map(exec, &ks, |&k| {
            let g = AugmentedGenerator::build(k as i64, state.lattice.wavenumber, &ops, &derivs, state.levels())?;
            let e = (g.matrix * C64::new(-dt, 0.0)).exp();
            if e.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::numeric(Some(k as i64), "matrix exponential is not finite"));
            }
            Ok(e)
        })?;
        Ok(Self { dt, matrices })
    }

    pub fn apply(&self, state: &StateStack) -> StateStack {
        let mut out = state.clone();
        for (v, e) in out.modes.iter_mut().zip(&self.matrices) {
            *v = e * &*v;
        }
        out.t = state.t + self.dt;
        out
    }
}

/// Advances `state` by `dt` with the exact exponential propagator.
pub fn evolve_exact(state: &StateStack, dt: f64, model: &CollisionFrequencyModel) -> Result<StateStack> {
    evolve_exact_with(state, dt, model, Execution::default())
}

pub fn evolve_exact_with(
    state: &StateStack,
    dt: f64,
    model: &CollisionFrequencyModel,
    exec: Execution,
) -> Result<StateStack> {
    Ok(ModePropagators::new(state, dt, model, exec)?.apply(state))
}

/// Classical RK4 on the same right-hand side with `substeps` equal steps.
pub fn evolve_reference(
    state: &StateStack,
    dt: f64,
    model: &CollisionFrequencyModel,
    substeps: usize,
) -> Result<StateStack> {
    if substeps == 0 {
        return Err(Error::Usage("substeps must be at least 1".into()));
    }
    let (ops, derivs) = generators(state, model)?;
    let h = dt / substeps as f64;
    let mut out = state.clone();
    for (k, v) in out.modes.iter_mut().enumerate() {
        let g = AugmentedGenerator::build(k as i64, state.lattice.wavenumber, &ops, &derivs, state.levels())?.matrix;
        let f = |x: &DVector<C64>| -(&g * x);
        for _ in 0..substeps {
            let k1 = f(v);
            let k2 = f(&(&*v + &k1 * C64::new(h / 2.0, 0.0)));
            let k3 = f(&(&*v + &k2 * C64::new(h / 2.0, 0.0)));
            let k4 = f(&(&*v + &k3 * C64::new(h, 0.0)));
            *v += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        }
    }
    out.t = state.t + dt;
    Ok(out)
}

/// Snapshots of the exact solution at the given increasing times.
///
/// Propagators are reused across equal steps, so uniform grids cost one
/// exponential per mode.
pub fn trajectory(
    state: &StateStack,
    times: &[f64],
    model: &CollisionFrequencyModel,
    exec: Execution,
) -> Result<Vec<StateStack>> {
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times[0] < state.t || times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Usage("sample times must be sorted and start at or after the state time".into()));
    }
    let mut cache: Option<ModePropagators> = None;
    let mut current = state.clone();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - current.t;
        if dt > 0.0 {
            let reuse = cache.as_ref().is_some_and(|c| (c.dt - dt).abs() <= 1e-13 * dt.max(1.0));
            if !reuse {
                cache = Some(ModePropagators::new(&current, dt, model, exec)?);
            }
            current = cache.as_ref().expect("propagator cached above").apply(&current);
        }
        current.t = t;
        out.push(current.clone());
    }
    Ok(out)
}

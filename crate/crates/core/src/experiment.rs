//! Configuration-driven runs: certificates, inequality checks, simulations,
//! derivative studies and parameter sweeps, each persisted as CSV.

mod config;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub use config::{
    DebugSpec, ParameterAxis, RunConfig, SigmaModelSpec, SweepSpec, TimeGrid, Tolerances, Validated,
};
pub use output::{fmt_f64, render_results, render_table, verdict, write_file, ResultRow, RESULT_HEADER};

use crate::analysis::{
    affine_envelope, affine_envelope_uniform, check_envelope, data_constant, entropy_envelope, entropy_with_alpha,
    taylor_envelope, DecayReport, EnvelopeKind, LevelReport,
};
use crate::exec::{self, Execution};
use crate::lyapunov::{certify, linspace, verify_sweep, Certificate, INEQUALITY_REL_TOL};
use crate::models::{project_initial, CollisionFrequencyModel};
use crate::propagator::{trajectory, StateStack};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ALARM: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Largest tolerated `|ĥ_{0,m}|`, `m < 3`, along any trajectory.
pub const CONSERVATION_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Certify,
    Verify,
    Simulate,
    Derivatives,
    Sweep,
}

/// Command-line overrides applied on top of a config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub exec: Execution,
    pub seed: Option<u64>,
    pub mu_scale: Option<f64>,
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    /// Human-readable report for standard output.
    pub report: String,
    /// Failed envelope or matrix-inequality checks.
    pub alarms: Vec<String>,
    /// Per-row failures recorded by sweeps, with their exit codes.
    pub failures: Vec<(i32, String)>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        let alarm = if self.alarms.is_empty() { EXIT_OK } else { EXIT_ALARM };
        self.failures.iter().map(|f| f.0).fold(alarm, i32::max)
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric { .. } | Error::Internal(_) => EXIT_NUMERIC,
        _ => EXIT_INVALID,
    }
}

/// Applies `opts` to `config`, validates it and runs `cmd`.
pub fn run(cmd: Command, mut config: RunConfig, opts: &RunOptions) -> Result<Outcome> {
    if let Some(seed) = opts.seed {
        config.initial_data = config.initial_data.with_seed(seed);
    }
    if let Some(s) = opts.mu_scale {
        config.debug.mu_scale = s;
    }
    if let Some(dir) = &opts.out_dir {
        config.output_dir = dir.clone();
    }
    let v = config.validate()?;
    match cmd {
        Command::Certify => cmd_certify(&v),
        Command::Verify => cmd_verify(&v, opts.exec),
        Command::Simulate => cmd_simulate(&v, opts.exec),
        Command::Derivatives => cmd_derivatives(&v, opts.exec),
        Command::Sweep => cmd_sweep(&v, opts.exec),
    }
}

pub fn certificate_for(length: f64, model: &CollisionFrequencyModel, config: &RunConfig) -> Result<Certificate> {
    certify(length, model.sigma_min, model.sigma_max, config.alpha_strategy)
}

fn out_path(v: &Validated, name: &str) -> PathBuf {
    v.config.output_dir.join(name)
}

fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Prints and stores the certified constants.
pub fn cmd_certify(v: &Validated) -> Result<Outcome> {
    let cert = certificate_for(v.config.length, &v.model, &v.config)?;
    let mut entries: Vec<(&str, f64)> = vec![
        ("length", cert.length),
        ("sigma_min", cert.sigma_min),
        ("sigma_max", cert.sigma_max),
        ("alpha_max", cert.alpha_max),
        ("alpha", cert.alpha),
        ("lambda_min", cert.lambda_min),
        ("mu", cert.mu),
        ("lambda", cert.lambda),
        ("ctilde", cert.ctilde),
    ];
    if let Some(c1) = v.model.affine_slope() {
        entries.push(("ctilde_affine", cert.ctilde_affine(c1)));
    }
    if let Ok(c) = v.model.taylor_bound() {
        entries.push(("taylor_bound", c));
        entries.push(("chat", cert.chat(c)));
    }
    let mut report = String::new();
    for (name, value) in &entries {
        writeln!(report, "{name:<14} {}", sig12(*value)).unwrap();
    }
    let rows: Vec<Vec<String>> = entries.iter().map(|(n, x)| vec![n.to_string(), fmt_f64(*x)]).collect();
    let path = out_path(v, "certificate.csv");
    write_file(&path, &render_table("quantity,value", &rows))?;
    Ok(Outcome { report, files: vec![path], ..Default::default() })
}

/// Checks the matrix inequality for `k = 1..K` on a σ grid.
pub fn cmd_verify(v: &Validated, exec: Execution) -> Result<Outcome> {
    let mut cert = certificate_for(v.config.length, &v.model, &v.config)?;
    cert.mu *= v.config.debug.mu_scale;
    let ks: Vec<i64> = (1..=v.config.k_max as i64).collect();
    // a constant σ has a single admissible value
    let points = if v.model.sigma_min == v.model.sigma_max { 1 } else { v.config.verify_sigma_points };
    let sigmas = linspace(v.model.sigma_min, v.model.sigma_max, points);
    let checks = verify_sweep(&cert, &ks, &sigmas, v.config.truncation, exec)?;
    let scale = v.config.tolerances.inequality / INEQUALITY_REL_TOL;
    let mut rows = Vec::with_capacity(checks.len());
    let mut alarms = Vec::new();
    for c in &checks {
        let tol = c.tolerance * scale;
        let pass = c.min_eigenvalue >= -tol;
        if !pass {
            alarms.push(format!("inequality fails at k={}, sigma={}: min eigenvalue {:e}", c.k, c.sigma, c.min_eigenvalue));
        }
        rows.push(vec![c.k.to_string(), fmt_f64(c.sigma), fmt_f64(c.min_eigenvalue), fmt_f64(tol), verdict(pass).into()]);
    }
    let path = out_path(v, "verify.csv");
    write_file(&path, &render_table("k,sigma,min_eigenvalue,tolerance,verdict", &rows))?;
    let worst = checks.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let mut report = format!(
        "checked {} pairs (k = 1..{}, {} sigma points, M = {}, mu = {})\nsmallest eigenvalue {}\n",
        checks.len(),
        v.config.k_max,
        sigmas.len(),
        v.config.truncation,
        sig12(cert.mu),
        sig12(worst)
    );
    report.push_str(if alarms.is_empty() { "verdict: pass\n" } else { "verdict: fail\n" });
    Ok(Outcome { report, alarms, files: vec![path], ..Default::default() })
}

/// One trajectory at one `z` with its envelope comparisons.
#[derive(Clone, Debug)]
pub struct ZRun {
    pub z: f64,
    pub report: DecayReport,
    pub rows: Vec<ResultRow>,
    /// Largest `|ĥ_{0,m}|`, `m < 3`, over all snapshots and levels.
    pub conservation: f64,
}

impl ZRun {
    pub fn passed(&self) -> bool {
        self.report.passed() && self.conservation <= CONSERVATION_TOL
    }
}

fn conservation_defect(snaps: &[StateStack]) -> f64 {
    snaps
        .iter()
        .flat_map(|s| (0..s.levels()).flat_map(move |n| s.level(0, n)[..3].iter().map(|c| c.norm())))
        .fold(0.0, f64::max)
}

fn rows_for(run_id: &str, z: f64, report: &LevelReport) -> Vec<ResultRow> {
    (0..report.times.len())
        .map(|i| ResultRow {
        run_id: run_id.to_string(),
        z,
        t: report.times[i],
        level: report.level,
        entropy: report.entropy[i],
        envelope: report.envelope[i],
        ratio: report.ratio[i],
        pass: report.ratio[i] <= 1.0 + report.tol,
        })
        .collect()
}

fn entropy_series(snaps: &[StateStack], level: usize, alpha: f64) -> Result<Vec<f64>> {
    snaps.iter().map(|s| Ok(entropy_with_alpha(s, level, alpha)?.value)).collect()
}

/// Level-0 trajectory at `z` checked against `e^{−2λt} 𝓔(0)`.
pub fn simulate_at(
    v: &Validated,
    model: &CollisionFrequencyModel,
    cert: &Certificate,
    z: f64,
    run_id: &str,
    exec: Execution,
) -> Result<ZRun> {
    let lattice = crate::spectral::ModeLattice::new(cert.length, v.config.k_max, v.config.truncation)?;
    let init = project_initial(&v.config.initial_data, &lattice, 1, z)?;
    let snaps = trajectory(&init, &v.times, model, exec)?;
    let e = entropy_series(&snaps, 0, cert.alpha)?;
    let e0 = entropy_with_alpha(&init, 0, cert.alpha)?.value;
    let env: Vec<f64> = v.times.iter().map(|&t| entropy_envelope(e0, cert.lambda, t)).collect();
    let level = check_envelope(0, EnvelopeKind::Entropy, &v.times, &e, &env, v.config.tolerances.envelope)?;
    let rows = rows_for(run_id, z, &level);
    Ok(ZRun { z, report: DecayReport { z, levels: vec![level] }, rows, conservation: conservation_defect(&snaps) })
}

/// Which derivative envelope family applies to a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativePath {
    /// Affine `σ`, coupling `c̃ = |c₁| C̃`.
    Affine { ctilde: f64 },
    /// Taylor-bounded `σ`, coupling `Ĉ = C̃ C`.
    Taylor { chat: f64 },
}

impl DerivativePath {
    pub fn select(model: &CollisionFrequencyModel, cert: &Certificate) -> Result<Self> {
        if let Some(c1) = model.affine_slope() {
            return Ok(Self::Affine { ctilde: cert.ctilde_affine(c1) });
        }
        match model.taylor_bound() {
            Ok(c) => Ok(Self::Taylor { chat: cert.chat(c) }),
            Err(e) => Err(Error::NotCertifiable(format!(
                "{e}; derivative envelopes need an affine model or one with a finite Taylor bound \
                 (for example trigonometric with |omega| <= 1)"
            ))),
        }
    }
}

/// Derivative levels `0..=N` at `z`, each checked against the squared norm envelope.
pub fn derivatives_at(
    v: &Validated,
    cert: &Certificate,
    path: DerivativePath,
    z: f64,
    run_id: &str,
    exec: Execution,
) -> Result<ZRun> {
    let levels = v.config.derivative_levels + 1;
    let mut init = project_initial(&v.config.initial_data, &v.lattice, levels, z)?;
    let initial_entropies = |s: &StateStack| -> Result<Vec<f64>> {
        (0..levels).map(|n| Ok(entropy_with_alpha(s, n, cert.alpha)?.value)).collect()
    };
    let mut e0 = initial_entropies(&init)?;
    if v.config.scale_to_unit_entropy && e0[0] > 1.0 {
        // land strictly below 1 despite rounding
        init.scale((1.0 - 1e-12) / e0[0].sqrt());
        e0 = initial_entropies(&init)?;
    }
    // The uniform hypotheses include 𝓔₀(0) ≤ H⁰ = 1.
    let unit_level0 = e0[0] <= 1.0;
    if matches!(path, DerivativePath::Taylor { .. }) && !unit_level0 {
        return Err(Error::Usage(format!(
            "level-0 initial entropy {} exceeds 1; enable scale_to_unit_entropy",
            e0[0]
        )));
    }
    let h = data_constant(&e0);
    let sqrt_e0: Vec<f64> = e0.iter().map(|e| e.max(0.0).sqrt()).collect();
    let snaps = trajectory(&init, &v.times, &v.model, exec)?;
    let tol = v.config.tolerances.envelope;
    let mut reports = Vec::new();
    for n in 0..levels {
        let e = entropy_series(&snaps, n, cert.alpha)?;
        let sq = |f: &dyn Fn(f64) -> Result<f64>| -> Result<Vec<f64>> {
            v.times.iter().map(|&t| f(t).map(|x| x * x)).collect()
        };
        match path {
            DerivativePath::Affine { ctilde } => {
                let env = sq(&|t| affine_envelope(n, t, cert.lambda, ctilde, &sqrt_e0))?;
                reports.push(check_envelope(n, EnvelopeKind::Affine, &v.times, &e, &env, tol)?);
                if unit_level0 {
                    let env = sq(&|t| Ok(affine_envelope_uniform(n, t, cert.lambda, ctilde, h)))?;
                    reports.push(check_envelope(n, EnvelopeKind::AffineUniform, &v.times, &e, &env, tol)?);
                }
            }
            DerivativePath::Taylor { chat } => {
                let env = sq(&|t| Ok(taylor_envelope(n, t, cert.lambda, chat, h)))?;
                reports.push(check_envelope(n, EnvelopeKind::Taylor, &v.times, &e, &env, tol)?);
            }
        }
    }
    reports.sort_by_key(|r| (r.kind, r.level));
    let rows = reports
        .iter()
        .flat_map(|r| rows_for(&format!("{run_id}-{}", r.kind.tag()), z, r))
        .collect();
    Ok(ZRun { z, report: DecayReport { z, levels: reports }, rows, conservation: conservation_defect(&snaps) })
}

fn summary_rows(run_id: &str, run: &ZRun) -> Vec<Vec<String>> {
    run.report
        .levels
        .iter()
        .map(|l| {
            vec![
                format!("{run_id}-{}", l.kind.tag()),
                fmt_f64(run.z),
                l.level.to_string(),
                fmt_f64(l.max_ratio),
                fmt_f64(run.conservation),
                verdict(l.passed() && run.conservation <= CONSERVATION_TOL).into(),
            ]
        })
        .collect()
}

const SUMMARY_HEADER: &str = "run_id,z,level,max_ratio,conservation,verdict";

fn alarms_for(run_id: &str, run: &ZRun) -> Vec<String> {
    let mut out = Vec::new();
    for l in &run.report.levels {
        if let Some(i) = l.first_violation() {
            out.push(format!(
                "{run_id}: {} envelope exceeded at level {}, t = {} (ratio {})",
                l.kind.tag(),
                l.level,
                l.times[i],
                l.ratio[i]
            ));
        }
    }
    if run.conservation > CONSERVATION_TOL {
        out.push(format!("{run_id}: conserved moments drifted to {:e}", run.conservation));
    }
    out
}

fn write_runs(
    v: &Validated,
    prefix: &str,
    runs: &[(String, ZRun)],
    report: &mut String,
    outcome: &mut Outcome,
) -> Result<()> {
    let seed = v.config.initial_data.seed();
    let mut summary = Vec::new();
    for (id, run) in runs {
        let path = out_path(v, &format!("{id}.csv"));
        write_file(&path, &render_results(seed, &run.rows))?;
        outcome.files.push(path);
        summary.extend(summary_rows(id, run));
        outcome.alarms.extend(alarms_for(id, run));
        writeln!(report, "{id}  z = {}  max ratio {}  {}", sig12(run.z), sig12(run.report.max_ratio()), verdict(run.passed()))
            .unwrap();
    }
    let path = out_path(v, &format!("{prefix}_summary.csv"));
    write_file(&path, &render_table(SUMMARY_HEADER, &summary))?;
    outcome.files.push(path);
    Ok(())
}

fn run_ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}-z{i:03}")).collect()
}

/// Level-0 trajectories at every `z` sample.
pub fn cmd_simulate(v: &Validated, exec: Execution) -> Result<Outcome> {
    let cert = certificate_for(v.config.length, &v.model, &v.config)?;
    let ids = run_ids("simulate", v.zs.len());
    let jobs: Vec<(String, f64)> = ids.into_iter().zip(v.zs.iter().copied()).collect();
    let runs = exec::try_map(exec, &jobs, |(id, z)| {
        Ok::<_, Error>((id.clone(), simulate_at(v, &v.model, &cert, *z, id, Execution::Sequential)?))
    })?;
    let mut report = format!("lambda = {}\n", sig12(cert.lambda));
    let mut outcome = Outcome::default();
    write_runs(v, "simulate", &runs, &mut report, &mut outcome)?;
    outcome.report = report;
    Ok(outcome)
}

/// Derivative levels `0..=N` at every `z` sample.
pub fn cmd_derivatives(v: &Validated, exec: Execution) -> Result<Outcome> {
    if v.config.derivative_levels == 0 {
        return Err(Error::Usage("derivatives needs derivative_levels >= 1; use simulate for level 0".into()));
    }
    let cert = certificate_for(v.config.length, &v.model, &v.config)?;
    let path = DerivativePath::select(&v.model, &cert)?;
    let ids = run_ids("derivatives", v.zs.len());
    let jobs: Vec<(String, f64)> = ids.into_iter().zip(v.zs.iter().copied()).collect();
    let runs = exec::try_map(exec, &jobs, |(id, z)| {
        Ok::<_, Error>((id.clone(), derivatives_at(v, &cert, path, *z, id, Execution::Sequential)?))
    })?;
    let mut report = match path {
        DerivativePath::Affine { ctilde } => format!("affine model, ctilde = {}", sig12(ctilde)),
        DerivativePath::Taylor { chat } => format!("Taylor-bounded model, chat = {}", sig12(chat)),
    };
    writeln!(report, ", lambda = {}", sig12(cert.lambda)).unwrap();
    let mut outcome = Outcome::default();
    write_runs(v, "derivatives", &runs, &mut report, &mut outcome)?;
    outcome.report = report;
    Ok(outcome)
}

/// One `(L, parameter)` grid point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub length: f64,
    pub parameter: Option<(String, f64)>,
}

pub fn sweep_points(config: &RunConfig) -> Vec<SweepPoint> {
    let lengths = if config.sweep.lengths.is_empty() { vec![config.length] } else { config.sweep.lengths.clone() };
    let params: Vec<Option<(String, f64)>> = match &config.sweep.parameter {
        Some(axis) => axis.values.iter().map(|&x| Some((axis.name.clone(), x))).collect(),
        None => vec![None],
    };
    lengths
        .iter()
        .flat_map(|&length| params.iter().map(move |p| SweepPoint { length, parameter: p.clone() }))
        .collect()
}

struct SweepResult {
    cert: Certificate,
    runs: Vec<ZRun>,
}

fn sweep_one(v: &Validated, point: &SweepPoint, id: &str) -> Result<SweepResult> {
    let variant = match &point.parameter {
        Some((name, x)) => v.config.sigma_model.variant.with_param(name, *x)?,
        None => v.config.sigma_model.variant.clone(),
    };
    let model = CollisionFrequencyModel::new(variant, v.config.sigma_model.z_domain)?;
    let zs = v.config.z_grid.points(&model)?;
    let cert = certificate_for(point.length, &model, &v.config)?;
    let runs = zs
        .iter()
        .enumerate()
        .map(|(i, &z)| simulate_at(v, &model, &cert, z, &format!("{id}-z{i:03}"), Execution::Sequential))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { cert, runs })
}

/// Level-0 runs over the `(L, parameter, z)` grid; one file per `(L, parameter)`.
pub fn cmd_sweep(v: &Validated, exec: Execution) -> Result<Outcome> {
    let points = sweep_points(&v.config);
    let ids: Vec<String> = (0..points.len()).map(|i| format!("sweep-g{i:03}")).collect();
    let jobs: Vec<(&String, &SweepPoint)> = ids.iter().zip(&points).collect();
    let results = exec::map(exec, &jobs, |(id, p)| sweep_one(v, p, id));
    let seed = v.config.initial_data.seed();
    let mut outcome = Outcome::default();
    let mut summary = Vec::new();
    let mut report = String::new();
    for ((id, point), result) in jobs.iter().zip(results) {
        let (pname, pval) = match &point.parameter {
            Some((n, x)) => (n.clone(), fmt_f64(*x)),
            None => (String::new(), String::new()),
        };
        match result {
            Ok(res) => {
                let rows: Vec<ResultRow> = res.runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
                let path = out_path(v, &format!("{id}.csv"));
                write_file(&path, &render_results(seed, &rows))?;
                outcome.files.push(path);
                for (i, run) in res.runs.iter().enumerate() {
                    let run_id = format!("{id}-z{i:03}");
                    outcome.alarms.extend(alarms_for(&run_id, run));
                    summary.push(vec![
                        run_id,
                        fmt_f64(point.length),
                        pname.clone(),
                        pval.clone(),
                        fmt_f64(run.z),
                        fmt_f64(res.cert.alpha),
                        fmt_f64(res.cert.mu),
                        fmt_f64(res.cert.lambda),
                        fmt_f64(run.report.max_ratio()),
                        verdict(run.passed()).into(),
                        String::new(),
                    ]);
                }
                writeln!(
                    report,
                    "{id}  L = {}  lambda = {}  worst ratio {}",
                    sig12(point.length),
                    sig12(res.cert.lambda),
                    sig12(res.runs.iter().map(|r| r.report.max_ratio()).fold(0.0, f64::max))
                )
                .unwrap();
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                outcome.failures.push((exit_code_for(&e), format!("{id}: {e}")));
                summary.push(vec![
                    id.to_string(),
                    fmt_f64(point.length),
                    pname,
                    pval,
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "error".into(),
                    msg,
                ]);
                writeln!(report, "{id}  L = {}  error: {e}", sig12(point.length)).unwrap();
            }
        }
    }
    let path = out_path(v, "sweep_summary.csv");
    write_file(
        &path,
        &render_table("run_id,length,parameter,value,z,alpha,mu,lambda,max_ratio,verdict,error", &summary),
    )?;
    outcome.files.push(path);
    outcome.report = report;
    Ok(outcome)
}

/// Reads a config file, mapping I/O and parse failures to usage errors.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path)
}

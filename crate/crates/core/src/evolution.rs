//! The evolution operator `Φ(μ⁺, f)`, adaptive explicit time stepping of
//! `df/dt = Φ(μ⁺, f)`, and the vanishing-viscosity sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{sobolev_norm, spectral_tail_fraction, GridFunction};
use crate::potentials::geometry_of;
use crate::solver::{solve_density, SolverError, SolverReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("stiffness/blow-up suspected: step size {dt:.3e} underflow at t = {t:.6} (error estimate {error:.3e}, H^s norm {norm:.3e})")]
    StepUnderflow {
        t: f64,
        dt: f64,
        error: f64,
        norm: f64,
    },
    #[error("boundary contamination {level:.3e} exceeds threshold {threshold:.3e} at t = {t:.6}")]
    Contamination { t: f64, level: f64, threshold: f64 },
    #[error("non-finite profile at t = {t:.6}")]
    NonFinite { t: f64 },
    #[error("step budget of {0} exhausted")]
    StepBudget(usize),
}

/// Viscosities of the fluid below (`mu`) and above (`mu_plus`) the interface,
/// and the surface tension coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub mu: f64,
    pub mu_plus: f64,
    pub sigma: f64,
}

impl PhysicalParams {
    pub fn new(mu: f64, mu_plus: f64, sigma: f64) -> Result<Self, EvolutionError> {
        let p = Self { mu, mu_plus, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(EvolutionError::Params(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.mu_plus >= 0.0 && self.mu_plus.is_finite()) {
            return Err(EvolutionError::Params(format!(
                "mu_plus must be non-negative, got {}",
                self.mu_plus
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(EvolutionError::Params(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// `a_μ = (μ⁺ - μ)/(μ⁺ + μ)`.
    pub fn a_mu(&self) -> f64 {
        (self.mu_plus - self.mu) / (self.mu_plus + self.mu)
    }

    pub fn with_mu_plus(self, mu_plus: f64) -> Self {
        Self { mu_plus, ..self }
    }
}

/// `Φ(μ⁺, f) = σ/(μ⁺+μ) · (1/2 + a_μ𝔻(f))⁻¹[𝕍(f)[g(f)]] · (-f', 1)`.
pub fn phi(params: &PhysicalParams, f: &GridFunction) -> Result<GridFunction, EvolutionError> {
    phi_with_report(params, f).map(|(v, _)| v)
}

pub fn phi_with_report(
    params: &PhysicalParams,
    f: &GridFunction,
) -> Result<(GridFunction, SolverReport), EvolutionError> {
    params.validate()?;
    let geom = geometry_of(f);
    let vg = geom.apply_v(&geom.g);
    let (w, report) = solve_density(&geom, 0.5, params.a_mu(), &vg)?;
    let normal = &w.second - &geom.fp().times(&w.first);
    Ok((
        normal.scale(params.sigma / (params.mu_plus + params.mu)),
        report,
    ))
}

/// One-phase velocity trace `(σ/μ)𝕍(f)(1/2 + 𝔻(f))⁻¹[g]` dotted with `(-f', 1)`.
///
/// Equals `Φ(0, f)` by the commutation of `𝕍` with the resolvents.
pub fn phi_one_phase_physical(
    params: &PhysicalParams,
    f: &GridFunction,
) -> Result<GridFunction, EvolutionError> {
    params.validate()?;
    let geom = geometry_of(f);
    let (beta, _) = solve_density(&geom, 0.5, 1.0, &geom.g)?;
    let v = geom.apply_v(&beta);
    let normal = &v.second - &geom.fp().times(&v.first);
    Ok(normal.scale(params.sigma / params.mu))
}

/// Largest `|f|` over the outer 10% of nodes relative to `max |f|`; zero for `f = 0`.
pub fn boundary_contamination(f: &GridFunction) -> f64 {
    let n = f.grid().len();
    let band = (n / 20).max(1);
    let v = f.values();
    let edge = v[..band]
        .iter()
        .chain(&v[n - band..])
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    let top = f.max_abs();
    if top == 0.0 {
        0.0
    } else {
        edge / top
    }
}

/// Settings of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControls {
    /// Local error tolerance on the `H^s` proxy norm (mixed absolute/relative).
    pub tol: f64,
    pub cfl: f64,
    pub sobolev_s: f64,
    pub contamination_threshold: f64,
    pub max_steps: usize,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            cfl: 0.5,
            sobolev_s: 1.75,
            contamination_threshold: 0.1,
            max_steps: 200_000,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |what: &str| Err(EvolutionError::Params(what.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.cfl > 0.0) {
            return bad("cfl must be positive");
        }
        if !(0.0..=3.0).contains(&self.sobolev_s) {
            return bad("sobolev_s must lie in [0, 3]");
        }
        if !(self.contamination_threshold > 0.0) {
            return bad("contamination_threshold must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }

    /// `c_cfl · h · (μ⁺ + μ)/σ`.
    pub fn cfl_limit(&self, params: &PhysicalParams, h: f64) -> f64 {
        self.cfl * h * (params.mu_plus + params.mu) / params.sigma
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `(t, ‖f(t)‖_{H^s})` after every accepted step, starting at the initial time.
    pub norm_trail: Vec<(f64, f64)>,
    pub contamination: f64,
    /// Fraction of spectral energy in the upper half of the resolved wavenumbers.
    pub spectral_tail: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub phi_evaluations: usize,
    pub solves: usize,
    pub max_solver_residual: f64,
    pub max_condition: f64,
    /// Raw local error estimates `‖e‖_{H^s}` of the accepted steps.
    #[serde(skip)]
    pub error_estimates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub t: f64,
    pub f: GridFunction,
    pub params: PhysicalParams,
    pub diagnostics: Diagnostics,
}

impl SimulationState {
    pub fn new(f: GridFunction, params: PhysicalParams, s: f64) -> Self {
        let mut diagnostics = Diagnostics::default();
        diagnostics.norm_trail.push((0.0, sobolev_norm(&f, s)));
        diagnostics.contamination = boundary_contamination(&f);
        diagnostics.spectral_tail = spectral_tail_fraction(&f);
        Self {
            t: 0.0,
            f,
            params,
            diagnostics,
        }
    }
}

const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth minus embedded fourth order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

const MIN_DT: f64 = 1e-12;

/// Dormand-Prince 5(4) integrator with first-same-as-last reuse.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub controls: StepControls,
    dt: Option<f64>,
    fsal: Option<(f64, GridFunction)>,
}

impl Integrator {
    pub fn new(controls: StepControls) -> Result<Self, EvolutionError> {
        controls.validate()?;
        Ok(Self {
            controls,
            dt: None,
            fsal: None,
        })
    }

    fn rhs(
        &self,
        state: &mut SimulationState,
        f: &GridFunction,
    ) -> Result<GridFunction, EvolutionError> {
        let (v, report) = phi_with_report(&state.params, f)?;
        let d = &mut state.diagnostics;
        d.phi_evaluations += 1;
        if state.params.a_mu() != 0.0 {
            d.solves += 1;
            d.max_solver_residual = d.max_solver_residual.max(report.residual_norm);
            d.max_condition = d.max_condition.max(report.condition_estimate);
        }
        Ok(v)
    }

    /// Advances `state` by one accepted step of size at most `dt_max`.
    pub fn step(
        &mut self,
        state: &mut SimulationState,
        dt_max: f64,
    ) -> Result<f64, EvolutionError> {
        let h = state.f.grid().spacing();
        let limit = self.controls.cfl_limit(&state.params, h).min(dt_max);
        let s = self.controls.sobolev_s;
        let mut dt = self.dt.unwrap_or(limit).min(limit);
        let k1 = match self.fsal.take() {
            Some((t, k)) if t == state.t => k,
            _ => self.rhs(state, &state.f.clone())?,
        };
        loop {
            if dt < MIN_DT {
                return Err(EvolutionError::StepUnderflow {
                    t: state.t,
                    dt,
                    error: f64::NAN,
                    norm: sobolev_norm(&state.f, s),
                });
            }
            let mut k: Vec<GridFunction> = vec![k1.clone()];
            for i in 1..7 {
                let mut y = state.f.clone();
                for (j, a) in A[i].iter().enumerate() {
                    if *a != 0.0 {
                        y = &y + &k[j].scale(dt * a);
                    }
                }
                if i == 6 {
                    // The last stage point is the fifth-order solution.
                    let k7 = self.rhs(state, &y)?;
                    k.push(k7);
                    let mut err = state.f.grid().zeros();
                    for (j, e) in E.iter().enumerate() {
                        if *e != 0.0 {
                            err = &err + &k[j].scale(dt * e);
                        }
                    }
                    let err_norm = sobolev_norm(&err, s);
                    let y_norm = sobolev_norm(&y, s);
                    let scale = self.controls.tol * (1.0 + y_norm);
                    let ratio = err_norm / scale;
                    if !ratio.is_finite() || y.values().iter().any(|v| !v.is_finite()) {
                        dt *= 0.2;
                        state.diagnostics.rejected_steps += 1;
                        break;
                    }
                    let factor = if ratio == 0.0 {
                        5.0
                    } else {
                        (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if ratio <= 1.0 {
                        let taken = dt;
                        state.t += taken;
                        state.f = y;
                        let d = &mut state.diagnostics;
                        d.accepted_steps += 1;
                        d.norm_trail.push((state.t, y_norm));
                        d.error_estimates.push(err_norm);
                        d.contamination = boundary_contamination(&state.f);
                        d.spectral_tail = spectral_tail_fraction(&state.f);
                        self.dt = Some(dt * factor);
                        self.fsal = Some((state.t, k.pop().unwrap()));
                        return Ok(taken);
                    }
                    state.diagnostics.rejected_steps += 1;
                    dt *= factor.min(0.9);
                    break;
                }
                let ki = self.rhs(state, &y)?;
                k.push(ki);
            }
        }
    }
}

/// One adaptive step with a fresh integrator.
pub fn step(
    state: &SimulationState,
    dt_max: f64,
    controls: &StepControls,
) -> Result<SimulationState, EvolutionError> {
    let mut next = state.clone();
    Integrator::new(*controls)?.step(&mut next, dt_max)?;
    Ok(next)
}

/// Snapshots of a run at its output times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub profiles: Vec<GridFunction>,
    pub last: SimulationState,
}

/// Integrates `df/dt = Φ(μ⁺, f)` from `f0`, recording the profile at `0` and at each output time.
pub fn simulate(
    f0: &GridFunction,
    params: &PhysicalParams,
    output_times: &[f64],
    controls: &StepControls,
) -> Result<Trajectory, EvolutionError> {
    params.validate()?;
    let mut integrator = Integrator::new(*controls)?;
    if output_times.windows(2).any(|w| !(w[1] > w[0]))
        || output_times.first().is_some_and(|t| !(*t > 0.0))
    {
        return Err(EvolutionError::Params(
            "output times must be positive and strictly increasing".into(),
        ));
    }
    let mut state = SimulationState::new(f0.clone(), *params, controls.sobolev_s);
    check_state(&state, controls)?;
    let mut times = vec![0.0];
    let mut profiles = vec![f0.clone()];
    let mut steps = 0;
    for &target in output_times {
        while state.t < target {
            // Land exactly on output times; avoid slivers below the minimum step.
            let remaining = target - state.t;
            if remaining < 1e-12 * target.max(1.0) {
                state.t = target;
                break;
            }
            integrator.step(&mut state, remaining)?;
            if (target - state.t).abs() < 1e-12 * target.max(1.0) {
                state.t = target;
            }
            check_state(&state, controls)?;
            steps += 1;
            if steps >= controls.max_steps {
                return Err(EvolutionError::StepBudget(controls.max_steps));
            }
        }
        times.push(target);
        profiles.push(state.f.clone());
    }
    Ok(Trajectory {
        times,
        profiles,
        last: state,
    })
}

fn check_state(state: &SimulationState, controls: &StepControls) -> Result<(), EvolutionError> {
    if state.f.values().iter().any(|v| !v.is_finite()) {
        return Err(EvolutionError::NonFinite { t: state.t });
    }
    let level = state.diagnostics.contamination;
    if level > controls.contamination_threshold {
        return Err(EvolutionError::Contamination {
            t: state.t,
            level,
            threshold: controls.contamination_threshold,
        });
    }
    Ok(())
}

/// Errors of each `μ⁺` run against the `μ⁺ = 0` baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub mu: f64,
    pub sigma: f64,
    pub output_times: Vec<f64>,
    pub mu_plus: Vec<f64>,
    /// `E(μ⁺)`: max over output times of `‖Δf‖_{H^s} + ‖ΔΦ‖_{H^{s-1}}`.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log E` against `log μ⁺`.
    pub slope: Option<f64>,
    #[serde(skip)]
    pub baseline: Option<Trajectory>,
    #[serde(skip)]
    pub runs: Vec<Trajectory>,
}

#[derive(Debug, Error)]
#[error("sweep member mu_plus = {mu_plus} failed: {source}")]
pub struct SweepError {
    pub mu_plus: f64,
    pub source: EvolutionError,
    /// Errors of the members that completed.
    pub partial: Box<SweepReport>,
}

/// Runs the `μ⁺ = 0` baseline and every `μ⁺` of the list, then fits the rate.
pub fn mu_sweep(
    f0: &GridFunction,
    mu: f64,
    sigma: f64,
    output_times: &[f64],
    mu_plus_list: &[f64],
    controls: &StepControls,
) -> Result<SweepReport, SweepError> {
    let base = PhysicalParams {
        mu,
        mu_plus: 0.0,
        sigma,
    };
    let mut report = SweepReport {
        mu,
        sigma,
        output_times: output_times.to_vec(),
        mu_plus: Vec::new(),
        errors: Vec::new(),
        slope: None,
        baseline: None,
        runs: Vec::new(),
    };
    let fail = |mu_plus: f64, source: EvolutionError, report: SweepReport| SweepError {
        mu_plus,
        source,
        partial: Box::new(report),
    };
    if let Err(e) = base.validate() {
        return Err(fail(0.0, e, report));
    }
    if mu_plus_list.is_empty() {
        return Err(fail(
            0.0,
            EvolutionError::Params("empty mu_plus list".into()),
            report,
        ));
    }
    if let Some(&bad) = mu_plus_list.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(fail(
            bad,
            EvolutionError::Params(format!("mu_plus values must be positive, got {bad}")),
            report,
        ));
    }
    let mut all = vec![0.0];
    all.extend_from_slice(mu_plus_list);
    let s = controls.sobolev_s;
    let outcomes: Vec<Result<(Trajectory, Vec<GridFunction>), EvolutionError>> = all
        .par_iter()
        .map(|&mp| {
            let params = base.with_mu_plus(mp);
            let traj = simulate(f0, &params, output_times, controls)?;
            let rates = traj
                .profiles
                .iter()
                .map(|f| phi(&params, f))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((traj, rates))
        })
        .collect();
    let mut outcomes = outcomes.into_iter().zip(all.iter());
    let (baseline, base_rates) = match outcomes.next() {
        Some((Ok(v), _)) => v,
        Some((Err(e), _)) => return Err(fail(0.0, e, report)),
        None => unreachable!(),
    };
    let mut failure = None;
    for (outcome, &mp) in outcomes {
        match outcome {
            Ok((traj, rates)) => {
                let e = traj
                    .profiles
                    .iter()
                    .zip(&baseline.profiles)
                    .zip(rates.iter().zip(&base_rates))
                    .map(|((f, f0), (r, r0))| {
                        sobolev_norm(&(f - f0), s) + sobolev_norm(&(r - r0), (s - 1.0).max(0.0))
                    })
                    .fold(0.0, f64::max);
                report.mu_plus.push(mp);
                report.errors.push(e);
                report.runs.push(traj);
            }
            Err(e) => {
                if failure.is_none() {
                    failure = Some((mp, e));
                }
            }
        }
    }
    report.baseline = Some(baseline);
    report.slope = loglog_slope(&report.mu_plus, &report.errors);
    match failure {
        Some((mp, e)) => Err(fail(mp, e, report)),
        None => Ok(report),
    }
}

/// Least-squares slope of `log y` against `log x` over the positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

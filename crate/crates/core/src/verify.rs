//! Residuals of the operator identities, shared by the tests and the CLI.
//!
//! Pointwise residuals are measured on the interior half `|ξ| <= L/2`: outputs
//! such as `𝔻(f)[β]` decay only algebraically, and their periodic extension
//! carries a jump at the seam that pollutes spectral derivatives near `±L`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::grid::{DensityPair, Grid, GridError, GridFunction};
use crate::kernels::{apply_bnm, Jet, KernelError};
use crate::potentials::{geometry_of, tilde_traces, InterfaceGeometry, Side, TildeTraces};
use crate::solver::{invertibility_diagnostics, solve_density, SolverError, Which};

/// Half-length of the standard verification window.
pub const STANDARD_HALF_LENGTH: f64 = 16.0;
/// Fraction of the window on which pointwise residuals are measured.
pub const INTERIOR_FRACTION: f64 = 0.5;
/// Relative self-convergence gap treated as converged to roundoff.
pub const ROUNDOFF_GAP: f64 = 1e-9;

/// `f(ξ) = 0.3·exp(-ξ²)`.
pub fn standard_profile(grid: &Grid) -> GridFunction {
    grid.sample(|x| 0.3 * (-x * x).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity_id: String,
    pub residual_l2: f64,
    pub reference_norm: f64,
    pub relative: f64,
    /// `(L, N)`.
    pub grid: (f64, usize),
    pub refinement_order: Option<f64>,
    /// Residual samples per component; a single value for scalar identities.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

impl IdentityReport {
    fn new(
        id: impl Into<String>,
        grid: &Grid,
        residual: f64,
        reference: f64,
        samples: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            identity_id: id.into(),
            residual_l2: residual,
            reference_norm: reference,
            relative: if reference > 0.0 {
                residual / reference
            } else {
                residual
            },
            grid: (grid.half_length(), grid.len()),
            refinement_order: None,
            samples,
        }
    }

    fn pointwise(id: impl Into<String>, residual: &DensityPair, reference: f64) -> Self {
        Self::new(
            id,
            residual.grid(),
            interior_norm(residual),
            reference,
            vec![
                residual.first.values().to_vec(),
                residual.second.values().to_vec(),
            ],
        )
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<14} L={:<4} N={:<5} residual={:.3e} relative={:.3e}",
            self.identity_id, self.grid.0, self.grid.1, self.residual_l2, self.relative
        )?;
        if let Some(p) = self.refinement_order {
            write!(f, " order={p:.2}")?;
        }
        Ok(())
    }
}

/// `h`-weighted `L²` norm over the interior nodes.
pub fn interior_norm(p: &DensityPair) -> f64 {
    let g = p.grid();
    let (a, b) = (p.first.values(), p.second.values());
    let sum: f64 = g
        .interior(INTERIOR_FRACTION)
        .map(|j| a[j] * a[j] + b[j] * b[j])
        .sum();
    (g.spacing() * sum).sqrt()
}

fn scalar_interior_norm(u: &GridFunction) -> f64 {
    interior_norm(&DensityPair::new(u.clone(), u.grid().zeros()).expect("same grid"))
}

/// Zero-mean, band-limited, Gaussian-enveloped random pair.
///
/// Each component is `ψ'` with `ψ(ξ) = e^{-ξ²/2} Σ a_k cos(κ_k ξ + φ_k)`, so the
/// same seed gives the same continuous function on every grid.
pub fn random_density(grid: &Grid, seed: u64) -> DensityPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut component = || {
        let modes: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..3.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        grid.sample(|x| {
            let env = (-0.5 * x * x).exp();
            let (mut c, mut s) = (0.0, 0.0);
            for &(a, k, p) in &modes {
                c += a * (k * x + p).cos();
                s += a * k * (k * x + p).sin();
            }
            env * (-x * c - s)
        })
    };
    let first = component();
    let second = component();
    DensityPair::new(first, second).expect("same grid")
}

/// Removes the first-component moment `∫f'β₁` with the profile `(e^{-ξ²})'`.
///
/// Along with zero means, this makes `𝔻(f)[β]` decay faster than `1/ξ`.
pub fn remove_slope_moment(f: &GridFunction, beta: &DensityPair) -> DensityPair {
    let grid = f.grid();
    let fp = f.d1();
    let phi = grid.sample(|x| -2.0 * x * (-x * x).exp());
    let denom = fp.dot(&phi);
    if denom.abs() < 1e-12 {
        return beta.clone();
    }
    let c = fp.dot(&beta.first) / denom;
    DensityPair::new(&beta.first - &phi.scale(c), beta.second.clone()).expect("same grid")
}

/// Verification density for the profile `f`.
pub fn test_density(f: &GridFunction, seed: u64) -> DensityPair {
    remove_slope_moment(f, &random_density(f.grid(), seed))
}

/// `(𝔻(f)[β])' + 𝔻(f)*[β']`.
pub fn residual_comder(geom: &InterfaceGeometry, beta: &DensityPair) -> IdentityReport {
    let lhs = geom.apply_d(beta).derivative();
    let rhs = geom.apply_dstar(&beta.derivative());
    IdentityReport::pointwise("comder", &(&lhs + &rhs), beta.h1_norm())
}

/// `𝕍(f)𝔻(f)[β] + 𝔻(f)𝕍(f)[β]`.
pub fn residual_anticommute(geom: &InterfaceGeometry, beta: &DensityPair) -> IdentityReport {
    let vd = geom.apply_v(&geom.apply_d(beta));
    let dv = geom.apply_d(&geom.apply_v(beta));
    IdentityReport::pointwise("anticommute", &(&vd + &dv), beta.l2_norm())
}

/// `ω T̃₁^±(f)[β] ν - (∓1/2 - 𝔻(f)*)[β]`.
pub fn residual_ffff(geom: &InterfaceGeometry, beta: &DensityPair, side: Side) -> IdentityReport {
    let traces = tilde_traces(geom, beta, side);
    let lhs = crate::potentials::matvec(&traces.stress(), &geom.nu).times(&geom.omega);
    let rhs = normal_stress_data(geom, beta, side);
    IdentityReport::pointwise(format!("ffff{side}"), &(&lhs - &rhs), beta.l2_norm())
}

fn normal_stress_data(geom: &InterfaceGeometry, beta: &DensityPair, side: Side) -> DensityPair {
    &beta.scale(-0.5 * side.sign()) - &geom.apply_dstar(beta)
}

/// `ωκν - g'`, measured in the maximum norm over all nodes.
pub fn residual_geometry(geom: &InterfaceGeometry) -> IdentityReport {
    let r = geom.curvature_residual();
    let reference = geom.g.derivative().max_abs();
    IdentityReport::new(
        "geometry",
        geom.grid(),
        r.max_abs(),
        reference,
        vec![r.first.values().to_vec(), r.second.values().to_vec()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rellich {
    R1,
    R2,
    R5,
}

impl Rellich {
    pub const ALL: [Rellich; 3] = [Rellich::R1, Rellich::R2, Rellich::R5];
}

fn frobenius2(m: &[[GridFunction; 2]; 2]) -> f64 {
    m.iter().flatten().map(|u| u.dot(u)).sum()
}

/// Both sides of a Rellich identity on the whole window.
pub fn rellich_sides(
    geom: &InterfaceGeometry,
    traces: &TildeTraces,
    beta: &DensityPair,
    which: Rellich,
    side: Side,
) -> (f64, f64) {
    let g = &traces.grad;
    let d2u = traces.d2u();
    let data = normal_stress_data(geom, beta, side);
    match which {
        Rellich::R1 => {
            let sym = [
                [&g[0][0] + &g[0][0], &g[0][1] + &g[1][0]],
                [&g[1][0] + &g[0][1], &g[1][1] + &g[1][1]],
            ];
            (frobenius2(&sym), 4.0 * d2u.dot(&data))
        }
        Rellich::R2 => {
            let m = [
                [&g[0][0] - &traces.pi, g[0][1].clone()],
                [g[1][0].clone(), &g[1][1] - &traces.pi],
            ];
            let mn = crate::potentials::matvec(&m, &geom.nu).times(&geom.omega);
            (frobenius2(g), 2.0 * d2u.dot(&mn))
        }
        Rellich::R5 => {
            let rot = &g[1][0] - &g[0][1];
            let pi = &traces.pi;
            let t = DensityPair::new(&data.first - &geom.fp().times(pi), &data.second + pi)
                .expect("same grid");
            (
                2.0 * (rot.dot(&t.first) + pi.dot(&t.second)),
                pi.dot(pi) - rot.dot(&rot),
            )
        }
    }
}

/// `|LHS - RHS|` of a Rellich identity relative to `|LHS| + |RHS|`.
pub fn residual_rellich(
    geom: &InterfaceGeometry,
    beta: &DensityPair,
    which: Rellich,
    side: Side,
) -> IdentityReport {
    let traces = tilde_traces(geom, beta, side);
    let (lhs, rhs) = rellich_sides(geom, &traces, beta, which, side);
    IdentityReport::new(
        format!("rellich{which:?}{side}"),
        geom.grid(),
        (lhs - rhs).abs(),
        lhs.abs() + rhs.abs(),
        vec![vec![lhs - rhs]],
    )
}

/// Derivative rule of `B⁰_{n,m}(f)[h]` with every slot filled by `f`.
pub fn residual_fder(
    jf: &Jet,
    h: &GridFunction,
    n: usize,
    m: usize,
) -> Result<IdentityReport, KernelError> {
    let jfp = Jet::spectral(&jf.d1);
    let jh = Jet::spectral(h);
    let jhp = Jet::spectral(&h.d1());
    let a: Vec<&Jet> = vec![jf; m];
    let b: Vec<&Jet> = vec![jf; n];
    let lhs = apply_bnm(&a, &b, &jh)?.d1();
    let mut rhs = apply_bnm(&a, &b, &jhp)?;
    if n > 0 {
        let mut bi = vec![jf; n - 1];
        bi.push(&jfp);
        rhs = &rhs + &apply_bnm(&a, &bi, &jh)?.scale(n as f64);
    }
    if m > 0 {
        let a2 = vec![jf; m + 1];
        let mut b2 = vec![jf; n];
        b2.push(&jfp);
        b2.push(jf);
        rhs = &rhs - &apply_bnm(&a2, &b2, &jh)?.scale(2.0 * m as f64);
    }
    let r = &lhs - &rhs;
    Ok(IdentityReport::new(
        format!("fder{n}{m}"),
        jf.grid(),
        scalar_interior_norm(&r),
        h.d1().l2_norm().max(h.l2_norm()),
        vec![r.values().to_vec()],
    ))
}

/// With `(1/2 + 𝔻(f))β = g`, the residual of `(1/2 - 𝔻(f)*)[β'] = g'`.
pub fn residual_solve_consistency(geom: &InterfaceGeometry) -> Result<IdentityReport, SolverError> {
    let (beta, _) = solve_density(geom, 0.5, 1.0, &geom.g)?;
    let alpha = beta.derivative();
    let lhs = &alpha.scale(0.5) - &geom.apply_dstar(&alpha);
    let gp = geom.g.derivative();
    Ok(IdentityReport::pointwise(
        "corollary",
        &(&lhs - &gp),
        interior_norm(&gp),
    ))
}

/// Reports of one identity along a grid-doubling ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementReport {
    pub identity_id: String,
    pub n: Vec<usize>,
    pub relative: Vec<f64>,
    /// Observed order of the relative residuals.
    pub residual_order: Option<f64>,
    /// Relative differences `r_N - r_{2N}` on the common interior nodes.
    pub gaps: Vec<f64>,
    /// Observed order of the gaps.
    pub gap_order: Option<f64>,
}

impl RefinementReport {
    /// The discretization error has reached roundoff on the ladder.
    pub fn at_roundoff(&self) -> bool {
        !self.gaps.is_empty() && self.gaps.iter().all(|g| *g <= ROUNDOFF_GAP)
    }

    /// Order at least `min_order`, or a discretization error already at roundoff.
    pub fn converges(&self, min_order: f64) -> bool {
        self.residual_order.is_some_and(|p| p >= min_order)
            || self.gap_order.is_some_and(|p| p >= min_order)
            || self.at_roundoff()
    }

    /// Residuals non-increasing along the ladder up to the roundoff gap.
    pub fn non_increasing(&self) -> bool {
        self.relative
            .windows(2)
            .all(|w| w[1] <= w[0] + ROUNDOFF_GAP)
    }
}

/// Observed order `-d log r / d log N` by least squares.
pub fn observed_order(n: &[usize], r: &[f64]) -> Option<f64> {
    let x: Vec<f64> = n.iter().map(|&k| k as f64).collect();
    crate::evolution::loglog_slope(&x, r).map(|s| -s)
}

fn gap(coarse: &IdentityReport, fine: &IdentityReport) -> f64 {
    let ratio = fine.grid.1 / coarse.grid.1;
    let l = coarse.grid.0;
    let n = coarse.grid.1;
    let h = 2.0 * l / n as f64;
    let mut sum = 0.0;
    for (c, fi) in coarse.samples.iter().zip(&fine.samples) {
        if c.len() == 1 {
            sum += (c[0] - fi[0]).powi(2);
            continue;
        }
        for j in 0..n {
            let x = -l + j as f64 * h;
            if x.abs() <= INTERIOR_FRACTION * l + 1e-12 {
                sum += h * (c[j] - fi[j * ratio]).powi(2);
            }
        }
    }
    let scale = coarse.reference_norm.max(fine.reference_norm);
    if scale > 0.0 {
        sum.sqrt() / scale
    } else {
        sum.sqrt()
    }
}

/// Evaluates `run` on `[-L, L)` with each `N` of the ladder.
pub fn refinement_ladder<F>(
    half_length: f64,
    ladder: &[usize],
    run: F,
) -> Result<RefinementReport, GridError>
where
    F: Fn(&Grid) -> IdentityReport + Sync,
{
    let grids = ladder
        .iter()
        .map(|&n| Grid::new(half_length, n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reports: Vec<IdentityReport> = grids.par_iter().map(&run).collect();
    let n: Vec<usize> = ladder.to_vec();
    let relative: Vec<f64> = reports.iter().map(|r| r.relative).collect();
    let residual_order = observed_order(&n, &relative);
    let gaps: Vec<f64> = reports.windows(2).map(|w| gap(&w[0], &w[1])).collect();
    let gap_order = if gaps.len() >= 2 {
        observed_order(&n[..gaps.len()], &gaps)
    } else {
        None
    };
    for r in &mut reports {
        r.refinement_order = residual_order;
    }
    Ok(RefinementReport {
        identity_id: reports
            .first()
            .map(|r| r.identity_id.clone())
            .unwrap_or_default(),
        n,
        relative,
        residual_order,
        gaps,
        gap_order,
    })
}

/// `σ_min(λ - 𝔻(f_c))` for the family `f_c = c·exp(-ξ²)`.
pub fn invertibility_family(grid: &Grid, cs: &[f64], lambda: f64) -> Vec<(f64, f64)> {
    cs.par_iter()
        .map(|&c| {
            let f = grid.sample(|x| c * (-x * x).exp());
            let report = invertibility_diagnostics(&geometry_of(&f), lambda, Which::D);
            (c, report.smallest_singular_value)
        })
        .collect()
}

/// Identity groups of the `verify` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Comder,
    Anticommute,
    Rellich,
    Fder,
    Ffff,
    Geometry,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "all" => Suite::All,
            "comder" => Suite::Comder,
            "anticommute" => Suite::Anticommute,
            "rellich" => Suite::Rellich,
            "fder" => Suite::Fder,
            "ffff" => Suite::Ffff,
            "geometry" => Suite::Geometry,
            other => return Err(format!("unknown suite '{other}'")),
        })
    }
}

/// Default relative bounds of the `verify` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bounds {
    pub comder: f64,
    pub anticommute: f64,
    pub rellich: f64,
    pub fder: f64,
    pub ffff: f64,
    pub geometry: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            comder: 2e-2,
            anticommute: 2e-2,
            rellich: 5e-2,
            fder: 1e-6,
            ffff: 1e-6,
            geometry: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteEntry {
    #[serde(flatten)]
    pub report: IdentityReport,
    pub bound: f64,
    pub passed: bool,
}

/// Runs the identities of `suite` for the profile `f` and density seed `seed`.
pub fn run_suite(suite: Suite, f: &GridFunction, seed: u64, bounds: &Bounds) -> Vec<SuiteEntry> {
    let geom = geometry_of(f);
    let geom = &geom;
    let beta = test_density(f, seed);
    let h = random_density(f.grid(), seed.wrapping_add(1)).first;
    type Job<'a> = Box<dyn Fn() -> (IdentityReport, f64) + Send + Sync + 'a>;
    let mut jobs: Vec<Job> = Vec::new();
    let want = |s: Suite| suite == Suite::All || suite == s;
    if want(Suite::Geometry) {
        jobs.push(Box::new(|| (residual_geometry(geom), bounds.geometry)));
    }
    if want(Suite::Comder) {
        jobs.push(Box::new(|| (residual_comder(geom, &beta), bounds.comder)));
    }
    if want(Suite::Anticommute) {
        jobs.push(Box::new(|| {
            (residual_anticommute(geom, &beta), bounds.anticommute)
        }));
    }
    if want(Suite::Ffff) {
        for side in Side::BOTH {
            let beta = &beta;
            jobs.push(Box::new(move || {
                (residual_ffff(geom, beta, side), bounds.ffff)
            }));
        }
    }
    if want(Suite::Rellich) {
        for which in Rellich::ALL {
            for side in Side::BOTH {
                let beta = &beta;
                jobs.push(Box::new(move || {
                    (residual_rellich(geom, beta, which, side), bounds.rellich)
                }));
            }
        }
    }
    if want(Suite::Fder) {
        for (n, m) in [(0, 0), (1, 0), (0, 1), (1, 2), (2, 1), (3, 3)] {
            let h = &h;
            jobs.push(Box::new(move || {
                (
                    residual_fder(&geom.jet, h, n, m).expect("grids agree"),
                    bounds.fder,
                )
            }));
        }
    }
    jobs.par_iter()
        .map(|job| {
            let (report, bound) = job();
            let passed = report.relative.is_finite() && report.relative <= bound;
            SuiteEntry {
                report,
                bound,
                passed,
            }
        })
        .collect()
}

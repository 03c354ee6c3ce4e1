//! Bulk velocity and pressure of the single-layer representation, and their
//! boundary traces.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{DensityPair, GridFunction};
use crate::kernels::{Jet, OperatorExpr, Term};
use crate::potentials::InterfaceGeometry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("the fundamental solution is singular at the origin")]
    Origin,
    #[error("near-boundary evaluation unreliable: distance {distance:.3e} below grid spacing {spacing:.3e}")]
    NearBoundary { distance: f64, spacing: f64 },
    #[error("viscosity must be positive, got {0}")]
    Viscosity(f64),
}

/// A point of the plane, off the interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkPoint {
    pub x1: f64,
    pub x2: f64,
}

impl BulkPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    fn shifted(self, d1: f64, d2: f64) -> Self {
        Self::new(self.x1 + d1, self.x2 + d2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldSample {
    pub velocity: [f64; 2],
    pub pressure: f64,
}

/// Stokeslet `(𝒰^k, 𝒫^k)` at `y` for the force direction `k ∈ {1, 2}`.
pub fn fundamental_solution(k: usize, y: [f64; 2], mu: f64) -> Result<([f64; 2], f64), FieldError> {
    assert!(k == 1 || k == 2, "force direction must be 1 or 2");
    let r2 = y[0] * y[0] + y[1] * y[1];
    if r2 == 0.0 {
        return Err(FieldError::Origin);
    }
    let c = -1.0 / (4.0 * PI * mu);
    let log_term = -0.5 * r2.ln();
    let yk = y[k - 1];
    let u = [
        c * ((k == 1) as u8 as f64 * log_term + y[0] * yk / r2),
        c * ((k == 2) as u8 as f64 * log_term + y[1] * yk / r2),
    ];
    let p = -yk / (2.0 * PI * r2);
    Ok((u, p))
}

/// Closed-form `∂_i 𝒰^k` and `∂_i 𝒫^k`, indexed `[i][k]`.
pub fn stokeslet_gradient(y: [f64; 2], mu: f64) -> ([[[f64; 2]; 2]; 2], [[f64; 2]; 2]) {
    let (y1, y2) = (y[0], y[1]);
    let r2 = y1 * y1 + y2 * y2;
    let r4 = r2 * r2;
    let cu = 1.0 / (4.0 * PI * mu * r4);
    let cp = 1.0 / (2.0 * PI * r4);
    let a = y1 * y1 - y2 * y2;
    let du = [
        [
            [cu * y1 * a, cu * y2 * a],
            [cu * y2 * a, cu * y1 * (y1 * y1 + 3.0 * y2 * y2)],
        ],
        [
            [cu * y2 * (y2 * y2 + 3.0 * y1 * y1), -cu * y1 * a],
            [-cu * y1 * a, -cu * y2 * a],
        ],
    ];
    let dp = [[cp * a, cp * 2.0 * y1 * y2], [cp * 2.0 * y1 * y2, -cp * a]];
    (du, dp)
}

/// Distance from `x` to the nearest interface node.
fn node_distance(geom: &InterfaceGeometry, x: BulkPoint) -> f64 {
    let grid = geom.grid();
    let heights = geom.jet.samples();
    let f = heights.values();
    (0..grid.len())
        .map(|j| {
            let d1 = x.x1 - grid.node(j);
            let d2 = x.x2 - f[j];
            d1 * d1 + d2 * d2
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Velocity and pressure of the single-layer potential with density `β`.
///
/// `v(x) = ∫ ∂_s[𝒰^k(x - (s, f(s)))] β_k(s) ds`, `p(x) = -∫ 𝒫^k(x - (s, f(s))) β_k'(s) ds`.
pub fn stokes_solution(
    geom: &InterfaceGeometry,
    beta: &DensityPair,
    x: BulkPoint,
    mu: f64,
) -> Result<FieldSample, FieldError> {
    let dbeta = beta.derivative();
    evaluate(geom, beta, &dbeta, x, mu)
}

fn evaluate(
    geom: &InterfaceGeometry,
    beta: &DensityPair,
    dbeta: &DensityPair,
    x: BulkPoint,
    mu: f64,
) -> Result<FieldSample, FieldError> {
    if !(mu > 0.0) {
        return Err(FieldError::Viscosity(mu));
    }
    let grid = geom.grid();
    let h = grid.spacing();
    let distance = node_distance(geom, x);
    if distance < h {
        return Err(FieldError::NearBoundary {
            distance,
            spacing: h,
        });
    }
    let heights = geom.jet.samples();
    let f = heights.values();
    let fp = geom.fp().values();
    let b = [beta.first.values(), beta.second.values()];
    let db = [dbeta.first.values(), dbeta.second.values()];
    let mut v = [0.0; 2];
    let mut p = 0.0;
    for j in 0..grid.len() {
        let y = [x.x1 - grid.node(j), x.x2 - f[j]];
        let (du, _) = stokeslet_gradient(y, mu);
        for k in 0..2 {
            for i in 0..2 {
                v[i] += h * (-du[0][k][i] - fp[j] * du[1][k][i]) * b[k][j];
            }
            let (_, pk) = fundamental_solution(k + 1, y, mu)?;
            p -= h * pk * db[k][j];
        }
    }
    Ok(FieldSample {
        velocity: v,
        pressure: p,
    })
}

/// Evaluates many points in parallel; each entry carries its own error.
pub fn sample_fields(
    geom: &InterfaceGeometry,
    beta: &DensityPair,
    points: &[BulkPoint],
    mu: f64,
) -> Vec<Result<FieldSample, FieldError>> {
    let dbeta = beta.derivative();
    points
        .par_iter()
        .map(|&x| evaluate(geom, beta, &dbeta, x, mu))
        .collect()
}

/// Centered finite-difference residual `max(|μΔv - ∇p|, |div v|)` at `x`.
pub fn interior_stokes_residual(
    geom: &InterfaceGeometry,
    beta: &DensityPair,
    x: BulkPoint,
    mu: f64,
    step: f64,
) -> Result<f64, FieldError> {
    let dbeta = beta.derivative();
    let at = |d1: f64, d2: f64| evaluate(geom, beta, &dbeta, x.shifted(d1, d2), mu);
    let c = at(0.0, 0.0)?;
    let e = at(step, 0.0)?;
    let w = at(-step, 0.0)?;
    let n = at(0.0, step)?;
    let s = at(0.0, -step)?;
    let h2 = step * step;
    let mut momentum: f64 = 0.0;
    for i in 0..2 {
        let lap = (e.velocity[i] + w.velocity[i] + n.velocity[i] + s.velocity[i]
            - 4.0 * c.velocity[i])
            / h2;
        let grad_p = if i == 0 {
            (e.pressure - w.pressure) / (2.0 * step)
        } else {
            (n.pressure - s.pressure) / (2.0 * step)
        };
        momentum = momentum.max((mu * lap - grad_p).abs());
    }
    let div = (e.velocity[0] - w.velocity[0] + n.velocity[1] - s.velocity[1]) / (2.0 * step);
    Ok(momentum.max(div.abs()))
}

/// Boundary traces of the one-phase fields, taken from inside the fluid.
#[derive(Debug, Clone)]
pub struct Traces {
    pub velocity: DensityPair,
    pub pressure: GridFunction,
    pub d1v1: GridFunction,
    pub d2v1: GridFunction,
    pub d1v2: GridFunction,
}

impl Traces {
    /// `T_μ(v, p)ν = -pν + μ(∇v + ∇vᵀ)ν`.
    pub fn normal_stress(&self, geom: &InterfaceGeometry, mu: f64) -> DensityPair {
        let (n1, n2) = (&geom.nu.first, &geom.nu.second);
        let s11 = self.d1v1.scale(2.0 * mu);
        let s22 = self.d1v1.scale(-2.0 * mu);
        let s12 = (&self.d2v1 + &self.d1v2).scale(mu);
        let t1 = &(&s11.times(n1) + &s12.times(n2)) - &self.pressure.times(n1);
        let t2 = &(&s12.times(n1) + &s22.times(n2)) - &self.pressure.times(n2);
        DensityPair::from_parts(t1, t2)
    }
}

fn bnm2(jet: &Jet, terms: &[(f64, u32, &GridFunction)]) -> GridFunction {
    let mut e = OperatorExpr::new(jet, 1, 3, "trace");
    // Inputs are packed as columns so one pass serves every term.
    let mut inputs: Vec<&GridFunction> = Vec::new();
    for &(coef, n, x) in terms {
        let col = match inputs.iter().position(|y| std::ptr::eq(*y, x)) {
            Some(c) => c,
            None => {
                inputs.push(x);
                inputs.len() - 1
            }
        };
        assert!(col < 3, "too many distinct inputs");
        e.push(Term::new(coef, n, 2).at(0, col));
    }
    let zero = jet.grid().zeros();
    while inputs.len() < 3 {
        inputs.push(&zero);
    }
    e.apply(&inputs).pop().unwrap()
}

/// Velocity trace by the explicit `B⁰_{n,2}` formula; equals `𝕍(f)[β]/μ`.
pub fn velocity_trace(geom: &InterfaceGeometry, beta: &DensityPair, mu: f64) -> DensityPair {
    let fp = geom.fp();
    let (b1, b2) = (&beta.first, &beta.second);
    let a = b1 - &fp.times(b2);
    let b = &fp.times(b1).scale(3.0) + b2;
    let c = &fp.times(b1) - b2;
    let d = &fp.times(b1) + &b2.scale(3.0);
    let v1 = bnm2(
        &geom.jet,
        &[(1.0, 2, &a), (-1.0, 0, &a), (-1.0, 1, &b), (-1.0, 3, &c)],
    );
    let v2 = bnm2(
        &geom.jet,
        &[(1.0, 0, &c), (1.0, 3, &a), (-1.0, 1, &a), (-1.0, 2, &d)],
    );
    DensityPair::from_parts(v1.scale(0.25 / mu), v2.scale(0.25 / mu))
}

/// Pressure, velocity and velocity-gradient traces from the density `β`.
pub fn trace_formulas(geom: &InterfaceGeometry, beta: &DensityPair, mu: f64) -> Traces {
    let db = beta.derivative();
    let (p1, p2) = (&db.first, &db.second);
    let pressure_pv = OperatorExpr::new(&geom.jet, 1, 2, "pressure")
        .with(Term::new(0.5, 0, 1).at(0, 0))
        .with(Term::new(0.5, 1, 1).at(0, 1))
        .apply(&[p1, p2])
        .pop()
        .unwrap();
    let w = &geom.omega;
    let bn = db.pointwise_dot(&geom.nu).zip_map(w, |a, w| a / (2.0 * w));
    let pressure = &pressure_pv - &bn;
    let jump = db
        .pointwise_dot(&geom.tau)
        .zip_map(w, |a, w| a / (2.0 * mu * w * w * w));
    let fp = geom.fp();
    let c = -0.25 / mu;
    let d1v1 = &bnm2(
        &geom.jet,
        &[(c, 0, p1), (-c, 2, p1), (c, 1, p2), (-c, 3, p2)],
    ) - &fp.times(&jump);
    let d2v1 = &bnm2(
        &geom.jet,
        &[(c, 3, p1), (3.0 * c, 1, p1), (c, 2, p2), (-c, 0, p2)],
    ) + &jump;
    let d1v2 = &bnm2(
        &geom.jet,
        &[(c, 1, p1), (-c, 3, p1), (c, 0, p2), (3.0 * c, 2, p2)],
    ) - &fp.times(fp).times(&jump);
    Traces {
        velocity: velocity_trace(geom, beta, mu),
        pressure,
        d1v1,
        d2v1,
        d1v2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::potentials::geometry_of;

    #[test]
    fn stokeslet_examples() {
        let c = 1.0 / (4.0 * PI);
        let (u, p) = fundamental_solution(1, [1.0, 0.0], 1.0).unwrap();
        assert!((u[0] + c).abs() < 1e-15 && u[1].abs() < 1e-15);
        assert!((p + 1.0 / (2.0 * PI)).abs() < 1e-15);
        let (u, p) = fundamental_solution(2, [0.0, 1.0], 1.0).unwrap();
        assert!(u[0].abs() < 1e-15 && (u[1] + c).abs() < 1e-15);
        assert!((p + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(
            fundamental_solution(1, [0.0, 0.0], 1.0).unwrap_err(),
            FieldError::Origin
        );
    }

    #[test]
    fn stokeslet_solves_stokes() {
        let y = [0.7, -0.4];
        let h = 1e-4;
        for mu in [1.0, 2.5] {
            for k in 1..=2 {
                let at =
                    |d1: f64, d2: f64| fundamental_solution(k, [y[0] + d1, y[1] + d2], mu).unwrap();
                let (c, _) = at(0.0, 0.0);
                let (e, pe) = at(h, 0.0);
                let (w, pw) = at(-h, 0.0);
                let (n, pn) = at(0.0, h);
                let (s, ps) = at(0.0, -h);
                for i in 0..2 {
                    let lap = (e[i] + w[i] + n[i] + s[i] - 4.0 * c[i]) / (h * h);
                    let gp = if i == 0 {
                        (pe - pw) / (2.0 * h)
                    } else {
                        (pn - ps) / (2.0 * h)
                    };
                    assert!((mu * lap - gp).abs() <= 1e-6, "{}", (mu * lap - gp).abs());
                }
                let div = (e[0] - w[0] + n[1] - s[1]) / (2.0 * h);
                assert!(div.abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn closed_form_gradient_matches_differences() {
        let y = [0.3, 0.8];
        let h = 1e-6;
        let (du, dp) = stokeslet_gradient(y, 1.3);
        for k in 1..=2 {
            for i in 0..2 {
                let mut yp = y;
                let mut ym = y;
                yp[i] += h;
                ym[i] -= h;
                let (up, pp) = fundamental_solution(k, yp, 1.3).unwrap();
                let (um, pm) = fundamental_solution(k, ym, 1.3).unwrap();
                for comp in 0..2 {
                    let fd = (up[comp] - um[comp]) / (2.0 * h);
                    assert!((fd - du[i][k - 1][comp]).abs() < 1e-8);
                }
                assert!(((pp - pm) / (2.0 * h) - dp[i][k - 1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_density_zero_fields() {
        let g = make_grid(8.0, 64).unwrap();
        let geom = geometry_of(&g.sample(|x| 0.3 * (-x * x).exp()));
        let beta = DensityPair::zeros(&g);
        let s = stokes_solution(&geom, &beta, BulkPoint::new(0.0, -2.0), 1.0).unwrap();
        assert_eq!(s, FieldSample::default());
        let r =
            interior_stokes_residual(&geom, &beta, BulkPoint::new(0.0, -2.0), 1.0, 1e-3).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rejects_points_on_interface() {
        let g = make_grid(8.0, 64).unwrap();
        let geom = geometry_of(&g.zeros());
        let beta = DensityPair::zeros(&g);
        let err = stokes_solution(&geom, &beta, BulkPoint::new(0.0, 0.0), 1.0).unwrap_err();
        assert!(matches!(err, FieldError::NearBoundary { .. }));
    }

    #[test]
    fn explicit_velocity_trace_equals_v_operator() {
        let g = make_grid(8.0, 128).unwrap();
        let geom = geometry_of(&g.sample(|x| 0.3 * (-x * x).exp()));
        let beta = DensityPair::new(
            g.sample(|x| (-(x - 0.3) * (x - 0.3)).exp()),
            g.sample(|x| x * (-x * x).exp()),
        )
        .unwrap();
        let mu = 1.7;
        let a = velocity_trace(&geom, &beta, mu);
        let b = geom.apply_v(&beta).scale(1.0 / mu);
        assert!((&a - &b).max_abs() <= 1e-12);
    }
}

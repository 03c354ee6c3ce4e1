//! Dense solves of `(λ + a·𝔻(f)) β = rhs` and invertibility diagnostics.

use std::time::{Duration, Instant};

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{DensityPair, Grid};
use crate::kernels::BlockOperator;
use crate::potentials::{assemble_d, assemble_dstar, InterfaceGeometry};

/// Condition estimate above which a system counts as numerically singular.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e12;

/// Full SVD is only used up to this many unknowns.
pub const SVD_CROSS_CHECK_MAX: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("near-singular operator: condition estimate {condition:.3e}")]
    NearSingular { condition: f64 },
    #[error("right-hand side lives on a different grid")]
    GridMismatch,
    #[error("non-finite entries in the solution")]
    NonFinite,
}

/// Outcome of a solve or spectral probe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// `‖Aβ - rhs‖₂ / ‖rhs‖₂` after refinement, zero for spectral probes.
    pub residual_norm: f64,
    /// 1-norm condition estimate of the system matrix.
    pub condition_estimate: f64,
    pub smallest_singular_value: f64,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Which of the two operators a diagnostic is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    D,
    Dstar,
}

/// A factorized dense system `λ·Id + a·K`.
pub struct DenseSystem {
    matrix: Mat<f64>,
    lu: PartialPivLu<f64>,
    grid: Grid,
}

impl DenseSystem {
    pub fn new(op: &BlockOperator, lambda: f64, a: f64) -> Self {
        let n2 = 2 * op.grid().len();
        let dense = op.to_dense();
        let matrix = Mat::from_fn(n2, n2, |i, j| {
            let v = a * dense[i * n2 + j];
            if i == j {
                v + lambda
            } else {
                v
            }
        });
        let lu = matrix.partial_piv_lu();
        Self {
            matrix,
            lu,
            grid: *op.grid(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let xm = Mat::from_fn(x.len(), 1, |i, _| x[i]);
        let y = &self.matrix * &xm;
        (0..x.len()).map(|i| y[(i, 0)]).collect()
    }

    fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu.solve_in_place(&mut x);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    fn solve_transpose_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(&mut x);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves with one step of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let mut x = self.solve_vec(rhs);
        let r: Vec<f64> = self
            .matvec(&x)
            .iter()
            .zip(rhs)
            .map(|(ax, b)| b - ax)
            .collect();
        let dx = self.solve_vec(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        let res = norm(
            &self
                .matvec(&x)
                .iter()
                .zip(rhs)
                .map(|(ax, b)| ax - b)
                .collect::<Vec<_>>(),
        );
        let scale = norm(rhs);
        (x, if scale > 0.0 { res / scale } else { res })
    }

    pub fn norm1(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|j| (0..n).map(|i| self.matrix[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Hager's estimate of `‖A⁻¹‖₁`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.dim();
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
            let xi: Vec<f64> = y
                .iter()
                .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            let z = self.solve_transpose_vec(&xi);
            let (jmax, zmax) =
                z.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, &v)| {
                        if v.abs() > bv {
                            (j, v.abs())
                        } else {
                            (bj, bv)
                        }
                    });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            est = y_norm;
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        est
    }

    pub fn condition_estimate(&self) -> f64 {
        self.norm1() * self.inverse_norm1_estimate()
    }

    /// Smallest singular value by inverse iteration on `AᵀA`.
    pub fn smallest_singular_value(&self) -> f64 {
        let n = self.dim();
        // Deterministic, non-symmetric start so no symmetry class is missed.
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0)
            .collect();
        normalize(&mut x);
        let mut sigma = f64::INFINITY;
        for _ in 0..200 {
            let y = self.solve_transpose_vec(&x);
            let mut z = self.solve_vec(&y);
            normalize(&mut z);
            let az = self.matvec(&z);
            let next = norm(&az);
            x = z;
            if (sigma - next).abs() <= 1e-12 * next {
                sigma = next;
                break;
            }
            sigma = next;
        }
        sigma
    }

    /// All singular values via a full SVD, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        self.matrix.singular_values().expect("SVD did not converge")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    for a in v.iter_mut() {
        *a /= n;
    }
}

/// Solves `(λ·Id + a·𝔻(f)) β = rhs`.
pub fn solve_density(
    geom: &InterfaceGeometry,
    lambda: f64,
    a: f64,
    rhs: &DensityPair,
) -> Result<(DensityPair, SolverReport), SolverError> {
    if rhs.grid() != geom.grid() {
        return Err(SolverError::GridMismatch);
    }
    let start = Instant::now();
    if a == 0.0 {
        let beta = rhs.scale(1.0 / lambda);
        let report = SolverReport {
            residual_norm: 0.0,
            condition_estimate: 1.0,
            smallest_singular_value: lambda.abs(),
            elapsed: start.elapsed(),
        };
        return Ok((beta, report));
    }
    let system = DenseSystem::new(&assemble_d(geom), lambda, a);
    solve_with(&system, rhs, start)
}

/// Solves with an already factorized system.
pub fn solve_with(
    system: &DenseSystem,
    rhs: &DensityPair,
    start: Instant,
) -> Result<(DensityPair, SolverReport), SolverError> {
    let condition = system.condition_estimate();
    if !condition.is_finite() || condition > NEAR_SINGULAR_CONDITION {
        return Err(SolverError::NearSingular { condition });
    }
    let (x, residual) = system.solve(&rhs.to_stacked());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    let beta = DensityPair::from_stacked(system.grid(), &x);
    Ok((
        beta,
        SolverReport {
            residual_norm: residual,
            condition_estimate: condition,
            smallest_singular_value: f64::NAN,
            elapsed: start.elapsed(),
        },
    ))
}

/// Smallest singular value and condition estimate of `λ - 𝔻(f)` or `λ - 𝔻(f)*`.
pub fn invertibility_diagnostics(
    geom: &InterfaceGeometry,
    lambda: f64,
    which: Which,
) -> SolverReport {
    let start = Instant::now();
    let op = match which {
        Which::D => assemble_d(geom),
        Which::Dstar => assemble_dstar(geom),
    };
    let system = DenseSystem::new(&op, lambda, -1.0);
    SolverReport {
        residual_norm: 0.0,
        condition_estimate: system.condition_estimate(),
        smallest_singular_value: system.smallest_singular_value(),
        elapsed: start.elapsed(),
    }
}

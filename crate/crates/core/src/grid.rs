//! Uniform truncated-line grids, sampled functions and their spectral calculus.
//!
//! A [`Grid`] discretizes `[-L, L)` with `N` equispaced nodes. Functions are
//! treated as periodic on that window whenever a transform is involved, so the
//! sampled data is expected to be negligible near both ends.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("odd node count {0}: the grid needs an even number of nodes")]
    OddNodeCount(usize),
    #[error("node count {0} is below the minimum of 8")]
    TooFewNodes(usize),
    #[error("half length must be positive and finite, got {0}")]
    NonPositiveHalfLength(f64),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at node {0}")]
    NonFinite(usize),
    #[error("functions live on different grids")]
    GridMismatch,
    #[error("unsupported derivative order {0}")]
    UnsupportedOrder(usize),
}

/// Uniform grid on `[-L, L)` with nodes `-L + j h`, `h = 2L / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_length: f64,
    n: usize,
}

impl Grid {
    pub fn new(half_length: f64, n: usize) -> Result<Self, GridError> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(GridError::NonPositiveHalfLength(half_length));
        }
        if n % 2 == 1 {
            return Err(GridError::OddNodeCount(n));
        }
        if n < 8 {
            return Err(GridError::TooFewNodes(n));
        }
        Ok(Self { half_length, n })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Angular wavenumber of FFT bin `m` (standard FFT ordering).
    pub fn wavenumber(&self, m: usize) -> f64 {
        let signed = if m < self.n / 2 {
            m as f64
        } else {
            m as f64 - self.n as f64
        };
        PI / self.half_length * signed
    }

    /// Index of the node at offset `-k` from node `j`, wrapped periodically.
    #[inline]
    pub fn wrap(&self, j: usize, k: isize) -> usize {
        let n = self.n as isize;
        (((j as isize - k) % n + n) % n) as usize
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: *self,
            values: (0..self.n).map(|j| f(self.node(j))).collect(),
        }
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction {
            grid: *self,
            values: vec![0.0; self.n],
        }
    }

    /// Indices of the nodes with `|ξ| <= fraction * L`.
    pub fn interior(&self, fraction: f64) -> impl Iterator<Item = usize> + '_ {
        let bound = fraction * self.half_length + 1e-12;
        (0..self.n).filter(move |&j| self.node(j).abs() <= bound)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[-{}, {}) x {}",
            self.half_length, self.half_length, self.n
        )
    }
}

/// Constructs a [`Grid`]; see [`Grid::new`].
pub fn make_grid(half_length: f64, n: usize) -> Result<Grid, GridError> {
    Grid::new(half_length, n)
}

/// Real samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(j));
        }
        Ok(Self { grid, values })
    }

    /// Wraps values produced by trusted arithmetic on `grid`.
    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|&v| op(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self::from_vec(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        )
    }

    /// Pointwise product.
    pub fn times(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| factor * v)
    }

    /// Quadrature inner product `h Σ u_j v_j`.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.grid.spacing()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Discrete `L₂` norm `sqrt(h Σ u_j²)`.
    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|u_j|` over the nodes with `|ξ_j| <= fraction * L`.
    pub fn max_abs_interior(&self, fraction: f64) -> f64 {
        self.grid
            .interior(fraction)
            .fold(0.0_f64, |m, j| m.max(self.values[j].abs()))
    }

    pub fn derivative(&self, order: usize) -> Result<Self, GridError> {
        derivative(self, order)
    }

    /// First spectral derivative.
    pub fn d1(&self) -> Self {
        spectral_derivative(self, 1)
    }

    pub fn hilbert(&self) -> Self {
        hilbert_transform(self)
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm(self, s)
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: Self) -> GridFunction {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: Self) -> GridFunction {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        self.scale(rhs)
    }
}

impl Neg for &GridFunction {
    type Output = GridFunction;
    fn neg(self) -> GridFunction {
        self.scale(-1.0)
    }
}

/// A two-component field sampled on one grid (densities, normals, traces).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub first: GridFunction,
    pub second: GridFunction,
}

impl DensityPair {
    pub fn new(first: GridFunction, second: GridFunction) -> Result<Self, GridError> {
        if first.grid() != second.grid() {
            return Err(GridError::GridMismatch);
        }
        Ok(Self { first, second })
    }

    pub(crate) fn from_parts(first: GridFunction, second: GridFunction) -> Self {
        debug_assert_eq!(first.grid(), second.grid());
        Self { first, second }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::from_parts(grid.zeros(), grid.zeros())
    }

    pub fn grid(&self) -> &Grid {
        self.first.grid()
    }

    pub fn component(&self, i: usize) -> &GridFunction {
        match i {
            0 => &self.first,
            1 => &self.second,
            _ => panic!("component index {i} out of range"),
        }
    }

    pub fn map(&self, op: impl Fn(&GridFunction) -> GridFunction) -> Self {
        Self::from_parts(op(&self.first), op(&self.second))
    }

    pub fn zip_map(
        &self,
        other: &Self,
        op: impl Fn(&GridFunction, &GridFunction) -> GridFunction,
    ) -> Self {
        Self::from_parts(
            op(&self.first, &other.first),
            op(&self.second, &other.second),
        )
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|c| c.scale(factor))
    }

    /// Multiplies both components by a scalar field.
    pub fn times(&self, weight: &GridFunction) -> Self {
        self.map(|c| c.times(weight))
    }

    /// Pointwise Euclidean product `β·γ`.
    pub fn pointwise_dot(&self, other: &Self) -> GridFunction {
        &self.first.times(&other.first) + &self.second.times(&other.second)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.first.dot(&other.first) + self.second.dot(&other.second)
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.first.max_abs().max(self.second.max_abs())
    }

    pub fn derivative(&self) -> Self {
        self.map(GridFunction::d1)
    }

    /// Discrete `H¹` norm, the square root of `‖β‖² + ‖β′‖²`.
    pub fn h1_norm(&self) -> f64 {
        let d = self.derivative();
        (self.dot(self) + d.dot(&d)).sqrt()
    }

    /// Concatenates the components into one vector of length `2N`.
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.first.len());
        out.extend_from_slice(self.first.values());
        out.extend_from_slice(self.second.values());
        out
    }

    pub fn from_stacked(grid: &Grid, stacked: &[f64]) -> Self {
        let n = grid.len();
        assert_eq!(stacked.len(), 2 * n, "stacked length mismatch");
        Self::from_parts(
            GridFunction::from_vec(*grid, stacked[..n].to_vec()),
            GridFunction::from_vec(*grid, stacked[n..].to_vec()),
        )
    }
}

impl Add for &DensityPair {
    type Output = DensityPair;
    fn add(self, rhs: Self) -> DensityPair {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &DensityPair {
    type Output = DensityPair;
    fn sub(self, rhs: Self) -> DensityPair {
        self.zip_map(rhs, |a, b| a - b)
    }
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry(n)
            .or_insert_with(|| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .clone()
    })
}

/// Forward DFT of the samples, `Σ_j u_j e^{-2πi jm/N}`.
pub(crate) fn dft(values: &[f64]) -> Vec<Complex64> {
    let (forward, _) = plans(values.len());
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut buf);
    buf
}

/// Applies a Fourier multiplier (indexed by FFT bin) and returns the real part.
fn apply_multiplier(u: &GridFunction, symbol: impl Fn(usize) -> Complex64) -> GridFunction {
    let n = u.len();
    let (_, inverse) = plans(n);
    let mut buf = dft(u.values());
    for (m, c) in buf.iter_mut().enumerate() {
        *c *= symbol(m);
    }
    inverse.process(&mut buf);
    let scale = 1.0 / n as f64;
    GridFunction::from_vec(*u.grid(), buf.iter().map(|c| c.re * scale).collect())
}

pub(crate) fn spectral_derivative(u: &GridFunction, order: usize) -> GridFunction {
    let grid = *u.grid();
    let nyquist = grid.len() / 2;
    apply_multiplier(u, |m| {
        if m == nyquist && order % 2 == 1 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, grid.wavenumber(m)).powu(order as u32)
    })
}

/// Spectral derivative of the periodic extension of `u`.
///
/// Orders 1 through 4 are supported. Odd orders drop the Nyquist bin so that
/// real data stays real.
pub fn derivative(u: &GridFunction, order: usize) -> Result<GridFunction, GridError> {
    if !(1..=4).contains(&order) {
        return Err(GridError::UnsupportedOrder(order));
    }
    Ok(spectral_derivative(u, order))
}

/// Hilbert transform `(1/π) PV ∫ u(s)/(ξ - s) ds` via the multiplier `-i sgn(k)`.
pub fn hilbert_transform(u: &GridFunction) -> GridFunction {
    let grid = *u.grid();
    let nyquist = grid.len() / 2;
    apply_multiplier(u, |m| {
        if m == 0 || m == nyquist {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -grid.wavenumber(m).signum())
        }
    })
}

/// Discrete proxy of the `H^s(ℝ)` norm.
///
/// Uses the unitary continuous-transform approximation
/// `û(k_m) = h/√(2π) Σ_j u_j e^{-i k_m ξ_j}` and sums
/// `(1 + k²)^s |û|² Δk` with `Δk = π/L`, so `s = 0` reproduces `sqrt(h Σ u_j²)`.
///
/// # Panics
/// If `s` lies outside `[0, 3]`.
pub fn sobolev_norm(u: &GridFunction, s: f64) -> f64 {
    assert!((0.0..=3.0).contains(&s), "Sobolev index {s} outside [0, 3]");
    let grid = u.grid();
    let h = grid.spacing();
    let dk = PI / grid.half_length();
    let coeffs = dft(u.values());
    let norm2 = (h * h / (2.0 * PI))
        * coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let k = grid.wavenumber(m);
                (1.0 + k * k).powf(s) * c.norm_sqr()
            })
            .sum::<f64>();
    (norm2 * dk).sqrt()
}

/// Fraction of the spectral energy carried by the upper half of the resolved
/// wavenumbers. Small values indicate a well-resolved, smooth profile.
pub fn spectral_tail_fraction(u: &GridFunction) -> f64 {
    let grid = u.grid();
    let kmax = PI / grid.spacing();
    let coeffs = dft(u.values());
    let (mut tail, mut total) = (0.0, 0.0);
    for (m, c) in coeffs.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        if grid.wavenumber(m).abs() >= 0.5 * kmax {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Entries of the spectral differentiation matrix by offset `(j - l) mod N`,
/// consistent with [`derivative`] of order 1:
/// `D_{jl} = (π/L) · ½ (-1)^{j-l} cot(π (j-l)/N)`.
pub(crate) fn differentiation_offsets(grid: &Grid) -> Vec<f64> {
    let n = grid.len();
    let scale = PI / grid.half_length();
    (0..n)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
                0.5 * scale * sign / (PI * d as f64 / n as f64).tan()
            }
        })
        .collect()
}

/// Dense row-major spectral differentiation matrix.
#[cfg(test)]
pub(crate) fn differentiation_matrix(grid: &Grid) -> Vec<f64> {
    let n = grid.len();
    let by_offset = differentiation_offsets(grid);
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for l in 0..n {
            out[j * n + l] = by_offset[(j + n - l) % n];
        }
    }
    out
}

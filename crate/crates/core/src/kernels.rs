//! Principal-value quadrature for the difference-quotient operator family
//!
//! ```text
//! B_{n,m}(a₁..a_m)[b₁..b_n, h](ξ) = (1/π) PV ∫ h(ξ-η)/η · Π(δb_i/η) / Π(1 + (δa_i/η)²) dη
//! ```
//!
//! with `δu = u(ξ) - u(ξ-η)`. The rule is the periodic trapezoid over
//! `η = k h`, `0 < |k| <= N/2`, with the end node shared between `±L`, plus the
//! removable diagonal term `(h/π) F'(0)` where `F(η)` is the integrand times `η`.
//! The pairing of `±η` cancels the odd singular part; the diagonal term
//! restores the `η = 0` sample of the regularized integrand, which turns the
//! rule spectrally accurate for smooth data.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{differentiation_offsets, spectral_derivative, Grid, GridError, GridFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("operator expression has no terms")]
    Empty,
}

/// A sampled function together with its first two derivatives.
///
/// Difference quotients need `u'` and `u''` on the diagonal. They are spectral
/// by default but may be supplied analytically, e.g. for affine data whose
/// periodic extension is not smooth.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: GridFunction,
    pub d1: GridFunction,
    pub d2: GridFunction,
    /// Linear part `a` of a profile `aξ + value(ξ)`; `d1` includes it.
    pub trend: f64,
}

impl Jet {
    pub fn spectral(value: &GridFunction) -> Self {
        Self {
            d1: spectral_derivative(value, 1),
            d2: spectral_derivative(value, 2),
            value: value.clone(),
            trend: 0.0,
        }
    }

    pub fn with_derivatives(
        value: GridFunction,
        d1: GridFunction,
        d2: GridFunction,
    ) -> Result<Self, GridError> {
        if value.grid() != d1.grid() || value.grid() != d2.grid() {
            return Err(GridError::GridMismatch);
        }
        Ok(Self {
            value,
            d1,
            d2,
            trend: 0.0,
        })
    }

    /// The affine profile `aξ + b`, whose difference quotients are exactly `a`.
    pub fn affine(grid: &Grid, a: f64, b: f64) -> Self {
        Self {
            value: grid.sample(|_| b),
            d1: grid.sample(|_| a),
            d2: grid.zeros(),
            trend: a,
        }
    }

    /// `(u(ξ_j) - u(ξ_j - η)) / η` for the node `l` at offset `η`.
    #[inline]
    fn quotient(&self, j: usize, l: usize, eta: f64) -> f64 {
        let v = self.value.values();
        (v[j] - v[l]) / eta + self.trend
    }

    /// Samples of the full profile, trend included.
    pub fn samples(&self) -> GridFunction {
        let grid = *self.grid();
        let a = self.trend;
        self.value.zip_map(&grid.sample(|x| a * x), |v, t| v + t)
    }

    pub fn grid(&self) -> &Grid {
        self.value.grid()
    }
}

/// Quadrature weight of the offset `k` (in grid steps, `1 <= k <= N/2`).
#[inline]
fn offset_weight(grid: &Grid, k: usize) -> f64 {
    if k == grid.len() / 2 {
        0.5 * grid.spacing()
    } else {
        grid.spacing()
    }
}

/// Evaluates `B_{n,m}(a)[b, h]` at every node.
pub fn apply_bnm(a: &[&Jet], b: &[&Jet], h: &Jet) -> Result<GridFunction, KernelError> {
    let grid = *h.grid();
    if a.iter().chain(b).any(|u| u.grid() != &grid) {
        return Err(GridError::GridMismatch.into());
    }
    let n = grid.len();
    let dx = grid.spacing();
    let hv = h.value.values();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for k in 1..=n / 2 {
                let w = offset_weight(&grid, k);
                for sign in [1isize, -1] {
                    let kk = sign * k as isize;
                    let l = grid.wrap(j, kk);
                    let eta = kk as f64 * dx;
                    let mut num = 1.0;
                    for bi in b {
                        num *= bi.quotient(j, l, eta);
                    }
                    let mut den = 1.0;
                    for ai in a {
                        let q = ai.quotient(j, l, eta);
                        den *= 1.0 + q * q;
                    }
                    acc += w * hv[l] / eta * num / den;
                }
            }
            // Diagonal term (h/π) F'(0) with F(η) = h(ξ-η) P(η) / Q(η).
            let bp: Vec<f64> = b.iter().map(|u| u.d1.values()[j]).collect();
            let bpp: Vec<f64> = b.iter().map(|u| u.d2.values()[j]).collect();
            let p0: f64 = bp.iter().product();
            let mut dp = 0.0;
            for i in 0..b.len() {
                let others: f64 = (0..b.len()).filter(|&q| q != i).map(|q| bp[q]).product();
                dp += -0.5 * bpp[i] * others;
            }
            let mut q0 = 1.0;
            let mut dq_over_q = 0.0;
            for ai in a {
                let (a1, a2) = (ai.d1.values()[j], ai.d2.values()[j]);
                q0 *= 1.0 + a1 * a1;
                dq_over_q += -a1 * a2 / (1.0 + a1 * a1);
            }
            let fprime = (-h.d1.values()[j] * p0 + hv[j] * (dp - p0 * dq_over_q)) / q0;
            (acc + dx * fprime) / PI
        })
        .collect();
    Ok(GridFunction::new(grid, values)?)
}

/// Dense Nyström matrix of a scalar operator on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    grid: Grid,
    entries: Vec<f64>,
    kernel_id: String,
}

impl OperatorMatrix {
    pub fn from_entries(grid: Grid, entries: Vec<f64>, kernel_id: impl Into<String>) -> Self {
        assert_eq!(
            entries.len(),
            grid.len() * grid.len(),
            "matrix size mismatch"
        );
        Self {
            grid,
            entries,
            kernel_id: kernel_id.into(),
        }
    }

    pub fn zeros(grid: Grid, kernel_id: impl Into<String>) -> Self {
        Self::from_entries(grid, vec![0.0; grid.len() * grid.len()], kernel_id)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.dim();
        &self.entries[row * n..(row + 1) * n]
    }

    pub fn apply(&self, x: &GridFunction) -> GridFunction {
        assert_eq!(x.grid(), &self.grid, "grid mismatch");
        let xs = x.values();
        let n = self.dim();
        let values = self
            .entries
            .par_chunks(n)
            .map(|row| row.iter().zip(xs).map(|(a, b)| a * b).sum())
            .collect();
        GridFunction::from_vec(self.grid, values)
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.entries[i * n + j];
            }
        }
        Self::from_entries(self.grid, out, format!("({})^T", self.kernel_id))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }
}

/// A 2×2 block operator acting on [`DensityPair`](crate::grid::DensityPair)s.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    /// Blocks in row-major order: `[(1,1), (1,2), (2,1), (2,2)]`.
    pub blocks: [OperatorMatrix; 4],
}

impl BlockOperator {
    pub fn new(blocks: [OperatorMatrix; 4]) -> Self {
        let g = *blocks[0].grid();
        assert!(
            blocks.iter().all(|b| b.grid() == &g),
            "blocks on different grids"
        );
        Self { blocks }
    }

    pub fn grid(&self) -> &Grid {
        self.blocks[0].grid()
    }

    pub fn block(&self, row: usize, col: usize) -> &OperatorMatrix {
        &self.blocks[2 * row + col]
    }

    pub fn apply(&self, x: &crate::grid::DensityPair) -> crate::grid::DensityPair {
        let first = &self.block(0, 0).apply(&x.first) + &self.block(0, 1).apply(&x.second);
        let second = &self.block(1, 0).apply(&x.first) + &self.block(1, 1).apply(&x.second);
        crate::grid::DensityPair::from_parts(first, second)
    }

    pub fn transpose(&self) -> Self {
        let [a, b, c, d] = &self.blocks;
        Self::new([a.transpose(), c.transpose(), b.transpose(), d.transpose()])
    }

    /// Row-major dense `2N × 2N` form matching [`DensityPair::to_stacked`](crate::grid::DensityPair::to_stacked).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.grid().len();
        let mut out = vec![0.0; 4 * n * n];
        for bi in 0..2 {
            for bj in 0..2 {
                let blk = self.block(bi, bj);
                for i in 0..n {
                    let dst = (bi * n + i) * 2 * n + bj * n;
                    out[dst..dst + n].copy_from_slice(blk.row(i));
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().fold(0.0_f64, |m, b| m.max(b.max_abs()))
    }
}

/// One summand `coef · outer(ξ) · B⁰_{n,m}(f)[inner · x]` of an operator expression.
#[derive(Debug, Clone)]
pub struct Term {
    pub coef: f64,
    pub n: u32,
    pub m: u32,
    pub inner: Option<GridFunction>,
    pub outer: Option<GridFunction>,
    /// Block row (output component).
    pub row: usize,
    /// Block column (input component).
    pub col: usize,
}

impl Term {
    pub fn new(coef: f64, n: u32, m: u32) -> Self {
        Self {
            coef,
            n,
            m,
            inner: None,
            outer: None,
            row: 0,
            col: 0,
        }
    }

    pub fn inner(mut self, w: &GridFunction) -> Self {
        self.inner = Some(w.clone());
        self
    }

    pub fn outer(mut self, w: &GridFunction) -> Self {
        self.outer = Some(w.clone());
        self
    }

    pub fn at(mut self, row: usize, col: usize) -> Self {
        self.row = row;
        self.col = col;
        self
    }
}

/// Linear combination of `B⁰_{n,m}(f)` operators with pointwise weights,
/// laid out as an `rows × cols` block operator.
#[derive(Debug, Clone)]
pub struct OperatorExpr {
    profile: Jet,
    rows: usize,
    cols: usize,
    terms: Vec<Term>,
    label: String,
}

struct PreparedTerm<'a> {
    scale: f64,
    n: usize,
    m: usize,
    inner: Option<&'a [f64]>,
    /// Spectral derivative of the inner weight.
    inner_d1: Option<Vec<f64>>,
    outer: Option<&'a [f64]>,
    slot: usize,
    // Diagonal term: derivative coefficient and local coefficient per row.
    alpha: Vec<f64>,
    gamma: Vec<f64>,
}

impl OperatorExpr {
    pub fn new(profile: &Jet, rows: usize, cols: usize, label: impl Into<String>) -> Self {
        Self {
            profile: profile.clone(),
            rows,
            cols,
            terms: Vec::new(),
            label: label.into(),
        }
    }

    pub fn push(&mut self, term: Term) -> &mut Self {
        assert!(
            term.row < self.rows && term.col < self.cols,
            "term outside block layout"
        );
        self.terms.push(term);
        self
    }

    pub fn with(mut self, term: Term) -> Self {
        self.push(term);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn prepare(&self) -> Vec<PreparedTerm<'_>> {
        let grid = self.profile.grid();
        let dx = grid.spacing();
        let d1 = self.profile.d1.values();
        let d2 = self.profile.d2.values();
        self.terms
            .iter()
            .map(|t| {
                let (n, m) = (t.n as i32, t.m as i32);
                let (alpha, gamma) = (0..grid.len())
                    .map(|j| {
                        let (a1, a2) = (d1[j], d2[j]);
                        let w = 1.0 + a1 * a1;
                        let q0 = w.powi(m);
                        let p0 = a1.powi(n);
                        let dp = if n == 0 {
                            0.0
                        } else {
                            -0.5 * n as f64 * a2 * a1.powi(n - 1)
                        };
                        let dq_over_q = -(m as f64) * a1 * a2 / w;
                        let s = dx / PI;
                        (-s * p0 / q0, s * (dp - p0 * dq_over_q) / q0)
                    })
                    .unzip();
                PreparedTerm {
                    scale: t.coef / PI,
                    n: t.n as usize,
                    m: t.m as usize,
                    inner: t.inner.as_ref().map(|w| w.values()),
                    inner_d1: t
                        .inner
                        .as_ref()
                        .map(|w| spectral_derivative(w, 1).into_values()),
                    outer: t.outer.as_ref().map(|w| w.values()),
                    slot: t.row * self.cols + t.col,
                    alpha,
                    gamma,
                }
            })
            .collect()
    }

    /// Visits every nonzero contribution of row `j` as `(slot, column, value)`.
    fn visit_row(
        &self,
        prepared: &[PreparedTerm<'_>],
        dmat_offsets: &[f64],
        j: usize,
        mut sink: impl FnMut(usize, usize, f64),
    ) {
        let grid = self.profile.grid();
        let n = grid.len();
        let dx = grid.spacing();
        let nmax = prepared.iter().map(|t| t.n).max().unwrap_or(0);
        let mmax = prepared.iter().map(|t| t.m).max().unwrap_or(0);
        let mut qpow = vec![1.0; nmax + 1];
        let mut rpow = vec![1.0; mmax + 1];
        for k in 1..=n / 2 {
            let w = offset_weight(grid, k);
            for sign in [1isize, -1] {
                let kk = sign * k as isize;
                let l = grid.wrap(j, kk);
                let eta = kk as f64 * dx;
                let q = self.profile.quotient(j, l, eta);
                let r = 1.0 / (1.0 + q * q);
                for i in 1..=nmax {
                    qpow[i] = qpow[i - 1] * q;
                }
                for i in 1..=mmax {
                    rpow[i] = rpow[i - 1] * r;
                }
                let base = w / eta;
                let doff = if sign > 0 {
                    dmat_offsets[k % n]
                } else {
                    dmat_offsets[n - k]
                };
                for t in prepared {
                    let mut v = t.scale * base * qpow[t.n] * rpow[t.m];
                    if let Some(inner) = t.inner {
                        v *= inner[l];
                    }
                    // Derivative part of the diagonal term; D_{jl} depends on j - l = kk.
                    // At k = N/2 the two signs hit the same column, so halve it.
                    // (w x)' is expanded as w'x + w x' with w taken at the target node,
                    // so x' coefficients of combined terms cancel exactly.
                    let mut dpart =
                        if k == n / 2 { 0.5 } else { 1.0 } * doff * t.alpha[j] * t.scale * PI;
                    if let Some(inner) = t.inner {
                        dpart *= inner[j];
                    }
                    v += dpart;
                    if let Some(outer) = t.outer {
                        v *= outer[j];
                    }
                    sink(t.slot, l, v);
                }
            }
        }
        for t in prepared {
            let mut v = t.scale * PI * t.gamma[j];
            if let (Some(inner), Some(inner_d1)) = (t.inner, &t.inner_d1) {
                v = v * inner[j] + t.scale * PI * t.alpha[j] * inner_d1[j];
            }
            if let Some(outer) = t.outer {
                v *= outer[j];
            }
            sink(t.slot, j, v);
        }
    }

    fn dmat_offsets(&self) -> Vec<f64> {
        differentiation_offsets(self.profile.grid())
    }

    /// Dense matrices, one per block slot in row-major order.
    pub fn assemble(&self) -> Vec<OperatorMatrix> {
        let grid = *self.profile.grid();
        let n = grid.len();
        let slots = self.rows * self.cols;
        let prepared = self.prepare();
        let offsets = self.dmat_offsets();
        // One row of every block at a time, rows in parallel.
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut buf = vec![0.0; slots * n];
                self.visit_row(&prepared, &offsets, j, |slot, l, v| buf[slot * n + l] += v);
                buf
            })
            .collect();
        (0..slots)
            .map(|slot| {
                let mut entries = vec![0.0; n * n];
                for (j, buf) in rows.iter().enumerate() {
                    entries[j * n..(j + 1) * n].copy_from_slice(&buf[slot * n..(slot + 1) * n]);
                }
                let (r, c) = (slot / self.cols, slot % self.cols);
                let id = if slots == 1 {
                    self.label.clone()
                } else {
                    format!("{}[{},{}]", self.label, r + 1, c + 1)
                };
                OperatorMatrix::from_entries(grid, entries, id)
            })
            .collect()
    }

    /// Matrix-free application to `cols` input components.
    pub fn apply(&self, input: &[&GridFunction]) -> Vec<GridFunction> {
        assert_eq!(input.len(), self.cols, "wrong number of input components");
        let grid = *self.profile.grid();
        assert!(input.iter().all(|x| x.grid() == &grid), "grid mismatch");
        let n = grid.len();
        let prepared = self.prepare();
        let offsets = self.dmat_offsets();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut acc = vec![0.0; self.rows];
                self.visit_row(&prepared, &offsets, j, |slot, l, v| {
                    let (r, c) = (slot / self.cols, slot % self.cols);
                    acc[r] += v * input[c].values()[l];
                });
                acc
            })
            .collect();
        (0..self.rows)
            .map(|r| GridFunction::from_vec(grid, rows.iter().map(|a| a[r]).collect()))
            .collect()
    }

    pub fn assemble_block(&self) -> BlockOperator {
        assert!(self.rows == 2 && self.cols == 2, "not a 2x2 expression");
        let mut it = self.assemble().into_iter();
        BlockOperator::new([
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
            it.next().unwrap(),
        ])
    }

    pub fn assemble_scalar(&self) -> OperatorMatrix {
        assert!(self.rows == 1 && self.cols == 1, "not a scalar expression");
        self.assemble().pop().unwrap()
    }
}

/// Nyström matrix of `B⁰_{n,m}(f) = B_{n,m}(f, …, f)[f, …, f, ·]`.
pub fn assemble_bnm0(f: &Jet, n: u32, m: u32) -> OperatorMatrix {
    OperatorExpr::new(f, 1, 1, format!("B0_{{{n},{m}}}(f)"))
        .with(Term::new(1.0, n, m))
        .assemble_scalar()
}

/// Matrix-free `B⁰_{n,m}(f)[h]`.
pub fn apply_bnm0(f: &Jet, n: u32, m: u32, h: &GridFunction) -> GridFunction {
    OperatorExpr::new(f, 1, 1, format!("B0_{{{n},{m}}}(f)"))
        .with(Term::new(1.0, n, m))
        .apply(&[h])
        .pop()
        .unwrap()
}

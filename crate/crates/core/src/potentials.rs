//! Interface geometry and the boundary operators built from the `B⁰_{n,m}` family.
//!
//! All operators use the quadrature of [`crate::kernels`]. Velocity-type
//! operators are evaluated with unit viscosity; physical scaling happens in
//! [`crate::fields`] and [`crate::evolution`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{spectral_derivative, DensityPair, Grid, GridFunction};
use crate::kernels::{BlockOperator, Jet, OperatorExpr, OperatorMatrix, Term};

/// Derived quantities of the interface `Γ = {(ξ, f(ξ))}`.
#[derive(Debug, Clone)]
pub struct InterfaceGeometry {
    pub jet: Jet,
    /// `ω = (1 + f'²)^{1/2}`.
    pub omega: GridFunction,
    /// Unit normal `(-f', 1)/ω`, pointing out of the fluid.
    pub nu: DensityPair,
    /// Unit tangent `(1, f')/ω`.
    pub tau: DensityPair,
    /// Curvature `f''/ω³`.
    pub kappa: GridFunction,
    /// `g = (ω⁻¹ - 1, f'/ω)`.
    pub g: DensityPair,
}

/// Geometry of `f` with spectral derivatives.
pub fn geometry_of(f: &GridFunction) -> InterfaceGeometry {
    InterfaceGeometry::from_jet(Jet::spectral(f))
}

impl InterfaceGeometry {
    pub fn from_jet(jet: Jet) -> Self {
        let fp = &jet.d1;
        let omega = fp.map(|d| (1.0 + d * d).sqrt());
        let inv = omega.map(|w| 1.0 / w);
        let nu = DensityPair::from_parts((&-fp).times(&inv), inv.clone());
        let tau = DensityPair::from_parts(inv.clone(), fp.times(&inv));
        let kappa = jet.d2.zip_map(&omega, |d2, w| d2 / (w * w * w));
        // ω⁻¹ - 1 written as -f'²/(ω + ω²) to avoid cancellation.
        let g1 = fp.zip_map(&omega, |d, w| -d * d / (w + w * w));
        let g = DensityPair::from_parts(g1, tau.second.clone());
        Self {
            jet,
            omega,
            nu,
            tau,
            kappa,
            g,
        }
    }

    /// Geometry of the line `aξ + b`, kept exact under periodic indexing.
    pub fn affine(grid: &Grid, a: f64, b: f64) -> Self {
        Self::from_jet(Jet::affine(grid, a, b))
    }

    pub fn grid(&self) -> &Grid {
        self.jet.grid()
    }

    /// Periodic part of the profile; equal to `f` unless the jet has a trend.
    pub fn f(&self) -> &GridFunction {
        &self.jet.value
    }

    pub fn fp(&self) -> &GridFunction {
        &self.jet.d1
    }

    /// Pointwise `ωκν - g'`, which vanishes identically for smooth `f`.
    pub fn curvature_residual(&self) -> DensityPair {
        let lhs = self.nu.times(&self.omega.times(&self.kappa));
        &lhs - &self.g.derivative()
    }

    fn expr(&self, rows: usize, cols: usize, label: &str) -> OperatorExpr {
        OperatorExpr::new(&self.jet, rows, cols, label)
    }

    /// Double layer potential
    /// `𝔻[β] = [B02 B12; B12 B22](f'β) - [B12 B22; B22 B32]β`.
    pub fn d_expr(&self) -> OperatorExpr {
        let fp = self.fp();
        let mut e = self.expr(2, 2, "D(f)");
        for (r, c, lo) in [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 2)] {
            e.push(Term::new(1.0, lo, 2).inner(fp).at(r, c));
            e.push(Term::new(-1.0, lo + 1, 2).at(r, c));
        }
        e
    }

    /// Adjoint `𝔻*[β] = -f'·[B02 B12; B12 B22]β + [B12 B22; B22 B32]β`.
    pub fn dstar_expr(&self) -> OperatorExpr {
        let fp = self.fp();
        let mut e = self.expr(2, 2, "D(f)*");
        for (r, c, lo) in [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 2)] {
            e.push(Term::new(-1.0, lo, 2).outer(fp).at(r, c));
            e.push(Term::new(1.0, lo + 1, 2).at(r, c));
        }
        e
    }

    fn push_t1(&self, e: &mut OperatorExpr, inner: Option<&GridFunction>) {
        let rows: [(usize, usize, f64, u32); 8] = [
            (0, 0, 0.25, 2),
            (0, 0, -0.25, 0),
            (0, 1, 0.25, 3),
            (0, 1, -0.25, 1),
            (1, 0, 0.25, 3),
            (1, 0, -0.25, 1),
            (1, 1, -0.25, 0),
            (1, 1, -0.75, 2),
        ];
        for (r, c, coef, n) in rows {
            let t = Term::new(coef, n, 2).at(r, c);
            e.push(match inner {
                Some(w) => t.inner(w),
                None => t,
            });
        }
    }

    fn push_t2(&self, e: &mut OperatorExpr, inner: Option<&GridFunction>) {
        let rows: [(usize, usize, f64, u32); 8] = [
            (0, 0, -0.25, 3),
            (0, 0, -0.75, 1),
            (0, 1, 0.25, 0),
            (0, 1, -0.25, 2),
            (1, 0, 0.25, 0),
            (1, 0, -0.25, 2),
            (1, 1, 0.25, 1),
            (1, 1, -0.25, 3),
        ];
        for (r, c, coef, n) in rows {
            let t = Term::new(coef, n, 2).at(r, c);
            e.push(match inner {
                Some(w) => t.inner(w),
                None => t,
            });
        }
    }

    /// `𝕋₁`: first column of the velocity-gradient trace.
    pub fn t1_expr(&self) -> OperatorExpr {
        let mut e = self.expr(2, 2, "T1(f)");
        self.push_t1(&mut e, None);
        e
    }

    /// `𝕋₂`: second column of the velocity-gradient trace.
    pub fn t2_expr(&self) -> OperatorExpr {
        let mut e = self.expr(2, 2, "T2(f)");
        self.push_t2(&mut e, None);
        e
    }

    /// Velocity trace operator `𝕍[β] = 𝕋₁[β] + 𝕋₂[f'β]`.
    pub fn v_expr(&self) -> OperatorExpr {
        let mut e = self.expr(2, 2, "V(f)");
        self.push_t1(&mut e, None);
        self.push_t2(&mut e, Some(self.fp()));
        e
    }

    /// `𝔹₁[θ] = B11[θ] - B01[f'θ]`; the slope is taken at the source point.
    pub fn b1_expr(&self) -> OperatorExpr {
        self.expr(1, 1, "B1(f)")
            .with(Term::new(1.0, 1, 1))
            .with(Term::new(-1.0, 0, 1).inner(self.fp()))
    }

    /// `𝔹₂[θ] = B01[θ] + B11[f'θ]`.
    pub fn b2_expr(&self) -> OperatorExpr {
        self.expr(1, 1, "B2(f)")
            .with(Term::new(1.0, 0, 1))
            .with(Term::new(1.0, 1, 1).inner(self.fp()))
    }

    pub fn apply_d(&self, beta: &DensityPair) -> DensityPair {
        apply_pair(&self.d_expr(), beta)
    }

    pub fn apply_dstar(&self, beta: &DensityPair) -> DensityPair {
        apply_pair(&self.dstar_expr(), beta)
    }

    pub fn apply_v(&self, beta: &DensityPair) -> DensityPair {
        apply_pair(&self.v_expr(), beta)
    }

    pub fn apply_t1(&self, beta: &DensityPair) -> DensityPair {
        apply_pair(&self.t1_expr(), beta)
    }

    pub fn apply_t2(&self, beta: &DensityPair) -> DensityPair {
        apply_pair(&self.t2_expr(), beta)
    }

    pub fn apply_b1(&self, theta: &GridFunction) -> GridFunction {
        self.b1_expr().apply(&[theta]).pop().unwrap()
    }

    pub fn apply_b2(&self, theta: &GridFunction) -> GridFunction {
        self.b2_expr().apply(&[theta]).pop().unwrap()
    }
}

fn apply_pair(expr: &OperatorExpr, beta: &DensityPair) -> DensityPair {
    let mut out = expr.apply(&[&beta.first, &beta.second]).into_iter();
    DensityPair::from_parts(out.next().unwrap(), out.next().unwrap())
}

pub fn assemble_d(geom: &InterfaceGeometry) -> BlockOperator {
    geom.d_expr().assemble_block()
}

pub fn assemble_dstar(geom: &InterfaceGeometry) -> BlockOperator {
    geom.dstar_expr().assemble_block()
}

pub fn assemble_v(geom: &InterfaceGeometry) -> BlockOperator {
    geom.v_expr().assemble_block()
}

/// Nyström matrices of `(𝕋₁, 𝕋₂, 𝔹₁, 𝔹₂)`.
pub fn assemble_t1t2b1b2(
    geom: &InterfaceGeometry,
) -> (BlockOperator, BlockOperator, OperatorMatrix, OperatorMatrix) {
    (
        geom.t1_expr().assemble_block(),
        geom.t2_expr().assemble_block(),
        geom.b1_expr().assemble_scalar(),
        geom.b2_expr().assemble_scalar(),
    )
}

/// Side of the interface a one-sided trace is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Above the graph, outside the fluid.
    Plus,
    /// Below the graph, inside the fluid.
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub const BOTH: [Side; 2] = [Side::Plus, Side::Minus];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "+",
            Side::Minus => "-",
        })
    }
}

/// One-sided traces of the single-layer velocity gradient and pressure.
#[derive(Debug, Clone)]
pub struct TildeTraces {
    /// `grad[i][j]` is the trace of `∂_j u_i`.
    pub grad: [[GridFunction; 2]; 2],
    pub pi: GridFunction,
}

impl TildeTraces {
    /// Trace of `∂₂u`.
    pub fn d2u(&self) -> DensityPair {
        DensityPair::from_parts(self.grad[0][1].clone(), self.grad[1][1].clone())
    }

    /// Trace of the stress `∇u + ∇uᵀ - Π E₂`.
    pub fn stress(&self) -> [[GridFunction; 2]; 2] {
        let g = &self.grad;
        let sym = |i: usize, j: usize| &g[i][j] + &g[j][i];
        [
            [&sym(0, 0) - &self.pi, sym(0, 1)],
            [sym(1, 0), &sym(1, 1) - &self.pi],
        ]
    }
}

/// Applies a pointwise 2×2 field to a pointwise vector field.
pub fn matvec(m: &[[GridFunction; 2]; 2], v: &DensityPair) -> DensityPair {
    DensityPair::from_parts(
        &m[0][0].times(&v.first) + &m[0][1].times(&v.second),
        &m[1][0].times(&v.first) + &m[1][1].times(&v.second),
    )
}

/// Traces of `∇u^±` and `Π^±` for the single-layer potential with density `β`.
pub fn tilde_traces(geom: &InterfaceGeometry, beta: &DensityPair, side: Side) -> TildeTraces {
    let s = side.sign();
    let col1 = geom.apply_t1(beta);
    let col2 = geom.apply_t2(beta);
    let jump = beta
        .pointwise_dot(&geom.tau)
        .zip_map(&geom.omega, |bt, w| s * bt / (2.0 * w));
    let (tau, nu) = (&geom.tau, &geom.nu);
    let corr = |i: usize, j: usize| jump.times(tau.component(i)).times(nu.component(j));
    let grad = [
        [&col1.first - &corr(0, 0), &col2.first - &corr(0, 1)],
        [&col1.second - &corr(1, 0), &col2.second - &corr(1, 1)],
    ];
    let inv = geom.omega.map(|w| 1.0 / w);
    let bn = beta.pointwise_dot(&geom.nu).times(&inv);
    let bt = beta.pointwise_dot(&geom.tau).times(&inv);
    let b1 = geom.apply_b1(&bn);
    let b2 = geom.apply_b2(&bt);
    let pi = bn.zip_map(&(&b1 + &b2), |a, b| 0.5 * (s * a + b));
    TildeTraces { grad, pi }
}

/// Derivative of a pair of sampled functions, used for identity residuals.
pub fn pair_derivative(beta: &DensityPair) -> DensityPair {
    beta.map(|c| spectral_derivative(c, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn bump(grid: &Grid) -> InterfaceGeometry {
        geometry_of(&grid.sample(|x| 0.3 * (-x * x).exp()))
    }

    fn density(grid: &Grid) -> DensityPair {
        DensityPair::new(
            grid.sample(|x| (-(x - 0.4) * (x - 0.4)).exp()),
            grid.sample(|x| x * (-0.7 * x * x).exp()),
        )
        .unwrap()
    }

    #[test]
    fn flat_geometry() {
        let g = make_grid(8.0, 64).unwrap();
        let geom = geometry_of(&g.zeros());
        assert!(geom.omega.values().iter().all(|&w| w == 1.0));
        assert_eq!(geom.nu.first.max_abs(), 0.0);
        assert!(geom.nu.second.values().iter().all(|&v| v == 1.0));
        assert!(geom.tau.first.values().iter().all(|&v| v == 1.0));
        assert_eq!(geom.kappa.max_abs(), 0.0);
        assert_eq!(geom.g.max_abs(), 0.0);
    }

    #[test]
    fn frame_is_orthonormal() {
        let g = make_grid(16.0, 256).unwrap();
        let geom = bump(&g);
        let nn = geom.nu.pointwise_dot(&geom.nu);
        let tt = geom.tau.pointwise_dot(&geom.tau);
        let nt = geom.nu.pointwise_dot(&geom.tau);
        for j in 0..g.len() {
            assert!((nn.values()[j] - 1.0).abs() < 1e-12);
            assert!((tt.values()[j] - 1.0).abs() < 1e-12);
            assert!(nt.values()[j].abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_identity() {
        let g = make_grid(16.0, 1024).unwrap();
        let r = bump(&g).curvature_residual();
        assert!(r.max_abs() <= 1e-8, "{}", r.max_abs());
    }

    #[test]
    fn flat_operators_vanish_or_reduce_to_hilbert() {
        let g = make_grid(16.0, 256).unwrap();
        let geom = geometry_of(&g.zeros());
        let beta = density(&g);
        assert_eq!(geom.apply_d(&beta).max_abs(), 0.0);
        assert_eq!(geom.apply_dstar(&beta).max_abs(), 0.0);
        assert_eq!(geom.apply_b1(&beta.first).max_abs(), 0.0);
        let h = crate::kernels::apply_bnm0(&geom.jet, 0, 0, &beta.first);
        assert!((&geom.apply_b2(&beta.first) - &h).max_abs() < 1e-14);
        let v = geom.apply_v(&beta);
        let h2 = crate::kernels::apply_bnm0(&geom.jet, 0, 0, &beta.second);
        assert!((&v.first + &h.scale(0.25)).max_abs() < 1e-14);
        assert!((&v.second + &h2.scale(0.25)).max_abs() < 1e-14);
    }

    #[test]
    fn assembled_matches_matrix_free() {
        let g = make_grid(8.0, 64).unwrap();
        let geom = bump(&g);
        let beta = density(&g);
        let d = assemble_d(&geom).apply(&beta);
        assert!((&d - &geom.apply_d(&beta)).max_abs() < 1e-13);
        let (t1, t2, b1, b2) = assemble_t1t2b1b2(&geom);
        assert!((&t1.apply(&beta) - &geom.apply_t1(&beta)).max_abs() < 1e-13);
        assert!((&t2.apply(&beta) - &geom.apply_t2(&beta)).max_abs() < 1e-13);
        assert!((&b1.apply(&beta.first) - &geom.apply_b1(&beta.first)).max_abs() < 1e-13);
        assert!((&b2.apply(&beta.first) - &geom.apply_b2(&beta.first)).max_abs() < 1e-13);
    }

    #[test]
    fn jump_of_gradient_trace() {
        let g = make_grid(8.0, 128).unwrap();
        let geom = bump(&g);
        let beta = density(&g);
        let plus = tilde_traces(&geom, &beta, Side::Plus);
        let minus = tilde_traces(&geom, &beta, Side::Minus);
        let bt = beta
            .pointwise_dot(&geom.tau)
            .zip_map(&geom.omega, |a, w| a / w);
        for i in 0..2 {
            for j in 0..2 {
                let expect = bt.times(geom.tau.component(i)).times(geom.nu.component(j));
                let diff = &(&minus.grad[i][j] - &plus.grad[i][j]) - &expect;
                assert!(diff.max_abs() <= 1e-10);
            }
        }
    }
}

use capstokes::kernels::{apply_bnm0, assemble_bnm0};
use capstokes::potentials::{assemble_d, assemble_dstar, geometry_of, InterfaceGeometry};
use capstokes::verify::random_density;
use capstokes::{DensityPair, Grid, Jet};
use proptest::prelude::*;

fn f_exact(x: f64) -> f64 {
    0.3 * (-x * x).exp()
}

fn h_exact(x: f64) -> f64 {
    (-(x - 0.3) * (x - 0.3)).exp() * (1.0 + 0.5 * x)
}

/// `B⁰_{n,m}(f)[h](ξ)` on the whole line by pairing `±η` and composite
/// 3-point Gauss–Legendre on `(0, 14)`.
fn bnm0_line(n: i32, m: i32, xi: f64) -> f64 {
    let kernel = |eta: f64| {
        let q = (f_exact(xi) - f_exact(xi - eta)) / eta;
        h_exact(xi - eta) / eta * q.powi(n) / (1.0 + q * q).powi(m)
    };
    let paired = |eta: f64| kernel(eta) + kernel(-eta);
    let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let width = 0.004;
    let cells = (14.0 / width) as usize;
    let mut sum = 0.0;
    for c in 0..cells {
        let mid = (c as f64 + 0.5) * width;
        for (t, w) in nodes.iter().zip(&weights) {
            sum += w * paired(mid + 0.5 * width * t);
        }
    }
    0.5 * width * sum / std::f64::consts::PI
}

#[test]
fn quadrature_matches_line_integral_oracle() {
    let g = Grid::new(16.0, 512).unwrap();
    let f = Jet::spectral(&g.sample(f_exact));
    let h = g.sample(h_exact);
    for (n, m) in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (3, 2)] {
        let got = apply_bnm0(&f, n as u32, m as u32, &h);
        for j in [192, 240, 256, 266, 300] {
            let xi = g.node(j);
            let want = bnm0_line(n, m, xi);
            let err = (got.values()[j] - want).abs();
            assert!(
                err <= 1e-9,
                "B0_{{{n},{m}}} at {xi}: {} vs {want}",
                got.values()[j]
            );
        }
    }
}

#[test]
fn self_convergence_on_coarse_ladder() {
    let ladder = [32, 64, 128, 256];
    let results: Vec<_> = ladder
        .iter()
        .map(|&n| {
            let g = Grid::new(8.0, n).unwrap();
            let f = Jet::spectral(&g.sample(f_exact));
            apply_bnm0(&f, 1, 2, &g.sample(h_exact))
        })
        .collect();
    let gaps: Vec<f64> = results
        .windows(2)
        .map(|w| {
            let (c, fine) = (w[0].values(), w[1].values());
            (0..c.len())
                .map(|j| (c[j] - fine[2 * j]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    for w in gaps.windows(2) {
        assert!(w[1] <= 1e-13 || w[0] / w[1] >= 3.5, "{gaps:?}");
    }
}

#[test]
fn assembled_matrix_matches_matrix_free() {
    let g = Grid::new(8.0, 64).unwrap();
    let f = Jet::spectral(&g.sample(f_exact));
    let h = g.sample(h_exact);
    for (n, m) in [(0, 0), (1, 1), (2, 3)] {
        let a = assemble_bnm0(&f, n, m).apply(&h);
        let b = apply_bnm0(&f, n, m, &h);
        assert!((&a - &b).max_abs() <= 1e-13);
    }
}

#[test]
fn double_layer_vanishes_on_lines() {
    let g = Grid::new(8.0, 64).unwrap();
    let beta = DensityPair::new(
        g.sample(|x| (-x * x).exp()),
        g.sample(|x| x * (-x * x).exp()),
    )
    .unwrap();
    for (a, b) in [(0.0, 0.0), (0.7, 0.0), (-1.3, 2.0), (3.0, -1.0)] {
        let geom = InterfaceGeometry::affine(&g, a, b);
        assert!(geom.apply_d(&beta).max_abs() <= 1e-14, "a = {a}");
        assert!(geom.apply_dstar(&beta).max_abs() <= 1e-14, "a = {a}");
    }
}

/// `𝔻*` is the `L²` adjoint of `𝔻`, and the Nyström matrices are transposes.
#[test]
fn adjoint_matrix_is_transpose() {
    for n in [64, 128, 256] {
        let g = Grid::new(8.0, n).unwrap();
        let geom = geometry_of(&g.sample(f_exact));
        let d = assemble_d(&geom).transpose();
        let ds = assemble_dstar(&geom);
        let mut diff: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                for (x, y) in d.block(r, c).entries().iter().zip(ds.block(r, c).entries()) {
                    diff = diff.max((x - y).abs());
                }
            }
        }
        assert!(diff <= 1e-13 * ds.max_abs(), "N = {n}: {diff:.3e}");
        let beta = random_density(&g, 1);
        let gamma = random_density(&g, 2);
        let lhs = geom.apply_d(&beta).dot(&gamma);
        let rhs = beta.dot(&geom.apply_dstar(&gamma));
        assert!(
            (lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1e-3),
            "N = {n}: {lhs} vs {rhs}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_in_the_density(a in -2.0..2.0_f64, b in -2.0..2.0_f64, shift in -1.0..1.0_f64, n in 0u32..3, m in 0u32..3) {
        let g = Grid::new(8.0, 64).unwrap();
        let f = Jet::spectral(&g.sample(f_exact));
        let u = g.sample(h_exact);
        let v = g.sample(|x| (-(x - shift) * (x - shift)).exp());
        let combo = &u.scale(a) + &v.scale(b);
        let lhs = apply_bnm0(&f, n, m, &combo);
        let rhs = &apply_bnm0(&f, n, m, &u).scale(a) + &apply_bnm0(&f, n, m, &v).scale(b);
        prop_assert!((&lhs - &rhs).max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn odd_profile_reflection(amp in 0.05..1.0_f64) {
        // B⁰_{0,m}(f)[h] for even f and even h is odd.
        let g = Grid::new(8.0, 64).unwrap();
        let f = Jet::spectral(&g.sample(|x| amp * (-x * x).exp()));
        let h = g.sample(|x| (-x * x).exp());
        let out = apply_bnm0(&f, 0, 1, &h);
        let v = out.values();
        let n = v.len();
        for j in 1..n {
            prop_assert!((v[j] + v[n - j]).abs() <= 1e-12);
        }
    }
}

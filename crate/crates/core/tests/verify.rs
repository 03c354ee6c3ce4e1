use capstokes::potentials::{geometry_of, tilde_traces, Side};
use capstokes::verify::{
    observed_order, random_density, refinement_ladder, residual_comder, residual_rellich,
    run_suite, standard_profile, test_density, Bounds, RefinementReport, Rellich, Suite,
};
use capstokes::{DensityPair, Grid};

fn interior_max(u: &capstokes::GridFunction) -> f64 {
    let g = u.grid();
    g.interior(0.5)
        .map(|j| u.values()[j].abs())
        .fold(0.0, f64::max)
}

/// `(e^{-(s-c)²})''`: zero mass and first moment, so the periodic and line
/// Hilbert transforms agree up to `O(L⁻⁴)`.
fn hat_density(c: f64) -> impl Fn(f64) -> f64 {
    move |s| {
        let x = s - c;
        (4.0 * x * x - 2.0) * (-x * x).exp()
    }
}

/// Flat interface, `μ = 1`: the half-plane Fourier solution gives
/// `∂₁u = -Hβ/4`, `∂₂u₁ = ∓β₁/2 + Hβ₂/4`, `∂₂u₂ = Hβ₁/4`, `Π = (Hβ₁ ± β₂)/2`.
#[test]
fn flat_traces_match_fourier_symbols() {
    let g = Grid::new(16.0, 1024).unwrap();
    let geom = geometry_of(&g.zeros());
    let beta = DensityPair::new(
        g.sample(hat_density(0.3)),
        g.sample(hat_density(-0.4)).scale(0.5),
    )
    .unwrap();
    let (b1, b2) = (&beta.first, &beta.second);
    let (hb1, hb2) = (b1.hilbert(), b2.hilbert());
    let scale = beta.max_abs();
    for side in Side::BOTH {
        let s = side.sign();
        let t = tilde_traces(&geom, &beta, side);
        let want = [
            [hb1.scale(-0.25), &b1.scale(-0.5 * s) + &hb2.scale(0.25)],
            [hb2.scale(-0.25), hb1.scale(0.25)],
        ];
        for i in 0..2 {
            for j in 0..2 {
                let e = interior_max(&(&t.grad[i][j] - &want[i][j]));
                assert!(e <= 1e-5 * scale, "{side} grad[{i}][{j}]: {e:.2e}");
            }
        }
        let pi = (&hb1 + &b2.scale(s)).scale(0.5);
        let e = interior_max(&(&t.pi - &pi));
        assert!(e <= 1e-4 * scale, "{side} pi: {e:.2e}");
    }
    assert!(geom.apply_dstar(&beta).max_abs() <= 1e-15);
}

#[test]
fn zero_density_has_zero_residuals() {
    let g = Grid::new(16.0, 256).unwrap();
    let geom = geometry_of(&standard_profile(&g));
    let z = DensityPair::zeros(&g);
    assert_eq!(residual_comder(&geom, &z).residual_l2, 0.0);
    for which in Rellich::ALL {
        assert_eq!(
            residual_rellich(&geom, &z, which, Side::Plus).residual_l2,
            0.0
        );
    }
}

#[test]
fn suite_is_deterministic_and_seed_sensitive() {
    let g = Grid::new(16.0, 256).unwrap();
    let f = standard_profile(&g);
    let a = run_suite(Suite::Anticommute, &f, 4, &Bounds::default());
    let b = run_suite(Suite::Anticommute, &f, 4, &Bounds::default());
    let c = run_suite(Suite::Anticommute, &f, 5, &Bounds::default());
    assert_eq!(
        a[0].report.residual_l2.to_bits(),
        b[0].report.residual_l2.to_bits()
    );
    assert_ne!(a[0].report.residual_l2, c[0].report.residual_l2);
    assert_eq!(test_density(&f, 4), test_density(&f, 4));
}

#[test]
fn suite_selection_runs_the_named_group() {
    let g = Grid::new(16.0, 256).unwrap();
    let f = standard_profile(&g);
    let ids = |s| -> Vec<String> {
        run_suite(s, &f, 0, &Bounds::default())
            .into_iter()
            .map(|e| e.report.identity_id)
            .collect()
    };
    assert_eq!(ids(Suite::Geometry), vec!["geometry"]);
    assert_eq!(ids(Suite::Rellich).len(), 6);
    assert_eq!(ids(Suite::Ffff).len(), 2);
    assert_eq!(ids(Suite::All).len(), 1 + 1 + 1 + 2 + 6 + 6);
}

#[test]
fn zero_bounds_fail_every_identity() {
    let g = Grid::new(16.0, 256).unwrap();
    let bounds = Bounds {
        comder: 0.0,
        anticommute: 0.0,
        rellich: 0.0,
        fder: 0.0,
        ffff: 0.0,
        geometry: 0.0,
    };
    let f = standard_profile(&g);
    assert!(run_suite(Suite::Comder, &f, 0, &bounds)
        .iter()
        .all(|e| !e.passed));
}

#[test]
fn comder_converges_spectrally_on_a_coarse_ladder() {
    let report = refinement_ladder(16.0, &[64, 128, 256], |g| {
        let f = standard_profile(g);
        residual_comder(&geometry_of(&f), &test_density(&f, 0))
    })
    .unwrap();
    assert!(
        report.relative[2] < 1e-3 * report.relative[0],
        "{:?}",
        report.relative
    );
    assert!(report.converges(1.5));
    assert!(report.non_increasing());
}

#[test]
fn ladder_rules() {
    let mk = |relative: Vec<f64>, gaps: Vec<f64>| {
        let n = vec![512, 1024, 2048];
        RefinementReport {
            identity_id: "x".into(),
            residual_order: observed_order(&n, &relative),
            gap_order: observed_order(&n[..gaps.len()], &gaps),
            n,
            relative,
            gaps,
        }
    };
    assert!(mk(vec![4e-2, 1e-2, 2.5e-3], vec![3e-2, 7e-3]).converges(1.5));
    assert!(!mk(vec![1e-2, 1e-2, 1e-2], vec![1e-3, 9e-4]).converges(1.5));
    assert!(mk(vec![1e-4, 1e-4, 1e-4], vec![4e-6, 1e-6]).converges(1.5));
    assert!(mk(vec![1e-15, 2e-15, 1e-15], vec![1e-15, 3e-15]).converges(1.5));
    assert!(mk(vec![1e-15, 2e-15, 1e-15], vec![1e-15, 3e-15]).non_increasing());
    assert!(!mk(vec![1e-3, 2e-3, 1e-3], vec![1e-4, 1e-5]).non_increasing());
}

#[test]
fn random_density_depends_only_on_seed() {
    let a = random_density(&Grid::new(16.0, 128).unwrap(), 3);
    let b = random_density(&Grid::new(16.0, 512).unwrap(), 3);
    for j in 0..128 {
        assert_eq!(a.first.values()[j], b.first.values()[4 * j]);
    }
}

use capstokes::evolution::{
    phi, phi_one_phase_physical, simulate, Integrator, PhysicalParams, SimulationState,
    StepControls,
};
use capstokes::grid::sobolev_norm;
use capstokes::{Grid, GridFunction};
use proptest::prelude::*;

fn bump(g: &Grid) -> GridFunction {
    g.sample(|x| 0.2 * (-x * x).exp() + 0.05 * (-(x - 1.0) * (x - 1.0) * 2.0).exp())
}

fn params(mu: f64, mu_plus: f64, sigma: f64) -> PhysicalParams {
    PhysicalParams::new(mu, mu_plus, sigma).unwrap()
}

fn rel_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    (a - b).max_abs() / b.max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn viscosity_scaling(c in 0.2..5.0_f64, mu_plus in 0.0..2.0_f64) {
        let g = Grid::new(16.0, 128).unwrap();
        let f = bump(&g);
        let base = phi(&params(1.0, mu_plus, 1.0), &f).unwrap();
        let scaled = phi(&params(c, c * mu_plus, 1.0), &f).unwrap();
        prop_assert!(rel_diff(&scaled.scale(c), &base) <= 1e-12);
    }

    #[test]
    fn homogeneous_in_surface_tension(sigma in 0.1..10.0_f64) {
        let g = Grid::new(16.0, 128).unwrap();
        let f = bump(&g);
        let base = phi(&params(1.0, 0.3, 1.0), &f).unwrap();
        let scaled = phi(&params(1.0, 0.3, sigma), &f).unwrap();
        prop_assert!(rel_diff(&scaled, &base.scale(sigma)) <= 1e-12);
    }
}

#[test]
fn flat_profile_is_stationary() {
    let g = Grid::new(16.0, 128).unwrap();
    for mu_plus in [0.0, 0.5, 3.0] {
        let v = phi(&params(1.0, mu_plus, 1.0), &g.zeros()).unwrap();
        assert!(v.max_abs() <= 1e-12);
    }
}

#[test]
fn even_profiles_stay_even() {
    let g = Grid::new(16.0, 128).unwrap();
    let f = g.sample(|x| 0.3 * (-x * x).exp() - 0.1 * (-x * x / 4.0).exp());
    let v = phi(&params(1.0, 0.4, 1.0), &f).unwrap();
    let n = v.len();
    let vals = v.values();
    for j in 1..n {
        assert!(
            (vals[j] - vals[n - j]).abs() <= 1e-12 * v.max_abs(),
            "node {j}"
        );
    }
}

#[test]
fn one_phase_forms_agree() {
    let g = Grid::new(16.0, 256).unwrap();
    let f = bump(&g);
    let p = params(1.0, 0.0, 1.0);
    let a = phi(&p, &f).unwrap();
    let b = phi_one_phase_physical(&p, &f).unwrap();
    assert!(rel_diff(&a, &b) <= 1e-4, "{:.3e}", rel_diff(&a, &b));
}

#[test]
fn phi_is_resolved_under_refinement() {
    let coarse = Grid::new(16.0, 256).unwrap();
    let fine = Grid::new(16.0, 512).unwrap();
    let p = params(1.0, 0.1, 1.0);
    let a = phi(&p, &bump(&coarse)).unwrap();
    let b = phi(&p, &bump(&fine)).unwrap();
    let gap = (0..a.len())
        .map(|j| (a.values()[j] - b.values()[2 * j]).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 1e-4 * b.max_abs(), "{gap:.3e}");
}

#[test]
fn halving_tolerance_halves_local_error() {
    let g = Grid::new(16.0, 128).unwrap();
    let f0 = bump(&g);
    let p = params(1.0, 0.0, 1.0);
    // The first step is shaped by the initial rejections; later ones track the tolerance.
    let settled_estimate = |tol: f64| {
        let controls = StepControls {
            tol,
            cfl: 20.0,
            ..StepControls::default()
        };
        let mut state = SimulationState::new(f0.clone(), p, controls.sobolev_s);
        let mut integrator = Integrator::new(controls).unwrap();
        for _ in 0..6 {
            integrator.step(&mut state, 1.0).unwrap();
        }
        let e = &state.diagnostics.error_estimates[1..6];
        e.iter().sum::<f64>() / e.len() as f64
    };
    let e1 = settled_estimate(1e-6);
    let e2 = settled_estimate(5e-7);
    let ratio = e2 / e1;
    assert!(
        (0.3..=0.7).contains(&ratio),
        "{e1:.3e} {e2:.3e} ratio {ratio:.3}"
    );
}

#[test]
fn perturbation_decays() {
    let g = Grid::new(16.0, 128).unwrap();
    let f0 = g.sample(|x| 0.2 * (-x * x).exp());
    let traj = simulate(
        &f0,
        &params(1.0, 0.0, 1.0),
        &[0.1, 0.2, 0.3],
        &StepControls::default(),
    )
    .unwrap();
    let norms: Vec<f64> = traj
        .profiles
        .iter()
        .map(|f| sobolev_norm(f, 1.75))
        .collect();
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    assert!(traj.profiles[3].max_abs() < f0.max_abs());
    assert!(traj
        .last
        .diagnostics
        .norm_trail
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 1e-8));
    assert_eq!(traj.times, vec![0.0, 0.1, 0.2, 0.3]);
}

#[test]
fn trajectory_converges_under_refinement() {
    let controls = StepControls::default();
    let p = params(1.0, 0.0, 1.0);
    let run = |n: usize| {
        let g = Grid::new(16.0, n).unwrap();
        simulate(&g.sample(|x| 0.2 * (-x * x).exp()), &p, &[0.1], &controls).unwrap()
    };
    let coarse = run(128);
    let fine = run(256);
    let (a, b) = (&coarse.profiles[1], &fine.profiles[1]);
    let gap = (0..a.len())
        .map(|j| (a.values()[j] - b.values()[2 * j]).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 1e-4 * b.max_abs(), "{gap:.3e}");
}

#[test]
fn bad_output_times_are_rejected() {
    let g = Grid::new(16.0, 64).unwrap();
    let f0 = g.zeros();
    let p = params(1.0, 0.0, 1.0);
    let c = StepControls::default();
    assert!(simulate(&f0, &p, &[0.2, 0.1], &c).is_err());
    assert!(simulate(&f0, &p, &[0.0, 0.1], &c).is_err());
    assert!(PhysicalParams::new(-1.0, 0.0, 1.0).is_err());
    assert!(PhysicalParams::new(1.0, -0.1, 1.0).is_err());
}

//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use capstokes::{DensityPair, Grid};

pub fn gaussian_density(g: &Grid) -> DensityPair {
    DensityPair::new(
        g.sample(|s| (-(s - 0.3) * (s - 0.3)).exp()),
        g.sample(|s| 0.5 * (-(s + 0.4) * (s + 0.4)).exp()),
    )
    .unwrap()
}

/// Fourier transform `∫ e^{-iks} e^{-(s-c)²} ds`.
fn gauss_hat(k: f64, c: f64) -> (f64, f64) {
    let m = PI.sqrt() * (-k * k / 4.0).exp();
    (m * (k * c).cos(), -m * (k * c).sin())
}

/// Velocity and pressure of the flat single layer with density `gaussian_density`,
/// by inverse Fourier transform in `x₁` of the half-plane Stokes solution.
pub fn flat_oracle(x1: f64, y: f64, mu: f64) -> ([f64; 2], f64) {
    type C = (f64, f64);
    let mul = |a: C, b: C| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let nodes = [-(0.6_f64).sqrt(), 0.0, (0.6_f64).sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let width = 0.002;
    let (mut v1, mut v2, mut p) = (0.0, 0.0, 0.0);
    let ay = y.abs();
    for cell in 0..(30.0 / width) as usize {
        let mid = (cell as f64 + 0.5) * width;
        for (t, w) in nodes.iter().zip(&weights) {
            let k = mid + 0.5 * width * t;
            let b1 = gauss_hat(k, 0.3);
            let b2 = gauss_hat(k, -0.4);
            let b2 = (0.5 * b2.0, 0.5 * b2.1);
            // F = β', F̂ = ik β̂.
            let f1 = mul((0.0, k), b1);
            let f2 = mul((0.0, k), b2);
            let e = (-k * ay).exp() / (4.0 * mu);
            let g11 = e * (1.0 / k - ay);
            let g22 = e * (1.0 / k + ay);
            let g12 = (0.0, -e * y);
            let u1 = (g11 * f1.0 + mul(g12, f2).0, g11 * f1.1 + mul(g12, f2).1);
            let u2 = (mul(g12, f1).0 + g22 * f2.0, mul(g12, f1).1 + g22 * f2.1);
            let ph = {
                let a = mul((0.0, -1.0), f1);
                let s = y.signum();
                (
                    0.5 * (-k * ay).exp() * (a.0 + s * f2.0),
                    0.5 * (-k * ay).exp() * (a.1 + s * f2.1),
                )
            };
            let phase = (k * x1).cos();
            let sphase = (k * x1).sin();
            let re = |z: C| z.0 * phase - z.1 * sphase;
            let wk = 0.5 * width * w;
            v1 += wk * re(u1);
            v2 += wk * re(u2);
            p += wk * re(ph);
        }
    }
    ([v1 / PI, v2 / PI], p / PI)
}

//! Test curves: circles, ellipses and seeded band-limited perturbations.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::ClosedCurve;

/// Counterclockwise circle of radius `r` centered at the origin.
pub fn circle(n: usize, r: f64) -> ClosedCurve {
    ClosedCurve::from_fn(n, |t| [r * t.cos(), r * t.sin()]).expect("valid circle")
}

/// `(a cos θ, b sin θ)`.
pub fn ellipse(n: usize, a: f64, b: f64) -> ClosedCurve {
    ClosedCurve::from_fn(n, |t| [a * t.cos(), b * t.sin()]).expect("valid ellipse")
}

/// Polar curve `ρ(θ) = r (1 + Σ a_q cos qθ + b_q sin qθ)`.
pub fn polar(n: usize, r: f64, modes: &[(usize, f64, f64)]) -> ClosedCurve {
    ClosedCurve::from_fn(n, |t| {
        let rho = r * (1.0
            + modes
                .iter()
                .map(|&(q, a, b)| a * (q as f64 * t).cos() + b * (q as f64 * t).sin())
                .sum::<f64>());
        [rho * t.cos(), rho * t.sin()]
    })
    .expect("valid polar curve")
}

/// Unit circle with a mode-3 wiggle of relative amplitude `amplitude`.
pub fn perturbed_circle(n: usize, amplitude: f64) -> ClosedCurve {
    polar(n, 1.0, &[(3, amplitude, 0.0)])
}

/// Seeded unit circle perturbed in modes 2–6 with amplitudes up to 4%.
pub fn random_curve(n: usize, seed: u64) -> ClosedCurve {
    random_curve_with(n, seed, 0.04)
}

pub fn random_curve_with(n: usize, seed: u64, amplitude: f64) -> ClosedCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(usize, f64, f64)> = (2..=6)
        .map(|q| {
            (
                q,
                rng.gen_range(-amplitude..amplitude),
                rng.gen_range(-amplitude..amplitude),
            )
        })
        .collect();
    let phase = rng.gen_range(0.0..TAU);
    let c = polar(n, 1.0, &modes);
    let (s, co) = phase.sin_cos();
    c.map(|v| [co * v[0] - s * v[1], s * v[0] + co * v[1]])
        .expect("rotation keeps the curve valid")
}

/// Seeded band-limited periodic samples with modes `1..=max_mode`.
pub fn random_band_limited(n: usize, max_mode: usize, rng: &mut impl Rng) -> Vec<f64> {
    let coeffs: Vec<(f64, f64)> = (0..=max_mode)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(q, &(a, b))| a * (q as f64 * t).cos() + b * (q as f64 * t).sin())
                .sum()
        })
        .collect()
}

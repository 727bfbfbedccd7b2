//! The Euler–Lagrange operator `E_m` on discrete curves. The flow velocity is
//! `-E_m ν`.

use rayon::prelude::*;

use crate::curve::{check_jet_resolution, frame, jet_levels, measure, ClosedCurve, Periodic};
use crate::energy::{check_order, energy_direct_generic};
use crate::error::{Error, Result};
use crate::jet;
use crate::scalar::{Dual, Scalar};

pub(crate) fn euler_lagrange_generic<S: Scalar>(
    op: &Periodic,
    x: &[S],
    y: &[S],
    m: usize,
) -> Result<Vec<S>> {
    let ops = jet::compiled(m)?;
    let fr = frame(op, x, y);
    let levels = jet_levels(op, &fr, 2 * m);
    Ok(ops.euler_lagrange.eval(&levels, x.len()))
}

/// Pointwise `E_m` from the symbolic operator evaluated on the jet `k..k_{2m}`.
pub fn euler_lagrange(c: &ClosedCurve, m: usize) -> Result<Vec<f64>> {
    check_order(c.n(), m)?;
    check_jet_resolution(c.n(), 2 * m)?;
    euler_lagrange_generic(&c.op(), &c.xs(), &c.ys(), m)
}

/// `E_m` at `c` and its exact discrete derivative along the displacement
/// field `f · dirs`.
pub fn euler_lagrange_tangent(
    c: &ClosedCurve,
    m: usize,
    dirs: &[[f64; 2]],
    f: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_order(c.n(), m)?;
    check_jet_resolution(c.n(), 2 * m)?;
    let x: Vec<Dual> = c
        .vertices()
        .iter()
        .zip(dirs)
        .zip(f)
        .map(|((p, d), &s)| Dual::new(p[0], s * d[0]))
        .collect();
    let y: Vec<Dual> = c
        .vertices()
        .iter()
        .zip(dirs)
        .zip(f)
        .map(|((p, d), &s)| Dual::new(p[1], s * d[1]))
        .collect();
    let e = euler_lagrange_generic(&c.op(), &x, &y, m)?;
    Ok(e.iter().map(|d| (d.re, d.eps)).unzip())
}

/// `‖E_m‖_{L²(ds)}`.
pub fn gradient_norm(c: &ClosedCurve, m: usize) -> Result<f64> {
    let e = euler_lagrange(c, m)?;
    Ok(measure(c)?.l2_norm(&e))
}

/// Default finite-difference step relative to the curve length. At
/// `1e-5` the Richardson truncation error already reaches 1e-3 for `m = 3`
/// at N = 256; from `1e-6` down the error sits on its step-independent floor.
pub const DEFAULT_RELATIVE_STEP: f64 = 1e-6;

/// Finite-difference oracle for the L²-gradient: central differences of
/// the direct discrete energy under vertex-wise normal displacements,
/// divided by the vertex quadrature weight. Steps `h` and `h/2` are combined
/// by Richardson extrapolation.
pub fn discrete_gradient(c: &ClosedCurve, m: usize, h: f64) -> Result<Vec<f64>> {
    check_order(c.n(), m)?;
    let geo = measure(c)?;
    let rel = h / geo.length;
    if !(1e-7..=1e-3).contains(&rel) {
        return Err(Error::InvalidArgument(format!(
            "step {h:e} is {rel:e} of the length; must lie in [1e-7, 1e-3]"
        )));
    }
    let op = c.op();
    let x0 = c.xs();
    let y0 = c.ys();
    let w = geo.weights();
    let energy_at = |j: usize, s: f64| {
        let mut x = x0.clone();
        let mut y = y0.clone();
        x[j] += s * geo.normal[j][0];
        y[j] += s * geo.normal[j][1];
        energy_direct_generic(&op, &x, &y, m)
    };
    let pairs: Vec<(f64, f64)> = (0..c.n())
        .into_par_iter()
        .map(|j| {
            let coarse = (energy_at(j, h) - energy_at(j, -h)) / (2.0 * h * w[j]);
            let fine = (energy_at(j, 0.5 * h) - energy_at(j, -0.5 * h)) / (h * w[j]);
            (coarse, fine)
        })
        .collect();

    let f0 = energy_direct_generic(&op, &x0, &y0, m);
    let w_min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let rounding = 16.0 * f64::EPSILON * f0.abs() / (0.5 * h * w_min);
    let rms = (pairs.iter().map(|p| p.1 * p.1).sum::<f64>() / c.n() as f64).sqrt();
    if rounding > 1e-3 * rms.max(f64::MIN_POSITIVE) {
        return Err(Error::StepTooSmall(format!(
            "rounding level {rounding:e} against gradient size {rms:e}"
        )));
    }
    Ok(pairs
        .into_iter()
        .map(|(coarse, fine)| (4.0 * fine - coarse) / 3.0)
        .collect())
}

/// Relative L²(ds) discrepancy `‖a - b‖ / ‖b‖`.
pub fn relative_l2_error(c: &ClosedCurve, a: &[f64], b: &[f64]) -> Result<f64> {
    let geo = measure(c)?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(geo.l2_norm(&diff) / geo.l2_norm(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::critical_radius;
    use crate::suite;
    use std::f64::consts::TAU;

    /// Roundoff in `E_m` grows like ε·(arc-length Nyquist)^{2m+2}.
    fn roundoff_floor(n: usize, r: f64, m: usize) -> f64 {
        (1e-16 * (n as f64 / (2.0 * r)).powi(2 * m as i32 + 2)).max(1e-8)
    }

    #[test]
    fn circle_family() {
        for m in 1..=3 {
            for r in [0.8, 1.0, 1.4] {
                let c = suite::circle(32, r);
                let k = 1.0 / r;
                let want = k - (2 * m - 1) as f64 * k.powi(2 * m as i32 + 1);
                let e = euler_lagrange(&c, m).unwrap();
                let tol = roundoff_floor(32, r, m);
                assert!(e.iter().all(|v| (v - want).abs() < tol), "m={m} r={r}");
            }
            let rm = critical_radius(m);
            let crit = suite::circle(32, rm);
            let tol = roundoff_floor(32, rm, m);
            assert!(euler_lagrange(&crit, m).unwrap().iter().all(|v| v.abs() < tol));
            assert!(gradient_norm(&crit, m).unwrap() <= tol * (TAU * rm).sqrt());
            if m <= 2 {
                assert!(gradient_norm(&crit, m).unwrap() <= 1e-8);
            }
        }
    }

    #[test]
    fn elastic_gradient_norm_on_circles() {
        for r in [0.5_f64, 2.0] {
            let c = suite::circle(64, r);
            let want = (1.0 / r - 1.0 / r.powi(3)).abs() * (TAU * r).sqrt();
            let got = gradient_norm(&c, 1).unwrap();
            assert!((got - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn gradient_norm_scaling() {
        // E_m = E_top + k with E_top of weight 2m+1: under dilation by λ the
        // two parts scale as λ^{-(2m+1)} and λ^{-1}.
        let c = suite::random_curve(128, 4);
        let lambda = 1.5;
        let big = c.map(|v| [lambda * v[0], lambda * v[1]]).unwrap();
        for m in 1..=2 {
            let e = euler_lagrange(&c, m).unwrap();
            let k = crate::curve::curvature_jet(&c, 0).unwrap().k_levels.remove(0);
            let eb = euler_lagrange(&big, m).unwrap();
            for i in 0..c.n() {
                let top = e[i] - k[i];
                let want = top * lambda.powi(-(2 * m as i32 + 1)) + k[i] / lambda;
                assert!((eb[i] - want).abs() < 1e-8 * (1.0 + top.abs()));
            }
        }
    }

    #[test]
    fn translation_and_rotation_orthogonality() {
        for seed in 0..5 {
            let c = suite::random_curve(256, seed);
            let geo = measure(&c).unwrap();
            let ctr = c.centroid();
            for m in 1..=3 {
                let e = euler_lagrange(&c, m).unwrap();
                let scale = geo.l2_norm(&e) * geo.length.sqrt();
                let nx: Vec<f64> = e.iter().zip(&geo.normal).map(|(v, n)| v * n[0]).collect();
                let ny: Vec<f64> = e.iter().zip(&geo.normal).map(|(v, n)| v * n[1]).collect();
                let rot: Vec<f64> = e
                    .iter()
                    .zip(&geo.normal)
                    .zip(c.vertices())
                    .map(|((v, n), p)| {
                        // J(x - c) = (-(y - cy), x - cx)
                        v * (-(p[1] - ctr[1]) * n[0] + (p[0] - ctr[0]) * n[1])
                    })
                    .collect();
                for (name, u) in [("x", nx), ("y", ny), ("rot", rot)] {
                    let v = geo.integrate(&u);
                    assert!(v.abs() < 1e-8 * scale.max(1.0), "seed={seed} m={m} {name}: {v:e}");
                }
            }
        }
    }

    #[test]
    fn matches_finite_differences() {
        for seed in 0..3 {
            let c = suite::random_curve(256, seed);
            let h = DEFAULT_RELATIVE_STEP * measure(&c).unwrap().length;
            for m in 1..=3 {
                let e = euler_lagrange(&c, m).unwrap();
                let g = discrete_gradient(&c, m, h).unwrap();
                let err = relative_l2_error(&c, &e, &g).unwrap();
                assert!(err <= 1e-4, "seed={seed} m={m}: {err:e}");
            }
        }
    }

    #[test]
    fn finite_difference_gradient_vanishes_on_elastic_circle() {
        let c = suite::circle(64, 1.0);
        let g = discrete_gradient(&c, 1, 1e-5 * TAU).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-6), "{:e}", g[0]);
    }

    #[test]
    fn dilation_mode_matches_radial_derivative() {
        // ⟨grad, 1⟩ = dF/dr on circles
        for m in 1..=2 {
            let r = 1.3;
            let c = suite::circle(64, r);
            let g = discrete_gradient(&c, m, 1e-5 * TAU * r).unwrap();
            let geo = measure(&c).unwrap();
            let pairing = geo.integrate(&g);
            let dfdr = TAU * (1.0 + (1.0 - 2.0 * m as f64) * r.powi(-2 * m as i32));
            assert!((pairing - dfdr).abs() < 1e-4 * dfdr.abs(), "m={m}: {pairing} vs {dfdr}");
        }
    }

    #[test]
    fn step_bounds() {
        let c = suite::circle(64, 1.0);
        assert!(matches!(discrete_gradient(&c, 1, 1e-9), Err(Error::InvalidArgument(_))));
        assert!(matches!(discrete_gradient(&c, 1, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tangent_matches_difference_quotient() {
        let c = suite::random_curve(64, 2);
        let geo = measure(&c).unwrap();
        let f: Vec<f64> = (0..64).map(|i| (3.0 * TAU * i as f64 / 64.0).cos()).collect();
        let (e0, de) = euler_lagrange_tangent(&c, 1, &geo.normal, &f).unwrap();
        let eps = 1e-6;
        let fp: Vec<f64> = f.iter().map(|v| v * eps).collect();
        let fm: Vec<f64> = f.iter().map(|v| -v * eps).collect();
        let ep = euler_lagrange(&c.offset_along(&geo.normal, &fp).unwrap(), 1).unwrap();
        let em = euler_lagrange(&c.offset_along(&geo.normal, &fm).unwrap(), 1).unwrap();
        let e = euler_lagrange(&c, 1).unwrap();
        for i in 0..64 {
            assert_eq!(e0[i], e[i]);
            let fd = (ep[i] - em[i]) / (2.0 * eps);
            assert!((fd - de[i]).abs() < 1e-5 * (1.0 + de[i].abs()));
        }
    }
}

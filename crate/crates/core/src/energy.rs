//! `F_m = ∮ 1 + |∂_s^m ν|² ds` by direct differentiation of the normal and by
//! the symbolic integrand evaluated on the curvature jet.

use std::f64::consts::TAU;

use crate::curve::{d_s, frame, jet_levels, ClosedCurve, Periodic};
use crate::error::{Error, Result};
use crate::jet;
use crate::scalar::Scalar;

pub(crate) fn check_order(n: usize, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("order m must be at least 1".into()));
    }
    if n < 8 * (m + 1) {
        return Err(Error::ResolutionExceeded(format!(
            "order m = {m} needs at least {} vertices, have {n}",
            8 * (m + 1)
        )));
    }
    Ok(())
}

pub(crate) fn energy_direct_generic<S: Scalar>(op: &Periodic, x: &[S], y: &[S], m: usize) -> S {
    let fr = frame(op, x, y);
    let mut vx = fr.nx.clone();
    let mut vy = fr.ny.clone();
    for _ in 0..m {
        vx = d_s(op, &fr.g, &vx);
        vy = d_s(op, &fr.g, &vy);
    }
    let h = TAU / x.len() as f64;
    let one = S::from_f64(1.0);
    (0..x.len()).fold(S::from_f64(0.0), |acc, i| {
        acc + (one + vx[i] * vx[i] + vy[i] * vy[i]) * fr.g[i].scale(h)
    })
}

/// Energy from `m` discrete arc-length derivatives of the normal's components.
pub fn energy_direct(c: &ClosedCurve, m: usize) -> Result<f64> {
    check_order(c.n(), m)?;
    Ok(energy_direct_generic(&c.op(), &c.xs(), &c.ys(), m))
}

/// Energy from the symbolic integrand evaluated on the curvature jet.
pub fn energy_via_jet(c: &ClosedCurve, m: usize) -> Result<f64> {
    check_order(c.n(), m)?;
    let ops = jet::compiled(m)?;
    let op = c.op();
    let fr = frame(&op, &c.xs(), &c.ys());
    let levels = jet_levels(&op, &fr, m - 1);
    let vals = ops.integrand.eval(&levels, c.n());
    let h = TAU / c.n() as f64;
    Ok(vals.iter().zip(&fr.g).map(|(v, g)| v * g).sum::<f64>() * h)
}

/// `F_m` of the circle of radius `r`.
pub fn circle_energy(m: usize, r: f64) -> f64 {
    TAU * r * (1.0 + r.powi(-2 * m as i32))
}

/// Radius of the critical circle, `(2m-1)^{1/(2m)}`.
pub fn critical_radius(m: usize) -> f64 {
    ((2 * m - 1) as f64).powf(1.0 / (2 * m) as f64)
}

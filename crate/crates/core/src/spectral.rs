//! The discrete second variation at (numerical) critical points.
//!
//! Columns of the Jacobian `J_ij = ∂E_i/∂f_j` of `f ↦ E_m(γ + f ν)` are exact
//! directional derivatives of the discrete operator, computed with dual
//! numbers. Against the `L²(ds)` inner product the matrix is
//! `A = W^{1/2} J W^{-1/2}` with `W` the quadrature weights.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::curve::{measure, resample_uniform, ClosedCurve, GeometricData, Periodic};
use crate::energy::check_order;
use crate::error::{Error, Result};
use crate::flow::{self, FlowConfig};
use crate::gradient::{euler_lagrange, euler_lagrange_generic};
use crate::scalar::Dual;

/// Largest gradient norm at which [`assemble`] accepts a basepoint.
pub const CRITICAL_GRAD_LIMIT: f64 = 1e-5;
pub const KERNEL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SecondVariationMatrix {
    /// `W^{1/2} J W^{-1/2}`, not symmetrized.
    pub entries: DMatrix<f64>,
    pub basepoint: ClosedCurve,
    pub m: usize,
    sqrt_w: Vec<f64>,
    geometry: GeometricData,
}

/// Raw Jacobian of `f ↦ E_m(c + f ν)` at `f = 0`.
pub fn jacobian(c: &ClosedCurve, m: usize) -> Result<(DMatrix<f64>, GeometricData)> {
    check_order(c.n(), m)?;
    // resolution guard for 2m derivatives
    euler_lagrange(c, m)?;
    let geo = measure(c)?;
    let n = c.n();
    let op = Periodic::get(n, c.backend());
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let nj = geo.normal[j];
            let mut x: Vec<Dual> = c.vertices().iter().map(|p| Dual::new(p[0], 0.0)).collect();
            let mut y: Vec<Dual> = c.vertices().iter().map(|p| Dual::new(p[1], 0.0)).collect();
            x[j].eps = nj[0];
            y[j].eps = nj[1];
            euler_lagrange_generic(&op, &x, &y, m)
                .map(|e| e.iter().map(|d| d.eps).collect())
        })
        .collect::<Result<_>>()?;
    let jac = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    Ok((jac, geo))
}

pub fn assemble(c: &ClosedCurve, m: usize) -> Result<SecondVariationMatrix> {
    let e = euler_lagrange(c, m)?;
    let geo = measure(c)?;
    let grad_norm = geo.l2_norm(&e);
    if grad_norm > CRITICAL_GRAD_LIMIT {
        return Err(Error::NotCritical {
            grad_norm,
            limit: CRITICAL_GRAD_LIMIT,
        });
    }
    let (jac, geometry) = jacobian(c, m)?;
    let sqrt_w: Vec<f64> = geometry.weights().iter().map(|w| w.sqrt()).collect();
    let n = c.n();
    let entries = DMatrix::from_fn(n, n, |i, j| sqrt_w[i] * jac[(i, j)] / sqrt_w[j]);
    Ok(SecondVariationMatrix {
        entries,
        basepoint: c.clone(),
        m,
        sqrt_w,
        geometry,
    })
}

impl SecondVariationMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// `‖A - Aᵀ‖_F / ‖A‖_F`.
    pub fn asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).norm() / self.entries.norm()
    }

    pub fn symmetrized(&self) -> DMatrix<f64> {
        (&self.entries + self.entries.transpose()) * 0.5
    }

    /// `∮ (δE f) f ds / ∮ f² ds` for vertex values `f`.
    pub fn rayleigh_quotient(&self, f: &[f64]) -> f64 {
        let u = DVector::from_iterator(self.n(), f.iter().zip(&self.sqrt_w).map(|(v, s)| v * s));
        let au = &self.entries * &u;
        u.dot(&au) / u.dot(&u)
    }

    /// `∮ (δE f) f ds`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let u = DVector::from_iterator(self.n(), f.iter().zip(&self.sqrt_w).map(|(v, s)| v * s));
        u.dot(&(&self.entries * &u))
    }

    /// Parameter-angle Fourier mode `cos(qθ)` on the vertices.
    pub fn cosine_mode(&self, q: usize) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| (q as f64 * TAU * i as f64 / n as f64).cos()).collect()
    }

    /// Rayleigh quotient of mode `q` over the leading symbol `2 (q/r)^{2m+2}`,
    /// with `r = length/2π`.
    pub fn leading_symbol_ratio(&self, q: usize) -> f64 {
        let r = self.geometry.length / TAU;
        let rq = self.rayleigh_quotient(&self.cosine_mode(q));
        rq / (2.0 * (q as f64 / r).powi(2 * self.m as i32 + 2))
    }

    /// `Id + 2 L̄^{m+1}`, where `L̄` is `-∂_ss` for the mean arc element, as a
    /// symbol over FFT bins.
    fn preconditioner_symbol(&self, power: f64) -> impl Fn(usize) -> Complex64 + '_ {
        let op = self.basepoint.op();
        let gbar = self.geometry.length / TAU;
        let m = self.m;
        move |j| {
            let lam = op.symbol(j).norm_sqr() / (gbar * gbar);
            Complex64::new((1.0 + 2.0 * lam.powi(m as i32 + 1)).powf(power), 0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Eigenvalues of the symmetrized `A` on the complement of the Nyquist
    /// mode, ascending.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    /// Eigenvalues of `P^{-1/2} Sym(A) P^{-1/2}` on the same subspace.
    pub normalized_eigenvalues: Vec<f64>,
    /// Rayleigh quotient of the excluded normal mode `(-1)^i`.
    pub nyquist_rayleigh_quotient: f64,
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenvalues of symmetric `m` restricted to the orthogonal complement of
/// unit vector `v`.
fn restricted_eigenvalues(m: &DMatrix<f64>, v: &DVector<f64>) -> Vec<f64> {
    let n = m.nrows();
    let q = DMatrix::identity(n, n) - v * v.transpose();
    let mq = &q * m * &q;
    let eig = SymmetricEigen::new((&mq + mq.transpose()) * 0.5);
    let drop = (0..n)
        .max_by(|&i, &j| {
            let a = eig.eigenvectors.column(i).dot(v).abs();
            let b = eig.eigenvectors.column(j).dot(v).abs();
            a.total_cmp(&b)
        })
        .unwrap_or(0);
    let mut ev: Vec<f64> = (0..n).filter(|&i| i != drop).map(|i| eig.eigenvalues[i]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

fn circulant(op: &Periodic, mult: impl Fn(usize) -> Complex64) -> DMatrix<f64> {
    let n = op.n();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = op.apply_multiplier(&e, &mult);
        m.set_column(j, &DVector::from_vec(col));
    }
    m
}

/// Full eigendecomposition on the complement of the normal Nyquist mode
/// `(-1)^i`. Both derivative symbols vanish there, and the mode aliases onto
/// resolved frequencies, so it carries a spurious eigenvalue; the flow never
/// excites it.
///
/// The kernel is counted on the congruent matrix `P^{-1/2} Sym(A) P^{-1/2}`
/// with `P = Id + 2 L̄^{m+1}`. Congruence keeps the inertia, while the
/// rescaling removes the `q^{2m+2}` growth that would otherwise put low
/// modes below `KERNEL_TOL · ‖A‖`.
pub fn spectrum(a: &SecondVariationMatrix) -> Spectrum {
    let n = a.n();
    let sym = a.symmetrized();
    let zigzag: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let v = DVector::from_iterator(n, zigzag.iter().zip(&a.sqrt_w).map(|(z, s)| z * s)).normalize();
    let op = a.basepoint.op();
    let p = circulant(&op, a.preconditioner_symbol(-0.5));
    let b = &p * &sym * &p;
    let vb = (&p * &v).normalize();
    let normalized = restricted_eigenvalues(&b, &vb);
    let scale = normalized.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let kernel_dim = normalized
        .iter()
        .filter(|v| v.abs() <= KERNEL_TOL * scale)
        .count();
    Spectrum {
        eigenvalues: restricted_eigenvalues(&sym, &v),
        kernel_dim,
        normalized_eigenvalues: normalized,
        nyquist_rayleigh_quotient: a.rayleigh_quotient(&zigzag),
    }
}

/// Discrete `L = -∂_ss` with the curve's own metric, as a matrix.
fn laplacian(c: &ClosedCurve, geo: &GeometricData) -> DMatrix<f64> {
    let n = c.n();
    let op = c.op();
    let ds = |u: &[f64]| -> Vec<f64> {
        op.derivative(u)
            .iter()
            .zip(&geo.arc_element)
            .map(|(d, g)| d / g)
            .collect()
    };
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col: Vec<f64> = ds(&ds(&e)).into_iter().map(|v| -v).collect();
        l.set_column(j, &DVector::from_vec(col));
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub min_eigenvalue: f64,
    pub holds: bool,
    /// Eigenvalues of the symmetrized operator, ascending.
    pub eigenvalues: Vec<f64>,
}

/// Smallest eigenvalue of `C·Id + 2 L^{m+1}` in the `L²(ds)` inner product.
pub fn coercivity_check(c: &ClosedCurve, m: usize, constant: f64) -> Result<CoercivityReport> {
    let geo = measure(c)?;
    let n = c.n();
    let l = laplacian(c, &geo);
    let mut lp = DMatrix::identity(n, n);
    for _ in 0..=m {
        lp = &lp * &l;
    }
    let sw: Vec<f64> = geo.weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { constant } else { 0.0 };
        id + 2.0 * sw[i] * lp[(i, j)] / sw[j]
    });
    let eigenvalues = sorted_eigenvalues((&a + a.transpose()) * 0.5);
    let min_eigenvalue = eigenvalues[0];
    Ok(CoercivityReport {
        min_eigenvalue,
        holds: min_eigenvalue >= constant - 1e-8,
        eigenvalues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolishReport {
    pub iterations: usize,
    pub initial_grad_norm: f64,
    pub grad_norm: f64,
}

/// Damped Newton iteration on the normal graph: solves `J f = -E` by the
/// pseudo-inverse of the symmetrized matrix (dropping near-kernel modes),
/// halves the step until `‖E‖` decreases, resamples, and stops when a step
/// no longer helps or `‖E‖ ≤ tol`.
pub fn polish(
    c: &ClosedCurve,
    m: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(ClosedCurve, PolishReport)> {
    let mut cur = resample_uniform(c)?;
    let norm = |c: &ClosedCurve| -> Result<f64> { Ok(measure(c)?.l2_norm(&euler_lagrange(c, m)?)) };
    let mut g = norm(&cur)?;
    let initial_grad_norm = g;
    let mut iterations = 0;
    while iterations < max_iter && g > tol {
        let (jac, geo) = jacobian(&cur, m)?;
        let e = euler_lagrange(&cur, m)?;
        let sw: Vec<f64> = geo.weights().iter().map(|w| w.sqrt()).collect();
        let n = cur.n();
        let a = DMatrix::from_fn(n, n, |i, j| sw[i] * jac[(i, j)] / sw[j]);
        let eig = SymmetricEigen::new((&a + a.transpose()) * 0.5);
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let b = DVector::from_iterator(n, e.iter().zip(&sw).map(|(v, s)| -v * s));
        let coeffs = eig.eigenvectors.transpose() * &b;
        let mut u = DVector::zeros(n);
        for (k, lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() > 1e-10 * scale {
                u += eig.eigenvectors.column(k) * (coeffs[k] / lam);
            }
        }
        let f: Vec<f64> = u.iter().zip(&sw).map(|(v, s)| v / s).collect();
        let mut damping = 1.0;
        let mut improved = None;
        for _ in 0..12 {
            let step: Vec<f64> = f.iter().map(|v| damping * v).collect();
            if let Ok(next) = cur.offset_along(&geo.normal, &step).and_then(|c| resample_uniform(&c)) {
                if let Ok(gn) = norm(&next) {
                    if gn < g {
                        improved = Some((next, gn));
                        break;
                    }
                }
            }
            damping *= 0.5;
        }
        iterations += 1;
        match improved {
            Some((next, gn)) => {
                cur = next;
                g = gn;
            }
            None => break,
        }
    }
    Ok((
        cur,
        PolishReport {
            iterations,
            initial_grad_norm,
            grad_norm: g,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub curve: ClosedCurve,
    pub radius: f64,
    pub flow_steps: usize,
    pub flow_grad_norm: f64,
    pub polish: PolishReport,
}

/// Runs the flow from `initial` under `cfg`, then polishes the end point.
pub fn find_critical(initial: &ClosedCurve, cfg: &FlowConfig, tol: f64) -> Result<CriticalPoint> {
    let out = flow::run(initial, cfg)?;
    let (curve, polish) = polish(&out.final_state.curve, cfg.m, tol, 30)?;
    Ok(CriticalPoint {
        radius: curve.mean_radius(),
        curve,
        flow_steps: out.accepted_steps(),
        flow_grad_norm: out.final_state.grad_norm,
        polish,
    })
}

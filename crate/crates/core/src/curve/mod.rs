//! Closed immersed plane curves sampled on a uniform parameter grid.

mod diff;
mod interpolation;

pub use diff::{wavenumber, Backend, Periodic, TrigInterpolant};
pub use interpolation::gn_interpolation_check;

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Polygon of `N` vertices sampled at `θ_i = 2π i / N`, closed implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCurve {
    vertices: Vec<[f64; 2]>,
    backend: Backend,
}

impl ClosedCurve {
    pub const MIN_VERTICES: usize = 16;

    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        Self::with_backend(vertices, Backend::Spectral)
    }

    pub fn with_backend(vertices: Vec<[f64; 2]>, backend: Backend) -> Result<Self> {
        let n = vertices.len();
        if n < Self::MIN_VERTICES {
            return Err(Error::InvalidCurve(format!(
                "{n} vertices, need at least {}",
                Self::MIN_VERTICES
            )));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidCurve(format!("vertex count {n} is odd")));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite coordinate".into()));
        }
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a == b {
                return Err(Error::InvalidCurve(format!(
                    "vertices {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        Ok(ClosedCurve { vertices, backend })
    }

    /// Samples a parametrized curve at the uniform grid.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> [f64; 2]) -> Result<Self> {
        Self::new((0..n).map(|i| f(TAU * i as f64 / n as f64)).collect())
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn set_backend(&mut self, backend: Backend) {
        self.backend = backend;
    }

    pub fn xs(&self) -> Vec<f64> {
        self.vertices.iter().map(|v| v[0]).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.vertices.iter().map(|v| v[1]).collect()
    }

    pub fn op(&self) -> Arc<Periodic> {
        Periodic::get(self.n(), self.backend)
    }

    /// Same backend, new vertices.
    pub fn with_vertices(&self, vertices: Vec<[f64; 2]>) -> Result<Self> {
        Self::with_backend(vertices, self.backend)
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        self.with_vertices(self.vertices.iter().map(|&v| f(v)).collect())
    }

    /// Cyclic relabeling: vertex `i` of the result is vertex `i + shift`.
    pub fn shifted(&self, shift: usize) -> Self {
        let n = self.n();
        let vertices = (0..n).map(|i| self.vertices[(i + shift) % n]).collect();
        ClosedCurve {
            vertices,
            backend: self.backend,
        }
    }

    /// Displaces vertex `i` by `f[i] · normal[i]`.
    pub fn offset_normal(&self, f: &[f64]) -> Result<Self> {
        let geo = measure(self)?;
        self.offset_along(&geo.normal, f)
    }

    pub fn offset_along(&self, dirs: &[[f64; 2]], f: &[f64]) -> Result<Self> {
        self.with_vertices(
            self.vertices
                .iter()
                .zip(dirs)
                .zip(f)
                .map(|((p, d), &s)| [p[0] + s * d[0], p[1] + s * d[1]])
                .collect(),
        )
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.n() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(a, b), v| (a + v[0], b + v[1]));
        [sx / n, sy / n]
    }

    /// Axis-aligned bounding box `[xmin, ymin, xmax, ymax]`.
    pub fn bbox(&self) -> [f64; 4] {
        self.vertices.iter().fold(
            [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            |b, v| [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])],
        )
    }

    pub fn bbox_diameter(&self) -> f64 {
        let b = self.bbox();
        (b[2] - b[0]).hypot(b[3] - b[1])
    }

    /// Mean distance of the vertices from their centroid.
    pub fn mean_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| (v[0] - c[0]).hypot(v[1] - c[1]))
            .sum::<f64>()
            / self.n() as f64
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .collect()
    }
}

/// Metric data at the vertices.
#[derive(Debug, Clone)]
pub struct GeometricData {
    /// `|dγ/dθ|`, i.e. `√g`.
    pub arc_element: Vec<f64>,
    pub tangent: Vec<[f64; 2]>,
    pub normal: Vec<[f64; 2]>,
    pub length: f64,
}

impl GeometricData {
    /// Trapezoidal quadrature weights `√g · 2π/N`.
    pub fn weights(&self) -> Vec<f64> {
        let h = TAU / self.arc_element.len() as f64;
        self.arc_element.iter().map(|g| g * h).collect()
    }

    /// `∮ u ds`.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        let h = TAU / self.arc_element.len() as f64;
        self.arc_element.iter().zip(u).map(|(g, v)| g * v).sum::<f64>() * h
    }

    /// `(∮ u² ds)^{1/2}`.
    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        self.integrate(&sq).sqrt()
    }
}

/// Frame of the discrete curve, generic over the scalar type.
pub(crate) struct Frame<S> {
    pub g: Vec<S>,
    pub tx: Vec<S>,
    pub ty: Vec<S>,
    pub nx: Vec<S>,
    pub ny: Vec<S>,
}

pub(crate) fn derivative<S: Scalar>(op: &Periodic, u: &[S]) -> Vec<S> {
    S::map_linear(u, |v| op.derivative(v))
}

/// Arc-length derivative `(1/√g) d/dθ`.
pub(crate) fn d_s<S: Scalar>(op: &Periodic, g: &[S], u: &[S]) -> Vec<S> {
    derivative(op, u)
        .into_iter()
        .zip(g)
        .map(|(d, &gi)| d / gi)
        .collect()
}

pub(crate) fn frame<S: Scalar>(op: &Periodic, x: &[S], y: &[S]) -> Frame<S> {
    let dx = derivative(op, x);
    let dy = derivative(op, y);
    let g: Vec<S> = dx
        .iter()
        .zip(&dy)
        .map(|(&a, &b)| (a * a + b * b).sqrt())
        .collect();
    let tx: Vec<S> = dx.iter().zip(&g).map(|(&a, &gi)| a / gi).collect();
    let ty: Vec<S> = dy.iter().zip(&g).map(|(&b, &gi)| b / gi).collect();
    // ν = T rotated by -π/2
    let nx = ty.clone();
    let ny: Vec<S> = tx.iter().map(|&t| -t).collect();
    Frame { g, tx, ty, nx, ny }
}

/// `[k, k_s, ..., ∂_s^J k]` with `k = -⟨∂_s T, ν⟩`.
pub(crate) fn jet_levels<S: Scalar>(op: &Periodic, fr: &Frame<S>, j_max: usize) -> Vec<Vec<S>> {
    let dtx = d_s(op, &fr.g, &fr.tx);
    let dty = d_s(op, &fr.g, &fr.ty);
    let k: Vec<S> = (0..fr.g.len())
        .map(|i| -(dtx[i] * fr.nx[i] + dty[i] * fr.ny[i]))
        .collect();
    let mut levels = vec![k];
    for j in 0..j_max {
        let next = d_s(op, &fr.g, &levels[j]);
        levels.push(next);
    }
    levels
}

fn check_nondegenerate(g: &[f64], length: f64) -> Result<()> {
    let n = g.len() as f64;
    let floor = 1e-10 * length / n;
    if let Some((i, &gi)) = g
        .iter()
        .enumerate()
        .find(|(_, &gi)| !(gi >= floor) || !gi.is_finite())
    {
        return Err(Error::DegenerateCurve(format!(
            "arc element {gi:e} at vertex {i} below {floor:e}"
        )));
    }
    Ok(())
}

pub fn measure(c: &ClosedCurve) -> Result<GeometricData> {
    let op = c.op();
    let fr = frame(&op, &c.xs(), &c.ys());
    let length = fr.g.iter().sum::<f64>() * TAU / c.n() as f64;
    check_nondegenerate(&fr.g, length)?;
    Ok(GeometricData {
        tangent: fr.tx.iter().zip(&fr.ty).map(|(&a, &b)| [a, b]).collect(),
        normal: fr.nx.iter().zip(&fr.ny).map(|(&a, &b)| [a, b]).collect(),
        arc_element: fr.g,
        length,
    })
}

/// Curvature and its arc-length derivatives at the vertices.
#[derive(Debug, Clone)]
pub struct CurvatureJet {
    pub k_levels: Vec<Vec<f64>>,
}

impl CurvatureJet {
    pub fn max_order(&self) -> usize {
        self.k_levels.len() - 1
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.k_levels[j]
    }
}

pub(crate) fn check_jet_resolution(n: usize, j: usize) -> Result<()> {
    if 4 * j > n {
        return Err(Error::ResolutionExceeded(format!(
            "jet order {j} needs at least {} vertices, have {n}",
            4 * j
        )));
    }
    Ok(())
}

pub fn curvature_jet(c: &ClosedCurve, j_max: usize) -> Result<CurvatureJet> {
    check_jet_resolution(c.n(), j_max)?;
    let op = c.op();
    let fr = frame(&op, &c.xs(), &c.ys());
    let length = fr.g.iter().sum::<f64>() * TAU / c.n() as f64;
    check_nondegenerate(&fr.g, length)?;
    Ok(CurvatureJet {
        k_levels: jet_levels(&op, &fr, j_max),
    })
}

/// Arc-length function `s(θ)` measured from `θ = 0`, spectrally interpolated.
struct ArcLength {
    g: TrigInterpolant,
    oscillation: TrigInterpolant,
    offset: f64,
}

impl ArcLength {
    fn new(op: &Periodic, g: &[f64]) -> Self {
        let g = op.interpolant(g);
        let oscillation = g.integrate_oscillatory();
        let offset = oscillation.eval(0.0);
        ArcLength {
            g,
            oscillation,
            offset,
        }
    }

    fn at(&self, theta: f64) -> f64 {
        self.g.mean() * theta + self.oscillation.eval(theta) - self.offset
    }

    fn speed(&self, theta: f64) -> f64 {
        self.g.eval(theta)
    }

    fn length(&self) -> f64 {
        self.g.mean() * TAU
    }
}

/// Parameter `θ` near `guess` where the curve crosses the line through
/// `point` with direction `dir`.
pub(crate) fn line_crossing(
    xi: &TrigInterpolant,
    yi: &TrigInterpolant,
    point: [f64; 2],
    dir: [f64; 2],
    guess: f64,
) -> Option<f64> {
    let mut th = guess;
    for _ in 0..50 {
        let (x, dx) = xi.eval_with_derivative(th);
        let (y, dy) = yi.eval_with_derivative(th);
        let val = (x - point[0]) * dir[1] - (y - point[1]) * dir[0];
        let der = dx * dir[1] - dy * dir[0];
        if der == 0.0 {
            return None;
        }
        let step = val / der;
        th -= step;
        if step.abs() < 1e-15 {
            return Some(th);
        }
    }
    None
}

/// Resamples equispaced in arc length, keeping vertex 0 fixed.
pub fn resample_uniform(c: &ClosedCurve) -> Result<ClosedCurve> {
    resample_from(c, 0.0)
}

/// Resamples equispaced in arc length with vertex 0 on the line through
/// `anchor` along `anchor_normal`.
pub fn resample_uniform_anchored(
    c: &ClosedCurve,
    anchor: [f64; 2],
    anchor_normal: [f64; 2],
) -> Result<ClosedCurve> {
    let op = c.op();
    let xi = op.interpolant(&c.xs());
    let yi = op.interpolant(&c.ys());
    let theta0 = line_crossing(&xi, &yi, anchor, anchor_normal, 0.0).ok_or_else(|| {
        Error::DegenerateCurve("anchor normal line does not meet the curve".into())
    })?;
    resample_from(c, theta0)
}

fn resample_from(c: &ClosedCurve, theta0: f64) -> Result<ClosedCurve> {
    let op = c.op();
    let n = c.n();
    let geo = measure(c)?;
    let xi = op.interpolant(&c.xs());
    let yi = op.interpolant(&c.ys());
    let arc = ArcLength::new(&op, &geo.arc_element);
    let length = arc.length();
    let s0 = arc.at(theta0);
    let mut vertices = Vec::with_capacity(n);
    let mut th = theta0;
    for j in 0..n {
        let target = s0 + length * j as f64 / n as f64;
        // initial guess: advance by the average parameter speed
        if j > 0 {
            th += TAU / n as f64 * (length / TAU) / arc.speed(th).max(1e-300);
        }
        let mut converged = false;
        for _ in 0..60 {
            let r = arc.at(th) - target;
            let sp = arc.speed(th);
            if !(sp > 0.0) {
                return Err(Error::DegenerateCurve(
                    "non-positive interpolated arc element".into(),
                ));
            }
            let step = r / sp;
            th -= step;
            if step.abs() < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::DegenerateCurve(
                "arc-length inversion did not converge".into(),
            ));
        }
        vertices.push([xi.eval(th), yi.eval(th)]);
    }
    let out = c
        .with_vertices(vertices)
        .map_err(|e| Error::DegenerateCurve(e.to_string()))?;
    let edges = out.edge_lengths();
    let (lo, hi) = edges
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(a, b), &e| (a.min(e), b.max(e)));
    if lo < 0.1 * hi {
        return Err(Error::DegenerateCurve(format!(
            "edge ratio {:.3} after resampling",
            lo / hi
        )));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveJson {
    n_vertices: usize,
    vertices: Vec<[f64; 2]>,
}

impl ClosedCurve {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&CurveJson {
            n_vertices: self.n(),
            vertices: self.vertices.clone(),
        })
        .expect("curve serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let parsed: CurveJson = serde_json::from_str(s)?;
        if parsed.n_vertices != parsed.vertices.len() {
            return Err(Error::InvalidCurve(format!(
                "n_vertices = {} but {} vertices listed",
                parsed.n_vertices,
                parsed.vertices.len()
            )));
        }
        if let (Some(a), Some(b)) = (parsed.vertices.first(), parsed.vertices.last()) {
            if parsed.vertices.len() > 1 && (a[0] - b[0]).hypot(a[1] - b[1]) <= 1e-12 {
                return Err(Error::InvalidCurve(
                    "repeated endpoint; curves are closed implicitly".into(),
                ));
            }
        }
        Self::new(parsed.vertices)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

//! Periodic differentiation on a uniform grid over `[0, 2π)`.
//!
//! Both backends are circulant, so they are applied through the FFT with the
//! backend's symbol `σ(q)` for `d/dθ`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Fourier pseudospectral differentiation.
    #[default]
    Spectral,
    /// Fourth-order centered finite differences.
    Fd4,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Spectral => "spectral",
            Backend::Fd4 => "fd4",
        })
    }
}

impl FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "spectral" => Ok(Backend::Spectral),
            "fd4" => Ok(Backend::Fd4),
            other => Err(format!("unknown backend `{other}` (expected spectral|fd4)")),
        }
    }
}

/// Signed wavenumber of FFT bin `j` on `n` points. The Nyquist bin maps to `n/2`.
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

pub struct Periodic {
    n: usize,
    backend: Backend,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    symbol: Vec<Complex64>,
}

impl fmt::Debug for Periodic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Periodic")
            .field("n", &self.n)
            .field("backend", &self.backend)
            .finish()
    }
}

impl Periodic {
    /// Shared operator for `n` points (plans are cached per process).
    pub fn get(n: usize, backend: Backend) -> Arc<Periodic> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, Backend), Arc<Periodic>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().unwrap();
        guard
            .entry((n, backend))
            .or_insert_with(|| Arc::new(Periodic::new(n, backend)))
            .clone()
    }

    fn new(n: usize, backend: Backend) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let h = std::f64::consts::TAU / n as f64;
        let symbol = (0..n)
            .map(|j| {
                let q = wavenumber(j, n);
                match backend {
                    Backend::Spectral => {
                        if 2 * q.unsigned_abs() as usize == n {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(0.0, q as f64)
                        }
                    }
                    Backend::Fd4 => {
                        let qh = q as f64 * h;
                        Complex64::new(0.0, (8.0 * qh.sin() - (2.0 * qh).sin()) / (6.0 * h))
                    }
                }
            })
            .collect();
        Periodic {
            n,
            backend,
            forward,
            inverse,
            symbol,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Symbol of `d/dθ` at FFT bin `j`.
    pub fn symbol(&self, j: usize) -> Complex64 {
        self.symbol[j]
    }

    /// Unnormalized DFT of real data.
    pub fn spectrum(&self, u: &[f64]) -> Vec<Complex64> {
        assert_eq!(u.len(), self.n, "length mismatch");
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse of [`Periodic::spectrum`], keeping the real part.
    pub fn synthesize(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let s = 1.0 / self.n as f64;
        spec.into_iter().map(|c| c.re * s).collect()
    }

    /// Multiplies the spectrum bin-wise by `mult(j)`.
    pub fn apply_multiplier(&self, u: &[f64], mult: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let mut spec = self.spectrum(u);
        for (j, c) in spec.iter_mut().enumerate() {
            *c *= mult(j);
        }
        self.synthesize(spec)
    }

    /// `d/dθ`.
    pub fn derivative(&self, u: &[f64]) -> Vec<f64> {
        self.apply_multiplier(u, |j| self.symbol[j])
    }

    /// Trigonometric interpolant of grid data, evaluated anywhere.
    pub fn interpolant(&self, u: &[f64]) -> TrigInterpolant {
        TrigInterpolant::new(&self.spectrum(u))
    }
}

/// Real trigonometric polynomial `a0 + Σ (a_q cos qθ + b_q sin qθ)`.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TrigInterpolant {
    fn new(spec: &[Complex64]) -> Self {
        let n = spec.len();
        let half = n / 2;
        let s = 1.0 / n as f64;
        let mut a = vec![0.0; half + 1];
        let mut b = vec![0.0; half + 1];
        a[0] = spec[0].re * s;
        for q in 1..half {
            a[q] = 2.0 * spec[q].re * s;
            b[q] = -2.0 * spec[q].im * s;
        }
        if n % 2 == 0 {
            a[half] = spec[half].re * s;
        }
        TrigInterpolant { a, b }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.eval_with_derivative(theta).0
    }

    /// Value and `d/dθ` at `theta`.
    pub fn eval_with_derivative(&self, theta: f64) -> (f64, f64) {
        let (s1, c1) = theta.sin_cos();
        let (mut s, mut c) = (0.0_f64, 1.0_f64);
        let mut val = self.a[0];
        let mut der = 0.0;
        for q in 1..self.a.len() {
            let ns = s * c1 + c * s1;
            let nc = c * c1 - s * s1;
            s = ns;
            c = nc;
            let qf = q as f64;
            val += self.a[q] * c + self.b[q] * s;
            der += qf * (self.b[q] * c - self.a[q] * s);
        }
        (val, der)
    }

    /// Zeroth Fourier coefficient (the mean).
    pub fn mean(&self) -> f64 {
        self.a[0]
    }

    /// Antiderivative of the zero-mean part, as coefficients of a new interpolant.
    pub fn integrate_oscillatory(&self) -> TrigInterpolant {
        let mut a = vec![0.0; self.a.len()];
        let mut b = vec![0.0; self.b.len()];
        for q in 1..self.a.len() {
            let qf = q as f64;
            // ∫ a cos qθ + b sin qθ = (a/q) sin qθ − (b/q) cos qθ
            a[q] = -self.b[q] / qf;
            b[q] = self.a[q] / qf;
        }
        // the Nyquist cosine integrates to a sine that vanishes on the grid
        let last = self.a.len() - 1;
        b[last] = 0.0;
        a[last] = 0.0;
        TrigInterpolant { a, b }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| TAU * i as f64 / n as f64).collect()
    }

    #[test]
    fn spectral_derivative_is_exact_on_modes() {
        let n = 32;
        let op = Periodic::get(n, Backend::Spectral);
        let th = grid(n);
        let u: Vec<f64> = th.iter().map(|t| (5.0 * t).sin()).collect();
        let du = op.derivative(&u);
        for (t, d) in th.iter().zip(du) {
            assert!((d - 5.0 * (5.0 * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn fd4_converges_at_fourth_order() {
        let err = |n: usize| {
            let op = Periodic::get(n, Backend::Fd4);
            let th = grid(n);
            let u: Vec<f64> = th.iter().map(|t| t.sin().exp()).collect();
            op.derivative(&u)
                .iter()
                .zip(&th)
                .map(|(d, t)| (d - t.cos() * t.sin().exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(64) / err(128);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn interpolant_reproduces_grid_and_between() {
        let n = 16;
        let op = Periodic::get(n, Backend::Spectral);
        let f = |t: f64| 0.3 + (2.0 * t).cos() - 0.5 * (3.0 * t).sin();
        let u: Vec<f64> = grid(n).into_iter().map(f).collect();
        let it = op.interpolant(&u);
        for t in [0.0, 0.1, 1.234, 5.9] {
            let (v, d) = it.eval_with_derivative(t);
            assert!((v - f(t)).abs() < 1e-13);
            let df = -2.0 * (2.0 * t).sin() - 1.5 * (3.0 * t).cos();
            assert!((d - df).abs() < 1e-12);
        }
        let anti = it.integrate_oscillatory();
        let (_, d) = anti.eval_with_derivative(0.7);
        assert!((d - (f(0.7) - 0.3)).abs() < 1e-13);
    }
}

//! Scalars for the discrete geometry pipeline: plain `f64`, and forward-mode
//! dual numbers used to linearize the discrete operators exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn from_f64(x: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;

    /// Applies a real linear operator to an array of scalars.
    fn map_linear(xs: &[Self], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Self>;

    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn map_linear(xs: &[Self], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Self> {
        op(xs)
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.re / o.re;
        Dual::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl Scalar for Dual {
    fn from_f64(x: f64) -> Self {
        Dual::new(x, 0.0)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, 0.5 * self.eps / s)
    }
    fn map_linear(xs: &[Self], op: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Self> {
        let re: Vec<f64> = xs.iter().map(|d| d.re).collect();
        let eps: Vec<f64> = xs.iter().map(|d| d.eps).collect();
        op(&re)
            .into_iter()
            .zip(op(&eps))
            .map(|(a, b)| Dual::new(a, b))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_chain_rule() {
        // d/dx sqrt(x) / x at x = 4 → -1/(2 x^{3/2}) = -1/16
        let x = Dual::new(4.0, 1.0);
        let y = x.sqrt() / x;
        assert!((y.re - 0.5).abs() < 1e-15);
        assert!((y.eps + 1.0 / 16.0).abs() < 1e-15);
    }
}

//! Symbolic derivation of the energy integrand and its Euler–Lagrange
//! operator for plane curves.
//!
//! Conventions: `T = γ_s`, `ν = T` rotated by `-π/2`, `T_s = -k ν`,
//! `ν_s = k T`. A counterclockwise circle of radius `r` has outward normal
//! and `k = 1/r`.
//!
//! Under a normal variation `γ ↦ γ + ε f ν`:
//!
//! * `δk = -(f_ss + k² f)`
//! * `δ(ds) = k f ds`
//! * `[δ, ∂_s] = -(k f) ∂_s`

mod poly;

pub use poly::{
    CompiledPoly, DiffPoly, FactorJson, Factors, JetVar, Monomial, MonomialJson, VarKind,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JetError {
    #[error("jet order {order} exceeds the cap {cap}")]
    OrderCap { order: usize, cap: usize },
    #[error("order m must be at least 1")]
    InvalidOrder,
    #[error("polynomial is not linear in the variation jet")]
    NotLinearInVariation,
    #[error("polynomial must not contain variation-jet variables")]
    UnexpectedVariation,
}

/// `∂_s^m ν = tangential · T + normal · ν`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrenetVector {
    pub tangential: DiffPoly,
    pub normal: DiffPoly,
}

/// Default cap on jet orders for functionals of order `m`.
pub fn default_cap(m: usize) -> usize {
    2 * m + 4
}

fn k(j: usize) -> DiffPoly {
    DiffPoly::var(JetVar::k(j))
}

fn f(j: usize) -> DiffPoly {
    DiffPoly::var(JetVar::f(j))
}

/// Symbolic derivations for the functional of order `m` with an explicit jet
/// order cap.
#[derive(Debug, Clone, Copy)]
pub struct Derivation {
    m: usize,
    cap: usize,
}

impl Derivation {
    pub fn new(m: usize) -> Result<Self, JetError> {
        Self::with_cap(m, default_cap(m))
    }

    pub fn with_cap(m: usize, cap: usize) -> Result<Self, JetError> {
        if m == 0 {
            return Err(JetError::InvalidOrder);
        }
        Ok(Derivation { m, cap })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Frenet recursion `a' = a_s + k b`, `b' = b_s - k a` from `(k, 0)`.
    pub fn frenet_expand(&self) -> Result<FrenetVector, JetError> {
        let mut a = k(0);
        let mut b = DiffPoly::zero();
        for _ in 1..self.m {
            let na = &a.d_s(self.cap)? + &(&k(0) * &b);
            let nb = &b.d_s(self.cap)? - &(&k(0) * &a);
            a = na;
            b = nb;
        }
        Ok(FrenetVector {
            tangential: a,
            normal: b,
        })
    }

    /// `1 + |∂_s^m ν|²` as a polynomial in the curvature jet.
    pub fn integrand(&self) -> Result<DiffPoly, JetError> {
        let fv = self.frenet_expand()?;
        let sq = &(&fv.tangential * &fv.tangential) + &(&fv.normal * &fv.normal);
        Ok(&DiffPoly::constant(1) + &sq)
    }

    /// The Euler–Lagrange operator `E_m` in jet form.
    pub fn euler_lagrange(&self) -> Result<DiffPoly, JetError> {
        first_variation(&self.integrand()?, self.cap)
    }

    /// The linearization `f ↦ δE_m(f)` of the Euler–Lagrange operator in a
    /// normal direction, not reduced by integration by parts.
    pub fn second_variation(&self) -> Result<DiffPoly, JetError> {
        linearize(&self.euler_lagrange()?, self.cap)
    }
}

/// `δk_j` as a polynomial linear in the variation jet, for `j = 0..=max`.
pub fn curvature_variations(max: usize, cap: usize) -> Result<Vec<DiffPoly>, JetError> {
    if max + 2 > cap {
        return Err(JetError::OrderCap {
            order: max + 2,
            cap,
        });
    }
    let mut out = Vec::with_capacity(max + 1);
    // δk = -(f_ss + k² f)
    let mut cur = -&(&f(2) + &(&(&k(0) * &k(0)) * &f(0)));
    out.push(cur.clone());
    for j in 0..max {
        // δ(∂_s k_j) = ∂_s(δk_j) - k f k_{j+1}
        let comm = &(&k(0) * &f(0)) * &k(j + 1);
        cur = &cur.d_s(cap)? - &comm;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Pointwise linearization `Σ_j ∂G/∂k_j · δk_j` of a curvature polynomial.
pub fn linearize(g: &DiffPoly, cap: usize) -> Result<DiffPoly, JetError> {
    if g.contains_kind(VarKind::Variation) {
        return Err(JetError::UnexpectedVariation);
    }
    let Some(top) = g.max_order(VarKind::Curvature) else {
        return Ok(DiffPoly::zero());
    };
    let dk = curvature_variations(top, cap)?;
    let mut out = DiffPoly::zero();
    for (j, dkj) in dk.iter().enumerate() {
        let part = g.partial(JetVar::k(j));
        if !part.is_zero() {
            out = &out + &(&part * dkj);
        }
    }
    Ok(out)
}

/// Euler–Lagrange density of `∫ G ds`: the polynomial `E` with
/// `δ∫G ds = ∫ E f ds` after all derivatives are moved off `f`.
pub fn first_variation(g: &DiffPoly, cap: usize) -> Result<DiffPoly, JetError> {
    let pointwise = linearize(g, cap)?;
    // δ(ds) = k f ds
    let measure = &(g * &k(0)) * &f(0);
    let density = &pointwise + &measure;
    let mut out = DiffPoly::zero();
    for (i, c) in density.linear_coefficients()? {
        let moved = c.d_s_n(i, cap)?;
        out = if i % 2 == 0 { &out + &moved } else { &out - &moved };
    }
    Ok(out)
}

pub fn frenet_expand(m: usize) -> Result<FrenetVector, JetError> {
    Derivation::new(m)?.frenet_expand()
}

pub fn integrand(m: usize) -> Result<DiffPoly, JetError> {
    Derivation::new(m)?.integrand()
}

pub fn euler_lagrange(m: usize) -> Result<DiffPoly, JetError> {
    Derivation::new(m)?.euler_lagrange()
}

pub fn second_variation(m: usize) -> Result<DiffPoly, JetError> {
    Derivation::new(m)?.second_variation()
}

/// Compiled `(P_m, E_m)` pair shared by the numerical modules.
#[derive(Debug)]
pub struct CompiledOperators {
    pub integrand: CompiledPoly,
    pub euler_lagrange: CompiledPoly,
}

/// Cached compiled operators for order `m`.
pub fn compiled(m: usize) -> Result<Arc<CompiledOperators>, JetError> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<CompiledOperators>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(ops) = cache.lock().unwrap().get(&m) {
        return Ok(ops.clone());
    }
    let d = Derivation::new(m)?;
    let ops = Arc::new(CompiledOperators {
        integrand: d.integrand()?.compile()?,
        euler_lagrange: d.euler_lagrange()?.compile()?,
    });
    cache.lock().unwrap().insert(m, ops.clone());
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn single(v: JetVar, p: u32) -> Factors {
        let mut f = Factors::new();
        f.insert(v, p);
        f
    }

    fn int(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    #[test]
    fn frenet_base_cases() {
        let f1 = frenet_expand(1).unwrap();
        assert_eq!(f1.tangential.to_string(), "k0");
        assert!(f1.normal.is_zero());

        let f2 = frenet_expand(2).unwrap();
        assert_eq!(f2.tangential.to_string(), "k1");
        assert_eq!(f2.normal.to_string(), "-k0^2");

        let f3 = frenet_expand(3).unwrap();
        assert_eq!(f3.tangential.to_string(), "k2 - k0^3");
        assert_eq!(f3.normal.to_string(), "-3*k1*k0");
    }

    #[test]
    fn integrands() {
        assert_eq!(integrand(1).unwrap().to_string(), "k0^2 + 1");
        assert_eq!(integrand(2).unwrap().to_string(), "k1^2 + k0^4 + 1");
        // (k2 - k0^3)^2 + 9 k0^2 k1^2
        let expected = {
            let a = &k(2) - &(&(&k(0) * &k(0)) * &k(0));
            let b = (&k(0) * &k(1)).scale_int(3);
            &(&(&a * &a) + &(&b * &b)) + &DiffPoly::constant(1)
        };
        assert_eq!(integrand(3).unwrap(), expected);
    }

    #[test]
    fn integrand_on_circle() {
        for m in 1..=4 {
            let p = integrand(m).unwrap();
            for r in [0.5_f64, 1.0, 1.7] {
                let v = p.eval_at(|v| if v.order == 0 { 1.0 / r } else { 0.0 });
                let want = 1.0 + r.powi(-2 * m as i32);
                assert!((v - want).abs() < 1e-12 * want, "m={m} r={r}");
            }
        }
    }

    #[test]
    fn elastic_euler_lagrange() {
        let e1 = euler_lagrange(1).unwrap();
        assert_eq!(e1.to_string(), "-2*k2 - k0^3 + k0");
    }

    #[test]
    fn euler_lagrange_on_circles() {
        // d/dr [2πr(1 + r^{-2m})] / (2πr) = k - (2m-1) k^{2m+1}
        for m in 1..=4 {
            let e = euler_lagrange(m).unwrap();
            for r in [0.6_f64, 1.0, 1.3] {
                let kk = 1.0 / r;
                let v = e.eval_at(|v| if v.order == 0 { kk } else { 0.0 });
                let want = kk - (2 * m - 1) as f64 * kk.powi(2 * m as i32 + 1);
                assert!((v - want).abs() < 1e-12 * (1.0 + want.abs()), "m={m} r={r}");
            }
        }
    }

    #[test]
    fn euler_lagrange_structure() {
        for m in 1..=4 {
            let e = euler_lagrange(m).unwrap();
            assert_eq!(e.max_order(VarKind::Curvature), Some(2 * m));
            let top: Vec<Monomial> = e
                .monomials()
                .filter(|mono| mono.factors.keys().any(|v| v.order == 2 * m))
                .collect();
            assert_eq!(top.len(), 1, "m={m}");
            let sign = if m % 2 == 0 { 2 } else { -2 };
            assert_eq!(top[0].coefficient, int(sign));
            assert_eq!(top[0].factors, single(JetVar::k(2 * m), 1));
            assert_eq!(e.coefficient(&single(JetVar::k(0), 1)), int(1));
            // homogeneous of weight 2m+1 apart from the length term
            for mono in e.monomials() {
                let w = mono.weight();
                assert!(w == 2 * m + 1 || w == 1, "m={m}: weight {w}");
            }
        }
    }

    #[test]
    fn integrand_scaling_weight() {
        for m in 1..=4 {
            for mono in integrand(m).unwrap().monomials() {
                let w = mono.weight();
                assert!(w == 0 || w == 2 * m);
            }
        }
    }

    #[test]
    fn second_variation_leading_term() {
        for m in 1..=3 {
            let s = second_variation(m).unwrap();
            assert_eq!(s.max_order(VarKind::Variation), Some(2 * m + 2));
            let coeffs = s.linear_coefficients().unwrap();
            let lead = &coeffs[&(2 * m + 2)];
            let sign = if m % 2 == 0 { -2 } else { 2 };
            assert_eq!(*lead, DiffPoly::constant(sign), "m={m}");
        }
    }

    #[test]
    fn second_variation_elastic_circle() {
        // δE_1 at k ≡ 1: 2 f4 + 4 f2 + 2 f0
        let s = second_variation(1).unwrap();
        let coeffs = s.linear_coefficients().unwrap();
        let at_circle = |p: &DiffPoly| p.eval_at(|v| if v.order == 0 { 1.0 } else { 0.0 });
        let got: Vec<(usize, f64)> = coeffs.iter().map(|(i, c)| (*i, at_circle(c))).collect();
        let nonzero: Vec<(usize, f64)> = got.into_iter().filter(|(_, c)| c.abs() > 0.0).collect();
        assert_eq!(nonzero, vec![(0, 2.0), (2, 4.0), (4, 2.0)]);
        // ∫ δE(1)·1 ds on the unit circle = 2 · 2π = 4π = F₁''(1)
    }

    #[test]
    fn omega_order_bound_at_critical_circles() {
        for m in 1..=3usize {
            let kk = ((2 * m - 1) as f64).powf(-1.0 / (2 * m) as f64);
            let s = second_variation(m).unwrap();
            let coeffs = s.linear_coefficients().unwrap();
            let c = coeffs
                .get(&(2 * m + 1))
                .map(|p| p.eval_at(|v| if v.order == 0 { kk } else { 0.0 }))
                .unwrap_or(0.0);
            assert!(c.abs() < 1e-12, "m={m}: f_(2m+1) coefficient {c}");
        }
    }

    #[test]
    fn cap_is_enforced() {
        let d = Derivation::with_cap(2, 3).unwrap();
        assert!(matches!(
            d.euler_lagrange(),
            Err(JetError::OrderCap { .. })
        ));
        assert_eq!(Derivation::new(0).unwrap_err(), JetError::InvalidOrder);
    }

    #[test]
    fn first_variation_rejects_variation_input() {
        assert_eq!(
            first_variation(&f(0), 8).unwrap_err(),
            JetError::UnexpectedVariation
        );
    }
}

//! Exact differential polynomials in the curvature jet `k0, k1, ...` and the
//! variation jet `f0, f1, ...`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use super::JetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VarKind {
    /// Arc-length derivatives of the curvature `k`.
    Curvature,
    /// Arc-length derivatives of the normal variation speed `f`.
    Variation,
}

impl VarKind {
    pub fn symbol(self) -> &'static str {
        match self {
            VarKind::Curvature => "k",
            VarKind::Variation => "f",
        }
    }
}

/// A jet variable: `order` arc-length derivatives applied to `k` or `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JetVar {
    pub kind: VarKind,
    pub order: usize,
}

impl JetVar {
    pub const fn k(order: usize) -> Self {
        JetVar {
            kind: VarKind::Curvature,
            order,
        }
    }

    pub const fn f(order: usize) -> Self {
        JetVar {
            kind: VarKind::Variation,
            order,
        }
    }

    /// Scaling weight: under a dilation by `1/λ`, `k_j ↦ λ^{j+1} k_j`.
    pub fn weight(self) -> usize {
        self.order + 1
    }

    pub fn next(self) -> Self {
        JetVar {
            kind: self.kind,
            order: self.order + 1,
        }
    }
}

impl fmt::Display for JetVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.symbol(), self.order)
    }
}

/// Factor multiset of a monomial, kept sorted by `(kind, order)`.
pub type Factors = BTreeMap<JetVar, u32>;

/// One additive term `coefficient * Π var^power`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    pub coefficient: BigRational,
    pub factors: Factors,
}

impl Monomial {
    pub fn weight(&self) -> usize {
        self.factors
            .iter()
            .map(|(v, &p)| v.weight() * p as usize)
            .sum()
    }

    pub fn degree_in(&self, kind: VarKind) -> u32 {
        self.factors
            .iter()
            .filter(|(v, _)| v.kind == kind)
            .map(|(_, &p)| p)
            .sum()
    }

    /// Key for the printed ordering: heavier terms first, and within a weight
    /// the term carrying the highest derivative first.
    fn display_key(&self) -> (usize, Vec<(usize, VarKind)>) {
        let mut orders: Vec<(usize, VarKind)> = self
            .factors
            .iter()
            .flat_map(|(v, &p)| std::iter::repeat((v.order, v.kind)).take(p as usize))
            .collect();
        orders.sort_by(|a, b| b.cmp(a));
        (self.weight(), orders)
    }

    fn display_cmp(&self, other: &Self) -> Ordering {
        other.display_key().cmp(&self.display_key())
    }
}

/// Polynomial with exact rational coefficients in canonical merged form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffPoly {
    terms: BTreeMap<Factors, BigRational>,
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl DiffPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: i64) -> Self {
        Self::from_term(Factors::new(), rat(c))
    }

    pub fn var(v: JetVar) -> Self {
        let mut f = Factors::new();
        f.insert(v, 1);
        Self::from_term(f, BigRational::one())
    }

    fn from_term(factors: Factors, c: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(factors, c);
        p
    }

    fn add_term(&mut self, factors: Factors, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(factors);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Monomials in canonical storage order.
    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.terms.iter().map(|(f, c)| Monomial {
            coefficient: c.clone(),
            factors: f.clone(),
        })
    }

    /// Monomials in the stable printed order.
    pub fn sorted_monomials(&self) -> Vec<Monomial> {
        let mut v: Vec<Monomial> = self.monomials().collect();
        v.sort_by(|a, b| a.display_cmp(b));
        v
    }

    pub fn coefficient(&self, factors: &Factors) -> BigRational {
        self.terms.get(factors).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        DiffPoly {
            terms: self
                .terms
                .iter()
                .map(|(f, k)| (f.clone(), k * c))
                .collect(),
        }
    }

    pub fn scale_int(&self, c: i64) -> Self {
        self.scale(&rat(c))
    }

    pub fn max_order(&self, kind: VarKind) -> Option<usize> {
        self.terms
            .keys()
            .flat_map(|f| f.keys())
            .filter(|v| v.kind == kind)
            .map(|v| v.order)
            .max()
    }

    pub fn contains_kind(&self, kind: VarKind) -> bool {
        self.max_order(kind).is_some()
    }

    /// Formal total derivative `d/ds` (Leibniz rule, `x_j ↦ x_{j+1}`).
    pub fn d_s(&self, cap: usize) -> Result<Self, JetError> {
        let mut out = Self::zero();
        for (factors, c) in &self.terms {
            for (&v, &p) in factors {
                let next = v.next();
                if next.order > cap {
                    return Err(JetError::OrderCap {
                        order: next.order,
                        cap,
                    });
                }
                let mut nf = factors.clone();
                if p == 1 {
                    nf.remove(&v);
                } else {
                    nf.insert(v, p - 1);
                }
                *nf.entry(next).or_insert(0) += 1;
                out.add_term(nf, c * rat(p as i64));
            }
        }
        Ok(out)
    }

    /// Repeated total derivative.
    pub fn d_s_n(&self, n: usize, cap: usize) -> Result<Self, JetError> {
        let mut p = self.clone();
        for _ in 0..n {
            p = p.d_s(cap)?;
        }
        Ok(p)
    }

    /// Partial derivative with respect to one jet variable.
    pub fn partial(&self, v: JetVar) -> Self {
        let mut out = Self::zero();
        for (factors, c) in &self.terms {
            if let Some(&p) = factors.get(&v) {
                let mut nf = factors.clone();
                if p == 1 {
                    nf.remove(&v);
                } else {
                    nf.insert(v, p - 1);
                }
                out.add_term(nf, c * rat(p as i64));
            }
        }
        out
    }

    /// Splits a polynomial that is linear (homogeneous of degree one) in the
    /// variation jet into its coefficients: `self = Σ_i c_i · f_i`.
    pub fn linear_coefficients(&self) -> Result<BTreeMap<usize, DiffPoly>, JetError> {
        let mut out: BTreeMap<usize, DiffPoly> = BTreeMap::new();
        for (factors, c) in &self.terms {
            let fvars: Vec<(&JetVar, &u32)> = factors
                .iter()
                .filter(|(v, _)| v.kind == VarKind::Variation)
                .collect();
            match fvars.as_slice() {
                [(v, 1)] => {
                    let mut rest = factors.clone();
                    rest.remove(v);
                    out.entry(v.order).or_default().add_term(rest, c.clone());
                }
                _ => return Err(JetError::NotLinearInVariation),
            }
        }
        out.retain(|_, p| !p.is_zero());
        Ok(out)
    }

    /// Lowers the polynomial to floating point for repeated evaluation.
    /// Only curvature variables are allowed.
    pub fn compile(&self) -> Result<CompiledPoly, JetError> {
        if self.contains_kind(VarKind::Variation) {
            return Err(JetError::UnexpectedVariation);
        }
        let terms = self
            .terms
            .iter()
            .map(|(f, c)| CompiledTerm {
                coefficient: c.to_f64().unwrap_or(f64::NAN),
                powers: f.iter().map(|(v, &p)| (v.order, p)).collect(),
            })
            .collect();
        Ok(CompiledPoly {
            terms,
            max_order: self.max_order(VarKind::Curvature),
        })
    }

    /// Evaluates at a single point given values for every jet variable.
    pub fn eval_at(&self, value: impl Fn(JetVar) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(f, c)| {
                let c = c.to_f64().unwrap_or(f64::NAN);
                f.iter()
                    .fold(c, |acc, (&v, &p)| acc * value(v).powi(p as i32))
            })
            .sum()
    }
}

impl Add for &DiffPoly {
    type Output = DiffPoly;
    fn add(self, rhs: &DiffPoly) -> DiffPoly {
        let mut out = self.clone();
        for (f, c) in &rhs.terms {
            out.add_term(f.clone(), c.clone());
        }
        out
    }
}

impl Sub for &DiffPoly {
    type Output = DiffPoly;
    fn sub(self, rhs: &DiffPoly) -> DiffPoly {
        let mut out = self.clone();
        for (f, c) in &rhs.terms {
            out.add_term(f.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &DiffPoly {
    type Output = DiffPoly;
    fn neg(self) -> DiffPoly {
        self.scale_int(-1)
    }
}

impl Mul for &DiffPoly {
    type Output = DiffPoly;
    fn mul(self, rhs: &DiffPoly) -> DiffPoly {
        let mut out = DiffPoly::zero();
        for (fa, ca) in &self.terms {
            for (fb, cb) in &rhs.terms {
                let mut f = fa.clone();
                for (&v, &p) in fb {
                    *f.entry(v).or_insert(0) += p;
                }
                out.add_term(f, ca * cb);
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for DiffPoly {
            type Output = DiffPoly;
            fn $m(self, rhs: DiffPoly) -> DiffPoly {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

fn fmt_coeff(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for DiffPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, m) in self.sorted_monomials().iter().enumerate() {
            let neg = m.coefficient.is_negative();
            let mag = m.coefficient.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let vars: Vec<String> = m
                .factors
                .iter()
                .rev()
                .map(|(v, &p)| {
                    if p == 1 {
                        v.to_string()
                    } else {
                        format!("{v}^{p}")
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{}", fmt_coeff(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_coeff(&mag), vars.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorJson {
    pub var: &'static str,
    pub order: usize,
    pub power: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonomialJson {
    pub coeff_num: serde_json::Value,
    pub coeff_den: serde_json::Value,
    pub factors: Vec<FactorJson>,
}

fn int_json(x: &BigInt) -> serde_json::Value {
    match x.to_i64() {
        Some(v) => serde_json::Value::from(v),
        None => serde_json::Value::String(x.to_string()),
    }
}

impl DiffPoly {
    /// Machine-readable form, monomials in printed order.
    pub fn to_json(&self) -> Vec<MonomialJson> {
        self.sorted_monomials()
            .iter()
            .map(|m| MonomialJson {
                coeff_num: int_json(m.coefficient.numer()),
                coeff_den: int_json(m.coefficient.denom()),
                factors: m
                    .factors
                    .iter()
                    .rev()
                    .map(|(v, &p)| FactorJson {
                        var: v.kind.symbol(),
                        order: v.order,
                        power: p,
                    })
                    .collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct CompiledTerm {
    coefficient: f64,
    powers: Vec<(usize, u32)>,
}

/// Floating-point form of a curvature-only polynomial.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    terms: Vec<CompiledTerm>,
    max_order: Option<usize>,
}

impl CompiledPoly {
    /// Highest curvature derivative the polynomial reads, if any.
    pub fn max_order(&self) -> Option<usize> {
        self.max_order
    }

    /// Pointwise evaluation over jet levels (`levels[j][i]` is `k_j` at vertex `i`).
    pub fn eval<S: crate::scalar::Scalar>(&self, levels: &[Vec<S>], n: usize) -> Vec<S> {
        (0..n)
            .map(|i| {
                self.terms.iter().fold(S::from_f64(0.0), |acc, t| {
                    let mut term = S::from_f64(t.coefficient);
                    for &(order, p) in &t.powers {
                        let x = levels[order][i];
                        for _ in 0..p {
                            term = term * x;
                        }
                    }
                    acc + term
                })
            })
            .collect()
    }
}

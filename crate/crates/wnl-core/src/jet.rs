//! Exact rational functions of jet variables.
//!
//! A `JetExpression` is a reduced fraction num/den of polynomials in the jet
//! variables u^i_sigma and declared parameters (and, in the three-point
//! kernels, point-tagged copies of the jet variables). The representation is
//! canonical: numerator and denominator are coprime and the denominator is a
//! primitive integer polynomial with positive leading coefficient, so
//! structural equality decides mathematical equality and `is_zero` is exact.
//!
//! Alongside the expanded denominator the struct carries a list of primitive,
//! positive-leading, pairwise-coprime factors whose power product equals the
//! denominator. Derivatives and field operations work factor by factor, so
//! every gcd the arithmetic needs compares a small factor against something,
//! never two large denominator powers; without this the quotient rule on
//! nested fractions degenerates into gcds of d^k against d^{k-1} d' that the
//! subresultant chain cannot afford.

use crate::poly::{brat, Point, Poly, Var};
use num::rational::BigRational;
use num::One;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone)]
pub struct JetExpression {
    num: Poly,
    /// Expanded product of `factors`; primitive, positive leading.
    den: Poly,
    /// Primitive, positive-leading, pairwise-coprime, nonconstant factors
    /// with multiplicities. Empty list means denominator 1.
    factors: Vec<(Poly, u32)>,
}

impl PartialEq for JetExpression {
    fn eq(&self, other: &JetExpression) -> bool {
        // Canonical reduced form: the factor split is irrelevant.
        self.num == other.num && self.den == other.den
    }
}

impl Eq for JetExpression {}

impl Hash for JetExpression {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.num.hash(state);
        self.den.hash(state);
    }
}

/// Insert a primitive positive-leading factor into a pairwise-coprime list,
/// splitting entries as needed to keep the coprimality invariant. Recursion
/// terminates because every split strictly lowers the total degree in play.
fn insert_factor(list: &mut Vec<(Poly, u32)>, p: Poly, e: u32) {
    if e == 0 || p.is_constant() {
        return;
    }
    for i in 0..list.len() {
        let h = p.gcd(&list[i].0);
        if h.is_constant() {
            continue;
        }
        let (q, k) = list.remove(i);
        let q_rest = q.div_exact(&h).unwrap();
        let p_rest = p.div_exact(&h).unwrap();
        insert_factor(list, h, e + k);
        insert_factor(list, q_rest, k);
        insert_factor(list, p_rest, e);
        return;
    }
    list.push((p, e));
}

/// Merge two coprime factor bases into one refined base carrying both
/// exponent columns.
fn merge_bases(a: &[(Poly, u32)], b: &[(Poly, u32)]) -> Vec<(Poly, u32, u32)> {
    let mut list: Vec<(Poly, u32, u32)> =
        a.iter().map(|(f, e)| (f.clone(), *e, 0)).collect();
    for (g, e) in b {
        insert_merge(&mut list, g.clone(), 0, *e);
    }
    list
}

fn insert_merge(list: &mut Vec<(Poly, u32, u32)>, p: Poly, ea: u32, eb: u32) {
    if (ea == 0 && eb == 0) || p.is_constant() {
        return;
    }
    for i in 0..list.len() {
        let h = p.gcd(&list[i].0);
        if h.is_constant() {
            continue;
        }
        let (q, qa, qb) = list.remove(i);
        let q_rest = q.div_exact(&h).unwrap();
        let p_rest = p.div_exact(&h).unwrap();
        insert_merge(list, h, ea + qa, eb + qb);
        insert_merge(list, q_rest, qa, qb);
        insert_merge(list, p_rest, ea, eb);
        return;
    }
    list.push((p, ea, eb));
}

/// Cancel every common divisor of the numerator and the factor list. Each
/// round divides the numerator by a nonconstant polynomial, so the loop is
/// bounded by its degree.
fn reduce(num: &mut Poly, factors: &mut Vec<(Poly, u32)>) {
    'outer: loop {
        for i in 0..factors.len() {
            let g = num.gcd(&factors[i].0);
            if g.is_constant() {
                continue;
            }
            let (f, e) = factors.remove(i);
            let r = f.div_exact(&g).unwrap();
            let mut cancelled = 0u32;
            while cancelled < e {
                match num.div_exact(&g) {
                    Some(q) => {
                        *num = q;
                        cancelled += 1;
                    }
                    None => break,
                }
            }
            debug_assert!(cancelled >= 1);
            insert_factor(factors, g, e - cancelled);
            insert_factor(factors, r, e);
            continue 'outer;
        }
        return;
    }
}

impl JetExpression {
    fn build(mut num: Poly, mut factors: Vec<(Poly, u32)>) -> JetExpression {
        if num.is_zero() {
            return JetExpression::zero();
        }
        reduce(&mut num, &mut factors);
        let mut den = Poly::one();
        for (f, e) in &factors {
            den = den.mul(&f.pow(*e));
        }
        JetExpression { num, den, factors }
    }

    /// Build num/den in canonical form. Panics on a zero denominator; all
    /// division entry points guard against that first.
    pub fn new(num: Poly, den: Poly) -> JetExpression {
        assert!(!den.is_zero(), "zero denominator");
        if num.is_zero() {
            return JetExpression::zero();
        }
        let (dp, content) = den.primitive_parts();
        let num = num.mul_scalar(&(BigRational::one() / content));
        let mut factors = Vec::new();
        insert_factor(&mut factors, dp, 1);
        JetExpression::build(num, factors)
    }

    pub fn from_poly(p: Poly) -> JetExpression {
        JetExpression { num: p, den: Poly::one(), factors: Vec::new() }
    }

    /// The numerator when the expression is an honest polynomial (the
    /// denominator is trivial), None otherwise.
    pub fn as_polynomial(&self) -> Option<&Poly> {
        if self.factors.is_empty() {
            Some(&self.num)
        } else {
            None
        }
    }

    pub fn zero() -> JetExpression {
        JetExpression::from_poly(Poly::zero())
    }

    pub fn one() -> JetExpression {
        JetExpression::from_poly(Poly::one())
    }

    pub fn int(n: i64) -> JetExpression {
        JetExpression::from_poly(Poly::int(n))
    }

    pub fn rat(n: i64, d: i64) -> JetExpression {
        JetExpression::from_poly(Poly::rat(n, d))
    }

    pub fn constant(c: BigRational) -> JetExpression {
        JetExpression::from_poly(Poly::constant(c))
    }

    pub fn var(v: Var) -> JetExpression {
        JetExpression::from_poly(Poly::var(v))
    }

    /// u^component with `order` x-derivatives.
    pub fn jet(component: u16, order: u16) -> JetExpression {
        JetExpression::var(Var::jet(component, order))
    }

    pub fn param(index: u16) -> JetExpression {
        JetExpression::var(Var::param(index))
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    /// True when the expression involves no jet variables (parameters and
    /// rational constants only).
    pub fn is_constant(&self) -> bool {
        self.vars().iter().all(|v| v.is_param())
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        match (self.num.as_constant(), self.den.as_constant()) {
            (Some(n), Some(d)) => Some(n / d),
            _ => None,
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut vs = self.num.vars();
        for v in self.den.vars() {
            if let Err(pos) = vs.binary_search(&v) {
                vs.insert(pos, v);
            }
        }
        vs
    }

    pub fn contains_var(&self, v: Var) -> bool {
        self.num.contains_var(v) || self.den.contains_var(v)
    }

    /// Highest derivative order among jet variables present (pointed or not).
    pub fn max_order(&self) -> Option<u16> {
        self.vars().iter().filter_map(|v| v.jet_key()).map(|(_, o)| o).max()
    }

    pub fn pow(&self, e: i32) -> JetExpression {
        if e == 0 {
            return JetExpression::one();
        }
        if e < 0 {
            return self.inverse().pow(-e);
        }
        let e = e as u32;
        // Powers preserve reduction and coprimality; no rebuild needed.
        JetExpression {
            num: self.num.pow(e),
            den: self.den.pow(e),
            factors: self.factors.iter().map(|(f, k)| (f.clone(), k * e)).collect(),
        }
    }

    pub fn inverse(&self) -> JetExpression {
        assert!(!self.is_zero(), "inverse of zero");
        let (nprim, ncontent) = self.num.primitive_parts();
        let num = self.den.mul_scalar(&(BigRational::one() / ncontent));
        let mut factors = Vec::new();
        insert_factor(&mut factors, nprim, 1);
        // Numerator and denominator were coprime, so no reduction happens;
        // build just re-expands.
        JetExpression::build(num, factors)
    }

    /// Core quotient rule on the factored form: for f = n / prod p_i^{e_i},
    /// f' = (n' P - n sum_i e_i p_i' P/p_i) / prod p_i^{e_i + 1} with
    /// P = prod p_i, keeping every cancellation factor-sized.
    fn derive_with(&self, d: &dyn Fn(&Poly) -> Poly) -> JetExpression {
        let dn = d(&self.num);
        if self.factors.is_empty() {
            return JetExpression::from_poly(dn);
        }
        let mut pprod = Poly::one();
        for (p, _) in &self.factors {
            pprod = pprod.mul(p);
        }
        let mut top = dn.mul(&pprod);
        for (i, (p, e)) in self.factors.iter().enumerate() {
            let dp = d(p);
            if dp.is_zero() {
                continue;
            }
            let mut rest = Poly::one();
            for (j, (pj, _)) in self.factors.iter().enumerate() {
                if j != i {
                    rest = rest.mul(pj);
                }
            }
            let term = self
                .num
                .mul(&dp)
                .mul(&rest)
                .mul_scalar(&BigRational::from(num::BigInt::from(*e)));
            top = top.sub(&term);
        }
        let factors = self.factors.iter().map(|(p, e)| (p.clone(), e + 1)).collect();
        JetExpression::build(top, factors)
    }

    /// Partial derivative with respect to a single variable.
    pub fn partial(&self, v: Var) -> JetExpression {
        if !self.contains_var(v) {
            return JetExpression::zero();
        }
        self.derive_with(&|p| p.derivative(v))
    }

    /// Derivation determined by its action on variables; `dir` maps a
    /// variable to its image (None for variables killed by the derivation).
    pub fn directional(&self, dir: &dyn Fn(Var) -> Option<Poly>) -> JetExpression {
        self.derive_with(&|p| p.directional_derivative(dir))
    }

    /// Total x-derivative on the plain jet algebra: raises every jet
    /// variable's order by one, parameters are constants. Must not be used on
    /// point-tagged expressions (those use `total_derivative_at`).
    pub fn total_derivative(&self) -> JetExpression {
        debug_assert!(
            self.vars().iter().all(|v| !v.is_pointed() && !v.is_coord()),
            "total_derivative on a point-tagged expression"
        );
        self.directional(&|v| v.raise_order().map(Poly::var))
    }

    pub fn total_derivative_n(&self, n: u16) -> JetExpression {
        let mut out = self.clone();
        for _ in 0..n {
            out = out.total_derivative();
        }
        out
    }

    /// Total derivative in the coordinate of one point: raises the order of
    /// jet variables tagged with that point; an explicit coordinate variable
    /// of that point differentiates to 1; everything else is constant.
    pub fn total_derivative_at(&self, p: Point) -> JetExpression {
        self.directional(&|v| {
            if v.point() == Some(p) {
                if v.is_coord() {
                    Some(Poly::one())
                } else {
                    v.raise_order().map(Poly::var)
                }
            } else {
                None
            }
        })
    }

    /// Move every variable tagged `from` to the tag `to` (coefficient
    /// substitution used by the point-collapsing rewrites).
    pub fn retag_point(&self, from: Point, to: Point) -> JetExpression {
        let f = |v: Var| if v.point() == Some(from) { v.retag(to) } else { v };
        self.map_vars(&f)
    }

    /// Tag every plain jet variable with a point (lift into the three-point
    /// kernel). Injective on variables, so the canonical shape is preserved
    /// as-is.
    pub fn at_point(&self, p: Point) -> JetExpression {
        let f = |v: Var| {
            if v.is_jet() {
                let (c, o) = v.jet_key().unwrap();
                Var::pointed(p, c, o)
            } else {
                v
            }
        };
        JetExpression {
            num: self.num.map_vars(&f),
            den: self.den.map_vars(&f),
            factors: self.factors.iter().map(|(q, e)| (q.map_vars(&f), *e)).collect(),
        }
    }

    /// Inverse of `at_point` for expressions living entirely at one point.
    pub fn strip_point(&self, p: Point) -> JetExpression {
        let f = |v: Var| {
            if v.point() == Some(p) && v.is_pointed() {
                let (c, o) = v.jet_key().unwrap();
                Var::jet(c, o)
            } else {
                v
            }
        };
        JetExpression {
            num: self.num.map_vars(&f),
            den: self.den.map_vars(&f),
            factors: self.factors.iter().map(|(q, e)| (q.map_vars(&f), *e)).collect(),
        }
    }

    /// Points whose variables occur in the expression.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for v in self.vars() {
            if let Some(p) = v.point() {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// General variable remap. Non-injective maps can merge variables, so
    /// factors are re-normalized from scratch; a map that collapses a
    /// denominator factor to zero is a genuine singularity and panics.
    pub fn map_vars(&self, f: &dyn Fn(Var) -> Var) -> JetExpression {
        let num = self.num.map_vars(f);
        let mut scalar = BigRational::one();
        let mut factors = Vec::new();
        for (p, e) in &self.factors {
            let mapped = p.map_vars(f);
            assert!(!mapped.is_zero(), "variable remap collapsed a denominator factor");
            let (prim, content) = mapped.primitive_parts();
            for _ in 0..*e {
                scalar *= content.clone();
            }
            insert_factor(&mut factors, prim, *e);
        }
        JetExpression::build(num.mul_scalar(&(BigRational::one() / scalar)), factors)
    }
}

impl Add for &JetExpression {
    type Output = JetExpression;
    fn add(self, other: &JetExpression) -> JetExpression {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den == other.den {
            return JetExpression::build(self.num.add(&other.num), self.factors.clone());
        }
        let merged = merge_bases(&self.factors, &other.factors);
        let mut na = self.num.clone();
        let mut nb = other.num.clone();
        let mut factors = Vec::with_capacity(merged.len());
        for (f, ea, eb) in merged {
            let m = ea.max(eb);
            if m > ea {
                na = na.mul(&f.pow(m - ea));
            }
            if m > eb {
                nb = nb.mul(&f.pow(m - eb));
            }
            factors.push((f, m));
        }
        JetExpression::build(na.add(&nb), factors)
    }
}

impl Sub for &JetExpression {
    type Output = JetExpression;
    fn sub(self, other: &JetExpression) -> JetExpression {
        self + &(-other)
    }
}

impl Mul for &JetExpression {
    type Output = JetExpression;
    fn mul(self, other: &JetExpression) -> JetExpression {
        if self.is_zero() || other.is_zero() {
            return JetExpression::zero();
        }
        // Cross-cancel numerators against the opposite factor lists first so
        // the final product stays small.
        let mut na = self.num.clone();
        let mut fb = other.factors.clone();
        reduce(&mut na, &mut fb);
        let mut nb = other.num.clone();
        let mut fa = self.factors.clone();
        reduce(&mut nb, &mut fa);
        let merged = merge_bases(&fa, &fb);
        let factors = merged.into_iter().map(|(f, ea, eb)| (f, ea + eb)).collect();
        JetExpression::build(na.mul(&nb), factors)
    }
}

impl Div for &JetExpression {
    type Output = JetExpression;
    fn div(self, other: &JetExpression) -> JetExpression {
        assert!(!other.is_zero(), "division by zero expression");
        self * &other.inverse()
    }
}

impl Neg for &JetExpression {
    type Output = JetExpression;
    fn neg(self) -> JetExpression {
        JetExpression {
            num: self.num.neg(),
            den: self.den.clone(),
            factors: self.factors.clone(),
        }
    }
}

macro_rules! forward_owned {
    ($trait:ident, $method:ident) => {
        impl $trait for JetExpression {
            type Output = JetExpression;
            fn $method(self, other: JetExpression) -> JetExpression {
                (&self).$method(&other)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for JetExpression {
    type Output = JetExpression;
    fn neg(self) -> JetExpression {
        -&self
    }
}

impl fmt::Debug for JetExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            write!(f, "{:?}", self.num)
        } else {
            write!(f, "({:?})/({:?})", self.num, self.den)
        }
    }
}

/// Convenience scalar: n/d as an expression.
pub fn q(n: i64, d: i64) -> JetExpression {
    JetExpression::constant(brat(n, d))
}

//! Sparse multivariate polynomials over exact rationals.
//!
//! This is the arithmetic kernel underneath jet-space expressions. Variables
//! are bit-packed `u64` keys whose natural integer order realises the fixed
//! variable order used everywhere in the crate:
//!
//! * parameters sort below all field variables,
//! * jet variables sort by (component, derivative order),
//! * point-tagged jet variables sort by (point, component, order) above the
//!   plain ones,
//! * explicit point coordinates (used only by test oracles) sort last.
//!
//! Monomials are compared in graded lexicographic order with the largest
//! variable most significant. Polynomials keep their terms sorted leading
//! term first with no zero coefficients, so structural equality is canonical
//! equality.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Point tag for multi-point kernels (three-point distributions).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Point {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Point {
    pub const ALL: [Point; 3] = [Point::X, Point::Y, Point::Z];

    pub fn name(self) -> &'static str {
        match self {
            Point::X => "x",
            Point::Y => "y",
            Point::Z => "z",
        }
    }

    fn from_bits(b: u64) -> Point {
        match b {
            0 => Point::X,
            1 => Point::Y,
            _ => Point::Z,
        }
    }
}

const KIND_PARAM: u64 = 0;
const KIND_JET: u64 = 1;
const KIND_POINTED: u64 = 2;
const KIND_COORD: u64 = 3;

/// A variable, bit-packed so that the derived `Ord` is the fixed variable
/// order. Layout: kind(2) | point(2) | component(16) | order(16) | param(16).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u64);

impl Var {
    pub fn param(index: u16) -> Var {
        Var((KIND_PARAM << 62) | index as u64)
    }

    /// Jet variable u^component_order; components are 1-based, order 0 is the
    /// undifferentiated field.
    pub fn jet(component: u16, order: u16) -> Var {
        assert!(component >= 1, "jet components are 1-based");
        Var((KIND_JET << 62) | ((component as u64) << 44) | ((order as u64) << 28))
    }

    /// Jet variable evaluated at one of the three points.
    pub fn pointed(point: Point, component: u16, order: u16) -> Var {
        assert!(component >= 1, "jet components are 1-based");
        Var((KIND_POINTED << 62)
            | ((point as u64) << 60)
            | ((component as u64) << 44)
            | ((order as u64) << 28))
    }

    /// Explicit coordinate of a point. Only test oracles use these; the jet
    /// algebra itself has no explicit independent variable.
    pub fn coord(point: Point) -> Var {
        Var((KIND_COORD << 62) | ((point as u64) << 60))
    }

    fn kind(self) -> u64 {
        self.0 >> 62
    }

    pub fn is_param(self) -> bool {
        self.kind() == KIND_PARAM
    }

    pub fn is_jet(self) -> bool {
        self.kind() == KIND_JET
    }

    pub fn is_pointed(self) -> bool {
        self.kind() == KIND_POINTED
    }

    pub fn is_coord(self) -> bool {
        self.kind() == KIND_COORD
    }

    pub fn param_index(self) -> Option<u16> {
        self.is_param().then(|| (self.0 & 0xffff) as u16)
    }

    /// (component, order) of a jet or pointed-jet variable.
    pub fn jet_key(self) -> Option<(u16, u16)> {
        (self.is_jet() || self.is_pointed())
            .then(|| (((self.0 >> 44) & 0xffff) as u16, ((self.0 >> 28) & 0xffff) as u16))
    }

    pub fn point(self) -> Option<Point> {
        (self.is_pointed() || self.is_coord()).then(|| Point::from_bits((self.0 >> 60) & 0x3))
    }

    /// Same variable with the derivative order raised by one. Parameters have
    /// no sensible shift and return `None`.
    pub fn raise_order(self) -> Option<Var> {
        let (c, o) = self.jet_key()?;
        assert!(o < u16::MAX, "derivative order overflow");
        Some(match self.point() {
            Some(p) => Var::pointed(p, c, o + 1),
            None => Var::jet(c, o + 1),
        })
    }

    pub fn lower_order(self) -> Option<Var> {
        let (c, o) = self.jet_key()?;
        if o == 0 {
            return None;
        }
        Some(match self.point() {
            Some(p) => Var::pointed(p, c, o - 1),
            None => Var::jet(c, o - 1),
        })
    }

    /// Move a pointed variable (or coordinate) to another point.
    pub fn retag(self, to: Point) -> Var {
        if self.is_coord() {
            return Var::coord(to);
        }
        let (c, o) = self.jet_key().expect("retag of non-pointed variable");
        assert!(self.is_pointed(), "retag of plain jet variable");
        Var::pointed(to, c, o)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(i) = self.param_index() {
            return write!(f, "p{}", i);
        }
        if self.is_coord() {
            return write!(f, "{}", self.point().unwrap().name());
        }
        let (c, o) = self.jet_key().unwrap();
        write!(f, "u{}", c)?;
        match o {
            0 => {}
            1 => write!(f, "_x")?,
            k => write!(f, "_{}x", k)?,
        }
        if let Some(p) = self.point() {
            write!(f, "@{}", p.name())?;
        }
        Ok(())
    }
}

/// A monomial: factors sorted by descending variable, exponents positive.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(Vec::new())
    }

    pub fn var(v: Var) -> Monomial {
        Monomial(vec![(v, 1)])
    }

    pub fn from_powers(mut powers: Vec<(Var, u32)>) -> Monomial {
        powers.retain(|&(_, e)| e > 0);
        powers.sort_by(|a, b| b.0.cmp(&a.0));
        let mut merged: Vec<(Var, u32)> = Vec::with_capacity(powers.len());
        for (v, e) in powers {
            match merged.last_mut() {
                Some((lv, le)) if *lv == v => *le += e,
                _ => merged.push((v, e)),
            }
        }
        Monomial(merged)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u64 {
        self.0.iter().map(|&(_, e)| e as u64).sum()
    }

    pub fn exponent(&self, v: Var) -> u32 {
        self.0.iter().find(|&&(w, _)| w == v).map_or(0, |&(_, e)| e)
    }

    pub fn factors(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match other.0[j].0.cmp(&self.0[i].0) {
                Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0, self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Divide by `other`; `None` when not divisible.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut i = 0;
        for &(v, e) in &other.0 {
            loop {
                if i == self.0.len() {
                    return None;
                }
                let (w, f) = self.0[i];
                if w > v {
                    out.push((w, f));
                    i += 1;
                } else if w == v {
                    if f < e {
                        return None;
                    }
                    if f > e {
                        out.push((w, f - e));
                    }
                    i += 1;
                    break;
                } else {
                    return None;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        Some(Monomial(out))
    }

    /// Componentwise minimum of exponents.
    pub fn gcd(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match other.0[j].0.cmp(&self.0[i].0) {
                Ordering::Greater => j += 1,
                Ordering::Less => i += 1,
                Ordering::Equal => {
                    out.push((self.0[i].0, self.0[i].1.min(other.0[j].1)));
                    i += 1;
                    j += 1;
                }
            }
        }
        Monomial(out)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.0.iter().map(|&(v, _)| v)
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Monomial) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: total degree first, then exponent vectors
    /// compared from the largest variable downwards.
    fn cmp(&self, other: &Monomial) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            if a.0 != b.0 {
                return a.0.cmp(&b.0);
            }
            if a.1 != b.1 {
                return a.1.cmp(&b.1);
            }
        }
        Ordering::Equal
    }
}

/// A polynomial with `BigRational` coefficients. Terms are kept sorted with
/// the leading monomial first and never carry zero coefficients.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    terms: Vec<(Monomial, BigRational)>,
}

pub fn brat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl Poly {
    pub fn zero() -> Poly {
        Poly { terms: Vec::new() }
    }

    pub fn one() -> Poly {
        Poly::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: vec![(Monomial::one(), c)] }
    }

    pub fn int(n: i64) -> Poly {
        Poly::constant(BigRational::from(BigInt::from(n)))
    }

    pub fn rat(n: i64, d: i64) -> Poly {
        Poly::constant(brat(n, d))
    }

    pub fn var(v: Var) -> Poly {
        Poly { terms: vec![(Monomial::var(v), BigRational::one())] }
    }

    pub fn monomial(m: Monomial, c: BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: vec![(m, c)] }
    }

    /// Build from arbitrary (monomial, coefficient) pairs.
    pub fn from_terms(terms: Vec<(Monomial, BigRational)>) -> Poly {
        let mut terms = terms;
        terms.sort_by(|a, b| b.0.cmp(&a.0));
        let mut out: Vec<(Monomial, BigRational)> = Vec::with_capacity(terms.len());
        for (m, c) in terms {
            match out.last_mut() {
                Some((lm, lc)) if *lm == m => *lc += c,
                _ => out.push((m, c)),
            }
        }
        out.retain(|(_, c)| !c.is_zero());
        Poly { terms: out }
    }

    pub fn terms(&self) -> &[(Monomial, BigRational)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].0.is_one() && self.terms[0].1.is_one()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.len() <= 1 && self.terms.first().map_or(true, |(m, _)| m.is_one())
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        if self.is_zero() {
            return Some(BigRational::zero());
        }
        self.is_constant().then(|| self.terms[0].1.clone())
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn leading(&self) -> Option<&(Monomial, BigRational)> {
        self.terms.first()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u64 {
        self.terms.iter().map(|(m, _)| m.degree()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() && j < other.terms.len() {
            match self.terms[i].0.cmp(&other.terms[j].0) {
                Ordering::Greater => {
                    out.push(self.terms[i].clone());
                    i += 1;
                }
                Ordering::Less => {
                    out.push(other.terms[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    let c = &self.terms[i].1 + &other.terms[j].1;
                    if !c.is_zero() {
                        out.push((self.terms[i].0.clone(), c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.terms[i..]);
        out.extend_from_slice(&other.terms[j..]);
        Poly { terms: out }
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        if other.terms.len() == 1 {
            return self.mul_term(&other.terms[0].0, &other.terms[0].1);
        }
        if self.terms.len() == 1 {
            return other.mul_term(&self.terms[0].0, &self.terms[0].1);
        }
        let mut acc: std::collections::BTreeMap<Monomial, BigRational> =
            std::collections::BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = ma.mul(mb);
                let c = ca * cb;
                match acc.get_mut(&m) {
                    Some(e) => *e += c,
                    None => {
                        acc.insert(m, c);
                    }
                }
            }
        }
        let mut terms: Vec<(Monomial, BigRational)> =
            acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        terms.reverse();
        Poly { terms }
    }

    pub fn mul_term(&self, m: &Monomial, c: &BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(mm, cc)| (mm.mul(m), cc * c)).collect() }
    }

    pub fn mul_scalar(&self, c: &BigRational) -> Poly {
        self.mul_term(&Monomial::one(), c)
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        out
    }

    /// Partial derivative with respect to one variable.
    pub fn derivative(&self, v: Var) -> Poly {
        let mut terms = Vec::new();
        for (m, c) in &self.terms {
            let e = m.exponent(v);
            if e == 0 {
                continue;
            }
            let mut powers: Vec<(Var, u32)> = m.factors().to_vec();
            for p in powers.iter_mut() {
                if p.0 == v {
                    p.1 -= 1;
                }
            }
            terms.push((Monomial::from_powers(powers), c * BigRational::from(BigInt::from(e))));
        }
        Poly::from_terms(terms)
    }

    /// Derivation defined by its action on variables: `dir(v)` is the image
    /// of `v` (or `None` when the variable is a constant for the derivation).
    pub fn directional_derivative(&self, dir: &dyn Fn(Var) -> Option<Poly>) -> Poly {
        let mut vars: Vec<Var> = Vec::new();
        for (m, _) in &self.terms {
            for v in m.vars() {
                if let Err(pos) = vars.binary_search(&v) {
                    vars.insert(pos, v);
                }
            }
        }
        let mut out = Poly::zero();
        for v in vars {
            if let Some(img) = dir(v) {
                if !img.is_zero() {
                    out = out.add(&self.derivative(v).mul(&img));
                }
            }
        }
        out
    }

    /// Apply a variable renaming (must be injective on the variables present
    /// or intentionally merging, e.g. retagging points).
    pub fn map_vars(&self, f: &dyn Fn(Var) -> Var) -> Poly {
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let powers = m.factors().iter().map(|&(v, e)| (f(v), e)).collect();
                (Monomial::from_powers(powers), c.clone())
            })
            .collect();
        Poly::from_terms(terms)
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut vars: Vec<Var> = Vec::new();
        for (m, _) in &self.terms {
            for v in m.vars() {
                if let Err(pos) = vars.binary_search(&v) {
                    vars.insert(pos, v);
                }
            }
        }
        vars
    }

    pub fn contains_var(&self, v: Var) -> bool {
        self.terms.iter().any(|(m, _)| m.exponent(v) > 0)
    }

    pub fn degree_in(&self, v: Var) -> u32 {
        self.terms.iter().map(|(m, _)| m.exponent(v)).max().unwrap_or(0)
    }

    /// Coefficients of powers of `v`: index k holds the coefficient of v^k,
    /// free of `v`.
    pub fn univariate_in(&self, v: Var) -> Vec<Poly> {
        let deg = self.degree_in(v) as usize;
        let mut out = vec![Poly::zero(); deg + 1];
        for (m, c) in &self.terms {
            let e = m.exponent(v) as usize;
            let rest = m.div(&Monomial::from_powers(vec![(v, e as u32)])).unwrap();
            out[e] = out[e].add(&Poly::monomial(rest, c.clone()));
        }
        out
    }

    pub fn from_univariate(coeffs: &[Poly], v: Var) -> Poly {
        let mut out = Poly::zero();
        for (k, c) in coeffs.iter().enumerate() {
            let vp = Poly::monomial(Monomial::from_powers(vec![(v, k as u32)]), BigRational::one());
            out = out.add(&c.mul(&vp));
        }
        out
    }

    /// Exact division; `None` when `other` does not divide `self`.
    pub fn div_exact(&self, other: &Poly) -> Option<Poly> {
        if other.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Poly::zero());
        }
        if other.is_one() {
            return Some(self.clone());
        }
        if let Some(c) = other.as_constant() {
            return Some(self.mul_scalar(&(BigRational::one() / c)));
        }
        let (lm, lc) = other.leading().unwrap();
        let mut rem = self.clone();
        let mut quo_terms: Vec<(Monomial, BigRational)> = Vec::new();
        while let Some((rm, rc)) = rem.leading() {
            let qm = rm.div(lm)?;
            let qc = rc / lc;
            rem = rem.sub(&other.mul_term(&qm, &qc));
            quo_terms.push((qm, qc));
        }
        Some(Poly::from_terms(quo_terms))
    }

    /// Rational content: the positive rational c such that self/c has
    /// coprime integer coefficients with positive leading coefficient is
    /// `content * sign(leading)`.
    fn rational_content(&self) -> BigRational {
        let mut num_gcd = BigInt::zero();
        let mut den_lcm = BigInt::one();
        for (_, c) in &self.terms {
            num_gcd = num_gcd.gcd(c.numer());
            den_lcm = den_lcm.lcm(c.denom());
        }
        if num_gcd.is_zero() {
            return BigRational::one();
        }
        BigRational::new(num_gcd, den_lcm)
    }

    /// (unit-normalized primitive part, content): `self = content * primitive`,
    /// where the primitive part has coprime integer coefficients and positive
    /// leading coefficient; the content carries the sign.
    pub fn primitive_parts(&self) -> (Poly, BigRational) {
        if self.is_zero() {
            return (Poly::zero(), BigRational::zero());
        }
        let mut content = self.rational_content();
        if self.leading().unwrap().1.is_negative() {
            content = -content;
        }
        let inv = BigRational::one() / content.clone();
        (self.mul_scalar(&inv), content)
    }

    /// Greatest common divisor, returned primitive with positive leading
    /// coefficient (so gcd of nonzero constants is 1).
    pub fn gcd(&self, other: &Poly) -> Poly {
        if self.is_zero() {
            return other.primitive_parts().0;
        }
        if other.is_zero() {
            return self.primitive_parts().0;
        }
        let (a, _) = self.primitive_parts();
        let (b, _) = other.primitive_parts();
        if a == b {
            return a;
        }
        if a.is_constant() || b.is_constant() {
            return Poly::one();
        }
        // Monomial operands reduce to exponent minima and are very common
        // as denominators, so handle them directly.
        if a.is_monomial() || b.is_monomial() {
            let ma = a
                .terms
                .iter()
                .map(|(m, _)| m.clone())
                .reduce(|x, y| x.gcd(&y))
                .unwrap();
            let mb = b
                .terms
                .iter()
                .map(|(m, _)| m.clone())
                .reduce(|x, y| x.gcd(&y))
                .unwrap();
            return Poly::monomial(ma.gcd(&mb), BigRational::one());
        }
        // Cheap divisibility checks avoid the PRS in the frequent nested case.
        if a.total_degree() <= b.total_degree() {
            if b.div_exact(&a).is_some() {
                return a;
            }
        } else if a.div_exact(&b).is_some() {
            return b;
        }
        // Shared variables only; anything else cannot appear in the gcd.
        let vars_a = a.vars();
        let vars_b = b.vars();
        let shared: Vec<Var> = vars_a.iter().copied().filter(|v| vars_b.contains(v)).collect();
        if shared.is_empty() {
            return Poly::one();
        }
        let v = *shared
            .iter()
            .min_by_key(|&&v| a.degree_in(v).min(b.degree_in(v)))
            .unwrap();
        let (pa, ca) = a.univariate_content(v);
        let (pb, cb) = b.univariate_content(v);
        let content_gcd = ca.gcd(&cb);
        let prs = Poly::subresultant_prs(&pa, &pb, v);
        content_gcd.mul(&prs).primitive_parts().0
    }

    /// Content and primitive part with respect to one variable: content is
    /// the gcd of the `v`-coefficients, primitive part is `self / content`.
    fn univariate_content(&self, v: Var) -> (Poly, Poly) {
        let coeffs = self.univariate_in(v);
        let mut content = Poly::zero();
        for c in coeffs.iter().filter(|c| !c.is_zero()) {
            content = content.gcd(c);
            if content.is_one() {
                break;
            }
        }
        let prim = self.div_exact(&content).expect("content must divide");
        (prim, content)
    }

    /// Subresultant polynomial remainder sequence in `v`; inputs primitive in
    /// `v`, output the primitive gcd of the two.
    fn subresultant_prs(&self, other: &Poly, v: Var) -> Poly {
        let (mut a, mut b) = if self.degree_in(v) >= other.degree_in(v) {
            (self.clone(), other.clone())
        } else {
            (other.clone(), self.clone())
        };
        let mut g = Poly::one();
        let mut h = Poly::one();
        loop {
            let delta = a.degree_in(v) - b.degree_in(v);
            let r = Poly::pseudo_rem(&a, &b, v);
            if r.is_zero() {
                return b.univariate_content(v).0;
            }
            if r.degree_in(v) == 0 {
                return Poly::one();
            }
            a = b;
            let mut divisor = g.clone();
            for _ in 0..delta {
                divisor = divisor.mul(&h);
            }
            b = r.div_exact(&divisor).expect("subresultant divisor must divide");
            g = a.univariate_in(v).pop().unwrap();
            if delta > 0 {
                let gd = g.pow(delta);
                let hd = h.pow(delta - 1);
                h = gd.div_exact(&hd).expect("subresultant h update must divide");
            }
        }
    }

    /// Pseudo-remainder: lc(b)^(deg a - deg b + 1) * a  =  q*b + r with
    /// deg_v r < deg_v b.
    fn pseudo_rem(a: &Poly, b: &Poly, v: Var) -> Poly {
        let db = b.degree_in(v);
        let mut ua = a.univariate_in(v);
        let ub = b.univariate_in(v);
        let lb = ub.last().unwrap().clone();
        let da = a.degree_in(v);
        let mut reps = da as i64 - db as i64 + 1;
        while ua.len() as u32 > db && !ua.is_empty() {
            let la = ua.pop().unwrap();
            let shift = ua.len() as u32 + 1 - db - 1;
            // ua := lb*ua - la * v^shift * b (excluding the cancelled lead)
            for c in ua.iter_mut() {
                *c = c.mul(&lb);
            }
            if !la.is_zero() {
                for (k, bc) in ub.iter().enumerate().take(db as usize) {
                    let idx = k + shift as usize;
                    ua[idx] = ua[idx].sub(&la.mul(bc));
                }
            }
            while ua.last().map_or(false, |c| c.is_zero()) {
                ua.pop();
            }
            reps -= 1;
        }
        let mut r = Poly::from_univariate(&ua, v);
        // Pay out any unused lc(b) factors so the subresultant bookkeeping
        // stays exact.
        while reps > 0 {
            r = r.mul(&lb);
            reps -= 1;
        }
        r
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", c)?;
            for (v, e) in m.factors() {
                write!(f, "*{:?}", v)?;
                if *e > 1 {
                    write!(f, "^{}", e)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(c: u16, o: u16) -> Poly {
        Poly::var(Var::jet(c, o))
    }

    #[test]
    fn variable_order_matches_fixed_order() {
        // parameters < jets; jets by (component, order); points major for
        // pointed variables.
        assert!(Var::param(0) < Var::jet(1, 0));
        assert!(Var::jet(1, 5) < Var::jet(2, 0));
        assert!(Var::jet(1, 0) < Var::jet(1, 1));
        assert!(Var::jet(3, 7) < Var::pointed(Point::X, 1, 0));
        assert!(Var::pointed(Point::X, 2, 9) < Var::pointed(Point::Y, 1, 0));
    }

    #[test]
    fn graded_lex_examples() {
        let x = Var::jet(1, 0);
        let y = Var::jet(2, 0);
        let z = Var::jet(3, 0);
        let m = |ps: &[(Var, u32)]| Monomial::from_powers(ps.to_vec());
        // y is more significant than x, so x^2 y beats x^3 at equal degree
        assert!(m(&[(x, 2), (y, 1)]) > m(&[(x, 3)]));
        assert!(m(&[(x, 1), (z, 1)]) > m(&[(y, 2)]));
        assert!(m(&[(y, 1), (x, 1)]) > m(&[(y, 1)])); // degree wins
        assert!(m(&[(x, 2)]) > m(&[(y, 1)])); // degree wins over variable rank
    }

    #[test]
    fn arithmetic_and_canonical_form() {
        let a = u(1, 0);
        let zero = a.sub(&a);
        assert!(zero.is_zero());
        let p = a.mul(&a).sub(&Poly::one()); // u1^2 - 1
        let q = a.sub(&Poly::one()); // u1 - 1
        let d = p.div_exact(&q).unwrap();
        assert_eq!(d, a.add(&Poly::one()));
    }

    #[test]
    fn exact_division_failure() {
        let a = u(1, 0);
        let p = a.mul(&a).add(&Poly::one());
        assert!(p.div_exact(&a).is_none());
    }

    #[test]
    fn derivative_is_per_variable() {
        let a = u(1, 0);
        let b = u(1, 1);
        let p = a.pow(2).mul(&b).add(&b.pow(3)); // u1^2 u1_x + u1_x^3
        let da = p.derivative(Var::jet(1, 0));
        assert_eq!(da, a.mul(&b).mul_scalar(&brat(2, 1)));
        let db = p.derivative(Var::jet(1, 1));
        assert_eq!(db, a.pow(2).add(&b.pow(2).mul_scalar(&brat(3, 1))));
    }

    #[test]
    fn gcd_basic() {
        let a = u(1, 0);
        let b = u(2, 0);
        // gcd((u1+u2)^2 * u1, (u1+u2) * u1^2) = (u1+u2)*u1
        let s = a.add(&b);
        let p = s.pow(2).mul(&a);
        let q = s.mul(&a.pow(2));
        assert_eq!(p.gcd(&q), s.mul(&a));
        // coprime
        assert_eq!(a.gcd(&b), Poly::one());
        // contents and signs: gcd(-2u1, 4u1^2) = u1 (primitive positive)
        let m = a.mul_scalar(&brat(-2, 1));
        let n = a.pow(2).mul_scalar(&brat(4, 1));
        assert_eq!(m.gcd(&n), a);
    }

    #[test]
    fn gcd_multivariate_stress() {
        let a = u(1, 0);
        let b = u(2, 0);
        let c = u(1, 1);
        let g = a.pow(2).add(&b.mul(&c)).add(&Poly::int(3));
        let f1 = g.mul(&a.add(&b)).mul(&c.add(&Poly::one()));
        let f2 = g.mul(&a.sub(&b)).mul(&c.pow(2));
        let got = f1.gcd(&f2);
        assert_eq!(got, g.primitive_parts().0);
    }

    #[test]
    fn map_vars_merges() {
        let vy = Var::pointed(Point::Y, 1, 0);
        let vx = Var::pointed(Point::X, 1, 0);
        let p = Poly::var(vy).mul(&Poly::var(vx)); // u1@x * u1@y
        let q = p.map_vars(&|v| if v == vy { vx } else { v });
        assert_eq!(q, Poly::var(vx).pow(2));
    }
}

//! Variational calculus: local differential operators, formal adjoints, the
//! Euler (variational derivative) operator, inversion of the total
//! derivative, operator linearization data, and Hamiltonian flows.

use crate::jet::JetExpression;
use crate::op::WeaklyNonlocalOperator;
use crate::poly::{Poly, Var};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};

pub fn binomial(n: u64, k: u64) -> BigRational {
    if k > n {
        return BigRational::zero();
    }
    let mut out = BigInt::one();
    for i in 0..k.min(n - k) {
        out = out * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    BigRational::from(out)
}

/// A scalar local differential operator sum_k coeffs[k] * Dx^k.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct LocalOp {
    coeffs: Vec<JetExpression>,
}

impl LocalOp {
    pub fn new(mut coeffs: Vec<JetExpression>) -> LocalOp {
        while coeffs.last().map_or(false, |c| c.is_zero()) {
            coeffs.pop();
        }
        LocalOp { coeffs }
    }

    pub fn zero() -> LocalOp {
        LocalOp { coeffs: Vec::new() }
    }

    pub fn from_coeff(order: usize, coeff: JetExpression) -> LocalOp {
        if coeff.is_zero() {
            return LocalOp::zero();
        }
        let mut coeffs = vec![JetExpression::zero(); order + 1];
        coeffs[order] = coeff;
        LocalOp { coeffs }
    }

    pub fn multiplication(coeff: JetExpression) -> LocalOp {
        LocalOp::from_coeff(0, coeff)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest power of Dx with a nonzero coefficient; None for the zero
    /// operator.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, k: usize) -> JetExpression {
        self.coeffs.get(k).cloned().unwrap_or_else(JetExpression::zero)
    }

    pub fn coeffs(&self) -> &[JetExpression] {
        &self.coeffs
    }

    pub fn add(&self, other: &LocalOp) -> LocalOp {
        let len = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..len).map(|k| &self.coeff(k) + &other.coeff(k)).collect();
        LocalOp::new(coeffs)
    }

    pub fn neg(&self) -> LocalOp {
        LocalOp { coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }

    pub fn scale(&self, f: &JetExpression) -> LocalOp {
        LocalOp::new(self.coeffs.iter().map(|c| c * f).collect())
    }

    pub fn apply(&self, f: &JetExpression) -> JetExpression {
        let mut out = JetExpression::zero();
        let mut df = f.clone();
        for (k, c) in self.coeffs.iter().enumerate() {
            if k > 0 {
                df = df.total_derivative();
            }
            if !c.is_zero() {
                out = &out + &(c * &df);
            }
        }
        out
    }

    /// Formal adjoint: (sum a_k Dx^k)^+ = sum (-Dx)^k (a_k . ), re-expanded
    /// with coefficients to the left.
    pub fn adjoint(&self) -> LocalOp {
        let mut out = LocalOp::zero();
        for (k, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let sign = if k % 2 == 0 { 1 } else { -1 };
            let mut da = a.clone();
            // t-th order term gets C(k,t) * Dx^{k-t}(a_k); walk s = k-t down.
            let mut parts: Vec<JetExpression> = vec![da.clone()];
            for _ in 0..k {
                da = da.total_derivative();
                parts.push(da.clone());
            }
            let mut coeffs = vec![JetExpression::zero(); k + 1];
            for (t, item) in coeffs.iter_mut().enumerate() {
                let b = binomial(k as u64, t as u64) * BigRational::from(BigInt::from(sign));
                *item = &JetExpression::constant(b) * &parts[k - t];
            }
            out = out.add(&LocalOp::new(coeffs));
        }
        out
    }

    /// Operator composition self . other.
    pub fn compose(&self, other: &LocalOp) -> LocalOp {
        let mut out = LocalOp::zero();
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            // Dx^i (b_j Dx^j f) = sum_k C(i,k) Dx^k(b_j) Dx^{i-k+j} f
            let mut db: Vec<JetExpression> = Vec::with_capacity(i + 1);
            for (j, b) in other.coeffs.iter().enumerate() {
                db.clear();
                db.push(b.clone());
                for _ in 0..i {
                    db.push(db.last().unwrap().total_derivative());
                }
                let mut coeffs = vec![JetExpression::zero(); i + j + 1];
                for k in 0..=i {
                    let c = JetExpression::constant(binomial(i as u64, k as u64));
                    coeffs[i - k + j] = &coeffs[i - k + j] + &(&(a * &c) * &db[k]);
                }
                out = out.add(&LocalOp::new(coeffs));
            }
        }
        out
    }

    /// Max derivative order appearing in the coefficients.
    pub fn coeff_order(&self) -> u16 {
        self.coeffs.iter().filter_map(|c| c.max_order()).max().unwrap_or(0)
    }
}

/// Square matrix of local operators; entry (i, j) acts on the j-th component
/// of a covector and contributes to the i-th component of the image.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LocalMatrix {
    pub n: usize,
    entries: Vec<Vec<LocalOp>>,
}

impl LocalMatrix {
    pub fn zero(n: usize) -> LocalMatrix {
        LocalMatrix { n, entries: vec![vec![LocalOp::zero(); n]; n] }
    }

    pub fn from_entries(entries: Vec<Vec<LocalOp>>) -> LocalMatrix {
        let n = entries.len();
        assert!(entries.iter().all(|row| row.len() == n), "matrix must be square");
        LocalMatrix { n, entries }
    }

    pub fn entry(&self, i: usize, j: usize) -> &LocalOp {
        &self.entries[i][j]
    }

    pub fn set_entry(&mut self, i: usize, j: usize, v: LocalOp) {
        self.entries[i][j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(|e| e.is_zero())
    }

    pub fn add(&self, other: &LocalMatrix) -> LocalMatrix {
        assert_eq!(self.n, other.n);
        let entries = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entries[i][j].add(&other.entries[i][j])).collect())
            .collect();
        LocalMatrix { n: self.n, entries }
    }

    pub fn neg(&self) -> LocalMatrix {
        let entries =
            self.entries.iter().map(|row| row.iter().map(|e| e.neg()).collect()).collect();
        LocalMatrix { n: self.n, entries }
    }

    /// (A^+)^{ij} = (A^{ji})^+.
    pub fn adjoint(&self) -> LocalMatrix {
        let entries = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entries[j][i].adjoint()).collect())
            .collect();
        LocalMatrix { n: self.n, entries }
    }

    pub fn apply(&self, psi: &[JetExpression]) -> Vec<JetExpression> {
        assert_eq!(psi.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut out = JetExpression::zero();
                for (j, p) in psi.iter().enumerate() {
                    out = &out + &self.entries[i][j].apply(p);
                }
                out
            })
            .collect()
    }

    pub fn degree(&self) -> usize {
        self.entries.iter().flatten().filter_map(|e| e.degree()).max().unwrap_or(0)
    }

    pub fn coeff_order(&self) -> u16 {
        self.entries.iter().flatten().map(|e| e.coeff_order()).max().unwrap_or(0)
    }
}

/// Variational derivative delta f / delta u^i = sum_sigma (-Dx)^sigma
/// d f / d u^i_sigma, for components 1..=n.
pub fn variational_derivative(f: &JetExpression, n: u16) -> Vec<JetExpression> {
    let max_order = f.max_order().unwrap_or(0);
    (1..=n)
        .map(|i| {
            let mut out = JetExpression::zero();
            for sigma in 0..=max_order {
                let p = f.partial(Var::jet(i, sigma));
                if p.is_zero() {
                    continue;
                }
                let term = p.total_derivative_n(sigma);
                out = if sigma % 2 == 0 { &out + &term } else { &out - &term };
            }
            out
        })
        .collect()
}

/// Failure report for total-derivative inversion.
#[derive(Clone, Debug)]
pub enum NotTotalDerivative {
    /// A variational derivative is nonzero: (component, its value).
    EulerObstruction(u16, JetExpression),
    /// Exact by the Euler test up to a nonzero constant remainder (constants
    /// are not total derivatives of autonomous densities).
    ConstantRemainder(JetExpression),
    /// The stripping reconstruction got stuck; carries the remainder.
    /// Not reachable for densities that pass the Euler test.
    Stuck(JetExpression),
}

impl std::fmt::Display for NotTotalDerivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NotTotalDerivative::EulerObstruction(i, e) => {
                write!(f, "not a total derivative: delta/delta u{} = {:?}", i, e)
            }
            NotTotalDerivative::ConstantRemainder(c) => {
                write!(f, "not a total derivative: constant remainder {:?}", c)
            }
            NotTotalDerivative::Stuck(r) => {
                write!(f, "reconstruction stuck at remainder {:?}", r)
            }
        }
    }
}

/// Find g with Dx g = f, exactly. The density is first screened with the
/// Euler test (the variational derivative annihilates exactly the total
/// derivatives plus constants), then g is reconstructed by repeatedly
/// integrating the top jet variable in the fixed variable order.
pub fn integrate_total_derivative(
    f: &JetExpression,
) -> Result<JetExpression, NotTotalDerivative> {
    if f.is_zero() {
        return Ok(JetExpression::zero());
    }
    let max_comp = f
        .vars()
        .iter()
        .filter_map(|v| if v.is_jet() { v.jet_key() } else { None })
        .map(|(c, _)| c)
        .max()
        .unwrap_or(0);
    for (idx, vd) in variational_derivative(f, max_comp).into_iter().enumerate() {
        if !vd.is_zero() {
            return Err(NotTotalDerivative::EulerObstruction(idx as u16 + 1, vd));
        }
    }
    let mut rest = f.clone();
    let mut g = JetExpression::zero();
    loop {
        if rest.is_zero() {
            return Ok(g);
        }
        let top = rest.vars().into_iter().filter(|v| v.is_jet()).max();
        let v = match top {
            None => return Err(NotTotalDerivative::ConstantRemainder(rest)),
            Some(v) => v,
        };
        let (comp, order) = v.jet_key().unwrap();
        if order == 0 {
            return Err(NotTotalDerivative::Stuck(rest));
        }
        // Exact densities are linear in their top variable with a coefficient
        // free of it.
        let a = rest.partial(v);
        if a.contains_var(v) {
            return Err(NotTotalDerivative::Stuck(rest));
        }
        let w = Var::jet(comp, order - 1);
        let prim = match antiderivative(&a, w) {
            Some(p) => p,
            None => return Err(NotTotalDerivative::Stuck(rest)),
        };
        g = &g + &prim;
        rest = &rest - &prim.total_derivative();
    }
}

/// Antiderivative of a rational expression with respect to a single variable
/// when it exists inside the rational functions (no logarithms), by the
/// Horowitz-Ostrogradsky decomposition.
fn antiderivative(a: &JetExpression, w: Var) -> Option<JetExpression> {
    if a.is_zero() {
        return Some(JetExpression::zero());
    }
    let un = up_from_poly(a.numerator(), w);
    let ud = up_from_poly(a.denominator(), w);
    let (quo, rem) = up_divrem(&un, &ud);
    // Polynomial part integrates termwise.
    let mut out = JetExpression::zero();
    for (k, c) in quo.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let factor = &JetExpression::rat(1, k as i64 + 1) * c;
        out = &out + &(&factor * &JetExpression::var(w).pow(k as i32 + 1));
    }
    if up_is_zero(&rem) {
        return Some(out);
    }
    if up_deg(&ud) == 0 {
        unreachable!("nonzero remainder under constant divisor");
    }
    let dd = up_derivative(&ud);
    let b = up_gcd(&ud, &dd);
    if up_deg(&b) == 0 {
        // Squarefree denominator: a proper fraction integrates to logs only.
        return None;
    }
    let dstar = up_divexact(&ud, &b);
    // t = B' * Dstar / B is a polynomial.
    let t = up_divexact(&up_mul(&up_derivative(&b), &dstar), &b);
    let nb = up_deg(&b);
    let nd = up_deg(&dstar);
    // Unknowns: A (deg < nb) then C (deg < nd); equations match coefficients
    // of w^m, m < nb + nd, in A'*Dstar - A*T + C*B = rem.
    let rows = nb + nd;
    let mut mat = vec![vec![JetExpression::zero(); rows]; rows];
    let mut rhs = vec![JetExpression::zero(); rows];
    for (m, c) in rem.iter().enumerate() {
        rhs[m] = c.clone();
    }
    for tdx in 0..nb {
        // column for a_t: t*w^{t-1}*Dstar - w^t*T
        let deriv_part = if tdx == 0 {
            Vec::new()
        } else {
            up_scale(&up_shift(&dstar, tdx - 1), &JetExpression::int(tdx as i64))
        };
        let col = up_sub(&deriv_part, &up_shift(&t, tdx));
        for (m, c) in col.iter().enumerate() {
            if m < rows {
                mat[m][tdx] = c.clone();
            }
        }
    }
    for s in 0..nd {
        let col = up_shift(&b, s);
        for (m, c) in col.iter().enumerate() {
            if m < rows {
                mat[m][nb + s] = c.clone();
            }
        }
    }
    let sol = solve_linear(mat, rhs)?;
    // The log part must vanish for a rational antiderivative.
    if sol[nb..].iter().any(|c| !c.is_zero()) {
        return None;
    }
    let a_poly = sol[..nb].to_vec();
    let rational_part = &up_to_jet(&a_poly, w) / &up_to_jet(&b, w);
    Some(&out + &rational_part)
}

// ---- univariate helpers over the rational-function coefficient field ----
// A UPoly is a coefficient vector indexed by the power of the distinguished
// variable, trimmed of trailing zeros; empty means zero.

type UPoly = Vec<JetExpression>;

fn up_trim(mut p: UPoly) -> UPoly {
    while p.last().map_or(false, |c| c.is_zero()) {
        p.pop();
    }
    p
}

fn up_is_zero(p: &UPoly) -> bool {
    p.is_empty()
}

/// Degree of a nonzero polynomial (0 for constants).
fn up_deg(p: &UPoly) -> usize {
    p.len().saturating_sub(1)
}

fn up_from_poly(p: &Poly, w: Var) -> UPoly {
    up_trim(p.univariate_in(w).into_iter().map(JetExpression::from_poly).collect())
}

fn up_to_jet(p: &UPoly, w: Var) -> JetExpression {
    let mut out = JetExpression::zero();
    for (k, c) in p.iter().enumerate() {
        out = &out + &(c * &JetExpression::var(w).pow(k as i32));
    }
    out
}

fn up_sub(a: &UPoly, b: &UPoly) -> UPoly {
    let len = a.len().max(b.len());
    let zero = JetExpression::zero();
    up_trim(
        (0..len)
            .map(|k| {
                let x = a.get(k).unwrap_or(&zero);
                let y = b.get(k).unwrap_or(&zero);
                x - y
            })
            .collect(),
    )
}

fn up_scale(a: &UPoly, f: &JetExpression) -> UPoly {
    if f.is_zero() {
        return Vec::new();
    }
    a.iter().map(|c| c * f).collect()
}

/// Multiply by w^k.
fn up_shift(a: &UPoly, k: usize) -> UPoly {
    if up_is_zero(a) {
        return Vec::new();
    }
    let mut out = vec![JetExpression::zero(); k];
    out.extend(a.iter().cloned());
    out
}

fn up_mul(a: &UPoly, b: &UPoly) -> UPoly {
    if up_is_zero(a) || up_is_zero(b) {
        return Vec::new();
    }
    let mut out = vec![JetExpression::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] = &out[i + j] + &(x * y);
        }
    }
    up_trim(out)
}

fn up_derivative(a: &UPoly) -> UPoly {
    if a.len() <= 1 {
        return Vec::new();
    }
    up_trim(
        a.iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| &JetExpression::int(k as i64) * c)
            .collect(),
    )
}

fn up_divrem(a: &UPoly, b: &UPoly) -> (UPoly, UPoly) {
    assert!(!up_is_zero(b), "univariate division by zero");
    let mut rem = up_trim(a.clone());
    let db = up_deg(b);
    let lead = b.last().unwrap();
    if rem.len() < b.len() {
        return (Vec::new(), rem);
    }
    let mut quo = vec![JetExpression::zero(); rem.len() - b.len() + 1];
    // Each pass clears the top coefficient, so rem strictly shrinks.
    while !up_is_zero(&rem) && up_deg(&rem) >= db {
        let dr = up_deg(&rem);
        let c = &rem[dr] / lead;
        let shift = dr - db;
        quo[shift] = &quo[shift] + &c;
        for (k, bc) in b.iter().enumerate() {
            rem[k + shift] = &rem[k + shift] - &(&c * bc);
        }
        rem = up_trim(rem);
    }
    (up_trim(quo), rem)
}

fn up_divexact(a: &UPoly, b: &UPoly) -> UPoly {
    let (q, r) = up_divrem(a, b);
    assert!(up_is_zero(&r), "inexact univariate division");
    q
}

/// Monic gcd by the Euclidean algorithm over the coefficient field.
fn up_gcd(a: &UPoly, b: &UPoly) -> UPoly {
    let mut x = a.clone();
    let mut y = b.clone();
    while !up_is_zero(&y) {
        let (_, r) = up_divrem(&x, &y);
        x = y;
        y = r;
    }
    if up_is_zero(&x) {
        return x;
    }
    let lead = x.last().unwrap().clone();
    up_scale(&x, &lead.inverse())
}

/// Gaussian elimination over the rational-function field; None when the
/// system is singular/inconsistent.
fn solve_linear(
    mut mat: Vec<Vec<JetExpression>>,
    mut rhs: Vec<JetExpression>,
) -> Option<Vec<JetExpression>> {
    let n = mat.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !mat[r][col].is_zero())?;
        mat.swap(col, pivot);
        rhs.swap(col, pivot);
        let inv = mat[col][col].inverse();
        for c in col..n {
            mat[col][c] = &mat[col][c] * &inv;
        }
        rhs[col] = &rhs[col] * &inv;
        for r in 0..n {
            if r == col || mat[r][col].is_zero() {
                continue;
            }
            let factor = mat[r][col].clone();
            for c in col..n {
                mat[r][c] = &mat[r][c] - &(&factor * &mat[col][c]);
            }
            rhs[r] = &rhs[r] - &(&factor * &rhs[col]);
        }
    }
    Some(rhs)
}

/// First-order variation data of a weakly nonlocal operator: all nonzero
/// partial derivatives of its coefficient functions with respect to jet
/// variables, organized so both the standalone linearization and the bracket
/// engine consume the same table.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub n: u16,
    /// (i, j, sigma, k, tau, dB^{ij sigma}/du^k_tau)
    pub local: Vec<(u16, u16, u16, u16, u16, JetExpression)>,
    /// (alpha, i, k, tau, dw^i_alpha/du^k_tau)
    pub tail: Vec<(usize, u16, u16, u16, JetExpression)>,
}

/// Enumerate the nonzero partials of `f` with respect to every jet variable
/// present in it.
pub fn coefficient_partials(f: &JetExpression) -> Vec<(u16, u16, JetExpression)> {
    let mut out = Vec::new();
    for v in f.vars() {
        if !v.is_jet() {
            continue;
        }
        let d = f.partial(v);
        if !d.is_zero() {
            let (k, tau) = v.jet_key().unwrap();
            out.push((k, tau, d));
        }
    }
    out
}

/// Build the linearization table of an operator (the derivative of the
/// operator along a field direction phi, organized term by term: local
/// coefficients first, then tail columns).
pub fn linearize(p: &WeaklyNonlocalOperator) -> Linearization {
    let n = p.components();
    let mut local = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            let entry = p.local().entry(i as usize - 1, j as usize - 1);
            for (sigma, c) in entry.coeffs().iter().enumerate() {
                for (k, tau, d) in coefficient_partials(c) {
                    local.push((i, j, sigma as u16, k, tau, d));
                }
            }
        }
    }
    let mut tail = Vec::new();
    for alpha in 0..p.tail_count() {
        for i in 1..=n {
            let w = p.tail_column(alpha)[i as usize - 1].clone();
            for (k, tau, d) in coefficient_partials(&w) {
                tail.push((alpha, i, k, tau, d));
            }
        }
    }
    Linearization { n, local, tail }
}

/// One component of a Hamiltonian flow; `nonlocal` collects unresolved tail
/// terms as (outer coefficient, integrand of Dx^{-1}).
#[derive(Clone, Debug)]
pub struct FlowComponent {
    pub local: JetExpression,
    pub nonlocal: Vec<(JetExpression, JetExpression)>,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub components: Vec<FlowComponent>,
    /// False when some tail integral could not be resolved and stayed
    /// symbolic.
    pub fully_local: bool,
}

/// The evolutionary flow u_t = P(delta h / delta u). Tail terms
/// Dx^{-1}(w_beta . delta h) are resolved through `integrate_total_derivative`
/// whenever the integrand is exact.
pub fn hamiltonian_flow(p: &WeaklyNonlocalOperator, h: &JetExpression) -> FlowResult {
    let n = p.components();
    let kappa = variational_derivative(h, n);
    let mut components: Vec<FlowComponent> = p
        .local()
        .apply(&kappa)
        .into_iter()
        .map(|local| FlowComponent { local, nonlocal: Vec::new() })
        .collect();
    let mut fully_local = true;
    for beta in 0..p.tail_count() {
        let wb = p.tail_column(beta);
        let mut integrand = JetExpression::zero();
        for (j, k) in kappa.iter().enumerate() {
            integrand = &integrand + &(&wb[j] * k);
        }
        if integrand.is_zero() {
            continue;
        }
        match integrate_total_derivative(&integrand) {
            Ok(g) => {
                for (i, comp) in components.iter_mut().enumerate() {
                    let mut outer = JetExpression::zero();
                    for alpha in 0..p.tail_count() {
                        let c = p.tail_constant(alpha, beta);
                        if !c.is_zero() {
                            outer = &outer + &(&c * &p.tail_column(alpha)[i]);
                        }
                    }
                    if !outer.is_zero() {
                        comp.local = &comp.local + &(&outer * &g);
                    }
                }
            }
            Err(_) => {
                fully_local = false;
                for (i, comp) in components.iter_mut().enumerate() {
                    let mut outer = JetExpression::zero();
                    for alpha in 0..p.tail_count() {
                        let c = p.tail_constant(alpha, beta);
                        if !c.is_zero() {
                            outer = &outer + &(&c * &p.tail_column(alpha)[i]);
                        }
                    }
                    if !outer.is_zero() {
                        comp.nonlocal.push((outer, integrand.clone()));
                    }
                }
            }
        }
    }
    FlowResult { components, fully_local }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::q;

    fn u(c: u16) -> JetExpression {
        JetExpression::jet(c, 0)
    }

    fn ux(c: u16, o: u16) -> JetExpression {
        JetExpression::jet(c, o)
    }

    #[test]
    fn variational_derivative_examples() {
        // delta(u1 u1_xx)/delta u1 = 2 u1_xx
        let f = &u(1) * &ux(1, 2);
        let vd = variational_derivative(&f, 1);
        assert_eq!(vd[0], &q(2, 1) * &ux(1, 2));
        // total derivatives are annihilated
        let g = &u(1).pow(3) * &ux(1, 1);
        for c in variational_derivative(&g.total_derivative(), 1) {
            assert!(c.is_zero());
        }
        // multi-component: delta(u1 u2_x)/delta u2 = -u1_x
        let h = &u(1) * &ux(2, 1);
        let vd = variational_derivative(&h, 2);
        assert_eq!(vd[0], ux(2, 1));
        assert_eq!(vd[1], -&ux(1, 1));
    }

    #[test]
    fn adjoint_examples() {
        // Dx^+ = -Dx
        let d = LocalOp::from_coeff(1, JetExpression::one());
        assert_eq!(d.adjoint(), LocalOp::new(vec![JetExpression::zero(), -&JetExpression::one()]));
        // (u1 Dx)^+ = -u1 Dx - u1_x
        let ud = LocalOp::from_coeff(1, u(1));
        assert_eq!(ud.adjoint(), LocalOp::new(vec![-&ux(1, 1), -&u(1)]));
        // multiplication operators are self-adjoint
        let m = LocalOp::multiplication(&u(1) * &ux(1, 1));
        assert_eq!(m.adjoint(), m);
        // Dx^3 is skew
        let d3 = LocalOp::from_coeff(3, JetExpression::one());
        assert_eq!(d3.adjoint(), d3.scale(&q(-1, 1)));
    }

    #[test]
    fn compose_and_apply_agree() {
        let a = LocalOp::new(vec![ux(1, 1), u(1)]);
        let b = LocalOp::new(vec![u(1).pow(2), JetExpression::one(), ux(1, 2)]);
        let f = &u(1) * &ux(1, 1);
        let lhs = a.apply(&b.apply(&f));
        let rhs = a.compose(&b).apply(&f);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn integrate_basics() {
        // u1 u1_x = Dx(u1^2/2)
        let f = &u(1) * &ux(1, 1);
        assert_eq!(integrate_total_derivative(&f).unwrap(), &q(1, 2) * &u(1).pow(2));
        // u1_xx = Dx(u1_x)
        assert_eq!(integrate_total_derivative(&ux(1, 2)).unwrap(), ux(1, 1));
        // u1_x^2 is not exact
        assert!(integrate_total_derivative(&ux(1, 1).pow(2)).is_err());
        // nonzero constants are not exact
        assert!(integrate_total_derivative(&JetExpression::one()).is_err());
        // zero is
        assert!(integrate_total_derivative(&JetExpression::zero()).unwrap().is_zero());
    }

    #[test]
    fn integrate_rational_round_trip() {
        // g with nontrivial denominators: recovery is exact
        let cases = vec![
            u(1).inverse(),
            &ux(1, 1).inverse() * &u(2),
            &(&u(1) + &ux(2, 1)).pow(2).inverse() * &u(1),
            &u(1).pow(3) / &(&ux(1, 1) + &JetExpression::one()),
        ];
        for g in cases {
            let f = g.total_derivative();
            let got = integrate_total_derivative(&f).unwrap_or_else(|e| {
                panic!("failed on {:?}: {}", g, e);
            });
            assert_eq!(got.total_derivative(), f);
        }
    }

    #[test]
    fn mkdv_flow_is_the_modified_kdv_equation() {
        use crate::op::WeaklyNonlocalOperator;
        // P = Dx^3 + (2/3) u^2 Dx + (2/3) u u_x - (2/3) u_x Dx^{-1} u_x
        let mut local = LocalMatrix::zero(1);
        local.set_entry(
            0,
            0,
            LocalOp::new(vec![
                &q(2, 3) * &(&u(1) * &ux(1, 1)),
                &q(2, 3) * &u(1).pow(2),
                JetExpression::zero(),
                JetExpression::one(),
            ]),
        );
        let p = WeaklyNonlocalOperator::new(
            "P",
            local,
            vec![vec![q(-2, 3)]],
            vec![vec![ux(1, 1)]],
        )
        .unwrap();
        let h = &q(1, 2) * &u(1).pow(2);
        let flow = hamiltonian_flow(&p, &h);
        assert!(flow.fully_local);
        let expected = &ux(1, 3) + &(&u(1).pow(2) * &ux(1, 1));
        assert_eq!(flow.components[0].local, expected);
    }

    #[test]
    fn flow_keeps_unresolvable_tail_terms_symbolic() {
        use crate::op::WeaklyNonlocalOperator;
        // P = Dx + u1 Dx^{-1} u1; for h = u1^2/2 the integrand u1^2 is not
        // a total derivative.
        let mut local = LocalMatrix::zero(1);
        local.set_entry(0, 0, LocalOp::from_coeff(1, JetExpression::one()));
        let p = WeaklyNonlocalOperator::new(
            "P",
            local,
            vec![vec![JetExpression::one()]],
            vec![vec![u(1)]],
        )
        .unwrap();
        let h = &q(1, 2) * &u(1).pow(2);
        let flow = hamiltonian_flow(&p, &h);
        assert!(!flow.fully_local);
        assert_eq!(flow.components[0].local, ux(1, 1));
        assert_eq!(
            flow.components[0].nonlocal,
            vec![(u(1), u(1).pow(2))]
        );
    }

    #[test]
    fn local_matrix_adjoint_is_involutive() {
        let a = LocalOp::new(vec![&u(1) * &u(2), ux(2, 1), u(1).pow(2)]);
        let b = LocalOp::new(vec![ux(1, 1)]);
        let m = LocalMatrix::from_entries(vec![
            vec![a.clone(), b.clone()],
            vec![LocalOp::zero(), a.compose(&b)],
        ]);
        assert_eq!(m.adjoint().adjoint(), m);
    }
}

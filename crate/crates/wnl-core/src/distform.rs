//! Kernel-form bracket engine.
//!
//! The second, independent route to the Jacobi and compatibility checks.
//! Instead of symbols and integration by parts, an operator is expanded as a
//! two-point integral kernel built from derivatives of the diagonal delta
//! and the antisymmetric step `nu` (the kernel of Dx^{-1}).  The bracket of
//! two operators is then a three-point kernel assembled from twelve
//! contractions, and vanishing is decided after rewriting every term into a
//! canonical combination of kernel products.
//!
//! Nothing here touches the symbol machinery of the other engine: tail
//! vectors are multiplied straight into point-tagged coefficients, there is
//! no tail registry, and the reduction uses kernel identities only.
//! Agreement between the two engines is therefore a genuine cross-check.
//!
//! Vanishing of the canonical form is equivalent to vanishing of the
//! distribution: the local and nu-delta families have pairwise different
//! singular supports, and the three nu-nu products are linearly independent
//! as functions away from the diagonals (their value vectors over the six
//! orthants have full rank), so no nonzero coefficient combination can
//! cancel.

use std::collections::BTreeMap;
use std::fmt;

use crate::calculus::binomial;
use crate::jet::JetExpression;
use crate::op::WeaklyNonlocalOperator;
use crate::poly::Point;

/// One kernel factor on a pair of points, stored with the points in fixed
/// order (x < y < z) so equal factors have equal storage form.  The
/// orientation signs folded away by the constructors:
///   nu(q - p) = -nu(p - q),   delta^(n)(q - p) = (-1)^n delta^(n)(p - q).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum DistKernel {
    /// nu(lo - hi): the odd step, kernel of Dx^{-1}.
    Nu { lo: Point, hi: Point },
    /// delta^(order)(lo - hi).
    Delta { lo: Point, hi: Point, order: u16 },
}

impl DistKernel {
    /// nu(p - q) in storage orientation; the sign is -1 when p > q.
    pub fn nu(p: Point, q: Point) -> (DistKernel, i64) {
        assert_ne!(p, q, "step kernel needs two distinct points");
        if p < q {
            (DistKernel::Nu { lo: p, hi: q }, 1)
        } else {
            (DistKernel::Nu { lo: q, hi: p }, -1)
        }
    }

    /// delta^(order)(p - q) in storage orientation; reversing the argument
    /// costs (-1)^order.
    pub fn delta(p: Point, q: Point, order: u16) -> (DistKernel, i64) {
        assert_ne!(p, q, "delta kernel needs two distinct points");
        if p < q {
            (DistKernel::Delta { lo: p, hi: q, order }, 1)
        } else {
            let sign = if order % 2 == 0 { 1 } else { -1 };
            (DistKernel::Delta { lo: q, hi: p, order }, sign)
        }
    }

    pub fn points(self) -> (Point, Point) {
        match self {
            DistKernel::Nu { lo, hi } => (lo, hi),
            DistKernel::Delta { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn is_delta(self) -> bool {
        matches!(self, DistKernel::Delta { .. })
    }

    pub fn order(self) -> u16 {
        match self {
            DistKernel::Nu { .. } => 0,
            DistKernel::Delta { order, .. } => order,
        }
    }

    pub fn contains(self, p: Point) -> bool {
        let (lo, hi) = self.points();
        lo == p || hi == p
    }

    /// Derivative in the coordinate of `at`: nu steps to the plain delta, a
    /// delta climbs one order, and the second argument carries a minus sign.
    /// None when the kernel does not involve the point.
    pub fn derivative(self, at: Point) -> Option<(DistKernel, i64)> {
        let (lo, hi) = self.points();
        if at != lo && at != hi {
            return None;
        }
        let sign = if at == lo { 1 } else { -1 };
        let next = match self {
            DistKernel::Nu { lo, hi } => DistKernel::Delta { lo, hi, order: 0 },
            DistKernel::Delta { lo, hi, order } => DistKernel::Delta { lo, hi, order: order + 1 },
        };
        Some((next, sign))
    }

    /// Rename one argument point (the substitution a collapsing delta makes
    /// in the factors riding along with it).  No-op when the point is absent.
    pub fn retag(self, from: Point, to: Point) -> (DistKernel, i64) {
        let (lo, hi) = self.points();
        if lo != from && hi != from {
            return (self, 1);
        }
        let a = if lo == from { to } else { lo };
        let b = if hi == from { to } else { hi };
        match self {
            DistKernel::Nu { .. } => DistKernel::nu(a, b),
            DistKernel::Delta { order, .. } => DistKernel::delta(a, b, order),
        }
    }
}

impl fmt::Display for DistKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistKernel::Nu { lo, hi } => write!(f, "nu({}-{})", lo.name(), hi.name()),
            DistKernel::Delta { lo, hi, order: 0 } => {
                write!(f, "delta({}-{})", lo.name(), hi.name())
            }
            DistKernel::Delta { lo, hi, order } => {
                write!(f, "delta^({})({}-{})", order, lo.name(), hi.name())
            }
        }
    }
}

fn signed(c: JetExpression, s: i64) -> JetExpression {
    match s {
        1 => c,
        -1 => -c,
        _ => unreachable!("kernel signs are unit"),
    }
}

/// Storage key of one three-point term: the component indices bound to the
/// points (x, y, z) in that order, then the two kernel factors, sorted.
pub type TermKey = (u16, u16, u16, DistKernel, DistKernel);

/// A three-point object: a finite sum of terms
///   coeff(x, y, z) * kernel1 * kernel2
/// with point-tagged jet coefficients.  Both the raw bracket and its
/// canonical form live here; the two kernel factors are kept sorted so every
/// term has one storage shape.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TriDistribution {
    pub components: u16,
    terms: BTreeMap<TermKey, JetExpression>,
}

impl TriDistribution {
    pub fn new(components: u16) -> TriDistribution {
        TriDistribution { components, terms: BTreeMap::new() }
    }

    pub fn add(&mut self, idx: (u16, u16, u16), kernels: (DistKernel, DistKernel), coeff: JetExpression) {
        if coeff.is_zero() {
            return;
        }
        let (a, b) = if kernels.0 <= kernels.1 { kernels } else { (kernels.1, kernels.0) };
        let key = (idx.0, idx.1, idx.2, a, b);
        let slot = self.terms.entry(key).or_insert_with(JetExpression::zero);
        *slot = &*slot + &coeff;
        if slot.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn merge(&mut self, other: TriDistribution) {
        for ((i, j, k, a, b), c) in other.terms {
            self.add((i, j, k), (a, b), c);
        }
    }

    pub fn terms(&self) -> &BTreeMap<TermKey, JetExpression> {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }
}

/// One term of a two-point operator kernel: P^{row,col}(p, q) expanded as
/// coefficient times a single kernel factor.
#[derive(Clone, Debug)]
pub struct KernelTerm {
    pub row: u16,
    pub col: u16,
    pub coeff: JetExpression,
    pub kernel: DistKernel,
}

fn collect_terms(acc: BTreeMap<(u16, u16, DistKernel), JetExpression>) -> Vec<KernelTerm> {
    acc.into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((row, col, kernel), coeff)| KernelTerm { row, col, coeff, kernel })
        .collect()
}

/// The kernel picture of a weakly nonlocal operator on an ordered pair of
/// points: local coefficients become delta derivatives based at the first
/// point, the tail becomes w(p) c w(q) nu(p - q).
pub fn bivector_kernel(op: &WeaklyNonlocalOperator, p: Point, q: Point) -> Vec<KernelTerm> {
    let n = op.components() as usize;
    let mut acc: BTreeMap<(u16, u16, DistKernel), JetExpression> = BTreeMap::new();
    let mut add = |row: u16, col: u16, kernel: DistKernel, coeff: JetExpression| {
        let slot = acc.entry((row, col, kernel)).or_insert_with(JetExpression::zero);
        *slot = &*slot + &coeff;
    };
    for i in 0..n {
        for j in 0..n {
            let entry = op.local().entry(i, j);
            for (sigma, c) in entry.coeffs().iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let (kernel, sign) = DistKernel::delta(p, q, sigma as u16);
                add(i as u16 + 1, j as u16 + 1, kernel, signed(c.at_point(p), sign));
            }
        }
    }
    for alpha in 0..op.tail_count() {
        for beta in 0..op.tail_count() {
            let c = op.tail_constant(alpha, beta);
            if c.is_zero() {
                continue;
            }
            let (kernel, sign) = DistKernel::nu(p, q);
            for i in 0..n {
                let left = op.tail_column(alpha)[i].at_point(p);
                if left.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let right = op.tail_column(beta)[j].at_point(q);
                    let coeff = &(&c * &left) * &right;
                    add(i as u16 + 1, j as u16 + 1, kernel, signed(coeff, sign));
                }
            }
        }
    }
    collect_terms(acc)
}

/// Coordinate derivative of a kernel term list at one point, with the
/// product rule split between coefficient and kernel factor.
fn kernel_derivative(terms: &[KernelTerm], at: Point) -> Vec<KernelTerm> {
    let mut acc: BTreeMap<(u16, u16, DistKernel), JetExpression> = BTreeMap::new();
    let mut add = |row: u16, col: u16, kernel: DistKernel, coeff: JetExpression| {
        if coeff.is_zero() {
            return;
        }
        let slot = acc.entry((row, col, kernel)).or_insert_with(JetExpression::zero);
        *slot = &*slot + &coeff;
    };
    for t in terms {
        add(t.row, t.col, t.kernel, t.coeff.total_derivative_at(at));
        if let Some((dk, sign)) = t.kernel.derivative(at) {
            add(t.row, t.col, dk, signed(t.coeff.clone(), sign));
        }
    }
    collect_terms(acc)
}

/// One of the six contraction patterns: the first operator's kernel sits on
/// `pair`, its coefficients are varied in the jet variables at `vary`, and
/// the second operator's kernel on (vary, far) is differentiated to match.
/// `slots` records where (row of P, column of P, column of Q) land in the
/// component triple bound to (x, y, z).
struct Contraction {
    pair: (Point, Point),
    vary: Point,
    far: Point,
    slots: (usize, usize, usize),
}

const CONTRACTIONS: [Contraction; 6] = [
    Contraction { pair: (Point::X, Point::Y), vary: Point::X, far: Point::Z, slots: (0, 1, 2) },
    Contraction { pair: (Point::X, Point::Y), vary: Point::Y, far: Point::Z, slots: (0, 1, 2) },
    Contraction { pair: (Point::Z, Point::X), vary: Point::Z, far: Point::Y, slots: (2, 0, 1) },
    Contraction { pair: (Point::Z, Point::X), vary: Point::X, far: Point::Y, slots: (2, 0, 1) },
    Contraction { pair: (Point::Y, Point::Z), vary: Point::Y, far: Point::X, slots: (1, 2, 0) },
    Contraction { pair: (Point::Y, Point::Z), vary: Point::Z, far: Point::X, slots: (1, 2, 0) },
];

/// One directed summand: vary `a`'s kernel coefficients at the shared point
/// and contract against the matching coordinate derivative of `b`'s kernel.
fn one_summand(
    a: &WeaklyNonlocalOperator,
    b: &WeaklyNonlocalOperator,
    spec: &Contraction,
) -> TriDistribution {
    let a_terms = bivector_kernel(a, spec.pair.0, spec.pair.1);
    let depth = a.order_data().1 as usize;
    let mut tower = Vec::with_capacity(depth + 1);
    tower.push(bivector_kernel(b, spec.vary, spec.far));
    for t in 0..depth {
        tower.push(kernel_derivative(&tower[t], spec.vary));
    }
    let mut out = TriDistribution::new(a.components());
    for t in &a_terms {
        for v in t.coeff.vars() {
            if !v.is_pointed() || v.point() != Some(spec.vary) {
                continue;
            }
            let (l, sigma) = v.jet_key().unwrap();
            let d = t.coeff.partial(v);
            if d.is_zero() {
                continue;
            }
            for qt in &tower[sigma as usize] {
                if qt.row != l {
                    continue;
                }
                let mut idx = [0u16; 3];
                idx[spec.slots.0] = t.row;
                idx[spec.slots.1] = t.col;
                idx[spec.slots.2] = qt.col;
                out.add((idx[0], idx[1], idx[2]), (t.kernel, qt.kernel), &d * &qt.coeff);
            }
        }
    }
    out
}

/// The raw bracket kernel: six contraction patterns, each taken in both
/// operator orders, all with plus signs.  Summands are independent, so they
/// run on scoped threads; the merge order is fixed.
pub fn raw_bracket(p: &WeaklyNonlocalOperator, q: &WeaklyNonlocalOperator) -> TriDistribution {
    assert_eq!(p.components(), q.components(), "operators act on different systems");
    let mut parts = Vec::with_capacity(12);
    std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(12);
        for spec in &CONTRACTIONS {
            handles.push(s.spawn(move || one_summand(p, q, spec)));
            handles.push(s.spawn(move || one_summand(q, p, spec)));
        }
        for h in handles {
            parts.push(h.join().expect("bracket worker panicked"));
        }
    });
    let mut out = TriDistribution::new(p.components());
    for part in parts {
        out.merge(part);
    }
    out
}

/// Single-threaded variant of `raw_bracket`, kept for determinism checks.
pub fn raw_bracket_sequential(
    p: &WeaklyNonlocalOperator,
    q: &WeaklyNonlocalOperator,
) -> TriDistribution {
    assert_eq!(p.components(), q.components(), "operators act on different systems");
    let mut out = TriDistribution::new(p.components());
    for spec in &CONTRACTIONS {
        out.merge(one_summand(p, q, spec));
        out.merge(one_summand(q, p, spec));
    }
    out
}

enum Step {
    Done,
    Move { kernel: usize, toward: Point },
}

fn depends_on(coeff: &JetExpression, p: Point) -> bool {
    coeff.vars().iter().any(|v| v.point() == Some(p))
}

/// Decide the next rewrite for a term with kernel factors (k1, k2), sorted.
/// The canonical shapes are: two deltas on (x-y, x-z) with a pure-x
/// coefficient; a nu-delta pair in one of the three oriented families
///   nu(x-y) delta(x-z),  nu(x-z) delta(y-z),  nu(y-z) delta(x-y)
/// with the coefficient living on nu's two points; and any nu-nu product.
/// Everything else moves its coefficient across a delta factor.
fn classify(k1: DistKernel, k2: DistKernel, coeff: &JetExpression) -> Step {
    use Point::{X, Y, Z};
    match (k1, k2) {
        (DistKernel::Nu { .. }, DistKernel::Nu { .. }) => Step::Done,
        (DistKernel::Nu { lo: a, hi: b }, DistKernel::Delta { lo: c, hi: d, .. }) => {
            match ((a, b), (c, d)) {
                // the three canonical families: purify the coefficient of
                // the delta's far point, collapsing toward the shared one
                ((X, Y), (X, Z)) => purify(coeff, Z, X),
                ((X, Z), (Y, Z)) => purify(coeff, Y, Z),
                ((Y, Z), (X, Y)) => purify(coeff, X, Y),
                // mirrored families: eliminate the shared point across the
                // delta, which flips nu into a canonical family
                ((Y, Z), (X, Z)) => Step::Move { kernel: 1, toward: X },
                ((X, Y), (Y, Z)) => Step::Move { kernel: 1, toward: Z },
                ((X, Z), (X, Y)) => Step::Move { kernel: 1, toward: Y },
                _ => unreachable!("kernel factors share both points"),
            }
        }
        (DistKernel::Delta { lo: a, hi: b, .. }, DistKernel::Delta { lo: c, hi: d, .. }) => {
            match ((a, b), (c, d)) {
                ((X, Y), (X, Z)) => {
                    if depends_on(coeff, Y) {
                        Step::Move { kernel: 0, toward: X }
                    } else {
                        purify(coeff, Z, X)
                    }
                }
                ((X, Y), (Y, Z)) => Step::Move { kernel: 0, toward: X },
                ((X, Z), (Y, Z)) => Step::Move { kernel: 0, toward: X },
                _ => unreachable!("kernel factors share both points"),
            }
        }
        _ => unreachable!("kernel factors are stored sorted"),
    }
}

fn purify(coeff: &JetExpression, far: Point, shared: Point) -> Step {
    if depends_on(coeff, far) {
        Step::Move { kernel: 1, toward: shared }
    } else {
        Step::Done
    }
}

type RawTerm = (TermKey, JetExpression);

fn sorted_key(idx: (u16, u16, u16), a: DistKernel, b: DistKernel) -> TermKey {
    if a <= b {
        (idx.0, idx.1, idx.2, a, b)
    } else {
        (idx.0, idx.1, idx.2, b, a)
    }
}

/// Leibniz step for the transport: differentiate a coefficient-times-kernel
/// sum in the coordinate of one point.
fn derive_parts(
    parts: &BTreeMap<DistKernel, JetExpression>,
    at: Point,
) -> BTreeMap<DistKernel, JetExpression> {
    let mut out: BTreeMap<DistKernel, JetExpression> = BTreeMap::new();
    let mut add = |k: DistKernel, c: JetExpression| {
        if c.is_zero() {
            return;
        }
        let slot = out.entry(k).or_insert_with(JetExpression::zero);
        *slot = &*slot + &c;
    };
    for (ker, c) in parts {
        add(*ker, c.total_derivative_at(at));
        if let Some((dk, sign)) = ker.derivative(at) {
            add(dk, signed(c.clone(), sign));
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// Move all dependence on one endpoint of a delta factor across it:
///   f * delta^(n)(lo - hi)
/// with f collected at the eliminated endpoint e becomes
///   sum_k  C(n, k) (d/de)^k f |_{e -> toward} * delta^(n-k)(lo - hi),
/// with an extra (-1)^k when the kept point is the upper one.  The factor f
/// is the coefficient together with the other kernel, which differentiates
/// and re-tags along (nu spawning the plain delta on the way).
fn transport(
    idx: (u16, u16, u16),
    moving: DistKernel,
    other: DistKernel,
    coeff: &JetExpression,
    toward: Point,
    out: &mut Vec<RawTerm>,
) {
    let DistKernel::Delta { lo, hi, order: n } = moving else {
        unreachable!("transport moves across a delta factor");
    };
    let e = if toward == lo { hi } else { lo };
    let mut parts: BTreeMap<DistKernel, JetExpression> = BTreeMap::new();
    parts.insert(other, coeff.clone());
    for k in 0..=n {
        let mut weight = JetExpression::constant(binomial(n as u64, k as u64));
        if toward == hi && k % 2 == 1 {
            weight = -weight;
        }
        let rest = DistKernel::Delta { lo, hi, order: n - k };
        for (ker, c) in &parts {
            let (rk, sign) = ker.retag(e, toward);
            let piece = signed(&weight * &c.retag_point(e, toward), sign);
            if !piece.is_zero() {
                out.push((sorted_key(idx, rk, rest), piece));
            }
        }
        if k < n {
            parts = derive_parts(&parts, e);
        }
    }
}

/// Canonical three-point kernel of a bracket.  Empty iff the bracket
/// vanishes as a distribution (see the module notes on independence of the
/// kernel families).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DistBracket {
    pub components: u16,
    pub terms: BTreeMap<TermKey, JetExpression>,
}

impl DistBracket {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// A deterministic nonzero term for failure reports: the smallest key.
    pub fn witness(&self) -> Option<String> {
        self.terms.iter().next().map(|((i, j, k, k1, k2), c)| {
            format!("component ({i},{j},{k}) {k1} {k2}: {c:?}")
        })
    }
}

/// True when a term already has one of the canonical shapes the reduction
/// targets.  Exposed so tests can check the structural invariants of engine
/// output term by term.
pub fn is_canonical_term(k1: DistKernel, k2: DistKernel, coeff: &JetExpression) -> bool {
    matches!(classify(k1, k2, coeff), Step::Done)
}

/// Delta orders can never exceed the sum of both operators' leading degrees
/// and coefficient jet orders; a violation means a rewrite invented data.
fn contraction_bound(p: &WeaklyNonlocalOperator, q: &WeaklyNonlocalOperator) -> u16 {
    let (d1, m1) = p.order_data();
    let (d2, m2) = q.order_data();
    d1 as u16 + d2 as u16 + m1 + m2
}

/// Reduce a raw three-point kernel to canonical form.  Every rewrite either
/// strictly shrinks the set of points a term's coefficient touches or turns
/// a mirrored family into a canonical one while eliminating the shared
/// point, so the worklist terminates.
pub fn canonicalize(raw: &TriDistribution, order_cap: u16) -> DistBracket {
    let mut canonical: BTreeMap<TermKey, JetExpression> = BTreeMap::new();
    let mut pending: Vec<RawTerm> = raw.terms.iter().map(|(k, c)| (*k, c.clone())).collect();
    while !pending.is_empty() {
        let mut next: Vec<RawTerm> = Vec::new();
        for (key, coeff) in pending {
            let (i, j, k, k1, k2) = key;
            match classify(k1, k2, &coeff) {
                Step::Done => {
                    let slot = canonical.entry(key).or_insert_with(JetExpression::zero);
                    *slot = &*slot + &coeff;
                    if slot.is_zero() {
                        canonical.remove(&key);
                    }
                }
                Step::Move { kernel, toward } => {
                    let (moving, other) = if kernel == 0 { (k1, k2) } else { (k2, k1) };
                    transport((i, j, k), moving, other, &coeff, toward, &mut next);
                }
            }
        }
        pending = next;
    }
    for (_, _, _, k1, k2) in canonical.keys() {
        for f in [k1, k2] {
            assert!(
                f.order() <= order_cap,
                "delta order {} exceeds the contraction bound {}",
                f.order(),
                order_cap
            );
        }
    }
    DistBracket { components: raw.components, terms: canonical }
}

/// Bracket of two weakly nonlocal operators in kernel form, reduced to
/// canonical shape.  [P, P] decides the Jacobi identity for P, [P, Q]
/// compatibility of a pair.
pub fn schouten_bracket(
    p: &WeaklyNonlocalOperator,
    q: &WeaklyNonlocalOperator,
) -> DistBracket {
    canonicalize(&raw_bracket(p, q), contraction_bound(p, q))
}

/// Single-threaded variant, for determinism checks.
pub fn schouten_bracket_sequential(
    p: &WeaklyNonlocalOperator,
    q: &WeaklyNonlocalOperator,
) -> DistBracket {
    canonicalize(&raw_bracket_sequential(p, q), contraction_bound(p, q))
}

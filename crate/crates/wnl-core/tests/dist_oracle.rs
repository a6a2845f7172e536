//! Pairing oracle for the kernel-form engine.
//!
//! The engine's reductions are identities between functionals on decaying
//! fields: they hold up to integration by parts with vanishing boundary
//! terms.  The oracle therefore pairs both sides against explicit
//! polynomial states on the box [0, 1]^3 whose test factors carry
//! (t(1-t))^M, vanishing to high order at the boundary, so every such
//! identity becomes an exact equality of numbers.  Delta factors are
//! eliminated by the textbook rule
//!
//!   int delta^(n)(a - b) g(b) db  =  (d/da)^n g(a),
//!
//! step factors become plus or minus one half on each ordering of the
//! points, and the survivor is integrated ordering by ordering.  All
//! arithmetic runs in the prime field F_p with p = 2^64 - 2^32 + 1: values
//! that agree as rationals agree mod p, and a genuine mismatch reduces to
//! zero only with negligible probability.  Nothing here shares code with
//! the engine's reduction: kernels keep their raw orientation and the
//! bookkeeping is redone from scratch.

mod common;

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use common::{ExprShape, Gen};
use num::{BigInt, BigRational, Integer, ToPrimitive};
use wnl_core::distform::{
    bivector_kernel, canonicalize, raw_bracket_sequential, DistKernel, KernelTerm,
    TriDistribution,
};
use wnl_core::frontend;
use wnl_core::poly::Point;
use wnl_core::JetExpression;

const PRIME: u64 = 0xFFFF_FFFF_0000_0001;

/// Element of the prime field used for all oracle values.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Fp(u64);

impl Fp {
    fn new(v: u64) -> Fp {
        Fp(v % PRIME)
    }

    fn zero() -> Fp {
        Fp(0)
    }

    fn one() -> Fp {
        Fp(1)
    }

    fn from_i64(v: i64) -> Fp {
        if v < 0 {
            -Fp::new(v.unsigned_abs())
        } else {
            Fp::new(v as u64)
        }
    }

    fn ratio(n: i64, d: i64) -> Fp {
        Fp::from_i64(n) * Fp::from_i64(d).inv()
    }

    fn from_big(r: &BigRational) -> Fp {
        let p = BigInt::from(PRIME);
        let n = Fp::new(r.numer().mod_floor(&p).to_u64().unwrap());
        let d = Fp::new(r.denom().mod_floor(&p).to_u64().unwrap());
        n * d.inv()
    }

    fn pow(self, mut e: u64) -> Fp {
        let mut base = self;
        let mut acc = Fp::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    fn inv(self) -> Fp {
        assert_ne!(self.0, 0, "division by zero in the oracle field");
        self.pow(PRIME - 2)
    }
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, o: Fp) -> Fp {
        Fp(((self.0 as u128 + o.0 as u128) % PRIME as u128) as u64)
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, o: Fp) -> Fp {
        self + (-o)
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, o: Fp) -> Fp {
        Fp(((self.0 as u128 * o.0 as u128) % PRIME as u128) as u64)
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        if self.0 == 0 {
            self
        } else {
            Fp(PRIME - self.0)
        }
    }
}

fn axis(p: Point) -> usize {
    match p {
        Point::X => 0,
        Point::Y => 1,
        Point::Z => 2,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Shape {
    Step,
    Spike,
}

/// Oracle-side kernel factor in the orientation it was produced in: Step is
/// nu(first - second), Spike is delta^(order)(first - second).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct OracleKernel {
    shape: Shape,
    first: Point,
    second: Point,
    order: u16,
}

impl OracleKernel {
    fn import(k: DistKernel) -> OracleKernel {
        match k {
            DistKernel::Nu { lo, hi } => {
                OracleKernel { shape: Shape::Step, first: lo, second: hi, order: 0 }
            }
            DistKernel::Delta { lo, hi, order } => {
                OracleKernel { shape: Shape::Spike, first: lo, second: hi, order }
            }
        }
    }

    fn contains(self, p: Point) -> bool {
        self.first == p || self.second == p
    }

    fn derivative(self, at: Point) -> (OracleKernel, i64) {
        assert!(self.contains(at));
        let sign = if at == self.first { 1 } else { -1 };
        let next = match self.shape {
            Shape::Step => OracleKernel { shape: Shape::Spike, order: 0, ..self },
            Shape::Spike => OracleKernel { order: self.order + 1, ..self },
        };
        (next, sign)
    }

    fn rename(self, from: Point, to: Point) -> OracleKernel {
        let first = if self.first == from { to } else { self.first };
        let second = if self.second == from { to } else { self.second };
        assert_ne!(first, second, "kernel arguments collapsed");
        OracleKernel { first, second, ..self }
    }
}

/// Univariate polynomial as a little-endian coefficient list.
type Uni = Vec<Fp>;

fn utrim(mut u: Uni) -> Uni {
    while u.last() == Some(&Fp::zero()) {
        u.pop();
    }
    u
}

fn uone() -> Uni {
    vec![Fp::one()]
}

fn umul(a: &Uni, b: &Uni) -> Uni {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Fp::zero(); a.len() + b.len() - 1];
    for (i, ca) in a.iter().enumerate() {
        for (j, cb) in b.iter().enumerate() {
            out[i + j] = out[i + j] + *ca * *cb;
        }
    }
    utrim(out)
}

fn uderive(a: &Uni) -> Uni {
    let mut out = Vec::with_capacity(a.len().saturating_sub(1));
    for (i, c) in a.iter().enumerate().skip(1) {
        out.push(*c * Fp::new(i as u64));
    }
    utrim(out)
}

fn uanti(a: &Uni) -> Uni {
    let mut out = vec![Fp::zero(); a.len() + 1];
    for (i, c) in a.iter().enumerate() {
        out[i + 1] = *c * Fp::new(i as u64 + 1).inv();
    }
    utrim(out)
}

/// Product of one univariate polynomial per coordinate axis.
#[derive(Clone)]
struct Sep([Uni; 3]);

impl Sep {
    fn is_zero(&self) -> bool {
        self.0.iter().any(|u| u.is_empty())
    }
}

/// Sum of separable products: closed under everything the elimination
/// needs, so coefficients never expand across axes.
#[derive(Clone)]
struct SepSum(Vec<Sep>);

impl SepSum {
    fn push(&mut self, sep: Sep) {
        if !sep.is_zero() {
            self.0.push(sep);
        }
    }

    fn derive(&self, ax: usize) -> SepSum {
        let mut out = SepSum(Vec::new());
        for sep in &self.0 {
            let mut s = sep.clone();
            s.0[ax] = uderive(&s.0[ax]);
            out.push(s);
        }
        out
    }

    fn rename(&self, from: usize, to: usize) -> SepSum {
        assert_ne!(from, to);
        let mut out = SepSum(Vec::new());
        for sep in &self.0 {
            let mut s = sep.clone();
            s.0[to] = umul(&s.0[from], &s.0[to]);
            s.0[from] = uone();
            out.push(s);
        }
        out
    }

    fn scale(&self, c: Fp) -> SepSum {
        if c == Fp::zero() {
            return SepSum(Vec::new());
        }
        let mut out = SepSum(Vec::new());
        for sep in &self.0 {
            let mut s = sep.clone();
            s.0[0] = s.0[0].iter().map(|v| *v * c).collect();
            out.push(s);
        }
        out
    }

    fn mul_uni(&self, ax: usize, u: &Uni) -> SepSum {
        let mut out = SepSum(Vec::new());
        for sep in &self.0 {
            let mut s = sep.clone();
            s.0[ax] = umul(&s.0[ax], u);
            out.push(s);
        }
        out
    }
}

/// Explicit polynomial data for every component, as coefficient lists in
/// one formal parameter; the axis is chosen at placement time.
struct Assignment {
    polys: BTreeMap<u16, Uni>,
}

impl Assignment {
    /// Coefficient list of the `ord`-th derivative of a component.
    fn jet(&self, comp: u16, ord: u16) -> Uni {
        let mut u = self.polys.get(&comp).cloned().expect("component without assignment");
        for _ in 0..ord {
            u = uderive(&u);
        }
        u
    }
}

/// Vanishing order of the test factors at the boundary of the box; it
/// dominates every derivative count the reductions can produce here, so
/// all integration-by-parts boundary terms are exactly zero.
const VANISH: usize = 24;

/// Jet components get dense degree-eight polynomials; test components get
/// (t(1-t))^VANISH times a dense degree-four polynomial.
fn random_assignment(g: &mut Gen, jet_comps: u16, test_comps: std::ops::Range<u16>) -> Assignment {
    let dense = |g: &mut Gen, deg: usize| -> Uni {
        (0..=deg)
            .map(|_| {
                let mut n = g.int_in(-3, 3);
                if n == 0 {
                    n = 1;
                }
                Fp::ratio(n, g.int_in(1, 2))
            })
            .collect()
    };
    let mut vanish = uone();
    let bump = vec![Fp::zero(), Fp::one(), -Fp::one()];
    for _ in 0..VANISH {
        vanish = umul(&vanish, &bump);
    }
    let mut polys = BTreeMap::new();
    for c in 1..=jet_comps {
        polys.insert(c, dense(g, 8));
    }
    for c in test_comps {
        let p = dense(g, 4);
        polys.insert(c, umul(&vanish, &p));
    }
    Assignment { polys }
}

/// Evaluate a pointed polynomial coefficient under the assignment.
fn convert(e: &JetExpression, asg: &Assignment) -> SepSum {
    let p = e.as_polynomial().expect("oracle data must be polynomial");
    let mut out = SepSum(Vec::new());
    for (mono, coeff) in p.terms() {
        let mut sep = Sep([vec![Fp::from_big(coeff)], uone(), uone()]);
        for (v, exp) in mono.factors() {
            let ax = axis(v.point().expect("oracle data must be point-tagged"));
            let (comp, ord) = v.jet_key().expect("coordinate variable in coefficient");
            let base = asg.jet(comp, ord);
            for _ in 0..*exp {
                sep.0[ax] = umul(&sep.0[ax], &base);
            }
        }
        out.push(sep);
    }
    out
}

fn binom(n: u16, k: u16) -> u64 {
    let mut out: u64 = 1;
    for i in 0..k as u64 {
        out = out * (n as u64 - i) / (i + 1);
    }
    out
}

const ORDERINGS: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Integral of one separable product over the simplex where the
/// coordinates increase along `ord`; lower bounds are zero, so only upper
/// bounds contribute.
fn simplex(sep: &Sep, ord: [usize; 3]) -> Fp {
    let mut cur = sep.0[ord[0]].clone();
    for i in 0..2 {
        cur = umul(&uanti(&cur), &sep.0[ord[i + 1]]);
    }
    uanti(&cur).iter().fold(Fp::zero(), |a, c| a + *c)
}

/// Value of a terminal state: each step factor is plus or minus one half
/// on each ordering of the points, by orientation.
fn steps_value(mp: &SepSum, steps: &[OracleKernel]) -> Fp {
    let half = Fp::ratio(1, 2);
    let mut total = Fp::zero();
    for ord in ORDERINGS {
        let pos = |ax: usize| ord.iter().position(|o| *o == ax).unwrap();
        let mut factor = Fp::one();
        for s in steps {
            assert_eq!(s.shape, Shape::Step);
            let up = pos(axis(s.first)) > pos(axis(s.second));
            factor = factor * if up { half } else { -half };
        }
        let mut sum = Fp::zero();
        for sep in &mp.0 {
            sum = sum + simplex(sep, ord);
        }
        total = total + factor * sum;
    }
    total
}

/// Eliminate the delta factors and integrate what survives.  Eliminating
/// delta^(n)(a - b) integrates over b: the n derivatives split between the
/// coefficient and the one other kernel factor that can contain b, with
/// binomial weights, and b is then renamed to a everywhere.
fn pairing_value(states: Vec<(SepSum, Vec<OracleKernel>)>) -> Fp {
    let mut total = Fp::zero();
    let mut work = states;
    while let Some((mp, kernels)) = work.pop() {
        if mp.0.is_empty() {
            continue;
        }
        let spike = kernels
            .iter()
            .enumerate()
            .filter(|(_, k)| k.shape == Shape::Spike)
            .min_by_key(|(_, k)| **k)
            .map(|(i, _)| i);
        let Some(pos) = spike else {
            total = total + steps_value(&mp, &kernels);
            continue;
        };
        let chosen = kernels[pos];
        let rest: Vec<OracleKernel> =
            kernels.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, k)| *k).collect();
        let at = chosen.second;
        let (fa, ft) = (axis(at), axis(chosen.first));
        let rename_all = |ks: Vec<OracleKernel>| -> Vec<OracleKernel> {
            ks.into_iter().map(|k| k.rename(at, chosen.first)).collect()
        };
        match rest.iter().position(|k| k.contains(at)) {
            None => {
                let mut c = mp;
                for _ in 0..chosen.order {
                    c = c.derive(fa);
                }
                work.push((c.rename(fa, ft), rename_all(rest)));
            }
            Some(m) => {
                for k in 0..=chosen.order {
                    let mut kern = rest[m];
                    let mut sign = 1i64;
                    for _ in 0..k {
                        let (nk, s) = kern.derivative(at);
                        kern = nk;
                        sign *= s;
                    }
                    let mut c = mp.clone();
                    for _ in 0..(chosen.order - k) {
                        c = c.derive(fa);
                    }
                    c = c.scale(Fp::from_i64(sign) * Fp::new(binom(chosen.order, k)));
                    let mut ks = rest.clone();
                    ks[m] = kern;
                    work.push((c.rename(fa, ft), rename_all(ks)));
                }
            }
        }
    }
    total
}

/// Pair a three-point kernel against the test state: the component triple
/// (i, j, k) gets the factors n+i at x, 2n+j at y, 3n+k at z.
fn tri_value(
    n: u16,
    terms: &BTreeMap<(u16, u16, u16, DistKernel, DistKernel), JetExpression>,
    asg: &Assignment,
) -> Fp {
    let mut states = Vec::with_capacity(terms.len());
    for ((i, j, k, k1, k2), c) in terms {
        let mp = convert(c, asg)
            .mul_uni(0, &asg.jet(n + i, 0))
            .mul_uni(1, &asg.jet(2 * n + j, 0))
            .mul_uni(2, &asg.jet(3 * n + k, 0));
        states.push((mp, vec![OracleKernel::import(*k1), OracleKernel::import(*k2)]));
    }
    pairing_value(states)
}

/// Pair a two-point operator kernel against test functions: `row` and
/// `col` name the point and the component base of the family bound to
/// that index.
fn kernel_value(
    terms: &[KernelTerm],
    row: (Point, u16),
    col: (Point, u16),
    asg: &Assignment,
) -> Fp {
    let mut states = Vec::with_capacity(terms.len());
    for t in terms {
        let mp = convert(&t.coeff, asg)
            .mul_uni(axis(row.0), &asg.jet(row.1 + t.row, 0))
            .mul_uni(axis(col.0), &asg.jet(col.1 + t.col, 0));
        states.push((mp, vec![OracleKernel::import(t.kernel)]));
    }
    pairing_value(states)
}

#[test]
fn pairing_matches_hand_integrals() {
    use Point::{X, Y};
    // int int (1/2) sgn(x - y) x dx dy = 1/12 over the unit square
    let x = SepSum(vec![Sep([vec![Fp::zero(), Fp::one()], uone(), uone()])]);
    let step = OracleKernel { shape: Shape::Step, first: X, second: Y, order: 0 };
    assert_eq!(pairing_value(vec![(x.clone(), vec![step])]), Fp::ratio(1, 12));
    // reversing the step's arguments flips the sign
    let flipped = OracleKernel { shape: Shape::Step, first: Y, second: X, order: 0 };
    assert_eq!(pairing_value(vec![(x, vec![flipped])]), Fp::ratio(-1, 12));
    // int int delta'(x - y) x^2 y dx dy = int x^2 dx = 1/3
    let x2y = SepSum(vec![Sep([
        vec![Fp::zero(), Fp::zero(), Fp::one()],
        vec![Fp::zero(), Fp::one()],
        uone(),
    ])]);
    let spike = OracleKernel { shape: Shape::Spike, first: X, second: Y, order: 1 };
    assert_eq!(pairing_value(vec![(x2y, vec![spike])]), Fp::ratio(1, 3));
}

/// Random coefficient touching jets of the first component at all three
/// points: a product of affine jet factors, so coefficient purification
/// has to apply the product rule across points.
fn pointed_expr(g: &mut Gen) -> JetExpression {
    let mut out = JetExpression::rat(g.int_in(1, 3), g.int_in(1, 2));
    for p in [Point::X, Point::Y, Point::Z] {
        if g.int_in(0, 3) == 0 {
            continue;
        }
        let ord = g.int_in(0, 2) as u16;
        let f = &JetExpression::int(g.int_in(0, 2))
            + &(&JetExpression::int(g.int_in(1, 2)) * &JetExpression::jet(1, ord).at_point(p));
        out = &out * &f;
    }
    out
}

#[test]
fn collapse_rules_hold_under_pairing() {
    let pairs = [(Point::X, Point::Y), (Point::X, Point::Z), (Point::Y, Point::Z)];
    let mut g = Gen::new(0x9d71);
    let mut cases = 0;
    let check = |g: &mut Gen, k1: DistKernel, k2: DistKernel, what: String| {
        let mut raw = TriDistribution::new(1);
        raw.add((1, 1, 1), (k1, k2), pointed_expr(g));
        let canon = canonicalize(&raw, 32);
        for _ in 0..2 {
            let asg = random_assignment(g, 1, 2..5);
            assert_eq!(
                tri_value(1, raw.terms(), &asg),
                tri_value(1, &canon.terms, &asg),
                "{what}: raw and canonical pair differently"
            );
        }
    };
    // every step-delta layout, canonical and mirrored, differential orders
    // through four
    for np in pairs {
        for dp in pairs {
            if np == dp {
                continue;
            }
            for order in 0..=4u16 {
                let nu = DistKernel::Nu { lo: np.0, hi: np.1 };
                let de = DistKernel::Delta { lo: dp.0, hi: dp.1, order };
                check(&mut g, nu, de, format!("step {np:?} delta {dp:?} order {order}"));
                cases += 1;
            }
        }
    }
    // every two-delta layout
    for a in 0..pairs.len() {
        for b in 0..pairs.len() {
            if a == b {
                continue;
            }
            for oa in 0..=4u16 {
                for ob in 0..=2u16 {
                    let da = DistKernel::Delta { lo: pairs[a].0, hi: pairs[a].1, order: oa };
                    let db = DistKernel::Delta { lo: pairs[b].0, hi: pairs[b].1, order: ob };
                    check(
                        &mut g,
                        da,
                        db,
                        format!("deltas {:?} {:?} orders {oa} {ob}", pairs[a], pairs[b]),
                    );
                    cases += 1;
                }
            }
        }
    }
    assert!(cases >= 100, "rule sweep too small: {cases}");
}

#[test]
fn operator_kernels_pair_antisymmetrically() {
    use Point::{X, Y};
    let mut ops = Vec::new();
    for name in ["mkdv", "heisenberg"] {
        let src = frontend::bundled_example(name).unwrap();
        let prob = frontend::parse_problem(src).unwrap();
        for n in prob.operator_names() {
            ops.push(prob.operator(n).unwrap().clone());
        }
    }
    let shape = ExprShape { components: 2, max_order: 1, terms: 2, max_exp: 2 };
    let mut g = Gen::new(0x51c2);
    for i in 0..3 {
        ops.push(g.skew_operator(&format!("R{i}"), shape, 2, 1));
    }
    for op in &ops {
        let n = op.components();
        // skewness forces the pairings of P^{ij}(x, y) and P^{ji}(y, x)
        // against f_i(x) g_j(y) to cancel, so the transposed kernel binds
        // its row to the g family and its column to the f family
        let asg = random_assignment(&mut g, n, (n + 1)..(3 * n + 1));
        let forward = kernel_value(&bivector_kernel(op, X, Y), (X, n), (Y, 2 * n), &asg);
        let reversed = kernel_value(&bivector_kernel(op, Y, X), (Y, 2 * n), (X, n), &asg);
        assert_eq!(forward + reversed, Fp::zero(), "kernel of {} is not antisymmetric", op.name());
    }
}

#[test]
fn raw_and_canonical_brackets_pair_equally() {
    let src = frontend::bundled_example("mkdv").unwrap();
    let prob = frontend::parse_problem(src).unwrap();
    let mut ops = vec![prob.operator("P").unwrap().clone()];
    // low-order random operators keep the derivative counts well inside
    // the test factors' vanishing order
    let shape = ExprShape { components: 1, max_order: 1, terms: 2, max_exp: 1 };
    let mut g = Gen::new(0xe3a1);
    for i in 0..2 {
        ops.push(g.skew_operator(&format!("S{i}"), shape, 1, 1));
    }
    for a in &ops {
        for b in &ops {
            let raw = raw_bracket_sequential(a, b);
            let canon = canonicalize(&raw, 64);
            let n = a.components();
            for _ in 0..2 {
                let asg = random_assignment(&mut g, n, (n + 1)..(4 * n + 1));
                assert_eq!(
                    tri_value(n, raw.terms(), &asg),
                    tri_value(n, &canon.terms, &asg),
                    "bracket [{}, {}] changed under reduction",
                    a.name(),
                    b.name()
                );
            }
        }
    }
}

//! Operator-form bracket engine.
//!
//! The Schouten bracket of two weakly nonlocal skew operators is assembled
//! as a raw three-vector from six summands (three cyclic covector rotations,
//! each with the two operators in both roles) and reduced to canonical form.
//! Each summand differentiates one operator's coefficient functions along
//! the other operator's action on the middle covector.

use crate::calculus::{linearize, Linearization};
use crate::jet::JetExpression;
use crate::multivector::{normalize, CanonicalThreeVector, Factor, MultiVector};
use crate::op::{unify_tails, TailRegistry, WeaklyNonlocalOperator};

/// Symbol-level action of an operator on one covector: entry k-1 lists the
/// terms of (Op psi)^k as (coefficient, symbol) pairs, the tail part entering
/// through the nonlocal symbols of the shared registry.
type SymbolAction = Vec<Vec<(JetExpression, Factor)>>;

/// [component][tau][entry]: tau-th total derivative of the action.
type ActionTower = Vec<Vec<Vec<(JetExpression, Factor)>>>;

fn symbol_action(op: &WeaklyNonlocalOperator, map: &[usize]) -> SymbolAction {
    let n = op.components() as usize;
    (0..n)
        .map(|k| {
            let mut entries = Vec::new();
            for j in 0..n {
                for (rho, c) in op.local().entry(k, j).coeffs().iter().enumerate() {
                    if !c.is_zero() {
                        entries.push((
                            c.clone(),
                            Factor::Local { component: j as u16 + 1, order: rho as u16 },
                        ));
                    }
                }
            }
            for gamma in 0..op.tail_count() {
                let wk = op.tail_column(gamma)[k].clone();
                if wk.is_zero() {
                    continue;
                }
                for delta in 0..op.tail_count() {
                    let cc = op.tail_constant(gamma, delta);
                    if cc.is_zero() {
                        continue;
                    }
                    entries.push((&cc * &wk, Factor::Nonlocal { column: map[delta] }));
                }
            }
            entries
        })
        .collect()
}

/// Total x-derivative of a symbol list; the derivative of a nonlocal symbol
/// spills into order-zero local symbols weighted by its tail column.
fn derive_entries(
    entries: &[(JetExpression, Factor)],
    registry: &TailRegistry,
) -> Vec<(JetExpression, Factor)> {
    let mut merged: std::collections::BTreeMap<Factor, JetExpression> =
        std::collections::BTreeMap::new();
    let mut push = |f: Factor, c: JetExpression| {
        if c.is_zero() {
            return;
        }
        let e = merged.entry(f).or_insert_with(JetExpression::zero);
        *e = &*e + &c;
    };
    for (c, f) in entries {
        push(*f, c.total_derivative());
        match f {
            Factor::Local { component, order } => {
                push(Factor::Local { component: *component, order: order + 1 }, c.clone());
            }
            Factor::Nonlocal { column } => {
                for (i, w) in registry.column(*column).iter().enumerate() {
                    if !w.is_zero() {
                        push(Factor::Local { component: i as u16 + 1, order: 0 }, c * w);
                    }
                }
            }
        }
    }
    merged.into_iter().filter(|(_, c)| !c.is_zero()).map(|(f, c)| (c, f)).collect()
}

fn action_tower(action: SymbolAction, depth: u16, registry: &TailRegistry) -> ActionTower {
    action
        .into_iter()
        .map(|entries| {
            let mut rows = vec![entries];
            for _ in 0..depth {
                rows.push(derive_entries(rows.last().unwrap(), registry));
            }
            rows
        })
        .collect()
}

fn max_tau(lin: &Linearization) -> u16 {
    let a = lin.local.iter().map(|&(_, _, _, _, tau, _)| tau).max().unwrap_or(0);
    let b = lin.tail.iter().map(|&(_, _, _, tau, _)| tau).max().unwrap_or(0);
    a.max(b)
}

/// One cyclic summand: the variation of `p`'s structure along the action of
/// the other operator on the slot-b covector (supplied as a derivative
/// tower), contracted with the slot-a and slot-c covectors. `(a, b, c)` is a
/// cyclic rotation of (1, 2, 3); `p_map` sends p's tail columns into the
/// registry.
pub fn single_summand(
    p: &WeaklyNonlocalOperator,
    lin_p: &Linearization,
    p_map: &[usize],
    other_action: &ActionTower,
    cyc: (usize, usize, usize),
) -> MultiVector {
    let (a, b, c) = cyc;
    let (sa, sb, sc) = (a - 1, b - 1, c - 1);
    let mut out = MultiVector::new();
    let place = |fa: Factor, fb: Factor, fc: Factor| {
        let mut key = [fa; 3];
        key[sa] = fa;
        key[sb] = fb;
        key[sc] = fc;
        key
    };
    // Variation of the local coefficients:
    // dB^{ij sigma}/du^k_tau  d^sigma psi^a_j  d^tau (action)^k  psi^c_{i,0}
    for (i, j, sigma, k, tau, d) in &lin_p.local {
        for (cq, f) in &other_action[*k as usize - 1][*tau as usize] {
            out.add_term(
                place(
                    Factor::Local { component: *j, order: *sigma },
                    *f,
                    Factor::Local { component: *i, order: 0 },
                ),
                d * cq,
            );
        }
    }
    // Variation of the tail columns, with the nonlocal symbol on the a side:
    // c^{alpha beta}  dw^i_alpha/du^k_tau  d^tau(action)^k  nl^a_beta  psi^c_{i,0}
    for (col, i, k, tau, d) in &lin_p.tail {
        for beta in 0..p.tail_count() {
            let cc = p.tail_constant(*col, beta);
            if cc.is_zero() {
                continue;
            }
            for (cq, f) in &other_action[*k as usize - 1][*tau as usize] {
                out.add_term(
                    place(
                        Factor::Nonlocal { column: p_map[beta] },
                        *f,
                        Factor::Local { component: *i, order: 0 },
                    ),
                    &(&cc * d) * cq,
                );
            }
        }
    }
    // ... and on the c side, with the opposite sign:
    // -c^{alpha beta}  nl^c_alpha  dw^j_beta/du^k_tau  d^tau(action)^k  psi^a_{j,0}
    for (col, j, k, tau, d) in &lin_p.tail {
        for alpha in 0..p.tail_count() {
            let cc = p.tail_constant(alpha, *col);
            if cc.is_zero() {
                continue;
            }
            for (cq, f) in &other_action[*k as usize - 1][*tau as usize] {
                out.add_term(
                    place(
                        Factor::Local { component: *j, order: 0 },
                        *f,
                        Factor::Nonlocal { column: p_map[alpha] },
                    ),
                    -&(&(&cc * d) * cq),
                );
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SchoutenBracket {
    pub registry: TailRegistry,
    pub canonical: CanonicalThreeVector,
}

impl SchoutenBracket {
    pub fn is_zero(&self) -> bool {
        self.canonical.is_zero()
    }

    pub fn witness(&self) -> Option<String> {
        self.canonical.witness()
    }
}

/// The Schouten bracket [p, q] in canonical form. For q = p this is the
/// Jacobi obstruction of p (vanishes iff p is Hamiltonian); for distinct
/// skew Hamiltonian operators it vanishes iff the pair is compatible.
pub fn schouten_bracket(
    p: &WeaklyNonlocalOperator,
    q: &WeaklyNonlocalOperator,
) -> SchoutenBracket {
    assert_eq!(
        p.components(),
        q.components(),
        "operators act on different numbers of components"
    );
    let registry = unify_tails(p, q);
    let lin_p = linearize(p);
    let lin_q = linearize(q);
    let act_q = symbol_action(q, &registry.right_map);
    let act_p = symbol_action(p, &registry.left_map);
    let tower_q = action_tower(act_q, max_tau(&lin_p), &registry);
    let tower_p = action_tower(act_p, max_tau(&lin_q), &registry);
    let cycles = [(1, 2, 3), (2, 3, 1), (3, 1, 2)];
    // Six independent summands; compute them in parallel and merge in fixed
    // order (exact arithmetic makes the result order-independent anyway).
    let parts: Vec<MultiVector> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for cyc in cycles {
            let (lp, pm, tq) = (&lin_p, &registry.left_map, &tower_q);
            handles.push(scope.spawn(move || single_summand(p, lp, pm, tq, cyc)));
            let (lq, qm, tp) = (&lin_q, &registry.right_map, &tower_p);
            handles.push(scope.spawn(move || single_summand(q, lq, qm, tp, cyc)));
        }
        handles.into_iter().map(|h| h.join().expect("summand thread panicked")).collect()
    });
    let mut total = MultiVector::new();
    for part in parts {
        total.merge(part);
    }
    let (d1, m1) = p.order_data();
    let (d2, m2) = q.order_data();
    let bound = (d1 + d2) as u16 + m1 + m2 + 2;
    let canonical = normalize(total, &registry, bound);
    SchoutenBracket { registry, canonical }
}

/// Sequential variant used by the determinism tests: same summands, same
/// merge order, no threads.
pub fn schouten_bracket_sequential(
    p: &WeaklyNonlocalOperator,
    q: &WeaklyNonlocalOperator,
) -> SchoutenBracket {
    assert_eq!(p.components(), q.components());
    let registry = unify_tails(p, q);
    let lin_p = linearize(p);
    let lin_q = linearize(q);
    let tower_q = action_tower(symbol_action(q, &registry.right_map), max_tau(&lin_p), &registry);
    let tower_p = action_tower(symbol_action(p, &registry.left_map), max_tau(&lin_q), &registry);
    let mut total = MultiVector::new();
    for cyc in [(1, 2, 3), (2, 3, 1), (3, 1, 2)] {
        total.merge(single_summand(p, &lin_p, &registry.left_map, &tower_q, cyc));
        total.merge(single_summand(q, &lin_q, &registry.right_map, &tower_p, cyc));
    }
    let (d1, m1) = p.order_data();
    let (d2, m2) = q.order_data();
    let bound = (d1 + d2) as u16 + m1 + m2 + 2;
    let canonical = normalize(total, &registry, bound);
    SchoutenBracket { registry, canonical }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{LocalMatrix, LocalOp};
    use crate::jet::q;

    fn u(c: u16) -> JetExpression {
        JetExpression::jet(c, 0)
    }

    fn ux(c: u16, o: u16) -> JetExpression {
        JetExpression::jet(c, o)
    }

    fn scalar_local(coeffs: Vec<JetExpression>) -> WeaklyNonlocalOperator {
        let mut local = LocalMatrix::zero(1);
        local.set_entry(0, 0, LocalOp::new(coeffs));
        WeaklyNonlocalOperator::local_only("A", local).unwrap()
    }

    fn mkdv() -> WeaklyNonlocalOperator {
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
        WeaklyNonlocalOperator::new("P", local, vec![vec![q(-2, 3)]], vec![vec![ux(1, 1)]])
            .unwrap()
    }

    #[test]
    fn constant_coefficient_operators_are_hamiltonian() {
        // Dx and Dx^3 have empty linearizations: the bracket is empty.
        let d1 = scalar_local(vec![JetExpression::zero(), JetExpression::one()]);
        let b = schouten_bracket(&d1, &d1);
        assert!(b.is_zero());
        let d3 = scalar_local(vec![
            JetExpression::zero(),
            JetExpression::zero(),
            JetExpression::zero(),
            JetExpression::one(),
        ]);
        assert!(schouten_bracket(&d3, &d3).is_zero());
        assert!(schouten_bracket(&d1, &d3).is_zero());
    }

    #[test]
    fn virasoro_operator_is_hamiltonian() {
        // Dx^3 + (2/3) u Dx + (1/3) u_x: the second KdV structure. Its
        // Jacobi identity is a genuine integration-by-parts cancellation.
        let p = scalar_local(vec![
            &q(1, 3) * &ux(1, 1),
            &q(2, 3) * &u(1),
            JetExpression::zero(),
            JetExpression::one(),
        ]);
        assert!(p.is_skew_adjoint());
        let b = schouten_bracket(&p, &p);
        assert!(b.is_zero(), "witness: {:?}", b.witness());
    }

    #[test]
    fn kdv_pair_is_compatible() {
        let d1 = scalar_local(vec![JetExpression::zero(), JetExpression::one()]);
        let p2 = scalar_local(vec![
            &q(1, 3) * &ux(1, 1),
            &q(2, 3) * &u(1),
            JetExpression::zero(),
            JetExpression::one(),
        ]);
        let b = schouten_bracket(&d1, &p2);
        assert!(b.is_zero(), "witness: {:?}", b.witness());
    }

    #[test]
    fn mkdv_local_part_alone_fails_jacobi() {
        // Without the tail the cubic terms have nothing to cancel against.
        let p = scalar_local(vec![
            &q(2, 3) * &(&u(1) * &ux(1, 1)),
            &q(2, 3) * &u(1).pow(2),
            JetExpression::zero(),
            JetExpression::one(),
        ]);
        assert!(p.is_skew_adjoint());
        let b = schouten_bracket(&p, &p);
        assert!(!b.is_zero());
    }

    #[test]
    fn mkdv_with_tail_is_hamiltonian() {
        let p = mkdv();
        assert!(p.is_skew_adjoint());
        let b = schouten_bracket(&p, &p);
        assert!(b.is_zero(), "witness: {:?}", b.witness());
    }

    #[test]
    fn parallel_and_sequential_brackets_agree() {
        let p = mkdv();
        let b1 = schouten_bracket(&p, &p);
        let b2 = schouten_bracket_sequential(&p, &p);
        assert_eq!(b1.canonical.local, b2.canonical.local);
        assert_eq!(b1.canonical.single, b2.canonical.single);
        assert_eq!(b1.canonical.double, b2.canonical.double);
        let r = scalar_local(vec![
            &q(1, 2) * &ux(1, 1),
            u(1),
            JetExpression::zero(),
            JetExpression::one(),
        ]);
        let b1 = schouten_bracket(&p, &r);
        let b2 = schouten_bracket_sequential(&p, &r);
        assert_eq!(b1.canonical.local, b2.canonical.local);
        assert_eq!(b1.canonical.single, b2.canonical.single);
        assert_eq!(b1.canonical.double, b2.canonical.double);
    }
}

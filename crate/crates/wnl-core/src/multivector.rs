//! Trilinear symbol calculus for the operator-form bracket engine.
//!
//! A three-vector is a sum of terms coeff(u) * F1 * F2 * F3 where slot s
//! carries one covector symbol: either a local symbol psi^s_{j,sigma}
//! (the sigma-th x-derivative of the j-th component of the s-th covector) or
//! a nonlocal symbol tied to a tail column F of the shared registry, defined
//! by Dx(tilde-psi_F) = sum_i w^i_F psi_{i,0}. Three-vectors are read modulo
//! total x-derivatives; `normalize` reduces a raw sum to the canonical form
//! in which equality with zero is a plain emptiness check.

use crate::jet::JetExpression;
use crate::op::TailRegistry;
use std::collections::BTreeMap;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Factor {
    /// psi_{component, order} of the covector in this slot.
    Local { component: u16, order: u16 },
    /// The nonlocal symbol of one registry tail column.
    Nonlocal { column: usize },
}

impl Factor {
    pub fn order(&self) -> u16 {
        match self {
            Factor::Local { order, .. } => *order,
            Factor::Nonlocal { .. } => 0,
        }
    }

    fn is_nonlocal(&self) -> bool {
        matches!(self, Factor::Nonlocal { .. })
    }
}

pub type Key = [Factor; 3];

/// A raw three-vector: map from slot-factor triples to coefficients.
#[derive(Clone, Debug, Default)]
pub struct MultiVector {
    terms: BTreeMap<Key, JetExpression>,
}

impl MultiVector {
    pub fn new() -> MultiVector {
        MultiVector { terms: BTreeMap::new() }
    }

    pub fn add_term(&mut self, key: Key, coeff: JetExpression) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + &coeff;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn merge(&mut self, other: MultiVector) {
        for (k, c) in other.terms {
            self.add_term(k, c);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Key, &JetExpression)> {
        self.terms.iter()
    }
}

/// Which slot the next integration by parts strips, if any.
fn strip_slot(key: &Key) -> Option<usize> {
    let nl: Vec<usize> = (0..3).filter(|&s| key[s].is_nonlocal()).collect();
    let slot = match nl.len() {
        // Fully local terms are written with the third covector underived.
        0 => 2,
        // One nonlocal symbol in slot a leaves the family
        // tilde-psi^a  d^h psi^{a+1}  psi^{a+2}: slot a+2 is stripped.
        1 => (nl[0] + 2) % 3,
        // Two nonlocal symbols: the remaining local slot is stripped.
        2 => (0..3).find(|s| !nl.contains(s)).unwrap(),
        _ => unreachable!("three nonlocal symbols cannot arise from a bracket"),
    };
    (key[slot].order() > 0).then_some(slot)
}

/// Canonical form of a three-vector modulo total derivatives, bucketed by
/// nonlocal-symbol pattern. Keys carry 1-based slot numbers.
#[derive(Clone, Debug, Default)]
pub struct CanonicalThreeVector {
    /// (i, j, k, m, n) for coeff * d^m psi^1_i  d^n psi^2_j  psi^3_k.
    pub local: BTreeMap<(u16, u16, u16, u16, u16), JetExpression>,
    /// (a, column, j, h, i) for coeff * tilde-psi^a  d^h psi^{a+1}_j  psi^{a+2}_i.
    pub single: BTreeMap<(u8, usize, u16, u16, u16), JetExpression>,
    /// (a, b, alpha, beta, i), a < b, for
    /// coeff * tilde-psi^a_alpha  tilde-psi^b_beta  psi^c_i.
    pub double: BTreeMap<(u8, u8, usize, usize, u16), JetExpression>,
}

impl CanonicalThreeVector {
    pub fn is_zero(&self) -> bool {
        self.local.is_empty() && self.single.is_empty() && self.double.is_empty()
    }

    pub fn term_counts(&self) -> (usize, usize, usize) {
        (self.local.len(), self.single.len(), self.double.len())
    }

    /// First nonzero canonical coefficient, for failure reports.
    pub fn witness(&self) -> Option<String> {
        if let Some(((i, j, k, m, n), c)) = self.local.iter().next() {
            return Some(format!(
                "local term d^{m} psi1_{i} * d^{n} psi2_{j} * psi3_{k}: {c:?}"
            ));
        }
        if let Some(((a, col, j, h, i), c)) = self.single.iter().next() {
            return Some(format!(
                "tail term nl{col} in slot {a} with d^{h} psi_{j}, psi_{i}: {c:?}"
            ));
        }
        if let Some(((a, b, alpha, beta, i), c)) = self.double.iter().next() {
            return Some(format!(
                "double tail term nl{alpha}@slot{a} nl{beta}@slot{b} psi_{i}: {c:?}"
            ));
        }
        None
    }
}

/// Reduce a raw three-vector to canonical form by repeated integration by
/// parts. One strip at slot s rewrites
///   C * rest * d^l psi  ==  - Dx(C * rest) * d^{l-1} psi   (mod im Dx)
/// where Dx of a nonlocal symbol spills into local symbols through the tail
/// columns. Termination: the pair (number of nonlocal symbols, 3 * order at
/// the strip slot + orders elsewhere) drops lexicographically on every
/// branch.
pub fn normalize(
    mv: MultiVector,
    registry: &TailRegistry,
    order_bound: u16,
) -> CanonicalThreeVector {
    let mut terms = mv.terms;
    loop {
        let pending: Vec<Key> =
            terms.keys().filter(|k| strip_slot(k).is_some()).copied().collect();
        if pending.is_empty() {
            break;
        }
        for key in pending {
            let coeff = match terms.remove(&key) {
                Some(c) => c,
                None => continue,
            };
            let s = match strip_slot(&key) {
                Some(s) => s,
                None => unreachable!("key was pending"),
            };
            let Factor::Local { component, order } = key[s] else {
                unreachable!("strip slot is always local")
            };
            let mut lowered = key;
            lowered[s] = Factor::Local { component, order: order - 1 };
            let mut push = |k: Key, c: JetExpression| {
                if c.is_zero() {
                    return;
                }
                match terms.entry(k) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(c);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        let sum = e.get() + &c;
                        if sum.is_zero() {
                            e.remove();
                        } else {
                            *e.get_mut() = sum;
                        }
                    }
                }
            };
            // - Dx(coefficient) branch
            push(lowered, -&coeff.total_derivative());
            // - coefficient * Dx(other factor) branches
            for t in 0..3 {
                if t == s {
                    continue;
                }
                match lowered[t] {
                    Factor::Local { component: m, order: r } => {
                        let mut k2 = lowered;
                        k2[t] = Factor::Local { component: m, order: r + 1 };
                        push(k2, -&coeff);
                    }
                    Factor::Nonlocal { column } => {
                        for (idx, w) in registry.column(column).iter().enumerate() {
                            if w.is_zero() {
                                continue;
                            }
                            let mut k2 = lowered;
                            k2[t] = Factor::Local { component: idx as u16 + 1, order: 0 };
                            push(k2, -&(&coeff * w));
                        }
                    }
                }
            }
        }
    }
    // The key-to-bucket map is injective, so plain inserts suffice and the
    // stored coefficients are exactly the surviving nonzero ones.
    let mut out = CanonicalThreeVector::default();
    for (key, coeff) in terms {
        let nl: Vec<usize> = (0..3).filter(|&s| key[s].is_nonlocal()).collect();
        match nl.as_slice() {
            [] => {
                let (Factor::Local { component: i, order: m },
                     Factor::Local { component: j, order: n },
                     Factor::Local { component: k, order: z }) = (key[0], key[1], key[2])
                else {
                    unreachable!()
                };
                debug_assert_eq!(z, 0);
                assert!(
                    m <= order_bound && n <= order_bound,
                    "canonical order {}/{} exceeds the structural bound {}",
                    m,
                    n,
                    order_bound
                );
                out.local.insert((i, j, k, m, n), coeff);
            }
            [a] => {
                let Factor::Nonlocal { column } = key[*a] else { unreachable!() };
                let Factor::Local { component: j, order: h } = key[(*a + 1) % 3] else {
                    unreachable!()
                };
                let Factor::Local { component: i, order: z } = key[(*a + 2) % 3] else {
                    unreachable!()
                };
                debug_assert_eq!(z, 0);
                assert!(
                    h <= order_bound,
                    "canonical tail order {} exceeds the structural bound {}",
                    h,
                    order_bound
                );
                out.single.insert((*a as u8 + 1, column, j, h, i), coeff);
            }
            [a, b] => {
                let Factor::Nonlocal { column: alpha } = key[*a] else { unreachable!() };
                let Factor::Nonlocal { column: beta } = key[*b] else { unreachable!() };
                let c = (0..3).find(|s| s != a && s != b).unwrap();
                let Factor::Local { component: i, order: z } = key[c] else {
                    unreachable!()
                };
                debug_assert_eq!(z, 0);
                out.double.insert((*a as u8 + 1, *b as u8 + 1, alpha, beta, i), coeff);
            }
            _ => unreachable!(),
        }
    }
    out
}

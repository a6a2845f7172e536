//! Weakly nonlocal operators: a matrix of local differential operators plus
//! a finite tail  sum_{alpha,beta} c^{alpha beta} w_alpha Dx^{-1} w_beta^T
//! with a constant symmetric-or-not matrix c and local tail columns w.

use crate::calculus::LocalMatrix;
use crate::jet::JetExpression;
use crate::poly::Monomial;
use num::rational::BigRational;
use num::{One, Zero};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub enum OperatorError {
    Shape(String),
    /// Tail matrix entry (row, col) depends on jet variables.
    NonConstantTailEntry(usize, usize),
    /// Tail columns admit a nontrivial constant linear relation; the
    /// canonical-form arguments behind both engines assume independence.
    DependentTailColumns(Vec<BigRational>),
}

impl std::fmt::Display for OperatorError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorError::Shape(msg) => write!(f, "shape error: {}", msg),
            OperatorError::NonConstantTailEntry(r, c) => {
                write!(f, "tail matrix entry ({}, {}) is not constant", r, c)
            }
            OperatorError::DependentTailColumns(rel) => {
                write!(f, "tail columns are linearly dependent over constants: {:?}", rel)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeaklyNonlocalOperator {
    name: String,
    n: u16,
    local: LocalMatrix,
    /// Constant coupling matrix, tail_count x tail_count.
    c: Vec<Vec<JetExpression>>,
    /// w[alpha][i] = component i+1 of tail column alpha.
    w: Vec<Vec<JetExpression>>,
}

impl WeaklyNonlocalOperator {
    /// Build and validate. Tail columns that are identically zero, or whose
    /// entire c row and column vanish, contribute nothing and are dropped.
    pub fn new(
        name: impl Into<String>,
        local: LocalMatrix,
        c: Vec<Vec<JetExpression>>,
        w: Vec<Vec<JetExpression>>,
    ) -> Result<WeaklyNonlocalOperator, OperatorError> {
        let n = local.n;
        if n == 0 {
            return Err(OperatorError::Shape("empty operator".into()));
        }
        let nt = w.len();
        if c.len() != nt || c.iter().any(|row| row.len() != nt) {
            return Err(OperatorError::Shape(format!(
                "coupling matrix must be {} x {} to match the tail columns",
                nt, nt
            )));
        }
        for col in &w {
            if col.len() != n {
                return Err(OperatorError::Shape(format!(
                    "tail column has {} components, operator has {}",
                    col.len(),
                    n
                )));
            }
        }
        for (r, row) in c.iter().enumerate() {
            for (s, entry) in row.iter().enumerate() {
                if !entry.is_constant() {
                    return Err(OperatorError::NonConstantTailEntry(r, s));
                }
            }
        }
        let keep: Vec<usize> = (0..nt)
            .filter(|&alpha| {
                let col_nonzero = w[alpha].iter().any(|e| !e.is_zero());
                let coupled = (0..nt)
                    .any(|beta| !c[alpha][beta].is_zero() || !c[beta][alpha].is_zero());
                col_nonzero && coupled
            })
            .collect();
        let w: Vec<Vec<JetExpression>> = keep.iter().map(|&a| w[a].clone()).collect();
        let c: Vec<Vec<JetExpression>> = keep
            .iter()
            .map(|&a| keep.iter().map(|&b| c[a][b].clone()).collect())
            .collect();
        let op = WeaklyNonlocalOperator { name: name.into(), n: n as u16, local, c, w };
        if let Some(rel) = op.tail_dependency() {
            return Err(OperatorError::DependentTailColumns(rel));
        }
        Ok(op)
    }

    pub fn local_only(
        name: impl Into<String>,
        local: LocalMatrix,
    ) -> Result<WeaklyNonlocalOperator, OperatorError> {
        WeaklyNonlocalOperator::new(name, local, Vec::new(), Vec::new())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> u16 {
        self.n
    }

    pub fn local(&self) -> &LocalMatrix {
        &self.local
    }

    pub fn tail_count(&self) -> usize {
        self.w.len()
    }

    pub fn tail_column(&self, alpha: usize) -> &[JetExpression] {
        &self.w[alpha]
    }

    pub fn tail_constant(&self, alpha: usize, beta: usize) -> JetExpression {
        self.c[alpha][beta].clone()
    }

    pub fn coupling(&self) -> &[Vec<JetExpression>] {
        &self.c
    }

    /// Leading Dx-degree of the local part and the maximum jet order over
    /// local coefficients and tail columns.
    pub fn order_data(&self) -> (usize, u16) {
        let degree = self.local.degree();
        let mut order = self.local.coeff_order();
        for col in &self.w {
            for e in col {
                if let Some(m) = e.max_order() {
                    order = order.max(m);
                }
            }
        }
        (degree, order)
    }

    /// A nontrivial constant relation sum_alpha lambda_alpha w_alpha = 0, if
    /// one exists. Denominators are cleared per component before stacking
    /// the polynomial coefficients into a rational matrix.
    fn tail_dependency(&self) -> Option<Vec<BigRational>> {
        let nt = self.w.len();
        if nt < 2 {
            return None;
        }
        let mut rows: BTreeMap<(usize, Monomial), Vec<BigRational>> = BTreeMap::new();
        for i in 0..self.n as usize {
            // common multiplier: product of the other columns' denominators
            for alpha in 0..nt {
                let mut cleared = self.w[alpha][i].numerator().clone();
                for beta in 0..nt {
                    if beta != alpha {
                        cleared = cleared.mul(self.w[beta][i].denominator());
                    }
                }
                for (m, coeff) in cleared.terms() {
                    let row = rows
                        .entry((i, m.clone()))
                        .or_insert_with(|| vec![BigRational::zero(); nt]);
                    row[alpha] = coeff.clone();
                }
            }
        }
        nontrivial_kernel(rows.into_values().collect(), nt)
    }

    /// Local part skew plus symmetric coupling matrix; together these make
    /// the full operator formally skew-adjoint.
    pub fn skew_report(&self) -> SkewReport {
        let defect = self.local.add(&self.local.adjoint());
        let nt = self.tail_count();
        let c_symmetric = (0..nt)
            .all(|a| (a + 1..nt).all(|b| self.c[a][b] == self.c[b][a]));
        SkewReport { local_defect: defect, c_symmetric }
    }

    pub fn is_skew_adjoint(&self) -> bool {
        let r = self.skew_report();
        r.local_defect.is_zero() && r.c_symmetric
    }
}

#[derive(Clone, Debug)]
pub struct SkewReport {
    /// A + A^+ entrywise; zero iff the local part is skew.
    pub local_defect: LocalMatrix,
    pub c_symmetric: bool,
}

impl SkewReport {
    pub fn is_skew(&self) -> bool {
        self.local_defect.is_zero() && self.c_symmetric
    }
}

/// Shared tail table for a bracket of two operators: structurally equal
/// columns are identified (scalar multiples are not; the coupling constants
/// keep those apart).
#[derive(Clone, Debug)]
pub struct TailRegistry {
    pub n: u16,
    pub columns: Vec<Vec<JetExpression>>,
    /// Per operator: its column index alpha -> registry index.
    pub left_map: Vec<usize>,
    pub right_map: Vec<usize>,
}

impl TailRegistry {
    pub fn column(&self, f: usize) -> &[JetExpression] {
        &self.columns[f]
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

pub fn unify_tails(
    left: &WeaklyNonlocalOperator,
    right: &WeaklyNonlocalOperator,
) -> TailRegistry {
    assert_eq!(left.components(), right.components());
    let mut columns: Vec<Vec<JetExpression>> = Vec::new();
    let index_of = |col: &[JetExpression], columns: &mut Vec<Vec<JetExpression>>| {
        if let Some(k) = columns.iter().position(|c| c.as_slice() == col) {
            k
        } else {
            columns.push(col.to_vec());
            columns.len() - 1
        }
    };
    let left_map =
        (0..left.tail_count()).map(|a| index_of(left.tail_column(a), &mut columns)).collect();
    let right_map =
        (0..right.tail_count()).map(|a| index_of(right.tail_column(a), &mut columns)).collect();
    TailRegistry { n: left.components(), columns, left_map, right_map }
}

/// One nontrivial kernel vector of the column space, if any: Gaussian
/// elimination to reduced row echelon form, then a free column gives a
/// relation.
fn nontrivial_kernel(mut rows: Vec<Vec<BigRational>>, ncols: usize) -> Option<Vec<BigRational>> {
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else { continue };
        rows.swap(r, p);
        let inv = rows[r][col].recip();
        for c in col..ncols {
            let v = &rows[r][c] * &inv;
            rows[r][c] = v;
        }
        for i in 0..rows.len() {
            if i == r || rows[i][col].is_zero() {
                continue;
            }
            let f = rows[i][col].clone();
            for c in col..ncols {
                let v = &rows[i][c] - &(&rows[r][c] * &f);
                rows[i][c] = v;
            }
        }
        pivot_cols.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    let free = (0..ncols).find(|c| !pivot_cols.contains(c))?;
    let mut v = vec![BigRational::zero(); ncols];
    v[free] = BigRational::one();
    for (row_idx, &pc) in pivot_cols.iter().enumerate() {
        v[pc] = -rows[row_idx][free].clone();
    }
    Some(v)
}

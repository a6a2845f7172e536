//! Seeded random generators shared by the property suites. Everything is
//! deterministic: a fixed seed reproduces the exact case list.

// each test binary uses its own slice of the generator surface
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wnl_core::calculus::{LocalMatrix, LocalOp};
use wnl_core::op::WeaklyNonlocalOperator;
use wnl_core::{JetExpression, Var};

pub struct Gen {
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Copy)]
pub struct ExprShape {
    pub components: u16,
    pub max_order: u16,
    pub terms: usize,
    pub max_exp: u32,
}

impl Gen {
    pub fn new(seed: u64) -> Gen {
        Gen { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn int_in(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.gen_range(lo..=hi)
    }

    fn coefficient(&mut self) -> JetExpression {
        let n = self.int_in(-4, 4);
        let d = self.int_in(1, 3);
        JetExpression::rat(if n == 0 { 1 } else { n }, d)
    }

    /// Random polynomial jet expression, never zero.
    pub fn poly_expr(&mut self, shape: ExprShape) -> JetExpression {
        let mut out = JetExpression::zero();
        for _ in 0..self.rng.gen_range(1..=shape.terms) {
            let mut term = self.coefficient();
            for _ in 0..self.rng.gen_range(0..=2) {
                let comp = self.int_in(1, shape.components as i64) as u16;
                let order = self.int_in(0, shape.max_order as i64) as u16;
                let exp = self.int_in(1, shape.max_exp as i64) as i32;
                term = &term * &JetExpression::var(Var::jet(comp, order)).pow(exp);
            }
            out = &out + &term;
        }
        if out.is_zero() {
            out = &out + &JetExpression::one();
        }
        out
    }

    /// Random rational jet expression: polynomial over a small nonzero
    /// denominator.
    pub fn rational_expr(&mut self, shape: ExprShape) -> JetExpression {
        let num = self.poly_expr(shape);
        if self.rng.gen_bool(0.5) {
            return num;
        }
        let den_shape = ExprShape { terms: 2, max_exp: 1, ..shape };
        let den = self.poly_expr(den_shape);
        &num / &den
    }

    pub fn local_op(&mut self, shape: ExprShape, max_deg: usize) -> LocalOp {
        let deg = self.int_in(0, max_deg as i64) as usize;
        let coeffs = (0..=deg)
            .map(|_| {
                if self.rng.gen_bool(0.3) {
                    JetExpression::zero()
                } else {
                    self.poly_expr(shape)
                }
            })
            .collect();
        LocalOp::new(coeffs)
    }

    pub fn local_matrix(&mut self, shape: ExprShape, max_deg: usize) -> LocalMatrix {
        let n = shape.components as usize;
        let mut m = LocalMatrix::zero(n);
        for i in 0..n {
            for j in 0..n {
                m.set_entry(i, j, self.local_op(shape, max_deg));
            }
        }
        m
    }

    /// Random formally skew local matrix, built as R - R^+.
    pub fn skew_local_matrix(&mut self, shape: ExprShape, max_deg: usize) -> LocalMatrix {
        let r = self.local_matrix(shape, max_deg);
        r.add(&r.adjoint().neg())
    }

    /// Random skew-adjoint weakly nonlocal operator with `tails` tail
    /// columns (retries if the random columns come out dependent).
    pub fn skew_operator(
        &mut self,
        name: &str,
        shape: ExprShape,
        max_deg: usize,
        tails: usize,
    ) -> WeaklyNonlocalOperator {
        loop {
            let local = self.skew_local_matrix(shape, max_deg);
            let mut c = vec![vec![JetExpression::zero(); tails]; tails];
            for a in 0..tails {
                for b in a..tails {
                    let v = JetExpression::int(self.int_in(-2, 2));
                    c[a][b] = v.clone();
                    c[b][a] = v;
                }
            }
            // keep every column coupled
            for a in 0..tails {
                if c[a].iter().all(|e| e.is_zero()) {
                    c[a][a] = JetExpression::one();
                }
            }
            let w: Vec<Vec<JetExpression>> = (0..tails)
                .map(|_| {
                    (0..shape.components)
                        .map(|_| {
                            let lean = ExprShape { terms: 2, ..shape };
                            self.poly_expr(lean)
                        })
                        .collect()
                })
                .collect();
            match WeaklyNonlocalOperator::new(name, local.clone(), c, w) {
                Ok(op) => return op,
                Err(_) => continue,
            }
        }
    }

    pub fn covector(&mut self, shape: ExprShape) -> Vec<JetExpression> {
        (0..shape.components).map(|_| self.poly_expr(shape)).collect()
    }
}
